//! Socio-emotional response planning and human evaluation workbench.
//!
//! A dialogue turn is described by its dialogue act and, when not neutral,
//! its emotion. The library plans the labels expected of the next turn,
//! selects among generated candidates by label similarity, and runs the
//! three-step annotation campaign used to judge the selected responses.

pub mod backend;
pub mod corpus;
pub mod labels;
pub mod metrics;
pub mod mock;
pub mod pipeline;
pub mod planning;
pub mod prompts;
pub mod protocol;
pub mod service;
pub mod cli;
