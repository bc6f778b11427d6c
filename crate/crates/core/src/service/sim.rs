//! Synthetic annotators that drive a campaign to completion.
//!
//! Each judgment depends only on the seed and on what it judges, never on
//! submission order, so any interleaving ends in the same campaign.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::campaign::CampaignDefinition;
use super::engine::CampaignHandle;
use super::state::{next_task_ref, CampaignState, Submission, TaskRef};
use super::ServiceError;
use crate::labels::Label;
use crate::protocol::{pretag_with, serialize_tagged};

#[derive(Debug, Clone, Copy)]
pub struct SyntheticAnnotators {
    pub seed: u64,
    /// Chance of keeping each response in step 1.
    pub keep_rate: f64,
}

impl SyntheticAnnotators {
    pub fn new(seed: u64) -> Self {
        SyntheticAnnotators { seed, keep_rate: 0.6 }
    }

    fn rng(&self, parts: &[&str]) -> ChaCha8Rng {
        let mut h = Sha256::new().chain_update(self.seed.to_le_bytes());
        for p in parts {
            h.update(p.as_bytes());
            h.update([0u8]);
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// The judgment this annotator gives for `task`.
    pub fn submission(
        &self,
        def: &CampaignDefinition,
        state: &CampaignState,
        annotator: &str,
        task: &TaskRef,
    ) -> Option<Submission> {
        match task {
            TaskRef::Step1(ctx) => {
                let plan = def.context(ctx)?;
                let mut rng = self.rng(&["step1", annotator, ctx]);
                Some(Submission::Step1 {
                    context_id: ctx.clone(),
                    kept: plan
                        .pool
                        .entries
                        .iter()
                        .map(|e| (e.response_id.clone(), rng.random_bool(self.keep_rate)))
                        .collect(),
                    consistency: None,
                    specificity: None,
                })
            }
            TaskRef::Step2(ctx) => {
                let kept: Vec<String> = state.step1_of(annotator, ctx)?.kept_set().into_iter().collect();
                let mut rng = self.rng(&["step2", annotator, ctx]);
                let top3 = kept.choose_multiple(&mut rng, kept.len().min(3)).cloned().collect();
                Some(Submission::Step2 {
                    context_id: ctx.clone(),
                    top3,
                })
            }
            TaskRef::Step3 {
                context_id,
                response_id,
            } => self.rating(def, annotator, context_id, response_id, "step3"),
            TaskRef::Waiting | TaskRef::Done => None,
        }
    }

    /// A different, valid judgment for the same task, used to exercise
    /// last-write-wins replacement. Step 2 has none since replacing it can
    /// race the step-3 pool.
    pub fn decoy(&self, def: &CampaignDefinition, annotator: &str, task: &TaskRef) -> Option<Submission> {
        match task {
            TaskRef::Step1(ctx) => {
                let plan = def.context(ctx)?;
                Some(Submission::Step1 {
                    context_id: ctx.clone(),
                    kept: plan.pool.entries.iter().map(|e| (e.response_id.clone(), true)).collect(),
                    consistency: None,
                    specificity: None,
                })
            }
            TaskRef::Step3 {
                context_id,
                response_id,
            } => self.rating(def, annotator, context_id, response_id, "decoy"),
            _ => None,
        }
    }

    fn rating(
        &self,
        def: &CampaignDefinition,
        annotator: &str,
        ctx: &str,
        response_id: &str,
        salt: &str,
    ) -> Option<Submission> {
        let entry = def.context(ctx)?.pool.entry(response_id)?;
        let mut rng = self.rng(&[salt, annotator, ctx, response_id]);
        let segments = pretag_with(&entry.text, |s| {
            if s.ends_with('?') {
                Label::Question
            } else {
                Label::Inform
            }
        });
        let q = &def.questionnaire;
        Some(Submission::Step3 {
            context_id: ctx.to_string(),
            response_id: response_id.to_string(),
            tagged_text: serialize_tagged(&segments, &def.tags).ok()?,
            ratings: q
                .questions
                .iter()
                .map(|question| {
                    let s = q.scale_of(question);
                    (question.id.clone(), rng.random_range(s.min..=s.max))
                })
                .collect(),
        })
    }
}

/// Submits every task of every annotator, picking the next annotator at
/// random with `order_seed`. With probability `decoy_rate` a decoy is sent
/// first and then replaced. Returns the number of submissions made.
pub async fn run_campaign(
    handle: &CampaignHandle,
    annotators: &SyntheticAnnotators,
    order_seed: u64,
    decoy_rate: f64,
) -> Result<usize, ServiceError> {
    let def = handle.definition().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(order_seed);
    let mut sent = 0;
    loop {
        let state = handle.state();
        let mut active: Vec<(&String, TaskRef)> = def
            .annotators
            .iter()
            .map(|a| (a, next_task_ref(&def, &state, a)))
            .filter(|(_, t)| !matches!(t, TaskRef::Done | TaskRef::Waiting))
            .collect();
        if active.is_empty() {
            return Ok(sent);
        }
        active.shuffle(&mut rng);
        let (annotator, task) = active.swap_remove(0);
        if rng.random_bool(decoy_rate) {
            if let Some(d) = annotators.decoy(&def, annotator, &task) {
                handle.submit_as(annotator, d).await?;
                sent += 1;
            }
        }
        let state = handle.state();
        let submission = annotators
            .submission(&def, &state, annotator, &task)
            .ok_or_else(|| ServiceError::Storage(format!("no judgment for {task:?}")))?;
        handle.submit_as(annotator, submission).await?;
        sent += 1;
    }
}
