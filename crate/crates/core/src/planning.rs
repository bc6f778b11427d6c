//! Next-turn label planning: which strategy labels the next speaker turn
//! should display, given the context window.

use std::sync::Arc;

use async_trait::async_trait;
use futures::stream::{self, StreamExt, TryStreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{BackendError, LabelPredictor, WireTurn};
use crate::corpus::{ContextSample, CorpusSplit};
use crate::labels::{Label, LabelSequence, LabelSet};
use crate::metrics::{self, MetricReport, MetricsError};

/// Probability of drawing two labels in the random baseline. With support
/// {1, 2} this is the only choice giving a mean length of 1.20.
pub const P_TWO_LABELS: f64 = 0.20;

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error("sample {0} has no gold labels")]
    MissingGold(String),
    #[error("backend failure on sample {index}: {source}")]
    Backend {
        index: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Remote,
    Random,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedSequence {
    pub labels: LabelSequence,
    pub source: PlannerKind,
    /// False only when a remote planner's answer could not be parsed.
    pub viable: bool,
}

impl PlannedSequence {
    fn unparsable() -> Self {
        PlannedSequence {
            labels: LabelSequence::new(),
            source: PlannerKind::Remote,
            viable: false,
        }
    }
}

/// Random baseline: `k` in {1, 2} with `P(k = 2) = 0.2`, then `k` distinct
/// labels drawn uniformly without replacement.
pub fn plan_random<R: Rng + ?Sized>(rng: &mut R) -> PlannedSequence {
    let k = if rng.random_bool(P_TWO_LABELS) { 2 } else { 1 };
    let labels = rand::seq::index::sample(rng, Label::ALL.len(), k)
        .iter()
        .map(|i| Label::ALL[i])
        .collect();
    PlannedSequence {
        labels,
        source: PlannerKind::Random,
        viable: true,
    }
}

pub fn plan_oracle(sample: &ContextSample) -> Result<PlannedSequence, PlanningError> {
    let labels = sample
        .gold_labels
        .clone()
        .ok_or_else(|| PlanningError::MissingGold(sample.id.clone()))?;
    Ok(PlannedSequence {
        labels,
        source: PlannerKind::Oracle,
        viable: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Any known label name anywhere in the answer, case-insensitive.
    #[default]
    Lenient,
    /// Exactly `Labels: 'a', 'b'` with an optional trailing period.
    Strict,
}

pub fn parse_label_response(raw: &str) -> PlannedSequence {
    parse_label_response_with(raw, ParseMode::Lenient)
}

/// Never fails: unparsable answers come back with `viable = false`.
/// Repeated labels keep their first occurrence.
pub fn parse_label_response_with(raw: &str, mode: ParseMode) -> PlannedSequence {
    let found = match mode {
        ParseMode::Lenient => lenient_labels(raw),
        ParseMode::Strict => strict_labels(raw).unwrap_or_default(),
    };
    let mut seen = LabelSet::new();
    let labels: LabelSequence = found.into_iter().filter(|l| seen.insert(*l)).collect();
    if labels.is_empty() {
        return PlannedSequence::unparsable();
    }
    PlannedSequence {
        labels,
        source: PlannerKind::Remote,
        viable: true,
    }
}

fn lenient_labels(raw: &str) -> Vec<Label> {
    raw.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse().ok())
        .collect()
}

fn strict_labels(raw: &str) -> Option<Vec<Label>> {
    let body = raw.trim().strip_prefix("Labels:")?.trim();
    let body = body.strip_suffix('.').unwrap_or(body);
    body.split(',')
        .map(|item| {
            let item = item.trim();
            let inner = item
                .strip_prefix('\'')
                .or_else(|| item.strip_prefix('`'))?
                .strip_suffix('\'')?;
            inner.parse().ok()
        })
        .collect()
}

#[async_trait]
pub trait Planner: Send + Sync {
    fn kind(&self) -> PlannerKind;

    /// Whether the output order is meaningful, so NLS is reported.
    fn sequence_aware(&self) -> bool {
        true
    }

    async fn plan(&self, sample: &ContextSample) -> Result<PlannedSequence, PlanningError>;
}

/// Random baseline seeded per sample, so results do not depend on call order.
#[derive(Debug, Clone, Copy)]
pub struct RandomPlanner {
    pub seed: u64,
}

impl RandomPlanner {
    pub fn rng_for(&self, sample_id: &str) -> ChaCha8Rng {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(sample_id.as_bytes())
            .finalize();
        ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")))
    }
}

#[async_trait]
impl Planner for RandomPlanner {
    fn kind(&self) -> PlannerKind {
        PlannerKind::Random
    }

    async fn plan(&self, sample: &ContextSample) -> Result<PlannedSequence, PlanningError> {
        Ok(plan_random(&mut self.rng_for(&sample.id)))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePlanner;

#[async_trait]
impl Planner for OraclePlanner {
    fn kind(&self) -> PlannerKind {
        PlannerKind::Oracle
    }

    async fn plan(&self, sample: &ContextSample) -> Result<PlannedSequence, PlanningError> {
        plan_oracle(sample)
    }
}

/// Planner backed by a `predict-labels` backend. The returned strings are
/// joined and parsed, so both label lists and raw LLM answers work.
#[derive(Clone)]
pub struct RemotePlanner {
    predictor: Arc<dyn LabelPredictor>,
    mode: ParseMode,
    sequence_aware: bool,
}

impl RemotePlanner {
    pub fn new(predictor: Arc<dyn LabelPredictor>) -> Self {
        RemotePlanner {
            predictor,
            mode: ParseMode::Lenient,
            sequence_aware: true,
        }
    }

    pub fn with_parse_mode(mut self, mode: ParseMode) -> Self {
        self.mode = mode;
        self
    }

    /// Marks the backend as an unordered multi-label classifier (no NLS).
    pub fn unordered(mut self) -> Self {
        self.sequence_aware = false;
        self
    }
}

#[async_trait]
impl Planner for RemotePlanner {
    fn kind(&self) -> PlannerKind {
        PlannerKind::Remote
    }

    fn sequence_aware(&self) -> bool {
        self.sequence_aware
    }

    async fn plan(&self, sample: &ContextSample) -> Result<PlannedSequence, PlanningError> {
        let context = WireTurn::from_turns(&sample.context);
        let answer = self
            .predictor
            .predict_labels(&context)
            .await
            .map_err(|source| PlanningError::Backend { index: 0, source })?;
        Ok(match answer {
            None => PlannedSequence::unparsable(),
            Some(items) => {
                // a plain list of label names is accepted in either mode
                let direct: Option<Vec<Label>> = items.iter().map(|s| s.parse().ok()).collect();
                match direct {
                    Some(labels) if !labels.is_empty() => {
                        let mut seen = LabelSet::new();
                        PlannedSequence {
                            labels: labels.into_iter().filter(|l| seen.insert(*l)).collect(),
                            source: PlannerKind::Remote,
                            viable: true,
                        }
                    }
                    _ => parse_label_response_with(&items.join(", "), self.mode),
                }
            }
        })
    }
}

/// Runs `planner` over every sample and scores it against the golds.
/// Non-viable plans count as empty predictions.
pub async fn evaluate_planner(
    planner: &dyn Planner,
    split: &CorpusSplit,
    jobs: usize,
) -> Result<MetricReport, PlanningError> {
    let plans: Vec<PlannedSequence> = stream::iter(split.samples.iter().enumerate())
        .map(|(index, sample)| async move {
            planner.plan(sample).await.map_err(|e| match e {
                PlanningError::Backend { source, .. } => PlanningError::Backend { index, source },
                other => other,
            })
        })
        .buffered(jobs.max(1))
        .try_collect()
        .await?;

    let mut golds = Vec::with_capacity(plans.len());
    let mut gold_seqs = Vec::with_capacity(plans.len());
    for sample in &split.samples {
        let gold = sample
            .gold_labels
            .as_ref()
            .ok_or_else(|| PlanningError::MissingGold(sample.id.clone()))?;
        golds.push(gold.to_set());
        gold_seqs.push(gold);
    }
    let predicted: Vec<LabelSequence> = plans
        .into_iter()
        .map(|p| if p.viable { p.labels } else { LabelSequence::new() })
        .collect();
    let pred_sets: Vec<LabelSet> = predicted.iter().map(LabelSequence::to_set).collect();

    let mut report = metrics::multilabel_prf(&golds, &pred_sets)?;
    report.mean_len = metrics::mean_sequence_length(&predicted)?;
    if planner.sequence_aware() {
        let total: f64 = predicted
            .iter()
            .zip(&gold_seqs)
            .map(|(p, g)| metrics::nls(p.as_slice(), g.as_slice()))
            .sum();
        report.nls = Some(total / predicted.len() as f64);
    }
    Ok(report)
}
