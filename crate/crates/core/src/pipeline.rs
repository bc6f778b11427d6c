//! Conditioned response selection: generate candidates, label each one with a
//! classifier, and pick the candidate whose labels are closest (NLS) to the
//! planned sequence.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Classifier, GenerateRequest, Generator, WireTurn};
use crate::corpus::ContextSample;
use crate::labels::{Label, LabelSequence, LabelSet};
use crate::metrics::nls;
use crate::planning::{plan_oracle, PlannedSequence, Planner};
use crate::protocol::ModelKey;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no candidates to rerank")]
    EmptyCandidateList,
    #[error("classifier unavailable: {0}")]
    ClassifierUnavailable(#[source] BackendError),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("run record line {line}: {source}")]
    RecordFormat {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditioningMode {
    #[serde(rename = "NO_CD")]
    NoCd,
    #[serde(rename = "CD_PRED")]
    CdPred,
    #[serde(rename = "CD_GT")]
    CdGt,
}

impl ConditioningMode {
    pub const ALL: [ConditioningMode; 3] = [ConditioningMode::NoCd, ConditioningMode::CdPred, ConditioningMode::CdGt];

    pub fn is_conditioned(self) -> bool {
        self != ConditioningMode::NoCd
    }
}

impl fmt::Display for ConditioningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditioningMode::NoCd => "NO-CD",
            ConditioningMode::CdPred => "CD-pred",
            ConditioningMode::CdGt => "CD-GT",
        })
    }
}

impl FromStr for ConditioningMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "nocd" | "no-cd" => Ok(ConditioningMode::NoCd),
            "cd-pred" | "cdpred" => Ok(ConditioningMode::CdPred),
            "cd-gt" | "cdgt" => Ok(ConditioningMode::CdGt),
            _ => Err(format!("unknown conditioning mode `{s}`")),
        }
    }
}

/// How a system produces its final response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    /// Generate N candidates, rerank by label similarity.
    Reranking,
    /// Ask the generator directly for a response in the planned tone.
    PromptBased,
    /// The human reference response from the corpus.
    Reference,
}

impl FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reranking" | "r" => Ok(Approach::Reranking),
            "prompt-based" | "pb" => Ok(Approach::PromptBased),
            "reference" => Ok(Approach::Reference),
            _ => Err(format!("unknown approach `{s}`")),
        }
    }
}

/// Where the unconditioned response comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoCdSource {
    /// A dedicated single-response generation.
    #[default]
    Separate,
    /// The first candidate of the N-candidate pool.
    Pool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model: String,
    pub n_candidates: usize,
    pub window: usize,
    pub classifier_threshold: f64,
    pub mode: ConditioningMode,
    pub approach: Approach,
    pub nocd_source: NoCdSource,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model: "mock".into(),
            n_candidates: 10,
            window: 3,
            classifier_threshold: 0.7,
            mode: ConditioningMode::NoCd,
            approach: Approach::Reranking,
            nocd_source: NoCdSource::Separate,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_candidates == 0 {
            return Err(PipelineError::InvalidConfig("n_candidates must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(PipelineError::InvalidConfig("window must be at least 1".into()));
        }
        if !(self.classifier_threshold > 0.0 && self.classifier_threshold < 1.0) {
            return Err(PipelineError::InvalidConfig("classifier_threshold must lie in (0, 1)".into()));
        }
        if self.approach == Approach::Reference {
            return Err(PipelineError::InvalidConfig("the reference is not a generation approach".into()));
        }
        Ok(())
    }

    pub fn model_key(&self) -> ModelKey {
        ModelKey::new(&self.model, self.mode, self.approach)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub labels: LabelSet,
    pub confidences: BTreeMap<Label, f64>,
    /// Nothing reached the threshold; `labels` holds the argmax label alone.
    pub low_confidence: bool,
}

/// Keeps the labels whose confidence reaches `threshold`; if none does, falls
/// back to the single most confident label (first in label order on ties).
pub fn classify_labels(confidences: BTreeMap<Label, f64>, threshold: f64) -> Classification {
    let labels: LabelSet = confidences
        .iter()
        .filter(|(_, c)| **c >= threshold)
        .map(|(l, _)| *l)
        .collect();
    if !labels.is_empty() || confidences.is_empty() {
        return Classification {
            labels,
            confidences,
            low_confidence: false,
        };
    }
    let best = confidences
        .iter()
        .fold(None::<(Label, f64)>, |best, (l, c)| match best {
            Some((_, b)) if b >= *c => best,
            _ => Some((*l, *c)),
        })
        .map(|(l, _)| l);
    Classification {
        labels: best.into_iter().collect(),
        confidences,
        low_confidence: true,
    }
}

pub async fn classify_text(
    classifier: &dyn Classifier,
    text: &str,
    threshold: f64,
) -> Result<Classification, PipelineError> {
    let confidences = classifier
        .classify(text)
        .await
        .map_err(PipelineError::ClassifierUnavailable)?;
    Ok(classify_labels(confidences, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// 0-based position in the generator's output.
    pub index: usize,
    pub text: String,
    pub labels: LabelSet,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub confidences: BTreeMap<Label, f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub low_confidence: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nls: Option<f64>,
}

impl Candidate {
    pub fn unlabelled(index: usize, text: impl Into<String>) -> Self {
        Candidate {
            index,
            text: text.into(),
            labels: LabelSet::new(),
            confidences: BTreeMap::new(),
            low_confidence: false,
            nls: None,
        }
    }

    fn apply(&mut self, c: Classification) {
        self.labels = c.labels;
        self.confidences = c.confidences;
        self.low_confidence = c.low_confidence;
    }
}

/// Scores every candidate against `expected` and returns the position of the
/// best one; ties go to the earliest candidate.
pub fn rerank(candidates: &mut [Candidate], expected: &LabelSequence) -> Result<usize, PipelineError> {
    if candidates.is_empty() {
        return Err(PipelineError::EmptyCandidateList);
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (pos, cand) in candidates.iter_mut().enumerate() {
        let score = nls(cand.labels.canonical_sequence().as_slice(), expected.as_slice());
        cand.nls = Some(score);
        if score > best_score {
            best_score = score;
            best = pos;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// No candidate could be parsed from the generator output.
    Unparsable,
    Failed { cause: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRunRecord {
    pub sample_id: String,
    pub conversation_id: String,
    pub context_turns: Vec<WireTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<LabelSequence>,
    pub gold_response: String,
    pub model: String,
    pub approach: Approach,
    pub mode: ConditioningMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planned: Option<PlannedSequence>,
    pub candidates: Vec<Candidate>,
    pub selected_index: Option<usize>,
    pub selected_text: Option<String>,
    #[serde(flatten)]
    pub status: RunStatus,
    /// A conditioned run whose plan was not viable and fell back to the first candidate.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback_nocd: bool,
}

impl PipelineRunRecord {
    pub fn model_key(&self) -> ModelKey {
        ModelKey::new(&self.model, self.mode, self.approach)
    }

    pub fn selected(&self) -> Option<&Candidate> {
        self.selected_index.and_then(|i| self.candidates.get(i))
    }
}

/// Model backends used by [`run_context`].
#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn Generator>,
    pub classifier: Option<Arc<dyn Classifier>>,
    pub planner: Option<Arc<dyn Planner>>,
}

/// Runs one context through generation and selection. Backend failures are
/// recorded in the returned record rather than raised.
pub async fn run_context(sample: &ContextSample, config: &GenerationConfig, backends: &Backends) -> PipelineRunRecord {
    let start = sample.context.len().saturating_sub(config.window);
    let context_turns = WireTurn::from_turns(&sample.context[start..]);
    let mut record = PipelineRunRecord {
        sample_id: sample.id.clone(),
        conversation_id: sample.conversation_id.clone(),
        context_turns,
        gold_labels: sample.gold_labels.clone(),
        gold_response: sample.gold_response.clone(),
        model: config.model.clone(),
        approach: config.approach,
        mode: config.mode,
        planned: None,
        candidates: Vec::new(),
        selected_index: None,
        selected_text: None,
        status: RunStatus::Ok,
        fallback_nocd: false,
    };
    if let Err(e) = select(sample, config, backends, &mut record).await {
        record.status = RunStatus::Failed { cause: e };
        record.selected_index = None;
        record.selected_text = None;
    }
    record
}

async fn select(
    sample: &ContextSample,
    config: &GenerationConfig,
    backends: &Backends,
    record: &mut PipelineRunRecord,
) -> Result<(), String> {
    config.validate().map_err(|e| e.to_string())?;

    let planned = match config.mode {
        ConditioningMode::NoCd => None,
        ConditioningMode::CdGt => Some(plan_oracle(sample).map_err(|e| e.to_string())?),
        ConditioningMode::CdPred => {
            let planner = backends
                .planner
                .as_ref()
                .ok_or("CD_PRED requires a planner")?;
            Some(planner.plan(sample).await.map_err(|e| e.to_string())?)
        }
    };
    let expected = planned.as_ref().filter(|p| p.viable).map(|p| p.labels.clone());
    record.fallback_nocd = planned.as_ref().is_some_and(|p| !p.viable);
    record.planned = planned;

    let request = |n: usize, labels: Option<&LabelSequence>| GenerateRequest {
        context_turns: record.context_turns.clone(),
        n,
        mode: config.mode,
        labels: labels.map(|l| l.iter().map(|x| x.to_string()).collect()),
    };

    let (n, labels) = match (&expected, config.approach, config.mode) {
        (Some(exp), Approach::PromptBased, _) => (1, Some(exp)),
        (_, _, ConditioningMode::NoCd) if config.nocd_source == NoCdSource::Separate => (1, None),
        _ => (config.n_candidates, None),
    };
    let texts = backends
        .generator
        .generate(&request(n, labels))
        .await
        .map_err(|e| format!("generator: {e}"))?;
    let mut candidates: Vec<Candidate> = texts
        .into_iter()
        .enumerate()
        .filter(|(_, t)| !t.trim().is_empty())
        .map(|(i, t)| Candidate::unlabelled(i, t.trim()))
        .collect();
    if candidates.is_empty() {
        record.status = RunStatus::Unparsable;
        return Ok(());
    }

    let rerank_against = match (&expected, config.approach) {
        (Some(exp), Approach::Reranking) => Some(exp),
        _ => None,
    };
    let selected = if let Some(exp) = rerank_against {
        let classifier = backends
            .classifier
            .as_ref()
            .ok_or("reranking requires a classifier")?;
        for cand in candidates.iter_mut() {
            let c = classify_text(classifier.as_ref(), &cand.text, config.classifier_threshold)
                .await
                .map_err(|e| e.to_string())?;
            cand.apply(c);
        }
        rerank(&mut candidates, exp).map_err(|e| e.to_string())?
    } else {
        0
    };
    record.selected_index = Some(selected);
    record.selected_text = Some(candidates[selected].text.clone());
    record.candidates = candidates;
    Ok(())
}

/// Runs every sample with at most `jobs` contexts in flight; output keeps
/// sample order.
pub async fn run_split(
    samples: &[ContextSample],
    config: &GenerationConfig,
    backends: &Backends,
    jobs: usize,
) -> Vec<PipelineRunRecord> {
    stream::iter(samples)
        .map(|s| run_context(s, config, backends))
        .buffered(jobs.max(1))
        .collect()
        .await
}

/// Append-only JSON-lines sink for run records.
pub struct RunRecordWriter<W: Write> {
    out: W,
}

impl<W: Write> RunRecordWriter<W> {
    pub fn new(out: W) -> Self {
        RunRecordWriter { out }
    }

    pub fn append(&mut self, record: &PipelineRunRecord) -> Result<(), PipelineError> {
        serde_json::to_writer(&mut self.out, record).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_records_jsonl<R: BufRead>(input: R) -> Result<Vec<PipelineRunRecord>, PipelineError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| PipelineError::RecordFormat { line: i + 1, source })?);
    }
    Ok(out)
}
