//! Three-step human evaluation: per-context response pools, judgment
//! validation, dialogue-act tagging, and the filter / top-3 / socemo scores
//! with inter-annotator agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{Classifier, WireTurn};
use crate::labels::{Label, LabelKind};
use crate::metrics::{jaccard_distance, krippendorff_alpha, pairwise_list_jaccard, AnnotationMatrix, MetricsError};
use crate::pipeline::{Approach, ConditioningMode, PipelineRunRecord};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{field}: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TagError {
    #[error("unbalanced tags at byte {offset}")]
    UnbalancedTags { offset: usize },
    #[error("unknown tag `{tag}` at byte {offset}")]
    UnknownTag { tag: String, offset: usize },
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("no run records for the context")]
    NoRecords,
    #[error("records belong to different contexts: `{expected}` and `{found}`")]
    ContextMismatch { expected: String, found: String },
    #[error("model key {key} appears twice in context `{context}`")]
    DuplicateKey { context: String, key: ModelKey },
    #[error("unknown context `{0}`")]
    UnknownContext(String),
    #[error("invalid judgment: {0}")]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Tag(#[from] TagError),
    #[error("no judgments to score")]
    NoJudgments,
    #[error("annotator `{annotator}` has no rating for response `{response_id}` in context `{context}`")]
    MissingRating {
        annotator: String,
        context: String,
        response_id: String,
    },
    #[error("invalid questionnaire: {0}")]
    Questionnaire(String),
    #[error("invalid act tag map: {0}")]
    TagMap(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Identity of a system under evaluation. The corpus reference carries the
/// reserved key with model `reference` and no conditioning mode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelKey {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ConditioningMode>,
    pub approach: Approach,
}

impl ModelKey {
    pub const REFERENCE_MODEL: &'static str = "reference";

    pub fn new(model: impl Into<String>, mode: ConditioningMode, approach: Approach) -> Self {
        if approach == Approach::Reference {
            return Self::reference();
        }
        ModelKey {
            model: model.into(),
            mode: Some(mode),
            approach,
        }
    }

    pub fn reference() -> Self {
        ModelKey {
            model: Self::REFERENCE_MODEL.into(),
            mode: None,
            approach: Approach::Reference,
        }
    }

    pub fn is_reference(&self) -> bool {
        self.approach == Approach::Reference
    }
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.approach, self.mode) {
            (Approach::Reference, _) | (_, None) => f.write_str(&self.model),
            (Approach::Reranking, Some(ConditioningMode::NoCd)) => write!(f, "{} NO-CD", self.model),
            (Approach::Reranking, Some(m)) => write!(f, "{} R {m}", self.model),
            (Approach::PromptBased, Some(m)) => write!(f, "{} PB {m}", self.model),
        }
    }
}

/// Trims and collapses internal whitespace runs to one space; case is kept.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Opaque id derived from the context and the normalized text only.
pub fn response_id(context_id: &str, normalized: &str) -> String {
    let digest = Sha256::new()
        .chain_update(context_id.as_bytes())
        .chain_update([0u8])
        .chain_update(normalized.as_bytes())
        .finalize();
    format!("r{}", &hex::encode(digest)[..16])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub response_id: String,
    pub text: String,
    pub producers: BTreeSet<ModelKey>,
}

/// Distinct responses for one context. Entries are ordered by response id,
/// which carries no producer information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePool {
    pub context_id: String,
    pub context_turns: Vec<WireTurn>,
    pub entries: Vec<PoolEntry>,
}

impl ResponsePool {
    pub fn entry(&self, response_id: &str) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.response_id == response_id)
    }

    /// The entry whose producers include `key`.
    pub fn entry_of(&self, key: &ModelKey) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.producers.contains(key))
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.response_id.as_str()).collect()
    }

    pub fn keys(&self) -> BTreeSet<&ModelKey> {
        self.entries.iter().flat_map(|e| e.producers.iter()).collect()
    }
}

/// Merges `(producer, text)` pairs into a pool, one entry per normalized text.
/// Blank texts are skipped.
pub fn dedup_texts(
    context_id: &str,
    context_turns: Vec<WireTurn>,
    items: impl IntoIterator<Item = (ModelKey, String)>,
) -> Result<ResponsePool, ProtocolError> {
    let mut seen_keys = BTreeSet::new();
    let mut by_text: BTreeMap<String, BTreeSet<ModelKey>> = BTreeMap::new();
    let mut any = false;
    for (key, text) in items {
        any = true;
        if !seen_keys.insert(key.clone()) {
            return Err(ProtocolError::DuplicateKey {
                context: context_id.to_string(),
                key,
            });
        }
        let norm = normalize_text(&text);
        if norm.is_empty() {
            continue;
        }
        by_text.entry(norm).or_default().insert(key);
    }
    if !any {
        return Err(ProtocolError::NoRecords);
    }
    let mut entries: Vec<PoolEntry> = by_text
        .into_iter()
        .map(|(text, producers)| PoolEntry {
            response_id: response_id(context_id, &text),
            text,
            producers,
        })
        .collect();
    entries.sort_by(|a, b| a.response_id.cmp(&b.response_id));
    Ok(ResponsePool {
        context_id: context_id.to_string(),
        context_turns,
        entries,
    })
}

/// Builds the pool for one context from its run records, adding the corpus
/// reference response as a producer when `with_reference` is set. Records
/// without a selected response contribute nothing.
pub fn dedup_pool(records: &[PipelineRunRecord], with_reference: bool) -> Result<ResponsePool, ProtocolError> {
    let first = records.first().ok_or(ProtocolError::NoRecords)?;
    if let Some(other) = records.iter().find(|r| r.sample_id != first.sample_id) {
        return Err(ProtocolError::ContextMismatch {
            expected: first.sample_id.clone(),
            found: other.sample_id.clone(),
        });
    }
    let mut items: Vec<(ModelKey, String)> = records
        .iter()
        .map(|r| (r.model_key(), r.selected_text.clone().unwrap_or_default()))
        .collect();
    if with_reference {
        items.push((ModelKey::reference(), first.gold_response.clone()));
    }
    dedup_texts(&first.sample_id, first.context_turns.clone(), items)
}

/// Deterministic presentation order for one seed.
pub fn shuffle_pool(pool: &ResponsePool, seed: u64) -> Vec<&PoolEntry> {
    let mut view: Vec<&PoolEntry> = pool.entries.iter().collect();
    view.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    view
}

/// Per-screen shuffle seed from the campaign seed, context and annotator.
pub fn shuffle_seed(campaign_seed: u64, context_id: &str, annotator: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(campaign_seed.to_le_bytes())
        .chain_update(context_id.as_bytes())
        .chain_update([0u8])
        .chain_update(annotator.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step1Judgment {
    pub annotator: String,
    pub context_id: String,
    /// response id → kept
    pub kept: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<BTreeMap<String, bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specificity: Option<BTreeMap<String, bool>>,
}

impl Step1Judgment {
    pub fn validate(&self, pool: &ResponsePool) -> Result<(), ValidationError> {
        let ids = pool.ids();
        if let Some(extra) = self.kept.keys().find(|k| !ids.contains(k.as_str())) {
            return Err(ValidationError::new(format!("kept.{extra}"), "not in the pool"));
        }
        if let Some(missing) = ids.iter().find(|id| !self.kept.contains_key(**id)) {
            return Err(ValidationError::new(format!("kept.{missing}"), "response not judged"));
        }
        for (field, flags) in [("consistency", &self.consistency), ("specificity", &self.specificity)] {
            if let Some(extra) = flags.iter().flat_map(|m| m.keys()).find(|k| !ids.contains(k.as_str())) {
                return Err(ValidationError::new(format!("{field}.{extra}"), "not in the pool"));
            }
        }
        Ok(())
    }

    pub fn kept_set(&self) -> BTreeSet<String> {
        self.kept.iter().filter(|(_, k)| **k).map(|(id, _)| id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step2Selection {
    pub annotator: String,
    pub context_id: String,
    pub top3: Vec<String>,
}

impl Step2Selection {
    /// Three distinct kept ids; when fewer than three were kept, all of them.
    pub fn validate(&self, kept: &BTreeSet<String>) -> Result<(), ValidationError> {
        let want = kept.len().min(3);
        if self.top3.len() != want {
            return Err(ValidationError::new(
                "top3",
                format!("expected {want} responses, got {}", self.top3.len()),
            ));
        }
        let mut seen = BTreeSet::new();
        for (i, id) in self.top3.iter().enumerate() {
            if !seen.insert(id) {
                return Err(ValidationError::new(format!("top3[{i}]"), "duplicate response"));
            }
            if !kept.contains(id) {
                return Err(ValidationError::new(format!("top3[{i}]"), "response was eliminated in step 1"));
            }
        }
        Ok(())
    }
}

/// Step-3 pool: every response picked by at least one annotator.
pub fn union_top3<'a>(selections: impl IntoIterator<Item = &'a Step2Selection>) -> BTreeSet<String> {
    selections.into_iter().flat_map(|s| s.top3.iter().cloned()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub act: Label,
    pub text: String,
}

/// Tag letter ↔ dialogue act.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActTagMap(BTreeMap<String, Label>);

impl Default for ActTagMap {
    fn default() -> Self {
        ActTagMap(
            [
                ("I", Label::Inform),
                ("Q", Label::Question),
                ("D", Label::Directive),
                ("C", Label::Commissive),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        )
    }
}

impl ActTagMap {
    pub fn new(tags: BTreeMap<String, Label>) -> Result<Self, ProtocolError> {
        let mut seen = BTreeSet::new();
        for (tag, label) in &tags {
            if tag.is_empty() || tag.contains(['<', '>', '/']) || tag.chars().any(char::is_whitespace) {
                return Err(ProtocolError::TagMap(format!("bad tag `{tag}`")));
            }
            if label.kind() != LabelKind::Act {
                return Err(ProtocolError::TagMap(format!("`{label}` is not a dialogue act")));
            }
            if !seen.insert(*label) {
                return Err(ProtocolError::TagMap(format!("`{label}` has two tags")));
            }
        }
        Ok(ActTagMap(tags))
    }

    pub fn act(&self, tag: &str) -> Option<Label> {
        self.0.get(tag).copied()
    }

    pub fn tag(&self, act: Label) -> Option<&str> {
        self.0.iter().find(|(_, l)| **l == act).map(|(t, _)| t.as_str())
    }
}

/// Parses `<I>text</I> <Q>text</Q>` into segments. Only whitespace may
/// appear between segments; tags do not nest. Segment text is trimmed.
pub fn parse_tagged_response(text: &str, tags: &ActTagMap) -> Result<Vec<Segment>, TagError> {
    let mut segments = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &text[pos..];
        let skipped = rest.len() - rest.trim_start().len();
        pos += skipped;
        if pos == text.len() {
            return Ok(segments);
        }
        if !text[pos..].starts_with('<') {
            return Err(TagError::UnbalancedTags { offset: pos });
        }
        let (name, closing, after) = read_tag(text, pos)?;
        if closing {
            return Err(TagError::UnbalancedTags { offset: pos });
        }
        let act = tags.act(name).ok_or_else(|| TagError::UnknownTag {
            tag: name.to_string(),
            offset: pos,
        })?;
        let body_start = after;
        let close_at = match text[body_start..].find('<') {
            Some(i) => body_start + i,
            None => return Err(TagError::UnbalancedTags { offset: text.len() }),
        };
        let (close_name, close_closing, close_after) = read_tag(text, close_at)?;
        if !close_closing || close_name != name {
            return Err(TagError::UnbalancedTags { offset: close_at });
        }
        segments.push(Segment {
            act,
            text: text[body_start..close_at].trim().to_string(),
        });
        pos = close_after;
    }
}

// Reads `<name>` or `</name>` at `at`; returns (name, is_closing, end offset).
fn read_tag(text: &str, at: usize) -> Result<(&str, bool, usize), TagError> {
    let end = text[at..]
        .find('>')
        .map(|i| at + i)
        .ok_or(TagError::UnbalancedTags { offset: text.len() })?;
    let inner = &text[at + 1..end];
    let (closing, name) = match inner.strip_prefix('/') {
        Some(n) => (true, n),
        None => (false, inner),
    };
    if name.is_empty() || name.contains('<') {
        return Err(TagError::UnbalancedTags { offset: at });
    }
    Ok((name, closing, end + 1))
}

/// Inverse of [`parse_tagged_response`] for segments whose acts have tags.
pub fn serialize_tagged(segments: &[Segment], tags: &ActTagMap) -> Result<String, TagError> {
    let mut parts = Vec::with_capacity(segments.len());
    for s in segments {
        let tag = tags.tag(s.act).ok_or_else(|| TagError::UnknownTag {
            tag: s.act.to_string(),
            offset: 0,
        })?;
        parts.push(format!("<{tag}>{}</{tag}>", s.text));
    }
    Ok(parts.join(" "))
}

/// Splits after `.`, `?` or `!` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for i in 0..bytes.len() {
        if matches!(bytes[i], b'.' | b'?' | b'!') && bytes.get(i + 1).is_some_and(u8::is_ascii_whitespace) {
            out.push(text[start..=i].trim());
            start = i + 1;
        }
    }
    out.push(text[start..].trim());
    out.retain(|s| !s.is_empty());
    out
}

/// Pre-annotates a response: one act per sentence, adjacent sentences with
/// the same act merged into one segment.
pub fn pretag_with(text: &str, mut act_of: impl FnMut(&str) -> Label) -> Vec<Segment> {
    let mut segments: Vec<Segment> = Vec::new();
    for sentence in split_sentences(text) {
        let act = act_of(sentence);
        match segments.last_mut() {
            Some(last) if last.act == act => {
                last.text.push(' ');
                last.text.push_str(sentence);
            }
            _ => segments.push(Segment {
                act,
                text: sentence.to_string(),
            }),
        }
    }
    segments
}

/// Pre-tags with a classifier, keeping the most confident act per sentence.
pub async fn pretag_with_classifier(
    text: &str,
    classifier: &dyn Classifier,
) -> Result<Vec<Segment>, crate::backend::BackendError> {
    let mut acts = Vec::new();
    for sentence in split_sentences(text) {
        let conf = classifier.classify(sentence).await?;
        let best = Label::ACTS
            .iter()
            .copied()
            .fold((Label::Inform, f64::NEG_INFINITY), |best, l| {
                let c = conf.get(&l).copied().unwrap_or(0.0);
                if c > best.1 {
                    (l, c)
                } else {
                    best
                }
            })
            .0;
        acts.push(best);
    }
    let mut acts = acts.into_iter();
    Ok(pretag_with(text, |_| acts.next().unwrap_or(Label::Inform)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Logical,
    Emotional,
    Social,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Logical, Axis::Emotional, Axis::Social];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub axis: Axis,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireSpec {
    pub scale: Scale,
    /// Question whose ratings feed the weighted fluency column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluency_question: Option<String>,
    pub questions: Vec<Question>,
}

impl Default for QuestionnaireSpec {
    fn default() -> Self {
        let q = |id: &str, axis, text: &str| Question {
            id: id.into(),
            axis,
            text: text.into(),
            min: None,
            max: None,
        };
        QuestionnaireSpec {
            scale: Scale { min: 1, max: 5 },
            fluency_question: Some("fluency".into()),
            questions: vec![
                q("usefulness", Axis::Logical, "Is the response useful given the context?"),
                q("fluency", Axis::Logical, "Is the response fluent?"),
                q("style_consistency", Axis::Logical, "Is the style consistent with the dialogue?"),
                q("emotional_tone_adequacy", Axis::Emotional, "Is the emotional tone of the response adequate?"),
                q("dialogue_strategy_adequacy", Axis::Social, "Are the dialogue strategies adequate?"),
                q("role_consistency", Axis::Social, "Is the speaker consistent with their role?"),
            ],
        }
    }
}

impl QuestionnaireSpec {
    pub fn from_toml(text: &str) -> Result<Self, ProtocolError> {
        let spec: QuestionnaireSpec = toml::from_str(text).map_err(|e| ProtocolError::Questionnaire(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("questionnaire is always representable")
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.questions.is_empty() {
            return Err(ProtocolError::Questionnaire("no questions".into()));
        }
        let mut ids = BTreeSet::new();
        for q in &self.questions {
            if !ids.insert(q.id.as_str()) {
                return Err(ProtocolError::Questionnaire(format!("duplicate question `{}`", q.id)));
            }
            let s = self.scale_of(q);
            if s.min >= s.max {
                return Err(ProtocolError::Questionnaire(format!("empty scale for `{}`", q.id)));
            }
        }
        if let Some(f) = &self.fluency_question {
            if !ids.contains(f.as_str()) {
                return Err(ProtocolError::Questionnaire(format!("fluency question `{f}` is not defined")));
            }
        }
        Ok(())
    }

    pub fn scale_of(&self, q: &Question) -> Scale {
        Scale {
            min: q.min.unwrap_or(self.scale.min),
            max: q.max.unwrap_or(self.scale.max),
        }
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    /// Maps a rating onto `[0, 1]`.
    pub fn normalize(&self, question: &Question, value: u32) -> f64 {
        let s = self.scale_of(question);
        (value - s.min) as f64 / (s.max - s.min) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step3Rating {
    pub annotator: String,
    pub context_id: String,
    pub response_id: String,
    pub tagged_text: Vec<Segment>,
    pub ratings: BTreeMap<String, u32>,
}

impl Step3Rating {
    pub fn validate(&self, questionnaire: &QuestionnaireSpec, tags: &ActTagMap) -> Result<(), ValidationError> {
        for (i, seg) in self.tagged_text.iter().enumerate() {
            if tags.tag(seg.act).is_none() {
                return Err(ValidationError::new(
                    format!("tagged_text[{i}].act"),
                    format!("`{}` has no tag", seg.act),
                ));
            }
        }
        for (id, value) in &self.ratings {
            let q = questionnaire
                .question(id)
                .ok_or_else(|| ValidationError::new(format!("ratings.{id}"), "unknown question"))?;
            let s = questionnaire.scale_of(q);
            if !(s.min..=s.max).contains(value) {
                return Err(ValidationError::new(
                    format!("ratings.{id}"),
                    format!("{value} outside {}..={}", s.min, s.max),
                ));
            }
        }
        if let Some(q) = questionnaire.questions.iter().find(|q| !self.ratings.contains_key(&q.id)) {
            return Err(ValidationError::new(format!("ratings.{}", q.id), "not answered"));
        }
        Ok(())
    }
}

/// Axis means for one rated response, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatedScores {
    pub axes: [Option<f64>; 3],
    pub fluency: Option<f64>,
}

impl RatedScores {
    pub fn of(rating: &Step3Rating, questionnaire: &QuestionnaireSpec) -> RatedScores {
        let mut axes = [None; 3];
        for (slot, axis) in axes.iter_mut().zip(Axis::ALL) {
            let values: Vec<f64> = questionnaire
                .questions
                .iter()
                .filter(|q| q.axis == axis)
                .filter_map(|q| rating.ratings.get(&q.id).map(|v| questionnaire.normalize(q, *v)))
                .collect();
            if !values.is_empty() {
                *slot = Some(values.iter().sum::<f64>() / values.len() as f64);
            }
        }
        let fluency = questionnaire.fluency_question.as_ref().and_then(|id| {
            let q = questionnaire.question(id)?;
            rating.ratings.get(id).map(|v| questionnaire.normalize(q, *v))
        });
        RatedScores { axes, fluency }
    }

    /// Mean of the axis scores present.
    pub fn response_score(&self) -> f64 {
        let present: Vec<f64> = self.axes.iter().flatten().copied().collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    }
}

fn pool_map(pools: &[ResponsePool]) -> BTreeMap<&str, &ResponsePool> {
    pools.iter().map(|p| (p.context_id.as_str(), p)).collect()
}

/// Keys produced anywhere in `pools`, sorted.
pub fn all_keys(pools: &[ResponsePool]) -> Vec<ModelKey> {
    pools
        .iter()
        .flat_map(|p| p.keys())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

// annotator → context → kept ids, restricted to contexts with a pool
fn step1_index<'a>(
    pools: &BTreeMap<&str, &ResponsePool>,
    judgments: &'a [Step1Judgment],
) -> BTreeMap<&'a str, BTreeMap<&'a str, BTreeSet<String>>> {
    let mut idx: BTreeMap<&str, BTreeMap<&str, BTreeSet<String>>> = BTreeMap::new();
    for j in judgments.iter().filter(|j| pools.contains_key(j.context_id.as_str())) {
        idx.entry(j.annotator.as_str())
            .or_default()
            .insert(j.context_id.as_str(), j.kept_set());
    }
    idx
}

// Mean over annotators of (hits_i / N_i), ×100.
fn rate_by_annotator(
    per_annotator: &BTreeMap<&str, BTreeMap<&str, BTreeSet<String>>>,
    judged: &BTreeMap<&str, BTreeMap<&str, BTreeSet<String>>>,
    pools: &BTreeMap<&str, &ResponsePool>,
    keys: &[ModelKey],
) -> BTreeMap<ModelKey, f64> {
    let annotators: Vec<&str> = judged.iter().filter(|(_, c)| !c.is_empty()).map(|(a, _)| *a).collect();
    keys.iter()
        .map(|key| {
            let total: f64 = annotators
                .iter()
                .map(|a| {
                    let n_i = judged[a].len() as f64;
                    let hits = per_annotator
                        .get(a)
                        .map(|ctxs| {
                            ctxs.iter()
                                .filter(|(c, ids)| {
                                    pools[*c].entry_of(key).is_some_and(|e| ids.contains(&e.response_id))
                                })
                                .count()
                        })
                        .unwrap_or(0);
                    hits as f64 / n_i
                })
                .sum();
            (key.clone(), 100.0 * total / annotators.len() as f64)
        })
        .collect()
}

/// Step-1 score: share of judged contexts in which the entry holding the key
/// was kept, normalized per annotator by the contexts they judged, averaged
/// over annotators, as a percentage.
pub fn score_filter(
    pools: &[ResponsePool],
    judgments: &[Step1Judgment],
    keys: &[ModelKey],
) -> Result<BTreeMap<ModelKey, f64>, ProtocolError> {
    let pools = pool_map(pools);
    let judged = step1_index(&pools, judgments);
    if judged.is_empty() {
        return Err(ProtocolError::NoJudgments);
    }
    Ok(rate_by_annotator(&judged, &judged, &pools, keys))
}

/// Step-2 score: as [`score_filter`] with top-3 membership in place of
/// kept, using the same per-annotator denominators.
pub fn score_top3(
    pools: &[ResponsePool],
    judgments: &[Step1Judgment],
    selections: &[Step2Selection],
    keys: &[ModelKey],
) -> Result<BTreeMap<ModelKey, f64>, ProtocolError> {
    let pools = pool_map(pools);
    let judged = step1_index(&pools, judgments);
    if judged.is_empty() {
        return Err(ProtocolError::NoJudgments);
    }
    let mut picked: BTreeMap<&str, BTreeMap<&str, BTreeSet<String>>> = BTreeMap::new();
    for s in selections.iter().filter(|s| pools.contains_key(s.context_id.as_str())) {
        picked
            .entry(s.annotator.as_str())
            .or_default()
            .insert(s.context_id.as_str(), s.top3.iter().cloned().collect());
    }
    Ok(rate_by_annotator(&picked, &judged, &pools, keys))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step3Scores {
    pub socemo: f64,
    pub logical: Option<f64>,
    pub emotional: Option<f64>,
    pub social: Option<f64>,
    pub weighted_fluency: Option<f64>,
}

/// Step-3 scores over `contexts` (N) and `annotators` (k).
///
/// The step-3 pool of a context is the union of its top-3 selections. With
/// `require_complete`, every pooled response must be rated by every
/// annotator; otherwise unrated responses are skipped.
#[allow(clippy::too_many_arguments)]
pub fn score_step3(
    pools: &[ResponsePool],
    selections: &[Step2Selection],
    ratings: &[Step3Rating],
    questionnaire: &QuestionnaireSpec,
    contexts: &[String],
    annotators: &[String],
    keys: &[ModelKey],
    require_complete: bool,
) -> Result<BTreeMap<ModelKey, Step3Scores>, ProtocolError> {
    let pools = pool_map(pools);
    let mut rated: BTreeMap<(&str, &str, &str), RatedScores> = BTreeMap::new();
    for r in ratings {
        rated.insert(
            (r.annotator.as_str(), r.context_id.as_str(), r.response_id.as_str()),
            RatedScores::of(r, questionnaire),
        );
    }

    // instances[key] = rated scores of the key's pooled responses
    let mut instances: BTreeMap<&ModelKey, Vec<RatedScores>> = BTreeMap::new();
    for ctx in contexts {
        let pool = pools
            .get(ctx.as_str())
            .ok_or_else(|| ProtocolError::UnknownContext(ctx.clone()))?;
        let step3_pool = union_top3(selections.iter().filter(|s| &s.context_id == ctx));
        for a in annotators {
            for id in &step3_pool {
                let Some(scores) = rated.get(&(a.as_str(), ctx.as_str(), id.as_str())) else {
                    if require_complete {
                        return Err(ProtocolError::MissingRating {
                            annotator: a.clone(),
                            context: ctx.clone(),
                            response_id: id.clone(),
                        });
                    }
                    continue;
                };
                let Some(entry) = pool.entry(id) else { continue };
                for key in keys.iter().filter(|k| entry.producers.contains(*k)) {
                    instances.entry(key).or_default().push(*scores);
                }
            }
        }
    }

    let denom = (contexts.len() * annotators.len()) as f64;
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| 100.0 * xs.iter().sum::<f64>() / xs.len() as f64);
    Ok(keys
        .iter()
        .map(|key| {
            let inst = instances.get(key).map(Vec::as_slice).unwrap_or(&[]);
            let weighted = |f: &dyn Fn(&RatedScores) -> Option<f64>| {
                if denom == 0.0 {
                    0.0
                } else {
                    100.0 * inst.iter().filter_map(f).sum::<f64>() / denom
                }
            };
            let axis = |i: usize| mean(inst.iter().filter_map(|s| s.axes[i]).collect());
            let scores = Step3Scores {
                socemo: weighted(&|s| Some(s.response_score())),
                logical: axis(0),
                emotional: axis(1),
                social: axis(2),
                weighted_fluency: questionnaire.fluency_question.as_ref().map(|_| weighted(&|s| s.fluency)),
            };
            (key.clone(), scores)
        })
        .collect())
}

/// Everything the scorer needs; judgments for contexts without a pool are
/// ignored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CampaignData {
    pub pools: Vec<ResponsePool>,
    pub step1: Vec<Step1Judgment>,
    pub step2: Vec<Step2Selection>,
    pub step3: Vec<Step3Rating>,
    pub step3_contexts: Vec<String>,
    pub annotators: Vec<String>,
    pub questionnaire: QuestionnaireSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub key: ModelKey,
    pub filter: f64,
    pub top3: f64,
    pub socemo: f64,
    pub logical: Option<f64>,
    pub emotional: Option<f64>,
    pub social: Option<f64>,
    pub weighted_fluency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub version: String,
    pub contexts: usize,
    pub step3_contexts: usize,
    pub annotators: usize,
    pub rows: Vec<ScoreRow>,
}

impl ScoreReport {
    pub fn row(&self, key: &ModelKey) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| &r.key == key)
    }

    /// Fixed-width table: model, filtered, top3, socemo, logical, emotional,
    /// social, weighted fluency.
    pub fn to_table(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.key.to_string().len())
            .chain([5])
            .max()
            .unwrap_or(5);
        let cols = ["filtered", "top3", "socemo", "logical", "emotional", "social", "weighted fluency"];
        let mut out = format!("{:<name_w$}", "model");
        for c in cols {
            out.push_str(&format!("  {c:>w$}", w = c.len().max(6)));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:<name_w$}", r.key.to_string()));
            let vals = [
                Some(r.filter),
                Some(r.top3),
                Some(r.socemo),
                r.logical,
                r.emotional,
                r.social,
                r.weighted_fluency,
            ];
            for (c, v) in cols.iter().zip(vals) {
                let cell = v.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into());
                out.push_str(&format!("  {cell:>w$}", w = c.len().max(6)));
            }
            out.push('\n');
        }
        out
    }
}

/// Filter, top-3 and step-3 scores for every key in the pools. Step-3 scores
/// are zero/absent when no step-3 context is configured.
pub fn score_report(data: &CampaignData, require_complete: bool) -> Result<ScoreReport, ProtocolError> {
    let keys = all_keys(&data.pools);
    let filter = score_filter(&data.pools, &data.step1, &keys)?;
    let top3 = score_top3(&data.pools, &data.step1, &data.step2, &keys)?;
    let step3 = score_step3(
        &data.pools,
        &data.step2,
        &data.step3,
        &data.questionnaire,
        &data.step3_contexts,
        &data.annotators,
        &keys,
        require_complete,
    )?;
    let rows = keys
        .iter()
        .map(|k| {
            let s = step3[k];
            ScoreRow {
                key: k.clone(),
                filter: filter[k],
                top3: top3[k],
                socemo: s.socemo,
                logical: s.logical,
                emotional: s.emotional,
                social: s.social,
                weighted_fluency: s.weighted_fluency,
            }
        })
        .collect();
    Ok(ScoreReport {
        version: "v1".into(),
        contexts: data.pools.len(),
        step3_contexts: data.step3_contexts.len(),
        annotators: data.annotators.len(),
        rows,
    })
}

/// What an annotator's step-1 value is, per context, for agreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementUnit {
    /// The set of kept response ids.
    #[default]
    ResponseIds,
    /// The set of model keys whose response was kept.
    ModelKeys,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub annotators: (String, String),
    pub shared_contexts: usize,
    pub alpha: f64,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub unit: AgreementUnit,
    pub pairs: Vec<PairAgreement>,
    pub mean_alpha: f64,
    pub mean_jaccard: f64,
}

impl AgreementReport {
    pub fn to_table(&self) -> String {
        let name_w = self
            .pairs
            .iter()
            .map(|p| p.annotators.0.len() + p.annotators.1.len() + 3)
            .chain([4])
            .max()
            .unwrap_or(4);
        let mut out = format!("{:<name_w$}  {:>8}  {:>6}  {:>7}\n", "pair", "contexts", "alpha", "jaccard");
        for p in &self.pairs {
            let name = format!("{} / {}", p.annotators.0, p.annotators.1);
            out.push_str(&format!(
                "{name:<name_w$}  {:>8}  {:>6.3}  {:>7.3}\n",
                p.shared_contexts, p.alpha, p.jaccard
            ));
        }
        out.push_str(&format!(
            "{:<name_w$}  {:>8}  {:>6.3}  {:>7.3}\n",
            "mean", "", self.mean_alpha, self.mean_jaccard
        ));
        out
    }
}

/// Krippendorff's alpha (Jaccard distance over kept sets) and mean kept-set
/// Jaccard for every annotator pair sharing at least one context.
pub fn agreement_report(
    pools: &[ResponsePool],
    judgments: &[Step1Judgment],
    unit: AgreementUnit,
) -> Result<AgreementReport, ProtocolError> {
    let pools = pool_map(pools);
    let idx = step1_index(&pools, judgments);
    let value = |ctx: &str, kept: &BTreeSet<String>| -> BTreeSet<String> {
        match unit {
            AgreementUnit::ResponseIds => kept.clone(),
            AgreementUnit::ModelKeys => kept
                .iter()
                .filter_map(|id| pools[ctx].entry(id))
                .flat_map(|e| e.producers.iter().map(|k| serde_json::to_string(k).expect("key serializes")))
                .collect(),
        }
    };
    let annotators: Vec<&str> = idx.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, a) in annotators.iter().enumerate() {
        for b in &annotators[i + 1..] {
            let shared: Vec<&str> = idx[a].keys().filter(|c| idx[b].contains_key(*c)).copied().collect();
            if shared.is_empty() {
                continue;
            }
            let mut matrix = AnnotationMatrix::new(2);
            let mut jac = 0.0;
            for c in &shared {
                let va = value(c, &idx[a][c]);
                let vb = value(c, &idx[b][c]);
                jac += pairwise_list_jaccard(&va, &vb);
                matrix.push_unit(vec![Some(va), Some(vb)]);
            }
            pairs.push(PairAgreement {
                annotators: (a.to_string(), b.to_string()),
                shared_contexts: shared.len(),
                alpha: krippendorff_alpha(&matrix, jaccard_distance)?,
                jaccard: jac / shared.len() as f64,
            });
        }
    }
    if pairs.is_empty() {
        return Err(MetricsError::InsufficientData("no annotator pair shares a context".into()).into());
    }
    let n = pairs.len() as f64;
    Ok(AgreementReport {
        unit,
        mean_alpha: pairs.iter().map(|p| p.alpha).sum::<f64>() / n,
        mean_jaccard: pairs.iter().map(|p| p.jaccard).sum::<f64>() / n,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(model: &str, mode: ConditioningMode) -> ModelKey {
        ModelKey::new(model, mode, Approach::Reranking)
    }

    fn pool(ctx: &str, items: &[(ModelKey, &str)]) -> ResponsePool {
        dedup_texts(ctx, vec![], items.iter().map(|(k, t)| (k.clone(), t.to_string()))).unwrap()
    }

    fn judge(a: &str, p: &ResponsePool, kept: &[&str]) -> Step1Judgment {
        Step1Judgment {
            annotator: a.into(),
            context_id: p.context_id.clone(),
            kept: p
                .entries
                .iter()
                .map(|e| (e.response_id.clone(), kept.contains(&e.text.as_str())))
                .collect(),
            consistency: None,
            specificity: None,
        }
    }

    fn id_of(p: &ResponsePool, text: &str) -> String {
        p.entries.iter().find(|e| e.text == text).unwrap().response_id.clone()
    }

    #[test]
    fn dedup_merges_normalized_duplicates() {
        let gt = key("bart-base", ConditioningMode::CdGt);
        let pred = key("bart-base", ConditioningMode::CdPred);
        let nocd = key("bart-base", ConditioningMode::NoCd);
        let p = pool(
            "c1",
            &[
                (gt.clone(), "I'm afraid you have a bad headache."),
                (pred.clone(), "  I'm afraid  you have a bad\theadache. "),
                (nocd.clone(), "i'm afraid you have a bad headache."),
                (ModelKey::reference(), "Yesterday I had a runny nose."),
            ],
        );
        assert_eq!(p.entries.len(), 3);
        let shared = p.entry_of(&gt).unwrap();
        assert_eq!(shared.producers, [gt.clone(), pred.clone()].into());
        assert_ne!(p.entry_of(&nocd).unwrap().response_id, shared.response_id);

        assert!(matches!(
            dedup_texts("c", vec![], Vec::<(ModelKey, String)>::new()),
            Err(ProtocolError::NoRecords)
        ));
        assert!(matches!(
            dedup_texts("c", vec![], [(gt.clone(), "a".to_string()), (gt, "b".to_string())]),
            Err(ProtocolError::DuplicateKey { .. })
        ));
    }

    #[test]
    fn response_ids_hide_producers() {
        let a = pool("c", &[(key("x", ConditioningMode::NoCd), "Hello.")]);
        let b = pool("c", &[(ModelKey::reference(), "Hello.")]);
        assert_eq!(a.entries[0].response_id, b.entries[0].response_id);
    }

    #[test]
    fn union_sizes() {
        let s = |a: &str, ids: [&str; 3]| Step2Selection {
            annotator: a.into(),
            context_id: "c".into(),
            top3: ids.iter().map(|s| s.to_string()).collect(),
        };
        assert_eq!(union_top3(&[s("a", ["1", "2", "3"]), s("b", ["2", "3", "4"])]).len(), 4);
        assert_eq!(union_top3(&[s("a", ["1", "2", "3"]), s("b", ["3", "2", "1"])]).len(), 3);
        assert_eq!(union_top3(&[s("a", ["1", "2", "3"]), s("b", ["4", "5", "6"])]).len(), 6);
    }

    #[test]
    fn step2_validation() {
        let kept: BTreeSet<String> = ["a", "b", "c", "d"].map(String::from).into();
        let sel = |ids: &[&str]| Step2Selection {
            annotator: "x".into(),
            context_id: "c".into(),
            top3: ids.iter().map(|s| s.to_string()).collect(),
        };
        assert!(sel(&["a", "b", "c"]).validate(&kept).is_ok());
        assert_eq!(sel(&["a", "b", "z"]).validate(&kept).unwrap_err().field, "top3[2]");
        assert!(sel(&["a", "a", "b"]).validate(&kept).is_err());
        assert!(sel(&["a", "b"]).validate(&kept).is_err());
        let two: BTreeSet<String> = ["a", "b"].map(String::from).into();
        assert!(sel(&["b", "a"]).validate(&two).is_ok());
    }

    const SUZY: &str = "<I> I'm sorry to hear about Suzy's cold.</I> <Q> Do you think you could ask someone from the family or close friends to help out?</Q> <I> It might be best not to take her on the trip if she's not feeling well.</I>";

    #[test]
    fn tagged_text() {
        let map = ActTagMap::default();
        let segs = parse_tagged_response(SUZY, &map).unwrap();
        assert_eq!(
            segs.iter().map(|s| s.act).collect::<Vec<_>>(),
            [Label::Inform, Label::Question, Label::Inform]
        );
        assert_eq!(segs[0].text, "I'm sorry to hear about Suzy's cold.");
        assert_eq!(parse_tagged_response("<I>Hi.</I>", &map).unwrap().len(), 1);
        assert_eq!(
            parse_tagged_response("<I>Hi.", &map),
            Err(TagError::UnbalancedTags { offset: 6 })
        );
        assert_eq!(
            parse_tagged_response("<I>Hi.</Q>", &map),
            Err(TagError::UnbalancedTags { offset: 6 })
        );
        assert_eq!(
            parse_tagged_response("<I>a</I> <X>b</X>", &map),
            Err(TagError::UnknownTag { tag: "X".into(), offset: 9 })
        );
        assert_eq!(
            parse_tagged_response("hello <I>a</I>", &map),
            Err(TagError::UnbalancedTags { offset: 0 })
        );
        assert_eq!(
            parse_tagged_response("<I>a <Q>b</Q></I>", &map),
            Err(TagError::UnbalancedTags { offset: 5 })
        );
        assert_eq!(parse_tagged_response("  ", &map).unwrap(), vec![]);
    }

    #[test]
    fn pretagging_suzy() {
        let plain = "I'm sorry to hear about Suzy's cold. Do you think you could ask someone from the family or close friends to help out? It might be best not to take her on the trip if she's not feeling well.";
        let segs = pretag_with(plain, |s| if s.ends_with('?') { Label::Question } else { Label::Inform });
        let map = ActTagMap::default();
        assert_eq!(parse_tagged_response(SUZY, &map).unwrap(), segs);
        let merged = pretag_with("One. Two.", |_| Label::Inform);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].text, "One. Two.");
    }

    #[test]
    fn questionnaire_round_trip() {
        let q = QuestionnaireSpec::default();
        assert_eq!(QuestionnaireSpec::from_toml(&q.to_toml()).unwrap(), q);
        let toml = r#"
            fluency_question = "fluency"
            [scale]
            min = 0
            max = 2
            [[questions]]
            id = "fluency"
            axis = "logical"
            [[questions]]
            id = "tone"
            axis = "emotional"
            min = 1
            max = 7
        "#;
        let spec = QuestionnaireSpec::from_toml(toml).unwrap();
        assert_eq!(spec.normalize(&spec.questions[0], 1), 0.5);
        assert_eq!(spec.normalize(&spec.questions[1], 7), 1.0);
        assert!(QuestionnaireSpec::from_toml("fluency_question = \"x\"\n[scale]\nmin=1\nmax=5\n[[questions]]\nid=\"a\"\naxis=\"social\"\n").is_err());
    }

    #[test]
    fn filter_and_top3_small_cases() {
        let m = key("m", ConditioningMode::NoCd);
        let o = key("o", ConditioningMode::NoCd);
        let p1 = pool("c1", &[(m.clone(), "m1"), (o.clone(), "o1")]);
        let p2 = pool("c2", &[(m.clone(), "m2"), (o.clone(), "o2")]);
        let pools = vec![p1.clone(), p2.clone()];
        let judgments = vec![
            judge("a", &p1, &["m1", "o1"]),
            judge("a", &p2, &["o2"]),
            judge("b", &p1, &["o1"]),
            judge("b", &p2, &["m2", "o2"]),
        ];
        let keys = [m.clone(), o.clone()];
        let f = score_filter(&pools, &judgments, &keys).unwrap();
        assert_eq!(f[&m], 50.0);
        assert_eq!(f[&o], 100.0);

        let sel = vec![Step2Selection {
            annotator: "a".into(),
            context_id: "c1".into(),
            top3: vec![id_of(&p1, "m1"), id_of(&p1, "o1")],
        }];
        let t = score_top3(&pools, &judgments, &sel, &keys).unwrap();
        assert_eq!(t[&m], 25.0);
        assert!(score_filter(&pools, &[], &keys).is_err());
    }

    #[test]
    fn agreement_identical_sets() {
        let m = key("m", ConditioningMode::NoCd);
        let o = key("o", ConditioningMode::CdGt);
        let p1 = pool("c1", &[(m.clone(), "x"), (o.clone(), "y")]);
        let p2 = pool("c2", &[(m, "x"), (o, "z")]);
        let j = vec![
            judge("a", &p1, &["x"]),
            judge("b", &p1, &["x"]),
            judge("a", &p2, &["x", "z"]),
            judge("b", &p2, &["x", "z"]),
        ];
        let r = agreement_report(&[p1, p2], &j, AgreementUnit::ResponseIds).unwrap();
        assert_eq!(r.mean_alpha, 1.0);
        assert_eq!(r.mean_jaccard, 1.0);
        assert_eq!(r.pairs.len(), 1);
        assert!(agreement_report(&[], &[], AgreementUnit::ModelKeys).is_err());
    }

    #[test]
    fn shuffle_is_seeded_permutation() {
        let items: Vec<(ModelKey, String)> = (0..8)
            .map(|i| (key(&format!("m{i}"), ConditioningMode::NoCd), format!("text {i}")))
            .collect();
        let p = dedup_texts("c", vec![], items).unwrap();
        let a: Vec<&str> = shuffle_pool(&p, 7).iter().map(|e| e.response_id.as_str()).collect();
        let b: Vec<&str> = shuffle_pool(&p, 7).iter().map(|e| e.response_id.as_str()).collect();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, p.ids().into_iter().collect::<Vec<_>>());

        // two independent uniform orders of 8 items coincide with probability
        // 1/8! each; over 500 seed pairs the expected count is about 0.012
        let collisions = (0..500u64)
            .filter(|s| {
                let x: Vec<_> = shuffle_pool(&p, *s).iter().map(|e| &e.response_id).collect();
                let y: Vec<_> = shuffle_pool(&p, s + 1).iter().map(|e| &e.response_id).collect();
                x == y
            })
            .count();
        assert!(collisions <= 1, "{collisions}");
    }

    fn segments() -> impl Strategy<Value = Vec<Segment>> {
        let seg = (
            prop::sample::select(Label::ACTS.to_vec()),
            "[A-Za-z][A-Za-z ,.?!']{0,20}[A-Za-z.?!]",
        )
            .prop_map(|(act, text)| Segment { act, text });
        prop::collection::vec(seg, 0..5)
    }

    proptest! {
        #[test]
        fn tag_round_trip(segs in segments()) {
            let map = ActTagMap::default();
            let text = serialize_tagged(&segs, &map).unwrap();
            prop_assert_eq!(parse_tagged_response(&text, &map).unwrap(), segs);
        }

        #[test]
        fn normalization_is_idempotent(s in "[ a-zA-Z\t\n]{0,30}") {
            let n = normalize_text(&s);
            prop_assert_eq!(normalize_text(&n), n.clone());
            prop_assert_eq!(n.trim(), n.as_str());
        }
    }
}
