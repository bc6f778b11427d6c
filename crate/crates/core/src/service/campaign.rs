use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::pipeline::PipelineRunRecord;
use crate::protocol::{dedup_pool, ActTagMap, ProtocolError, QuestionnaireSpec, ResponsePool};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub seed: u64,
    pub annotators: Vec<String>,
    /// Contexts sampled for steps 1-2; all available when absent.
    pub contexts: Option<usize>,
    /// Leading sampled contexts that every annotator also rates in step 3.
    pub step3_contexts: usize,
    /// Familiarization contexts done by everyone and excluded from scores.
    pub practice_contexts: usize,
    pub annotators_per_context: usize,
    pub with_reference: bool,
    pub questionnaire: QuestionnaireSpec,
    pub tags: ActTagMap,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 0,
            annotators: vec!["a1".into(), "a2".into(), "a3".into()],
            contexts: None,
            step3_contexts: 0,
            practice_contexts: 0,
            annotators_per_context: 2,
            with_reference: true,
            questionnaire: QuestionnaireSpec::default(),
            tags: ActTagMap::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        let unique: BTreeSet<&String> = self.annotators.iter().collect();
        if unique.len() != self.annotators.len() || self.annotators.iter().any(|a| a.trim().is_empty()) {
            return Err(ServiceError::InvalidConfig("annotator names must be unique and non-empty".into()));
        }
        if self.annotators_per_context == 0 || self.annotators_per_context > self.annotators.len() {
            return Err(ServiceError::InvalidConfig(format!(
                "annotators_per_context must lie in 1..={}",
                self.annotators.len()
            )));
        }
        self.questionnaire.validate()?;
        Ok(())
    }
}

/// One context of the campaign: its pool and who works on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPlan {
    pub practice: bool,
    /// Annotators doing steps 1 and 2.
    pub step12: Vec<String>,
    /// Annotators doing step 3; empty when the context is not rated.
    pub step3: Vec<String>,
    pub pool: ResponsePool,
}

impl ContextPlan {
    pub fn context_id(&self) -> &str {
        &self.pool.context_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignDefinition {
    pub version: String,
    pub id: String,
    pub seed: u64,
    pub annotators: Vec<String>,
    pub questionnaire: QuestionnaireSpec,
    pub tags: ActTagMap,
    /// Practice contexts first, then sampled contexts in sampling order.
    pub contexts: Vec<ContextPlan>,
    /// annotator → bearer token
    pub tokens: BTreeMap<String, String>,
}

impl CampaignDefinition {
    pub fn context(&self, context_id: &str) -> Option<&ContextPlan> {
        self.contexts.iter().find(|c| c.context_id() == context_id)
    }

    pub fn position(&self, context_id: &str) -> usize {
        self.contexts
            .iter()
            .position(|c| c.context_id() == context_id)
            .unwrap_or(usize::MAX)
    }

    pub fn annotator_for_token(&self, token: &str) -> Option<&str> {
        self.tokens.iter().find(|(_, t)| t.as_str() == token).map(|(a, _)| a.as_str())
    }

    /// Number of step-1/2 contexts per annotator, practice excluded.
    pub fn step12_load(&self) -> BTreeMap<String, usize> {
        let mut load: BTreeMap<String, usize> = self.annotators.iter().map(|a| (a.clone(), 0)).collect();
        for c in self.contexts.iter().filter(|c| !c.practice) {
            for a in &c.step12 {
                *load.entry(a.clone()).or_default() += 1;
            }
        }
        load
    }
}

/// Samples contexts, builds their pools and assigns annotators.
///
/// Contexts are shuffled with the campaign seed; the first
/// `practice_contexts` become practice, the next `contexts` are kept. Steps
/// 1-2 go round-robin to `annotators_per_context` consecutive annotators;
/// step 3 goes to everyone on the first `step3_contexts` kept contexts.
pub fn build_definition(
    id: String,
    records: &[PipelineRunRecord],
    config: &CampaignConfig,
    mut issue_token: impl FnMut(&str) -> String,
) -> Result<CampaignDefinition, ServiceError> {
    config.validate()?;
    let mut by_context: BTreeMap<&str, Vec<PipelineRunRecord>> = BTreeMap::new();
    for r in records {
        by_context.entry(r.sample_id.as_str()).or_default().push(r.clone());
    }
    if by_context.is_empty() {
        return Err(ProtocolError::NoRecords.into());
    }
    let mut ids: Vec<&str> = by_context.keys().copied().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    let practice = config.practice_contexts;
    let main = config.contexts.unwrap_or(ids.len().saturating_sub(practice));
    if practice + main > ids.len() || main == 0 {
        return Err(ServiceError::InvalidConfig(format!(
            "{} practice + {main} contexts requested, {} available",
            practice,
            ids.len()
        )));
    }
    if config.step3_contexts > main {
        return Err(ServiceError::InvalidConfig(format!(
            "step3_contexts ({}) exceeds sampled contexts ({main})",
            config.step3_contexts
        )));
    }

    let k = config.annotators.len();
    let mut contexts = Vec::with_capacity(practice + main);
    for (pos, ctx) in ids[..practice + main].iter().enumerate() {
        let pool = dedup_pool(&by_context[ctx], config.with_reference)?;
        let plan = if pos < practice {
            ContextPlan {
                practice: true,
                step12: config.annotators.clone(),
                step3: config.annotators.clone(),
                pool,
            }
        } else {
            let j = pos - practice;
            ContextPlan {
                practice: false,
                step12: (0..config.annotators_per_context)
                    .map(|t| config.annotators[(j + t) % k].clone())
                    .collect(),
                step3: if j < config.step3_contexts {
                    config.annotators.clone()
                } else {
                    Vec::new()
                },
                pool,
            }
        };
        contexts.push(plan);
    }

    Ok(CampaignDefinition {
        version: "v1".into(),
        id,
        seed: config.seed,
        annotators: config.annotators.clone(),
        questionnaire: config.questionnaire.clone(),
        tags: config.tags.clone(),
        contexts,
        tokens: config.annotators.iter().map(|a| (a.clone(), issue_token(a))).collect(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::pipeline::{Approach, ConditioningMode, RunStatus};

    pub(crate) fn record(ctx: &str, model: &str, mode: ConditioningMode, text: &str) -> PipelineRunRecord {
        PipelineRunRecord {
            sample_id: ctx.into(),
            conversation_id: "c".into(),
            context_turns: vec![],
            gold_labels: None,
            gold_response: format!("reference for {ctx}"),
            model: model.into(),
            approach: Approach::Reranking,
            mode,
            planned: None,
            candidates: vec![],
            selected_index: Some(0),
            selected_text: Some(text.into()),
            status: RunStatus::Ok,
            fallback_nocd: false,
        }
    }

    pub(crate) fn records(n: usize) -> Vec<PipelineRunRecord> {
        (0..n)
            .flat_map(|i| {
                let ctx = format!("{i}:4");
                [
                    record(&ctx, "m", ConditioningMode::NoCd, &format!("plain {i}")),
                    record(&ctx, "m", ConditioningMode::CdGt, &format!("tuned {i}")),
                    record(&ctx, "m", ConditioningMode::CdPred, &format!("tuned {i}")),
                ]
            })
            .collect()
    }

    #[test]
    fn round_robin_assignment() {
        let config = CampaignConfig {
            step3_contexts: 59,
            ..Default::default()
        };
        let def = build_definition("c".into(), &records(300), &config, |a| format!("t-{a}")).unwrap();
        assert_eq!(def.contexts.len(), 300);
        assert!(def.step12_load().values().all(|n| *n == 200));
        assert!(def.contexts.iter().all(|c| c.step12.len() == 2));
        let rated: Vec<_> = def.contexts.iter().filter(|c| !c.step3.is_empty()).collect();
        assert_eq!(rated.len(), 59);
        assert!(rated.iter().all(|c| c.step3.len() == 3));
        assert_eq!(def.annotator_for_token("t-a2"), Some("a2"));
        assert_eq!(def.contexts[0].pool.entries.len(), 3);
    }

    #[test]
    fn sampling_is_seeded() {
        let config = CampaignConfig {
            contexts: Some(5),
            practice_contexts: 2,
            ..Default::default()
        };
        let a = build_definition("c".into(), &records(20), &config, |_| String::new()).unwrap();
        let b = build_definition("c".into(), &records(20), &config, |_| String::new()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.contexts.len(), 7);
        assert!(a.contexts[..2].iter().all(|c| c.practice && c.step12.len() == 3));
        let other = build_definition("c".into(), &records(20), &CampaignConfig { seed: 1, ..config }, |_| String::new()).unwrap();
        assert_ne!(
            a.contexts.iter().map(|c| c.context_id()).collect::<Vec<_>>(),
            other.contexts.iter().map(|c| c.context_id()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(matches!(
            build_definition("c".into(), &[], &CampaignConfig::default(), |_| String::new()),
            Err(ServiceError::Protocol(ProtocolError::NoRecords))
        ));
        let too_many = CampaignConfig {
            contexts: Some(4),
            ..Default::default()
        };
        assert!(build_definition("c".into(), &records(3), &too_many, |_| String::new()).is_err());
        let dup = CampaignConfig {
            annotators: vec!["a".into(), "a".into()],
            ..Default::default()
        };
        assert!(build_definition("c".into(), &records(3), &dup, |_| String::new()).is_err());
    }
}
