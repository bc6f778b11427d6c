//! Annotation bundle: a JSON-lines export of a campaign with producers
//! revealed. Line order is fixed: header, questionnaire, one `pool` line per
//! context in campaign order, then `step1`, `step2`, `step3` judgments sorted
//! by (context order, annotator, response id), and finally `scores` when any
//! step-1 judgment exists.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::campaign::{CampaignDefinition, ContextPlan};
use super::state::CampaignState;
use super::ServiceError;
use crate::protocol::{
    score_report, ActTagMap, CampaignData, QuestionnaireSpec, ScoreReport, Step1Judgment, Step2Selection, Step3Rating,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub version: String,
    pub campaign_id: String,
    pub seed: u64,
    pub annotators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(BundleHeader),
    Questionnaire {
        questionnaire: QuestionnaireSpec,
        tags: ActTagMap,
    },
    Pool(ContextPlan),
    Step1(Step1Judgment),
    Step2(Step2Selection),
    Step3(Step3Rating),
    Scores(ScoreReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub header: BundleHeader,
    pub questionnaire: QuestionnaireSpec,
    pub tags: ActTagMap,
    pub contexts: Vec<ContextPlan>,
    pub step1: Vec<Step1Judgment>,
    pub step2: Vec<Step2Selection>,
    pub step3: Vec<Step3Rating>,
    /// As read from a bundle file; [`Bundle::to_jsonl`] always recomputes.
    pub scores: Option<ScoreReport>,
}

impl Bundle {
    pub fn from_state(def: &CampaignDefinition, state: &CampaignState) -> Bundle {
        let mut b = Bundle {
            header: BundleHeader {
                version: "v1".into(),
                campaign_id: def.id.clone(),
                seed: def.seed,
                annotators: def.annotators.clone(),
            },
            questionnaire: def.questionnaire.clone(),
            tags: def.tags.clone(),
            contexts: def.contexts.clone(),
            step1: state.step1.values().flat_map(|m| m.values().cloned()).collect(),
            step2: state.step2.values().flat_map(|m| m.values().cloned()).collect(),
            step3: state
                .step3
                .values()
                .flat_map(|m| m.values().flat_map(|r| r.values().cloned()))
                .collect(),
            scores: None,
        };
        b.sort();
        b.scores = b.compute_scores();
        b
    }

    fn sort(&mut self) {
        let pos: BTreeMap<&str, usize> = self
            .contexts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.context_id(), i))
            .collect();
        let at = |c: &str| pos.get(c).copied().unwrap_or(usize::MAX);
        self.step1
            .sort_by(|a, b| (at(&a.context_id), &a.annotator).cmp(&(at(&b.context_id), &b.annotator)));
        self.step2
            .sort_by(|a, b| (at(&a.context_id), &a.annotator).cmp(&(at(&b.context_id), &b.annotator)));
        self.step3.sort_by(|a, b| {
            (at(&a.context_id), &a.annotator, &a.response_id).cmp(&(at(&b.context_id), &b.annotator, &b.response_id))
        });
    }

    /// Scoring input: practice contexts are left out.
    pub fn data(&self) -> CampaignData {
        let scored = self.contexts.iter().filter(|c| !c.practice);
        CampaignData {
            pools: scored.clone().map(|c| c.pool.clone()).collect(),
            step1: self.step1.clone(),
            step2: self.step2.clone(),
            step3: self.step3.clone(),
            step3_contexts: scored
                .filter(|c| !c.step3.is_empty())
                .map(|c| c.context_id().to_string())
                .collect(),
            annotators: self.header.annotators.clone(),
            questionnaire: self.questionnaire.clone(),
        }
    }

    /// Live scores; incomplete step-3 work is skipped rather than rejected.
    pub fn compute_scores(&self) -> Option<ScoreReport> {
        score_report(&self.data(), false).ok()
    }

    pub fn to_jsonl(&self) -> String {
        let mut sorted = self.clone();
        sorted.sort();
        let mut lines = vec![
            Line::Header(sorted.header.clone()),
            Line::Questionnaire {
                questionnaire: sorted.questionnaire.clone(),
                tags: sorted.tags.clone(),
            },
        ];
        lines.extend(sorted.contexts.iter().cloned().map(Line::Pool));
        lines.extend(sorted.step1.iter().cloned().map(Line::Step1));
        lines.extend(sorted.step2.iter().cloned().map(Line::Step2));
        lines.extend(sorted.step3.iter().cloned().map(Line::Step3));
        lines.extend(sorted.compute_scores().map(Line::Scores));
        let mut out = String::new();
        for l in &lines {
            out.push_str(&serde_json::to_string(l).expect("bundle line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl<R: BufRead>(input: R) -> Result<Bundle, ServiceError> {
        let mut header = None;
        let mut questionnaire = None;
        let mut b = Bundle {
            header: BundleHeader {
                version: String::new(),
                campaign_id: String::new(),
                seed: 0,
                annotators: Vec::new(),
            },
            questionnaire: QuestionnaireSpec::default(),
            tags: ActTagMap::default(),
            contexts: Vec::new(),
            step1: Vec::new(),
            step2: Vec::new(),
            step3: Vec::new(),
            scores: None,
        };
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| ServiceError::Bundle {
                line: i + 1,
                message: e.to_string(),
            })?;
            match parsed {
                Line::Header(h) => header = Some(h),
                Line::Questionnaire { questionnaire: q, tags } => {
                    questionnaire = Some(q);
                    b.tags = tags;
                }
                Line::Pool(p) => b.contexts.push(p),
                Line::Step1(j) => b.step1.push(j),
                Line::Step2(s) => b.step2.push(s),
                Line::Step3(r) => b.step3.push(r),
                Line::Scores(s) => b.scores = Some(s),
            }
        }
        b.header = header.ok_or(ServiceError::Bundle {
            line: 0,
            message: "missing header line".into(),
        })?;
        b.questionnaire = questionnaire.ok_or(ServiceError::Bundle {
            line: 0,
            message: "missing questionnaire line".into(),
        })?;
        Ok(b)
    }
}
