use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::campaign::CampaignDefinition;
use super::ServiceError;
use crate::backend::WireTurn;
use crate::protocol::{
    parse_tagged_response, shuffle_pool, shuffle_seed, union_top3, ActTagMap, PoolEntry, QuestionnaireSpec,
    Step1Judgment, Step2Selection, Step3Rating, ValidationError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    SessionOpened {
        session_id: String,
        annotator: String,
    },
    Step1Submitted(Step1Judgment),
    Step2Submitted(Step2Selection),
    Step3Submitted(Step3Rating),
    PoolCreated {
        context_id: String,
        response_ids: BTreeSet<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub ts_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Everything submitted so far, rebuilt exactly by replaying the event log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CampaignState {
    /// Sequence number of the last applied event.
    pub seq: u64,
    /// session id → annotator
    pub sessions: BTreeMap<String, String>,
    /// annotator → context → judgment
    pub step1: BTreeMap<String, BTreeMap<String, Step1Judgment>>,
    pub step2: BTreeMap<String, BTreeMap<String, Step2Selection>>,
    /// annotator → context → response → rating
    pub step3: BTreeMap<String, BTreeMap<String, BTreeMap<String, Step3Rating>>>,
    /// context → step-3 pool
    pub step3_pools: BTreeMap<String, BTreeSet<String>>,
}

impl CampaignState {
    pub fn apply(&mut self, event: &Event) {
        self.seq = event.seq;
        match &event.kind {
            EventKind::SessionOpened { session_id, annotator } => {
                self.sessions.insert(session_id.clone(), annotator.clone());
            }
            EventKind::Step1Submitted(j) => {
                self.step1
                    .entry(j.annotator.clone())
                    .or_default()
                    .insert(j.context_id.clone(), j.clone());
            }
            EventKind::Step2Submitted(s) => {
                self.step2
                    .entry(s.annotator.clone())
                    .or_default()
                    .insert(s.context_id.clone(), s.clone());
            }
            EventKind::Step3Submitted(r) => {
                self.step3
                    .entry(r.annotator.clone())
                    .or_default()
                    .entry(r.context_id.clone())
                    .or_default()
                    .insert(r.response_id.clone(), r.clone());
            }
            EventKind::PoolCreated {
                context_id,
                response_ids,
            } => {
                self.step3_pools.insert(context_id.clone(), response_ids.clone());
            }
        }
    }

    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> CampaignState {
        let mut state = CampaignState::default();
        for e in events {
            state.apply(e);
        }
        state
    }

    pub fn step1_of(&self, annotator: &str, context_id: &str) -> Option<&Step1Judgment> {
        self.step1.get(annotator)?.get(context_id)
    }

    pub fn step2_of(&self, annotator: &str, context_id: &str) -> Option<&Step2Selection> {
        self.step2.get(annotator)?.get(context_id)
    }

    pub fn step3_of(&self, annotator: &str, context_id: &str, response_id: &str) -> Option<&Step3Rating> {
        self.step3.get(annotator)?.get(context_id)?.get(response_id)
    }
}

/// A judgment as sent by an annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Submission {
    Step1 {
        context_id: String,
        kept: BTreeMap<String, bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        consistency: Option<BTreeMap<String, bool>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        specificity: Option<BTreeMap<String, bool>>,
    },
    Step2 {
        context_id: String,
        top3: Vec<String>,
    },
    Step3 {
        context_id: String,
        response_id: String,
        /// `<I>...</I> <Q>...</Q>` with the campaign's tag letters.
        tagged_text: String,
        ratings: BTreeMap<String, u32>,
    },
}

impl Submission {
    pub fn context_id(&self) -> &str {
        match self {
            Submission::Step1 { context_id, .. }
            | Submission::Step2 { context_id, .. }
            | Submission::Step3 { context_id, .. } => context_id,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ServiceError {
    ServiceError::ValidationFailed(ValidationError::new(field, message))
}

/// Validates a submission against the current state and returns the events
/// it produces; an empty list means an identical resubmission.
///
/// A step-1 judgment may be replaced until the annotator submits step 2 for
/// the context, and a step-2 selection until the context's step-3 pool
/// exists; later replacements are stale, but an identical resubmission is
/// always accepted as a no-op.
pub fn decide(
    def: &CampaignDefinition,
    state: &CampaignState,
    annotator: &str,
    submission: Submission,
) -> Result<Vec<EventKind>, ServiceError> {
    let plan = def
        .context(submission.context_id())
        .ok_or_else(|| invalid("context_id", "unknown context"))?;
    let ctx = plan.context_id().to_string();
    let assigned12 = plan.step12.iter().any(|a| a == annotator);

    match submission {
        Submission::Step1 {
            kept,
            consistency,
            specificity,
            ..
        } => {
            if !assigned12 {
                return Err(invalid("context_id", "context not assigned to this annotator"));
            }
            let judgment = Step1Judgment {
                annotator: annotator.to_string(),
                context_id: ctx.clone(),
                kept,
                consistency,
                specificity,
            };
            if state.step1_of(annotator, &ctx) == Some(&judgment) {
                return Ok(vec![]);
            }
            if state.step2_of(annotator, &ctx).is_some() {
                return Err(ServiceError::StaleTask("step 2 already submitted for this context".into()));
            }
            judgment.validate(&plan.pool)?;
            Ok(vec![EventKind::Step1Submitted(judgment)])
        }
        Submission::Step2 { top3, .. } => {
            if !assigned12 {
                return Err(invalid("context_id", "context not assigned to this annotator"));
            }
            let step1 = state
                .step1_of(annotator, &ctx)
                .ok_or_else(|| invalid("step", "step 1 not submitted for this context"))?;
            let selection = Step2Selection {
                annotator: annotator.to_string(),
                context_id: ctx.clone(),
                top3,
            };
            if state.step2_of(annotator, &ctx) == Some(&selection) {
                return Ok(vec![]);
            }
            if state.step3_pools.contains_key(&ctx) {
                return Err(ServiceError::StaleTask("step-3 pool already created for this context".into()));
            }
            selection.validate(&step1.kept_set())?;
            let others: Vec<&Step2Selection> = plan
                .step12
                .iter()
                .filter(|a| a.as_str() != annotator)
                .filter_map(|a| state.step2_of(a, &ctx))
                .collect();
            let mut events = Vec::new();
            if others.len() + 1 == plan.step12.len() && !plan.step3.is_empty() {
                let pool = union_top3(others.into_iter().chain([&selection]));
                events.push(EventKind::Step2Submitted(selection));
                events.push(EventKind::PoolCreated {
                    context_id: ctx,
                    response_ids: pool,
                });
            } else {
                events.push(EventKind::Step2Submitted(selection));
            }
            Ok(events)
        }
        Submission::Step3 {
            response_id,
            tagged_text,
            ratings,
            ..
        } => {
            if !plan.step3.iter().any(|a| a == annotator) {
                return Err(invalid("context_id", "context not assigned to this annotator for step 3"));
            }
            let pool = state
                .step3_pools
                .get(&ctx)
                .ok_or_else(|| invalid("context_id", "step-3 pool not created yet"))?;
            if !pool.contains(&response_id) {
                return Err(invalid("response_id", "not in the step-3 pool"));
            }
            let segments = parse_tagged_response(&tagged_text, &def.tags).map_err(|e| invalid("tagged_text", e.to_string()))?;
            let rating = Step3Rating {
                annotator: annotator.to_string(),
                context_id: ctx.clone(),
                response_id,
                tagged_text: segments,
                ratings,
            };
            rating.validate(&def.questionnaire, &def.tags)?;
            if state.step3_of(annotator, &ctx, &rating.response_id) == Some(&rating) {
                return Ok(vec![]);
            }
            Ok(vec![EventKind::Step3Submitted(rating)])
        }
    }
}

/// The next piece of work for an annotator, before payload rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskRef {
    Step1(String),
    Step2(String),
    Step3 { context_id: String, response_id: String },
    /// Only step-3 work remains and its pools do not exist yet.
    Waiting,
    Done,
}

/// Steps 1 then 2 for each assigned context in campaign order, then step-3
/// responses in the annotator's shuffled order.
pub fn next_task_ref(def: &CampaignDefinition, state: &CampaignState, annotator: &str) -> TaskRef {
    for plan in def.contexts.iter().filter(|c| c.step12.iter().any(|a| a == annotator)) {
        let ctx = plan.context_id();
        if state.step1_of(annotator, ctx).is_none() {
            return TaskRef::Step1(ctx.to_string());
        }
        if state.step2_of(annotator, ctx).is_none() {
            return TaskRef::Step2(ctx.to_string());
        }
    }
    let mut waiting = false;
    for plan in def.contexts.iter().filter(|c| c.step3.iter().any(|a| a == annotator)) {
        let ctx = plan.context_id();
        let Some(pool) = state.step3_pools.get(ctx) else {
            waiting = true;
            continue;
        };
        let order = shuffle_pool(&plan.pool, shuffle_seed(def.seed, ctx, annotator));
        if let Some(e) = order
            .iter()
            .find(|e| pool.contains(&e.response_id) && state.step3_of(annotator, ctx, &e.response_id).is_none())
        {
            return TaskRef::Step3 {
                context_id: ctx.to_string(),
                response_id: e.response_id.clone(),
            };
        }
    }
    if waiting {
        TaskRef::Waiting
    } else {
        TaskRef::Done
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Step1,
    Step2,
    Step3,
}

/// One anonymized response as shown to an annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResponse {
    pub response_id: String,
    pub text: String,
    /// Classifier pre-annotation for step 3, in tagged-text form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretagged: Option<String>,
}

impl TaskResponse {
    fn of(entry: &PoolEntry) -> Self {
        TaskResponse {
            response_id: entry.response_id.clone(),
            text: entry.text.clone(),
            pretagged: None,
        }
    }
}

/// Task payload. It carries no producer information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub step: Step,
    pub context_id: String,
    pub practice: bool,
    pub context_turns: Vec<WireTurn>,
    pub responses: Vec<TaskResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questionnaire: Option<QuestionnaireSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<ActTagMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextTask {
    Task(Task),
    Waiting,
}

/// Renders a task reference; step-3 responses are left untagged.
pub fn render_task(def: &CampaignDefinition, state: &CampaignState, annotator: &str, task: &TaskRef) -> Option<Task> {
    let (step, ctx) = match task {
        TaskRef::Step1(c) => (Step::Step1, c),
        TaskRef::Step2(c) => (Step::Step2, c),
        TaskRef::Step3 { context_id, .. } => (Step::Step3, context_id),
        TaskRef::Waiting | TaskRef::Done => return None,
    };
    let plan = def.context(ctx)?;
    let order = shuffle_pool(&plan.pool, shuffle_seed(def.seed, ctx, annotator));
    let responses: Vec<TaskResponse> = match task {
        TaskRef::Step1(_) => order.into_iter().map(TaskResponse::of).collect(),
        TaskRef::Step2(_) => {
            let kept = state.step1_of(annotator, ctx)?.kept_set();
            order
                .into_iter()
                .filter(|e| kept.contains(&e.response_id))
                .map(TaskResponse::of)
                .collect()
        }
        TaskRef::Step3 { response_id, .. } => vec![TaskResponse::of(plan.pool.entry(response_id)?)],
        _ => unreachable!(),
    };
    let step3 = step == Step::Step3;
    Some(Task {
        step,
        context_id: ctx.clone(),
        practice: plan.practice,
        context_turns: plan.pool.context_turns.clone(),
        responses,
        questionnaire: step3.then(|| def.questionnaire.clone()),
        tags: step3.then(|| def.tags.clone()),
    })
}
