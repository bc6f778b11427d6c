use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use super::bundle::Bundle;
use super::campaign::CampaignDefinition;
use super::log::EventLog;
use super::state::{decide, next_task_ref, render_task, CampaignState, Event, EventKind, NextTask, Submission, TaskRef};
use super::ServiceError;
use crate::backend::Classifier;
use crate::protocol::{pretag_with_classifier, serialize_tagged, ScoreReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    /// False for an identical resubmission, which logs nothing.
    pub accepted: bool,
    pub seq: u64,
}

/// One live campaign. Mutations go through a single writer that appends to
/// the event log before publishing the new state; readers take the current
/// state without waiting on the writer.
pub struct CampaignHandle {
    def: Arc<CampaignDefinition>,
    state: RwLock<Arc<CampaignState>>,
    log: Mutex<EventLog>,
    classifier: Option<Arc<dyn Classifier>>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl CampaignHandle {
    pub fn new(
        def: CampaignDefinition,
        state: CampaignState,
        log: EventLog,
        classifier: Option<Arc<dyn Classifier>>,
    ) -> Self {
        CampaignHandle {
            def: Arc::new(def),
            state: RwLock::new(Arc::new(state)),
            log: Mutex::new(log),
            classifier,
        }
    }

    pub fn in_memory(def: CampaignDefinition) -> Self {
        Self::new(def, CampaignState::default(), EventLog::in_memory(), None)
    }

    pub fn with_classifier(mut self, classifier: Arc<dyn Classifier>) -> Self {
        self.classifier = Some(classifier);
        self
    }

    pub fn definition(&self) -> &CampaignDefinition {
        &self.def
    }

    pub fn state(&self) -> Arc<CampaignState> {
        self.state.read().expect("state lock poisoned").clone()
    }

    pub async fn events(&self) -> Vec<Event> {
        self.log.lock().await.events().to_vec()
    }

    pub fn session_annotator(&self, session_id: &str) -> Option<String> {
        self.state().sessions.get(session_id).cloned()
    }

    async fn commit(&self, kinds: Vec<EventKind>) -> Result<u64, ServiceError> {
        let mut log = self.log.lock().await;
        self.commit_locked(&mut log, kinds)
    }

    fn commit_locked(&self, log: &mut EventLog, kinds: Vec<EventKind>) -> Result<u64, ServiceError> {
        let mut next = (*self.state()).clone();
        for kind in kinds {
            let event = Event {
                seq: next.seq + 1,
                ts_ms: now_ms(),
                kind,
            };
            next.apply(&event);
            log.append(event)?;
            log.maybe_snapshot(&next)?;
        }
        let seq = next.seq;
        *self.state.write().expect("state lock poisoned") = Arc::new(next);
        Ok(seq)
    }

    pub async fn open_session(&self, annotator: &str) -> Result<String, ServiceError> {
        let id = uuid::Uuid::new_v4().to_string();
        self.open_session_with_id(annotator, &id).await?;
        Ok(id)
    }

    pub async fn open_session_with_id(&self, annotator: &str, session_id: &str) -> Result<(), ServiceError> {
        if !self.def.annotators.iter().any(|a| a == annotator) {
            return Err(ServiceError::Unauthorized);
        }
        self.commit(vec![EventKind::SessionOpened {
            session_id: session_id.to_string(),
            annotator: annotator.to_string(),
        }])
        .await?;
        Ok(())
    }

    fn annotator_of(&self, session_id: &str) -> Result<String, ServiceError> {
        self.session_annotator(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))
    }

    pub async fn next_task(&self, session_id: &str) -> Result<NextTask, ServiceError> {
        let annotator = self.annotator_of(session_id)?;
        self.next_task_for(&annotator).await
    }

    /// Step-3 responses are pre-tagged when a classifier is configured.
    pub async fn next_task_for(&self, annotator: &str) -> Result<NextTask, ServiceError> {
        let state = self.state();
        let task_ref = next_task_ref(&self.def, &state, annotator);
        match task_ref {
            TaskRef::Done => return Err(ServiceError::NoTasksRemaining),
            TaskRef::Waiting => return Ok(NextTask::Waiting),
            _ => {}
        }
        let mut task = render_task(&self.def, &state, annotator, &task_ref)
            .ok_or_else(|| ServiceError::Storage("task refers to a missing context".into()))?;
        if let (TaskRef::Step3 { .. }, Some(classifier)) = (&task_ref, &self.classifier) {
            for r in task.responses.iter_mut() {
                match pretag_with_classifier(&r.text, classifier.as_ref()).await {
                    Ok(segments) => r.pretagged = serialize_tagged(&segments, &self.def.tags).ok(),
                    Err(e) => tracing::warn!(error = %e, "pre-tagging failed, sending untagged text"),
                }
            }
        }
        Ok(NextTask::Task(task))
    }

    pub async fn submit(&self, session_id: &str, submission: Submission) -> Result<SubmitOutcome, ServiceError> {
        let annotator = self.annotator_of(session_id)?;
        self.submit_as(&annotator, submission).await
    }

    pub async fn submit_as(&self, annotator: &str, submission: Submission) -> Result<SubmitOutcome, ServiceError> {
        // decide under the writer lock so validation sees the latest state
        let mut log = self.log.lock().await;
        let current = self.state();
        let kinds = decide(&self.def, &current, annotator, submission)?;
        if kinds.is_empty() {
            return Ok(SubmitOutcome {
                accepted: false,
                seq: current.seq,
            });
        }
        let seq = self.commit_locked(&mut log, kinds)?;
        Ok(SubmitOutcome { accepted: true, seq })
    }

    pub fn bundle(&self) -> Bundle {
        Bundle::from_state(&self.def, &self.state())
    }

    pub fn export(&self) -> String {
        self.bundle().to_jsonl()
    }

    pub fn scores(&self) -> Result<ScoreReport, ServiceError> {
        Ok(crate::protocol::score_report(&self.bundle().data(), false)?)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::mock::KeywordClassifier;
    use crate::protocol::score_report;
    use crate::service::campaign::tests::records;
    use crate::service::campaign::{build_definition, CampaignConfig};
    use crate::service::sim::{run_campaign, SyntheticAnnotators};
    use crate::service::state::{Step, Task};

    fn campaign(step3: usize) -> CampaignHandle {
        let config = CampaignConfig {
            seed: 11,
            contexts: Some(4),
            step3_contexts: step3,
            ..Default::default()
        };
        let def = build_definition("c".into(), &records(6), &config, |a| format!("tok-{a}")).unwrap();
        CampaignHandle::in_memory(def)
    }

    fn task(next: NextTask) -> Task {
        match next {
            NextTask::Task(t) => t,
            other => panic!("expected a task, got {other:?}"),
        }
    }

    fn keep_all(t: &Task) -> Submission {
        Submission::Step1 {
            context_id: t.context_id.clone(),
            kept: t.responses.iter().map(|r| (r.response_id.clone(), true)).collect(),
            consistency: None,
            specificity: None,
        }
    }

    #[tokio::test]
    async fn step_flow_and_validation() {
        let h = campaign(0);
        let t1 = task(h.next_task_for("a1").await.unwrap());
        assert_eq!(t1.step, Step::Step1);
        assert_eq!(t1.context_id, h.definition().contexts[0].context_id());
        assert_eq!(t1.responses.len(), 3);

        // eliminate the first shown response
        let dropped = t1.responses[0].response_id.clone();
        let mut kept: BTreeMap<String, bool> = t1.responses.iter().map(|r| (r.response_id.clone(), true)).collect();
        kept.insert(dropped.clone(), false);
        let first = h
            .submit_as(
                "a1",
                Submission::Step1 {
                    context_id: t1.context_id.clone(),
                    kept: kept.clone(),
                    consistency: None,
                    specificity: None,
                },
            )
            .await
            .unwrap();
        assert!(first.accepted);

        let t2 = task(h.next_task_for("a1").await.unwrap());
        assert_eq!(t2.step, Step::Step2);
        assert_eq!(t2.responses.len(), 2);
        assert!(t2.responses.iter().all(|r| r.response_id != dropped));

        let bad = h
            .submit_as(
                "a1",
                Submission::Step2 {
                    context_id: t1.context_id.clone(),
                    top3: vec![dropped.clone(), t2.responses[0].response_id.clone()],
                },
            )
            .await;
        assert!(matches!(bad, Err(ServiceError::ValidationFailed(_))), "{bad:?}");

        // last write wins; identical resubmission logs nothing
        let again = h.submit_as("a1", keep_all(&t1)).await.unwrap();
        assert!(again.accepted);
        assert_eq!(h.state().step1_of("a1", &t1.context_id).unwrap().kept_set().len(), 3);
        assert!(!h.submit_as("a1", keep_all(&t1)).await.unwrap().accepted);
        assert_eq!(h.events().await.len(), 2);

        let ids: Vec<String> = t1.responses.iter().map(|r| r.response_id.clone()).collect();
        h.submit_as(
            "a1",
            Submission::Step2 {
                context_id: t1.context_id.clone(),
                top3: ids,
            },
        )
        .await
        .unwrap();
        let changed = Submission::Step1 {
            context_id: t1.context_id.clone(),
            kept,
            consistency: None,
            specificity: None,
        };
        assert!(matches!(h.submit_as("a1", changed).await, Err(ServiceError::StaleTask(_))));
        assert!(!h.submit_as("a1", keep_all(&t1)).await.unwrap().accepted);
        let unassigned = h
            .submit_as(
                "a3",
                Submission::Step1 {
                    context_id: t1.context_id.clone(),
                    kept: BTreeMap::new(),
                    consistency: None,
                    specificity: None,
                },
            )
            .await;
        assert!(matches!(unassigned, Err(ServiceError::ValidationFailed(_))));
    }

    #[tokio::test]
    async fn payloads_are_anonymous() {
        let h = campaign(4).with_classifier(Arc::new(KeywordClassifier));
        let sim = SyntheticAnnotators::new(5);
        let mut seen_step3 = false;
        loop {
            let mut progressed = false;
            for a in ["a1", "a2", "a3"] {
                let Ok(NextTask::Task(t)) = h.next_task_for(a).await else { continue };
                let json = serde_json::to_string(&t).unwrap();
                for needle in ["producers", "\"model\"", "approach", "NO_CD", "CD_GT", "CD_PRED", "reranking"] {
                    assert!(!json.contains(needle), "{needle} leaked in {json}");
                }
                if t.step == Step::Step3 {
                    seen_step3 = true;
                    assert!(t.responses[0].pretagged.is_some());
                    assert!(t.questionnaire.is_some());
                }
                let state = h.state();
                let r = crate::service::state::next_task_ref(h.definition(), &state, a);
                let s = sim.submission(h.definition(), &state, a, &r).unwrap();
                h.submit_as(a, s).await.unwrap();
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
        assert!(seen_step3);
        assert!(matches!(h.next_task_for("a1").await, Err(ServiceError::NoTasksRemaining)));
    }

    #[tokio::test]
    async fn step3_waits_for_both_selections() {
        let h = campaign(1);
        let ctx = h.definition().contexts[0].clone();
        let third = h
            .definition()
            .annotators
            .iter()
            .find(|a| !ctx.step12.contains(a))
            .unwrap()
            .clone();
        // the third annotator has step-1/2 work elsewhere; finish it
        let sim = SyntheticAnnotators::new(1);
        loop {
            let state = h.state();
            let r = crate::service::state::next_task_ref(h.definition(), &state, &third);
            match sim.submission(h.definition(), &state, &third, &r) {
                Some(s) => {
                    h.submit_as(&third, s).await.unwrap();
                }
                None => break,
            }
        }
        assert_eq!(h.next_task_for(&third).await.unwrap(), NextTask::Waiting);
        for a in &ctx.step12 {
            for _ in 0..2 {
                let state = h.state();
                let r = crate::service::state::next_task_ref(h.definition(), &state, a);
                let s = sim.submission(h.definition(), &state, a, &r).unwrap();
                h.submit_as(a, s).await.unwrap();
            }
        }
        let t = task(h.next_task_for(&third).await.unwrap());
        assert_eq!(t.step, Step::Step3);
        let bad = h
            .submit_as(
                &third,
                Submission::Step3 {
                    context_id: t.context_id.clone(),
                    response_id: t.responses[0].response_id.clone(),
                    tagged_text: "<I>unclosed".into(),
                    ratings: BTreeMap::new(),
                },
            )
            .await;
        match bad {
            Err(ServiceError::ValidationFailed(v)) => assert_eq!(v.field, "tagged_text"),
            other => panic!("{other:?}"),
        }
    }

    #[tokio::test]
    async fn completed_campaign_replays_and_exports() {
        let h = campaign(2);
        assert!(!h.export().contains("\"type\":\"scores\""));
        run_campaign(&h, &SyntheticAnnotators::new(9), 3, 0.3).await.unwrap();
        let replayed = CampaignState::replay(&h.events().await);
        assert_eq!(&replayed, h.state().as_ref());

        let export = h.export();
        let back = Bundle::from_jsonl(export.as_bytes()).unwrap();
        assert_eq!(back.to_jsonl(), export);
        assert_eq!(back.scores, Some(score_report(&back.data(), true).unwrap()));
        assert!(!export.contains("tok-a1"));
    }

    #[tokio::test]
    async fn reopens_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let config = CampaignConfig {
            seed: 2,
            contexts: Some(3),
            step3_contexts: 1,
            ..Default::default()
        };
        let def = build_definition("c".into(), &records(3), &config, |a| a.to_string()).unwrap();
        let path = dir.path().join("c");
        let log = EventLog::create(&path, &def, 4).unwrap();
        let h = CampaignHandle::new(def, CampaignState::default(), log, None);
        run_campaign(&h, &SyntheticAnnotators::new(4), 8, 0.2).await.unwrap();
        assert!(path.join(crate::service::log::SNAPSHOT_FILE).exists());
        let (_, state, _) = EventLog::open(&path, 4).unwrap();
        assert_eq!(&state, h.state().as_ref());

        // a torn trailing line is dropped on reopen
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(path.join(crate::service::log::EVENTS_FILE))
            .unwrap();
        f.write_all(b"{\"seq\":99999,\"ts_").unwrap();
        let (_, state2, log) = EventLog::open(&path, 0).unwrap();
        assert_eq!(state2, state);
        assert_eq!(CampaignState::replay(log.events()), state);
    }
}
