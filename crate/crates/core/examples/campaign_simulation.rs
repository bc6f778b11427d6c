//! A campaign persisted to disk, driven to completion by synthetic
//! annotators, then reopened from its event log.

use socemo::pipeline::{Approach, ConditioningMode, PipelineRunRecord, RunStatus};
use socemo::service::campaign::{build_definition, CampaignConfig};
use socemo::service::log::EventLog;
use socemo::service::sim::{run_campaign, SyntheticAnnotators};
use socemo::service::CampaignHandle;

fn record(ctx: usize, mode: ConditioningMode, text: String) -> PipelineRunRecord {
    PipelineRunRecord {
        sample_id: format!("d{ctx}:4"),
        conversation_id: format!("d{ctx}"),
        context_turns: vec![],
        gold_labels: None,
        gold_response: format!("Reference reply {ctx}."),
        model: "demo".into(),
        approach: Approach::Reranking,
        mode,
        planned: None,
        candidates: vec![],
        selected_index: Some(0),
        selected_text: Some(text),
        status: RunStatus::Ok,
        fallback_nocd: false,
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records: Vec<_> = (0..12)
        .flat_map(|i| {
            let shared = format!("Conditioned reply {i}.");
            let pred = if i % 3 == 0 { format!("Predicted reply {i}.") } else { shared.clone() };
            [
                record(i, ConditioningMode::NoCd, format!("Plain reply {i}.")),
                record(i, ConditioningMode::CdGt, shared),
                record(i, ConditioningMode::CdPred, pred),
            ]
        })
        .collect();
    let config = CampaignConfig {
        seed: 1,
        step3_contexts: 4,
        practice_contexts: 1,
        ..Default::default()
    };
    let def = build_definition("demo".into(), &records, &config, |a| format!("token-{a}"))?;

    let dir = tempfile::tempdir()?;
    let log = EventLog::create(dir.path(), &def, 25)?;
    let handle = CampaignHandle::new(def, Default::default(), log, None);
    let sent = run_campaign(&handle, &SyntheticAnnotators::new(3), 42, 0.1).await?;
    println!("{sent} submissions, {} events", handle.state().seq);
    print!("{}", handle.scores()?.to_table());

    let (def, state, log) = EventLog::open(dir.path(), 25)?;
    let reopened = CampaignHandle::new(def, state, log, None);
    assert_eq!(reopened.export(), handle.export());
    println!("reopened from disk: identical export");
    Ok(())
}
