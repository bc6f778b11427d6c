//! The annotation service over HTTP: an operator creates a campaign, an
//! annotator opens a session, fetches a task and answers it.
//!
//! Pass `--serve` to keep the service running on port 8080 afterwards.

use std::sync::Arc;

use serde_json::{json, Value};
use socemo::mock::spawn_router;
use socemo::pipeline::{Approach, ConditioningMode, PipelineRunRecord, RunStatus};
use socemo::service::{router, Service, ServiceConfig};

fn record(ctx: usize, mode: ConditioningMode, text: &str) -> PipelineRunRecord {
    PipelineRunRecord {
        sample_id: format!("d{ctx}:4"),
        conversation_id: format!("d{ctx}"),
        context_turns: vec![],
        gold_labels: None,
        gold_response: "You should see a doctor.".into(),
        model: "demo".into(),
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

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ServiceConfig {
        admin_token: Some("operator".into()),
        ..Default::default()
    };
    let service = Arc::new(Service::in_memory(config.clone(), None));
    let (addr, server) = spawn_router(router(service)).await?;
    let base = format!("http://{addr}/v1");
    let http = reqwest::Client::new();

    let records: Vec<_> = (0..3)
        .flat_map(|i| {
            [
                record(i, ConditioningMode::NoCd, "Take a nap."),
                record(i, ConditioningMode::CdGt, "Have you tried resting?"),
                record(i, ConditioningMode::CdPred, "Have you tried resting?"),
            ]
        })
        .collect();
    let created: Value = http
        .post(format!("{base}/campaigns"))
        .bearer_auth("operator")
        .json(&json!({ "config": { "step3_contexts": 1 }, "records": records }))
        .send()
        .await?
        .error_for_status()?
        .json()
        .await?;
    let campaign = created["campaign_id"].as_str().unwrap();
    let token = created["tokens"]["a1"].as_str().unwrap();
    println!("campaign {campaign}, a1 works on {} contexts", created["assignments"]["a1"]);

    let session: Value = http
        .post(format!("{base}/sessions"))
        .bearer_auth(token)
        .json(&json!({ "campaign_id": campaign }))
        .send()
        .await?
        .json()
        .await?;
    let sid = session["session_id"].as_str().unwrap();

    let task: Value = http.get(format!("{base}/sessions/{sid}/next")).bearer_auth(token).send().await?.json().await?;
    println!("task: {}", serde_json::to_string_pretty(&task)?);

    // keep every response shown
    let kept: serde_json::Map<String, Value> = task["responses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["response_id"].as_str().unwrap().to_string(), json!(true)))
        .collect();
    let answer = json!({ "step": "step1", "context_id": task["context_id"], "kept": kept });
    let outcome: Value = http
        .post(format!("{base}/sessions/{sid}/submit"))
        .bearer_auth(token)
        .json(&answer)
        .send()
        .await?
        .json()
        .await?;
    println!("submitted: {outcome}");

    let bad = json!({ "step": "step2", "context_id": task["context_id"], "top3": ["nope"] });
    let resp = http.post(format!("{base}/sessions/{sid}/submit")).bearer_auth(token).json(&bad).send().await?;
    println!("invalid step 2 -> {} {}", resp.status(), resp.text().await?);

    let scores: Value = http
        .get(format!("{base}/campaigns/{campaign}/scores"))
        .bearer_auth("operator")
        .send()
        .await?
        .json()
        .await?;
    println!("live scores over {} contexts", scores["contexts"]);

    if std::env::args().any(|a| a == "--serve") {
        server.abort();
        socemo::service::http::serve(config).await?;
    }
    Ok(())
}
