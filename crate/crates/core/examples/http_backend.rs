//! Talking to a model backend over the v1 wire protocol.
//!
//! The deterministic mock backend is served on a local port; point
//! `HttpBackend` at a real deployment the same way.

use std::sync::Arc;

use socemo::backend::{Classifier, GenerateRequest, Generator, HttpBackend, WireTurn};
use socemo::corpus::{ContextSample, DialogueTurn, Speaker};
use socemo::labels::Label;
use socemo::mock::{default_mock_router, spawn_router};
use socemo::pipeline::ConditioningMode;
use socemo::planning::{Planner, RemotePlanner};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (addr, _server) = spawn_router(default_mock_router(5)).await?;
    let backend = Arc::new(HttpBackend::from_url(format!("http://{addr}"))?);
    println!("mock backend on {addr}");

    let context: Vec<WireTurn> = ["Hello!", "Hi, how was the trip?", "Long. Could you help me with my bags?"]
        .iter()
        .enumerate()
        .map(|(i, t)| WireTurn {
            speaker: Speaker::at(i),
            text: t.to_string(),
        })
        .collect();

    let candidates = backend
        .generate(&GenerateRequest {
            context_turns: context.clone(),
            n: 5,
            mode: ConditioningMode::CdPred,
            labels: None,
        })
        .await?;
    for c in &candidates {
        let conf = backend.classify(c).await?;
        let top = conf.iter().filter(|(_, v)| **v >= 0.7).map(|(l, _)| l.to_string()).collect::<Vec<_>>();
        println!("{c:<50} {}", top.join(", "));
    }

    let sample = ContextSample {
        id: "trip:4".into(),
        conversation_id: "trip".into(),
        context: context
            .iter()
            .map(|t| DialogueTurn {
                speaker: t.speaker,
                text: t.text.clone(),
                act: Label::Inform,
                emotion: Label::Neutral,
            })
            .collect(),
        gold_labels: None,
        gold_response: String::new(),
    };
    let plan = RemotePlanner::new(backend.clone()).plan(&sample).await?;
    println!("predicted labels: {} (viable: {})", plan.labels, plan.viable);
    Ok(())
}
