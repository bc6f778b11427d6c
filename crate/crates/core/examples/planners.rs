//! Random, oracle and model-backed planners scored on a synthetic split.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socemo::cli::metric_table;
use socemo::corpus::{build_samples, Conversation, DialogueTurn, Speaker};
use socemo::labels::{Label, LabelKind};
use socemo::metrics::Averaging;
use socemo::mock::EchoPredictor;
use socemo::planning::{evaluate_planner, OraclePlanner, Planner, RandomPlanner, RemotePlanner};

const LINES: [&str; 6] = [
    "Could you pass me the salt?",
    "Sure, I will get it.",
    "Please close the door.",
    "I'm so happy you came!",
    "The train leaves at noon.",
    "Really? I had no idea!",
];

fn synthetic(n: usize, seed: u64) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts: Vec<Label> = Label::ALL.into_iter().filter(|l| l.kind() == LabelKind::Act).collect();
    let emotions: Vec<Label> = Label::ALL.into_iter().filter(|l| l.kind() == LabelKind::Emotion).collect();
    (0..n)
        .map(|i| Conversation {
            id: i.to_string(),
            turns: (0..rng.random_range(4..9))
                .map(|t| DialogueTurn {
                    speaker: Speaker::at(t),
                    text: LINES.choose(&mut rng).unwrap().to_string(),
                    act: *acts.choose(&mut rng).unwrap(),
                    emotion: if rng.random_bool(0.7) { Label::Neutral } else { *emotions.choose(&mut rng).unwrap() },
                })
                .collect(),
        })
        .collect()
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let split = build_samples(socemo::corpus::SplitName::Test, &synthetic(200, 1), 3);
    let planners: Vec<(&str, Box<dyn Planner>)> = vec![
        ("random", Box::new(RandomPlanner { seed: 0 })),
        ("echo", Box::new(RemotePlanner::new(Arc::new(EchoPredictor)))),
        ("oracle", Box::new(OraclePlanner)),
    ];
    let mut reports = Vec::new();
    for (name, p) in &planners {
        reports.push((name.to_string(), evaluate_planner(p.as_ref(), &split, 8).await?));
    }
    let rows: Vec<_> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    print!("{}", metric_table(&rows, Averaging::Samples));
    println!("{} samples", split.samples.len());
    Ok(())
}
