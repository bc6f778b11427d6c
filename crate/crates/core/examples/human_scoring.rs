//! Human-evaluation scores from an annotation bundle.
//!
//! The bundle is the small hand-checked fixture used by the tests: two
//! contexts, two annotators, three systems plus the corpus reference.

use socemo::protocol::{dedup_texts, score_report, ModelKey};
use socemo::pipeline::{Approach, ConditioningMode};
use socemo::service::Bundle;

const BUNDLE: &str = include_str!("../tests/fixtures/tiny.jsonl");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // identical responses collapse into one entry credited to every producer
    let key = |mode| ModelKey::new("m", mode, Approach::Reranking);
    let pool = dedup_texts(
        "ctx",
        vec![],
        [
            (key(ConditioningMode::NoCd), "Take a nap.".to_string()),
            (key(ConditioningMode::CdGt), "Have you tried resting?".to_string()),
            (key(ConditioningMode::CdPred), "  Have you tried   resting?".to_string()),
        ],
    )?;
    for e in &pool.entries {
        let producers: Vec<String> = e.producers.iter().map(ToString::to_string).collect();
        println!("{} {:<26} {}", e.response_id, e.text, producers.join(", "));
    }
    println!();

    let bundle = Bundle::from_jsonl(BUNDLE.as_bytes())?;
    let report = score_report(&bundle.data(), true)?;
    print!("{}", report.to_table());
    Ok(())
}
