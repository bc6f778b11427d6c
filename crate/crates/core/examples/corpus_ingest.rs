//! Parse the three parallel corpus streams and slice them into context samples.
//!
//! ```text
//! cargo run --example corpus_ingest
//! ```

use socemo::corpus::{build_samples, build_samples_with, corpus_stats, parse_corpus, SampleConfig, SplitName};

const DIALOGUES: &str = "\
I have a terrible headache . __eou__ Did you take anything for it ? __eou__ Not yet . What do you suggest ? __eou__ Take an aspirin and lie down . __eou__ Thanks , I will . __eou__
Can I help you ? __eou__ Yes , a blue sweater please . __eou__ What size ? __eou__ Medium . __eou__
";
const ACTS: &str = "1 2 2 3 4\n2 3 2 1\n";
const EMOTIONS: &str = "5 0 0 0 4\n0 0 0 0\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let conversations = parse_corpus(DIALOGUES, ACTS, EMOTIONS)?;
    for c in &conversations {
        println!("conversation {} has {} turns", c.id, c.turns.len());
    }

    let split = build_samples(SplitName::Test, &conversations, 3);
    for s in &split.samples {
        let labels = s.gold_labels.as_ref().map(|l| l.to_string()).unwrap_or_default();
        println!("{:<5} [{labels}] <- {}", s.id, s.gold_response);
    }
    let stats = corpus_stats(&split)?;
    println!("{} samples, mean gold length {:.2}", stats.samples, stats.mean_gold_length);

    // one sample per turn after the first, shorter contexts included
    let every_turn = SampleConfig {
        min_context: 1,
        ..SampleConfig::with_window(3)
    };
    let all = build_samples_with(SplitName::Test, &conversations, every_turn);
    println!("{} samples with leading contexts", all.samples.len());
    Ok(())
}
