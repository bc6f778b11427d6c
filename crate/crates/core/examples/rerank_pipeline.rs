//! Generate candidates, label them and keep the one closest to the plan.

use std::sync::Arc;

use socemo::corpus::{ContextSample, DialogueTurn, Speaker};
use socemo::labels::Label;
use socemo::mock::{EchoPredictor, KeywordClassifier, TemplateGenerator};
use socemo::pipeline::{run_context, Approach, Backends, ConditioningMode, GenerationConfig};
use socemo::planning::RemotePlanner;

#[tokio::main]
async fn main() {
    let turn = |i: usize, text: &str| DialogueTurn {
        speaker: Speaker::at(i),
        text: text.into(),
        act: Label::Inform,
        emotion: Label::Neutral,
    };
    let sample = ContextSample {
        id: "headache:4".into(),
        conversation_id: "headache".into(),
        context: vec![
            turn(0, "I have a terrible headache."),
            turn(1, "Did you take anything for it?"),
            turn(2, "Not yet. What do you suggest?"),
        ],
        gold_labels: Some(vec![Label::Directive].into()),
        gold_response: "You should see a doctor as soon as possible.".into(),
    };
    let backends = Backends {
        generator: Arc::new(TemplateGenerator::new(7)),
        classifier: Some(Arc::new(KeywordClassifier)),
        planner: Some(Arc::new(RemotePlanner::new(Arc::new(EchoPredictor)))),
    };

    for (mode, approach) in [
        (ConditioningMode::NoCd, Approach::Reranking),
        (ConditioningMode::CdPred, Approach::Reranking),
        (ConditioningMode::CdGt, Approach::Reranking),
        (ConditioningMode::CdGt, Approach::PromptBased),
    ] {
        let config = GenerationConfig {
            mode,
            approach,
            ..Default::default()
        };
        let record = run_context(&sample, &config, &backends).await;
        println!("== {}", record.model_key());
        if let Some(plan) = &record.planned {
            println!("plan: {}", plan.labels);
        }
        for c in &record.candidates {
            let mark = if Some(c.index) == record.selected_index { '*' } else { ' ' };
            let nls = c.nls.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            println!("{mark} {nls:>4} [{}] {}", c.labels.canonical_sequence(), c.text);
        }
    }
}
