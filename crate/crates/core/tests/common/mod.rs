#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::Rng;
use socemo::corpus::{Conversation, DialogueTurn, Speaker};
use socemo::labels::{Label, LabelKind};
use socemo::pipeline::{Approach, ConditioningMode, PipelineRunRecord, RunStatus};

pub const DATASET_ENV: &str = "DAILYDIALOG_DIR";

pub fn acts() -> Vec<Label> {
    Label::ALL.into_iter().filter(|l| l.kind() == LabelKind::Act).collect()
}

pub fn emotions() -> Vec<Label> {
    Label::ALL.into_iter().filter(|l| l.kind() == LabelKind::Emotion).collect()
}

/// A conversation of `turns` turns with random labels.
pub fn conversation<R: Rng>(id: &str, turns: usize, rng: &mut R) -> Conversation {
    let (acts, emotions) = (acts(), emotions());
    Conversation {
        id: id.to_string(),
        turns: (0..turns)
            .map(|i| DialogueTurn {
                speaker: Speaker::at(i),
                text: format!("utterance {i} of {id}"),
                act: *acts.choose(rng).unwrap(),
                emotion: *emotions.choose(rng).unwrap(),
            })
            .collect(),
    }
}

pub fn record(ctx: &str, model: &str, mode: ConditioningMode, text: &str) -> PipelineRunRecord {
    PipelineRunRecord {
        sample_id: ctx.into(),
        conversation_id: ctx.split(':').next().unwrap_or(ctx).into(),
        context_turns: vec![],
        gold_labels: None,
        gold_response: format!("reference for {ctx}"),
        model: model.into(),
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

/// Three systems per context; CD-GT and CD-pred agree on every second context.
pub fn campaign_records(contexts: usize) -> Vec<PipelineRunRecord> {
    (0..contexts)
        .flat_map(|i| {
            let ctx = format!("d{i}:4");
            let pred = if i % 2 == 0 { format!("tuned {i}") } else { format!("guess {i}") };
            [
                record(&ctx, "m", ConditioningMode::NoCd, &format!("plain {i}")),
                record(&ctx, "m", ConditioningMode::CdGt, &format!("tuned {i}")),
                record(&ctx, "m", ConditioningMode::CdPred, &pred),
            ]
        })
        .collect()
}

/// Directory holding `<split>/dialogues_<split>.txt` and the act and emotion
/// files, when the environment points at one.
pub fn dataset_dir() -> Option<PathBuf> {
    std::env::var_os(DATASET_ENV).map(PathBuf::from).filter(|p| p.is_dir())
}

pub fn dataset_files(dir: &std::path::Path, split: &str) -> [PathBuf; 3] {
    let d = dir.join(split);
    [
        d.join(format!("dialogues_{split}.txt")),
        d.join(format!("dialogues_act_{split}.txt")),
        d.join(format!("dialogues_emotion_{split}.txt")),
    ]
}
