//! Daily-Dialog style corpus loading.
//!
//! A split is three parallel text streams: utterances separated by `__eou__`,
//! and one integer dialogue-act code and one emotion code per utterance.
//! Conversations are turned into sliding-window [`ContextSample`]s whose
//! target is the label sequence of the turn that follows the window.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{Label, LabelKind, LabelSequence};

/// Utterance separator used by the Daily Dialog text dumps.
pub const EOU: &str = "__eou__";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed corpus at line {line}: {reason}")]
    MalformedCorpus { line: usize, reason: String },
    #[error("unknown {kind} code {code} at line {line}")]
    UnknownLabelCode {
        line: usize,
        kind: LabelKind,
        code: String,
    },
    #[error("split is empty")]
    EmptySplit,
    #[error("invalid code table: {0}")]
    InvalidCodeTable(String),
    #[error("invalid conversation {id}: {reason}")]
    InvalidConversation { id: String, reason: String },
    #[error("sample file line {line}: {source}")]
    SampleFormat {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }

    /// Speaker of the turn at `index` when A opens the conversation.
    pub fn at(index: usize) -> Speaker {
        if index.is_multiple_of(2) {
            Speaker::A
        } else {
            Speaker::B
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::A => "A",
            Speaker::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: Speaker,
    pub text: String,
    pub act: Label,
    pub emotion: Label,
}

impl DialogueTurn {
    pub fn validate(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err("empty utterance".into());
        }
        if self.act.kind() != LabelKind::Act {
            return Err(format!("`{}` is not a dialogue act", self.act));
        }
        if self.emotion.kind() != LabelKind::Emotion {
            return Err(format!("`{}` is not an emotion", self.emotion));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<DialogueTurn>,
}

impl Conversation {
    /// Checks turn validity and strict A/B alternation starting with A.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidConversation {
            id: self.id.clone(),
            reason,
        };
        if self.turns.is_empty() {
            return Err(invalid("no turns".into()));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            turn.validate().map_err(|e| invalid(format!("turn {}: {e}", i + 1)))?;
            if turn.speaker != Speaker::at(i) {
                return Err(invalid(format!(
                    "turn {} spoken by {}, expected {}",
                    i + 1,
                    turn.speaker,
                    Speaker::at(i)
                )));
            }
        }
        Ok(())
    }
}

/// Label sequence of a turn: the act, followed by the emotion unless it is neutral.
pub fn turn_labels(turn: &DialogueTurn) -> LabelSequence {
    turn_labels_with(turn, true)
}

/// Like [`turn_labels`], with neutral suppression switchable.
pub fn turn_labels_with(turn: &DialogueTurn, suppress_neutral: bool) -> LabelSequence {
    if suppress_neutral && turn.emotion == Label::Neutral {
        LabelSequence::from(vec![turn.act])
    } else {
        LabelSequence::from(vec![turn.act, turn.emotion])
    }
}

/// Integer code tables for the act and emotion streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeTable {
    pub acts: BTreeMap<u32, Label>,
    pub emotions: BTreeMap<u32, Label>,
}

impl Default for CodeTable {
    fn default() -> Self {
        use Label::*;
        CodeTable {
            acts: [(1, Inform), (2, Question), (3, Directive), (4, Commissive)]
                .into_iter()
                .collect(),
            emotions: [
                (0, Neutral),
                (1, Anger),
                (2, Disgust),
                (3, Fear),
                (4, Happiness),
                (5, Sadness),
                (6, Surprise),
            ]
            .into_iter()
            .collect(),
        }
    }
}

impl CodeTable {
    /// Loads a table from TOML with `[acts]` and `[emotions]` sections mapping
    /// quoted integer codes to label names.
    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        #[derive(Deserialize)]
        struct Raw {
            acts: BTreeMap<String, Label>,
            emotions: BTreeMap<String, Label>,
        }
        let raw: Raw =
            toml::from_str(text).map_err(|e| CorpusError::InvalidCodeTable(e.to_string()))?;
        let convert = |m: BTreeMap<String, Label>| -> Result<BTreeMap<u32, Label>, CorpusError> {
            m.into_iter()
                .map(|(k, v)| {
                    k.trim()
                        .parse::<u32>()
                        .map(|c| (c, v))
                        .map_err(|_| CorpusError::InvalidCodeTable(format!("bad code `{k}`")))
                })
                .collect()
        };
        let table = CodeTable {
            acts: convert(raw.acts)?,
            emotions: convert(raw.emotions)?,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (kind, map) in [(LabelKind::Act, &self.acts), (LabelKind::Emotion, &self.emotions)] {
            for (code, label) in map {
                if label.kind() != kind {
                    return Err(CorpusError::InvalidCodeTable(format!(
                        "code {code} maps `{label}` into the {kind} table"
                    )));
                }
            }
            let mut seen = std::collections::BTreeSet::new();
            for label in map.values() {
                if !seen.insert(label) {
                    return Err(CorpusError::InvalidCodeTable(format!(
                        "`{label}` has more than one code"
                    )));
                }
            }
        }
        Ok(())
    }

    fn code_of(&self, label: Label) -> Option<u32> {
        let map = match label.kind() {
            LabelKind::Act => &self.acts,
            LabelKind::Emotion => &self.emotions,
        };
        map.iter().find(|(_, l)| **l == label).map(|(c, _)| *c)
    }
}

/// Parses three parallel streams with the default code table.
pub fn parse_corpus(
    dialogues: &str,
    acts: &str,
    emotions: &str,
) -> Result<Vec<Conversation>, CorpusError> {
    parse_corpus_with(dialogues, acts, emotions, &CodeTable::default())
}

pub fn parse_corpus_with(
    dialogues: &str,
    acts: &str,
    emotions: &str,
    codes: &CodeTable,
) -> Result<Vec<Conversation>, CorpusError> {
    let dialogue_lines: Vec<&str> = non_blank_lines(dialogues);
    let act_lines: Vec<&str> = non_blank_lines(acts);
    let emotion_lines: Vec<&str> = non_blank_lines(emotions);
    if dialogue_lines.len() != act_lines.len() || dialogue_lines.len() != emotion_lines.len() {
        return Err(CorpusError::MalformedCorpus {
            line: dialogue_lines.len().min(act_lines.len()).min(emotion_lines.len()) + 1,
            reason: format!(
                "stream line counts differ: {} dialogues, {} act lines, {} emotion lines",
                dialogue_lines.len(),
                act_lines.len(),
                emotion_lines.len()
            ),
        });
    }

    let mut conversations = Vec::with_capacity(dialogue_lines.len());
    for (idx, ((dialogue, act_line), emotion_line)) in dialogue_lines
        .iter()
        .zip(&act_lines)
        .zip(&emotion_lines)
        .enumerate()
    {
        let line = idx + 1;
        let utterances = split_utterances(dialogue);
        let act_codes: Vec<&str> = act_line.split_whitespace().collect();
        let emotion_codes: Vec<&str> = emotion_line.split_whitespace().collect();
        if utterances.len() != act_codes.len() || utterances.len() != emotion_codes.len() {
            return Err(CorpusError::MalformedCorpus {
                line,
                reason: format!(
                    "{} utterances, {} act codes, {} emotion codes",
                    utterances.len(),
                    act_codes.len(),
                    emotion_codes.len()
                ),
            });
        }
        if utterances.is_empty() {
            return Err(CorpusError::MalformedCorpus {
                line,
                reason: "conversation has no utterances".into(),
            });
        }

        let mut turns = Vec::with_capacity(utterances.len());
        for (i, text) in utterances.into_iter().enumerate() {
            if text.is_empty() {
                return Err(CorpusError::MalformedCorpus {
                    line,
                    reason: format!("utterance {} is empty", i + 1),
                });
            }
            let act = lookup(&codes.acts, act_codes[i], LabelKind::Act, line)?;
            let emotion = lookup(&codes.emotions, emotion_codes[i], LabelKind::Emotion, line)?;
            turns.push(DialogueTurn {
                speaker: Speaker::at(i),
                text: text.to_string(),
                act,
                emotion,
            });
        }
        let conversation = Conversation {
            id: line.to_string(),
            turns,
        };
        conversation.validate()?;
        conversations.push(conversation);
    }
    Ok(conversations)
}

fn non_blank_lines(stream: &str) -> Vec<&str> {
    stream.lines().filter(|l| !l.trim().is_empty()).collect()
}

fn split_utterances(line: &str) -> Vec<&str> {
    let mut parts: Vec<&str> = line.split(EOU).map(str::trim).collect();
    // a well-formed line ends with the separator, leaving one empty tail
    if parts.last().is_some_and(|p| p.is_empty()) {
        parts.pop();
    }
    parts
}

fn lookup(
    table: &BTreeMap<u32, Label>,
    raw: &str,
    kind: LabelKind,
    line: usize,
) -> Result<Label, CorpusError> {
    raw.parse::<u32>()
        .ok()
        .and_then(|c| table.get(&c).copied())
        .ok_or_else(|| CorpusError::UnknownLabelCode {
            line,
            kind,
            code: raw.to_string(),
        })
}

/// Streams produced by [`serialize_corpus`]: (dialogues, acts, emotions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStreams {
    pub dialogues: String,
    pub acts: String,
    pub emotions: String,
}

/// Writes conversations back into the three-stream text format.
pub fn serialize_corpus(
    conversations: &[Conversation],
    codes: &CodeTable,
) -> Result<CorpusStreams, CorpusError> {
    let mut out = CorpusStreams {
        dialogues: String::new(),
        acts: String::new(),
        emotions: String::new(),
    };
    for conv in conversations {
        let mut acts = Vec::with_capacity(conv.turns.len());
        let mut emotions = Vec::with_capacity(conv.turns.len());
        for turn in &conv.turns {
            out.dialogues.push_str(&turn.text);
            out.dialogues.push(' ');
            out.dialogues.push_str(EOU);
            for (label, sink) in [(turn.act, &mut acts), (turn.emotion, &mut emotions)] {
                let code = codes.code_of(label).ok_or_else(|| {
                    CorpusError::InvalidCodeTable(format!("no code for `{label}`"))
                })?;
                sink.push(code.to_string());
            }
            out.dialogues.push(' ');
        }
        out.dialogues.push('\n');
        out.acts.push_str(&acts.join(" "));
        out.acts.push('\n');
        out.emotions.push_str(&emotions.join(" "));
        out.emotions.push('\n');
    }
    Ok(out)
}

/// One planning/generation sample: a window of turns and the turn that follows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSample {
    pub id: String,
    pub conversation_id: String,
    pub context: Vec<DialogueTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<LabelSequence>,
    pub gold_response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" | "valid" | "dev" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub name: SplitName,
    pub samples: Vec<ContextSample>,
}

/// Windowing parameters for [`build_samples_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleConfig {
    pub window: usize,
    /// Smallest context accepted at the start of a conversation. Equal to
    /// `window` (the default) only full windows are emitted; `1` also emits
    /// the shorter leading contexts, i.e. one sample per turn after the first.
    pub min_context: usize,
    pub suppress_neutral: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            window: 3,
            min_context: 3,
            suppress_neutral: true,
        }
    }
}

impl SampleConfig {
    pub fn with_window(window: usize) -> Self {
        SampleConfig {
            window,
            min_context: window,
            ..Default::default()
        }
    }
}

/// Sliding-window samples with full windows only.
///
/// # Panics
/// If `window` is zero.
pub fn build_samples(name: SplitName, conversations: &[Conversation], window: usize) -> CorpusSplit {
    build_samples_with(name, conversations, SampleConfig::with_window(window))
}

pub fn build_samples_with(
    name: SplitName,
    conversations: &[Conversation],
    config: SampleConfig,
) -> CorpusSplit {
    assert!(config.window >= 1, "window must be at least 1");
    let min_context = config.min_context.clamp(1, config.window);
    let mut samples = Vec::new();
    for conv in conversations {
        for target in min_context..conv.turns.len() {
            let start = target.saturating_sub(config.window);
            let gold = &conv.turns[target];
            samples.push(ContextSample {
                id: format!("{}:{}", conv.id, target + 1),
                conversation_id: conv.id.clone(),
                context: conv.turns[start..target].to_vec(),
                gold_labels: Some(turn_labels_with(gold, config.suppress_neutral)),
                gold_response: gold.text.clone(),
            });
        }
    }
    CorpusSplit { name, samples }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub samples: usize,
    pub mean_gold_length: f64,
    pub label_frequency: BTreeMap<Label, usize>,
}

pub fn corpus_stats(split: &CorpusSplit) -> Result<CorpusStats, CorpusError> {
    if split.samples.is_empty() {
        return Err(CorpusError::EmptySplit);
    }
    let mut label_frequency = BTreeMap::new();
    let mut total_len = 0usize;
    let mut with_gold = 0usize;
    for sample in &split.samples {
        if let Some(gold) = &sample.gold_labels {
            with_gold += 1;
            total_len += gold.len();
            for label in gold.iter() {
                *label_frequency.entry(*label).or_insert(0) += 1;
            }
        }
    }
    if with_gold == 0 {
        return Err(CorpusError::EmptySplit);
    }
    Ok(CorpusStats {
        samples: split.samples.len(),
        mean_gold_length: total_len as f64 / with_gold as f64,
        label_frequency,
    })
}

/// Writes one JSON object per line.
pub fn write_samples_jsonl<W: Write>(mut out: W, samples: &[ContextSample]) -> Result<(), CorpusError> {
    for sample in samples {
        serde_json::to_writer(&mut out, sample).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples_jsonl<R: BufRead>(input: R) -> Result<Vec<ContextSample>, CorpusError> {
    let mut samples = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = serde_json::from_str(&line)
            .map_err(|source| CorpusError::SampleFormat { line: idx + 1, source })?;
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::*;

    /// The five-utterance tea conversation used as the worked preprocessing example.
    pub(crate) fn tea_conversation() -> Conversation {
        let turns = [
            ("You surely know a lot about Chinese tea.", Inform, Neutral),
            ("Sure, I like drinking tea at teahouses.", Inform, Happiness),
            ("Oh, so do I.", Inform, Neutral),
            ("Why don't we go for one now?", Directive, Neutral),
            ("Great. We can chat while enjoying a cup there.", Commissive, Happiness),
        ];
        Conversation {
            id: "tea".into(),
            turns: turns
                .iter()
                .enumerate()
                .map(|(i, (text, act, emotion))| DialogueTurn {
                    speaker: Speaker::at(i),
                    text: text.to_string(),
                    act: *act,
                    emotion: *emotion,
                })
                .collect(),
        }
    }

    #[test]
    fn parses_two_turn_line() {
        let convs = parse_corpus("Hi ! __eou__ Hello . __eou__\n", "2 1\n", "4 0\n").unwrap();
        assert_eq!(convs.len(), 1);
        let turns = &convs[0].turns;
        assert_eq!(turns.len(), 2);
        assert_eq!((turns[0].act, turns[0].emotion), (Question, Happiness));
        assert_eq!((turns[1].act, turns[1].emotion), (Inform, Neutral));
        assert_eq!(turns[0].text, "Hi !");
        assert_eq!(turns[1].speaker, Speaker::B);
    }

    #[test]
    fn code_count_mismatch_is_malformed() {
        let err = parse_corpus("Hi ! __eou__ Hello . __eou__\n", "2 1 1\n", "4 0\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedCorpus { line: 1, .. }), "{err}");
    }

    #[test]
    fn stream_length_mismatch_is_malformed() {
        let err = parse_corpus("Hi ! __eou__\nYo . __eou__\n", "2\n", "4\n4\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedCorpus { .. }));
    }

    #[test]
    fn unknown_code() {
        let err = parse_corpus("Hi ! __eou__\n", "9\n", "0\n").unwrap_err();
        assert!(matches!(
            err,
            CorpusError::UnknownLabelCode { line: 1, kind: LabelKind::Act, .. }
        ));
        let err = parse_corpus("Hi ! __eou__\n", "1\n", "x\n").unwrap_err();
        assert!(matches!(err, CorpusError::UnknownLabelCode { kind: LabelKind::Emotion, .. }));
    }

    #[test]
    fn internal_spacing_is_preserved() {
        let convs = parse_corpus("  Well ,  yes .   __eou__\n", "1\n", "0\n").unwrap();
        assert_eq!(convs[0].turns[0].text, "Well ,  yes .");
    }

    #[test]
    fn turn_labels_examples() {
        let t = |act, emotion| DialogueTurn {
            speaker: Speaker::A,
            text: "x".into(),
            act,
            emotion,
        };
        assert_eq!(turn_labels(&t(Inform, Happiness)).as_slice(), &[Inform, Happiness]);
        assert_eq!(turn_labels(&t(Directive, Neutral)).as_slice(), &[Directive]);
        assert_eq!(turn_labels(&t(Commissive, Happiness)).as_slice(), &[Commissive, Happiness]);
        assert_eq!(
            turn_labels_with(&t(Directive, Neutral), false).as_slice(),
            &[Directive, Neutral]
        );
    }

    #[test]
    fn window_counts() {
        let tea = tea_conversation();
        assert_eq!(build_samples(SplitName::Test, std::slice::from_ref(&tea), 3).samples.len(), 2);
        let mut short = tea.clone();
        short.turns.truncate(3);
        assert_eq!(build_samples(SplitName::Test, &[short], 3).samples.len(), 0);
        let leading = build_samples_with(
            SplitName::Test,
            &[tea],
            SampleConfig { min_context: 1, ..Default::default() },
        );
        assert_eq!(leading.samples.len(), 4);
        assert_eq!(leading.samples[0].context.len(), 1);
    }

    #[test]
    fn tea_sample_targets_commissive_happiness() {
        let split = build_samples(SplitName::Test, &[tea_conversation()], 3);
        let sample = split
            .samples
            .iter()
            .find(|s| s.context[0].text.starts_with("Sure, I like"))
            .unwrap();
        assert_eq!(sample.context.len(), 3);
        assert_eq!(sample.gold_labels.as_ref().unwrap().as_slice(), &[Commissive, Happiness]);
        assert_eq!(sample.gold_response, "Great. We can chat while enjoying a cup there.");
    }

    #[test]
    fn stats() {
        let tea = tea_conversation();
        let split = build_samples(SplitName::Test, &[tea], 3);
        let stats = corpus_stats(&split).unwrap();
        assert_eq!(stats.samples, 2);
        assert_eq!(stats.mean_gold_length, 1.5);

        let single = CorpusSplit {
            name: SplitName::Test,
            samples: vec![ContextSample {
                id: "s".into(),
                conversation_id: "c".into(),
                context: vec![],
                gold_labels: Some(LabelSequence::from(vec![Inform])),
                gold_response: "ok".into(),
            }],
        };
        let stats = corpus_stats(&single).unwrap();
        assert_eq!(stats.mean_gold_length, 1.0);
        assert_eq!(stats.label_frequency[&Inform], 1);

        let empty = CorpusSplit { name: SplitName::Test, samples: vec![] };
        assert!(matches!(corpus_stats(&empty), Err(CorpusError::EmptySplit)));
    }

    #[test]
    fn stats_eighty_twenty_mix() {
        let sample = |labels: Vec<Label>| ContextSample {
            id: "s".into(),
            conversation_id: "c".into(),
            context: vec![],
            gold_labels: Some(LabelSequence::from(labels)),
            gold_response: "ok".into(),
        };
        let mut samples: Vec<_> = (0..8).map(|_| sample(vec![Inform])).collect();
        samples.extend((0..2).map(|_| sample(vec![Inform, Anger])));
        let stats = corpus_stats(&CorpusSplit { name: SplitName::Train, samples }).unwrap();
        assert!((stats.mean_gold_length - (0.8 * 1.0 + 0.2 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn alternation_violation_is_an_error() {
        let mut conv = tea_conversation();
        conv.turns[1].speaker = Speaker::A;
        assert!(matches!(conv.validate(), Err(CorpusError::InvalidConversation { .. })));
    }

    #[test]
    fn code_table_from_toml() {
        let table = CodeTable::from_toml(
            "[acts]\n\"0\" = \"inform\"\n\"1\" = \"question\"\n[emotions]\n\"0\" = \"neutral\"\n",
        )
        .unwrap();
        let convs = parse_corpus_with("a __eou__ b __eou__\n", "0 1\n", "0 0\n", &table).unwrap();
        assert_eq!(convs[0].turns[1].act, Question);
        assert!(CodeTable::from_toml("[acts]\n\"0\" = \"anger\"\n[emotions]\n").is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let split = build_samples(SplitName::Test, &[tea_conversation()], 3);
        let mut buf = Vec::new();
        write_samples_jsonl(&mut buf, &split.samples).unwrap();
        let back = read_samples_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, split.samples);
    }

    fn arb_conversation() -> impl Strategy<Value = Conversation> {
        let turn = ("[a-zA-Z][a-zA-Z ,.!?']{0,20}[a-zA-Z.!?]", 0usize..4, 0usize..7);
        prop::collection::vec(turn, 1..9).prop_map(|turns| Conversation {
            id: "p".into(),
            turns: turns
                .into_iter()
                .enumerate()
                .map(|(i, (text, a, e))| DialogueTurn {
                    speaker: Speaker::at(i),
                    text,
                    act: Label::ACTS[a],
                    emotion: Label::EMOTIONS[e],
                })
                .collect(),
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(convs in prop::collection::vec(arb_conversation(), 1..5)) {
            let codes = CodeTable::default();
            let streams = serialize_corpus(&convs, &codes).unwrap();
            let parsed = parse_corpus(&streams.dialogues, &streams.acts, &streams.emotions).unwrap();
            prop_assert_eq!(parsed.len(), convs.len());
            for (p, c) in parsed.iter().zip(&convs) {
                prop_assert_eq!(&p.turns, &c.turns);
            }
            let again = serialize_corpus(&parsed, &codes).unwrap();
            prop_assert_eq!(again, streams);
        }

        #[test]
        fn samples_follow_turn_labels(
            convs in prop::collection::vec(arb_conversation(), 0..6),
            window in 1usize..5,
        ) {
            let split = build_samples(SplitName::Train, &convs, window);
            let expected: usize = convs.iter().map(|c| c.turns.len().saturating_sub(window)).sum();
            prop_assert_eq!(split.samples.len(), expected);
            let mut it = split.samples.iter();
            for conv in &convs {
                for target in window..conv.turns.len() {
                    let s = it.next().unwrap();
                    prop_assert_eq!(s.context.len(), window);
                    prop_assert_eq!(&s.context[..], &conv.turns[target - window..target]);
                    let gold = s.gold_labels.as_ref().unwrap();
                    prop_assert_eq!(gold, &turn_labels(&conv.turns[target]));
                    prop_assert!(gold.len() == 1 || gold.len() == 2);
                    prop_assert_eq!(gold.as_slice()[0].kind(), LabelKind::Act);
                    prop_assert!(!gold.iter().any(|l| *l == Label::Neutral));
                }
            }
        }
    }
}
