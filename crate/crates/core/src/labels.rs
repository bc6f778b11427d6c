//! The eleven socio-emotional strategy labels: four dialogue acts and seven emotions.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Act,
    Emotion,
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelKind::Act => "act",
            LabelKind::Emotion => "emotion",
        })
    }
}

/// Variant order is significant: acts precede emotions, and `Ord` follows
/// declaration order. Canonical sequences built from sets rely on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Inform,
    Question,
    Directive,
    Commissive,
    Neutral,
    Anger,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
}

impl Label {
    pub const ALL: [Label; 11] = [
        Label::Inform,
        Label::Question,
        Label::Directive,
        Label::Commissive,
        Label::Neutral,
        Label::Anger,
        Label::Disgust,
        Label::Fear,
        Label::Happiness,
        Label::Sadness,
        Label::Surprise,
    ];

    pub const ACTS: [Label; 4] = [Label::Inform, Label::Question, Label::Directive, Label::Commissive];

    pub const EMOTIONS: [Label; 7] = [
        Label::Neutral,
        Label::Anger,
        Label::Disgust,
        Label::Fear,
        Label::Happiness,
        Label::Sadness,
        Label::Surprise,
    ];

    pub fn kind(self) -> LabelKind {
        match self {
            Label::Inform | Label::Question | Label::Directive | Label::Commissive => LabelKind::Act,
            _ => LabelKind::Emotion,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Inform => "inform",
            Label::Question => "question",
            Label::Directive => "directive",
            Label::Commissive => "commissive",
            Label::Neutral => "neutral",
            Label::Anger => "anger",
            Label::Disgust => "disgust",
            Label::Fear => "fear",
            Label::Happiness => "happiness",
            Label::Sadness => "sadness",
            Label::Surprise => "surprise",
        }
    }

    /// Position in [`Label::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    /// Case-insensitive, surrounding whitespace ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim();
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.as_str().eq_ignore_ascii_case(needle))
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered label sequence; duplicates allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSequence(Vec<Label>);

impl LabelSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Label> {
        self.0.iter()
    }

    pub fn push(&mut self, label: Label) {
        self.0.push(label);
    }

    pub fn to_set(&self) -> LabelSet {
        self.0.iter().copied().collect()
    }

    pub fn into_vec(self) -> Vec<Label> {
        self.0
    }
}

impl From<Vec<Label>> for LabelSequence {
    fn from(labels: Vec<Label>) -> Self {
        LabelSequence(labels)
    }
}

impl FromIterator<Label> for LabelSequence {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        LabelSequence(iter.into_iter().collect())
    }
}

impl AsRef<[Label]> for LabelSequence {
    fn as_ref(&self) -> &[Label] {
        &self.0
    }
}

/// Comma-separated, e.g. `inform, happiness`.
impl fmt::Display for LabelSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, label) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(label.as_str())?;
        }
        Ok(())
    }
}

/// Unordered label set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(BTreeSet<Label>);

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: Label) -> bool {
        self.0.insert(label)
    }

    pub fn contains(&self, label: Label) -> bool {
        self.0.contains(&label)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        self.0.iter().copied()
    }

    pub fn as_set(&self) -> &BTreeSet<Label> {
        &self.0
    }

    /// Acts first, then emotions, each in declaration order.
    pub fn canonical_sequence(&self) -> LabelSequence {
        self.0.iter().copied().collect()
    }
}

impl FromIterator<Label> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        LabelSet(iter.into_iter().collect())
    }
}

impl From<BTreeSet<Label>> for LabelSet {
    fn from(set: BTreeSet<Label>) -> Self {
        LabelSet(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_labels_with_one_kind_each() {
        assert_eq!(Label::ALL.len(), 11);
        assert_eq!(Label::ACTS.len() + Label::EMOTIONS.len(), 11);
        for l in Label::ACTS {
            assert_eq!(l.kind(), LabelKind::Act);
        }
        for l in Label::EMOTIONS {
            assert_eq!(l.kind(), LabelKind::Emotion);
        }
        for (i, l) in Label::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
        }
    }

    #[test]
    fn string_round_trip() {
        for l in Label::ALL {
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(serde_json::from_str::<Label>(&json).unwrap(), l);
        }
        assert_eq!(" Happiness ".parse::<Label>().unwrap(), Label::Happiness);
        assert!("joy".parse::<Label>().is_err());
    }

    #[test]
    fn canonical_sequence_puts_acts_first() {
        let set: LabelSet = [Label::Happiness, Label::Question, Label::Anger, Label::Inform]
            .into_iter()
            .collect();
        assert_eq!(
            set.canonical_sequence().as_slice(),
            &[Label::Inform, Label::Question, Label::Anger, Label::Happiness]
        );
    }

    #[test]
    fn sequence_display() {
        let seq = LabelSequence::from(vec![Label::Inform, Label::Happiness]);
        assert_eq!(seq.to_string(), "inform, happiness");
    }
}
