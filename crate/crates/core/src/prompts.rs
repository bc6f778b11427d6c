//! Few-shot prompt templates for label planning and response generation,
//! and the parser for numbered multi-response completions.
//!
//! Context turns are serialized on one line as
//! `SPEAKER A: utt1 SPEAKER B: utt2 SPEAKER A: utt3`, with speakers assigned
//! by position in the window.

use crate::corpus::{DialogueTurn, Speaker};
use crate::labels::LabelSequence;

const LABEL_PROMPT_HEAD: &str = "\
Predict the sequence of labels associated with the utterance that follows the given dialogue.
We consider the following labels: 'inform', 'question', 'directive', 'commissive', 'neutral', 'anger', 'disgust', 'fear', 'happiness', 'sadness' and 'surprise'. The answer must be one or a sequence of multiple labels from this list.

Here are a few examples,
Dialogue: Good morning, sir. Is there a bank near here ?
Labels: 'inform'.
Dialogue: Is it far ?
Labels:'inform'
Dialogue: No, It's only about five minutes walk.
Labels: 'inform', 'happiness'.

What labels are associated with the utterance following this dialogue:
Dialogue: ";

const NOCD_PROMPT_HEAD: &str = "\
Generate the response following the given context.

For example:
A: Do you like some soup?
B: Yes, but I don't know what soup you have
A: We have beef soup and tomato soup
Response: Good. I prefer beef soup .

A: Can I take your order now, Madam?
B: Yes, what would you recommend?
A: I'm happy to recommend the fish, It tastes delicious, and it is today's special. Our chef is from the coast, and loves seafood. Today's special is actually his favorite dish. so I'm sure it is a
Response: It does sound wonderful, maybe I'll try it .

Generate the response following the following dialogue: ";

/// Anything that can be shown as a speaker turn in a prompt.
pub trait PromptTurn {
    fn utterance(&self) -> &str;
}

impl PromptTurn for DialogueTurn {
    fn utterance(&self) -> &str {
        &self.text
    }
}

impl PromptTurn for &str {
    fn utterance(&self) -> &str {
        self
    }
}

impl PromptTurn for String {
    fn utterance(&self) -> &str {
        self
    }
}

/// `SPEAKER A: utt1 SPEAKER B: utt2 SPEAKER A: utt3`
pub fn format_context<T: PromptTurn>(turns: &[T]) -> String {
    turns
        .iter()
        .enumerate()
        .map(|(i, t)| format!("SPEAKER {}: {}", Speaker::at(i), t.utterance().trim()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Few-shot prompt asking for the label sequence of the next turn.
pub fn build_label_prompt<T: PromptTurn>(context: &[T]) -> String {
    format!("{LABEL_PROMPT_HEAD}{}", format_context(context))
}

/// Single-response prompt used without conditioning.
pub fn build_nocd_prompt<T: PromptTurn>(context: &[T]) -> String {
    format!("{NOCD_PROMPT_HEAD}{}", format_context(context))
}

/// Prompt for `n` numbered candidate responses; ends with the `1: ` cue.
pub fn build_multi_prompt<T: PromptTurn>(context: &[T], n: usize) -> String {
    format!(
        "Generate {n} responses following this dialogue: {}\nNumber the generated sequences from 1 to {n}\nGenerated sequences:\n1: ",
        format_context(context)
    )
}

/// Prompt-based conditioning: the expected labels are stated as the tone.
pub fn build_pb_prompt<T: PromptTurn>(context: &[T], labels: &LabelSequence) -> String {
    format!(
        "Generate the response following the given context : {}\nThe tone of the response must be {labels}\nResponse: ",
        format_context(context)
    )
}

/// Result of splitting a numbered completion into candidate slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiResponse {
    /// `slots[k]` holds response `k + 1`, or `None` when it was missing or empty.
    pub slots: Vec<Option<String>>,
}

impl MultiResponse {
    /// Parsable candidates with their 0-based slot index.
    pub fn candidates(&self) -> impl Iterator<Item = (usize, &str)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_deref().map(|t| (i, t)))
    }

    pub fn parsed_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_unparsable(&self) -> bool {
        self.parsed_count() == 0
    }

    /// Slots flattened to texts, with an empty string for each missing slot.
    pub fn into_texts(self) -> Vec<String> {
        self.slots.into_iter().map(Option::unwrap_or_default).collect()
    }
}

/// Splits `raw` on line-leading `k:` markers for `k` in `1..=n`.
///
/// Text before the first marker is ignored; the first occurrence of a marker
/// wins; text runs until the next recognised marker.
pub fn parse_multi_response(raw: &str, n: usize) -> MultiResponse {
    let mut slots: Vec<Option<String>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut current: Option<(usize, String)> = None;

    let flush = |current: &mut Option<(usize, String)>, slots: &mut Vec<Option<String>>| {
        if let Some((k, text)) = current.take() {
            let text = text.trim();
            if !text.is_empty() {
                slots[k] = Some(text.to_string());
            }
        }
    };

    for line in raw.lines() {
        match marker(line, n) {
            Some((k, rest)) if !seen[k] => {
                flush(&mut current, &mut slots);
                seen[k] = true;
                current = Some((k, rest.to_string()));
            }
            _ => {
                if let Some((_, text)) = current.as_mut() {
                    text.push('\n');
                    text.push_str(line);
                }
            }
        }
    }
    flush(&mut current, &mut slots);
    MultiResponse { slots }
}

fn marker(line: &str, n: usize) -> Option<(usize, &str)> {
    let trimmed = line.trim_start();
    let digits = trimmed.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || !trimmed[digits..].starts_with(':') {
        return None;
    }
    let k: usize = trimmed[..digits].parse().ok()?;
    (1..=n).contains(&k).then(|| (k - 1, &trimmed[digits + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Label;

    const CTX: [&str; 3] = ["Hi.", "Hello.", "How are you?"];

    #[test]
    fn context_format() {
        assert_eq!(
            format_context(&CTX),
            "SPEAKER A: Hi. SPEAKER B: Hello. SPEAKER A: How are you?"
        );
    }

    #[test]
    fn label_prompt_shape() {
        let p = build_label_prompt(&CTX);
        assert!(p.contains("We consider the following labels:"));
        assert!(p.ends_with(&format!("Dialogue: {}", format_context(&CTX))));
        let q = build_label_prompt(&["a", "b", "c"]);
        let head = p.len() - format_context(&CTX).len();
        assert_eq!(&p[..head], &q[..q.len() - format_context(&["a", "b", "c"]).len()]);
    }

    #[test]
    fn generation_prompts() {
        let labels = LabelSequence::from(vec![Label::Inform, Label::Happiness]);
        assert!(build_pb_prompt(&CTX, &labels)
            .lines()
            .any(|l| l == "The tone of the response must be inform, happiness"));
        let multi = build_multi_prompt(&CTX, 10);
        assert!(multi.contains("Number the generated sequences from 1 to 10"));
        assert!(multi.ends_with("\n1: "));
        assert!(build_nocd_prompt(&CTX).contains("Good. I prefer beef soup ."));
        assert_eq!(build_nocd_prompt(&CTX), build_nocd_prompt(&CTX));
    }

    #[test]
    fn multi_response_parsing() {
        let r = parse_multi_response("1: Hello.\n2: Hi there.", 2);
        assert_eq!(r.candidates().map(|(_, t)| t).collect::<Vec<_>>(), ["Hello.", "Hi there."]);

        let r = parse_multi_response("Sure! Here you go, Hello.", 3);
        assert!(r.is_unparsable());

        let r = parse_multi_response("1: A\n3: C\n", 3);
        assert_eq!(r.candidates().collect::<Vec<_>>(), [(0, "A"), (2, "C")]);
        assert_eq!(r.slots[1], None);

        let r = parse_multi_response("1:\n2: kept\n2: dup\n11: out of range", 10);
        assert_eq!(r.candidates().collect::<Vec<_>>(), [(1, "kept\n2: dup\n11: out of range")]);

        let r = parse_multi_response("1: first line\ncontinued\n2: second", 2);
        assert_eq!(r.slots[0].as_deref(), Some("first line\ncontinued"));
    }
}
