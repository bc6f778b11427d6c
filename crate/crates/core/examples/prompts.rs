//! The four few-shot prompts and the numbered-response parser.

use socemo::labels::{Label, LabelSequence};
use socemo::prompts::{build_label_prompt, build_multi_prompt, build_nocd_prompt, build_pb_prompt, parse_multi_response};

fn main() {
    let ctx = ["I have a terrible headache.", "Did you take anything for it?", "Not yet. What do you suggest?"];
    let labels = LabelSequence::from(vec![Label::Directive]);
    for (name, p) in [
        ("label", build_label_prompt(&ctx)),
        ("no conditioning", build_nocd_prompt(&ctx)),
        ("10 candidates", build_multi_prompt(&ctx, 10)),
        ("prompt-based", build_pb_prompt(&ctx, &labels)),
    ] {
        println!("==== {name}\n{p}\n");
    }

    let completion = "Take an aspirin.\n2: Lie down for a bit.\n3:\n4: Drink some water.";
    let parsed = parse_multi_response(&format!("1: {completion}"), 4);
    for (i, text) in parsed.candidates() {
        println!("candidate {i}: {text}");
    }
    println!("{} of 4 parsed", parsed.parsed_count());
}
