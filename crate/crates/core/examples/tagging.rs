//! Dialogue-act tagging of a response, as done in the third annotation step.

use socemo::labels::Label;
use socemo::protocol::{parse_tagged_response, pretag_with, serialize_tagged, ActTagMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tags = ActTagMap::default();
    let text = "Hi Suzy. Would you like to go to a party with me on Saturday?";

    // pre-tagging: one act per sentence, adjacent equal acts merged
    let pre = pretag_with(text, |s| if s.ends_with('?') { Label::Question } else { Label::Inform });
    let shown = serialize_tagged(&pre, &tags)?;
    println!("pre-tagged: {shown}");

    // the annotator corrects the second act
    let corrected = shown.replace("<Q>", "<D>").replace("</Q>", "</D>");
    for seg in parse_tagged_response(&corrected, &tags)? {
        println!("{:<10} {}", seg.act.to_string(), seg.text);
    }

    match parse_tagged_response("<I>Hi Suzy.</I> untagged tail", &tags) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
