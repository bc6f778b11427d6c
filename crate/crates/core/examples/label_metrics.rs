//! Sequence and set metrics for planned label sequences.

use socemo::labels::{Label, LabelSet};
use socemo::metrics::{levenshtein, multilabel_prf, nls};

fn set(labels: &[Label]) -> LabelSet {
    labels.iter().copied().collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use Label::*;
    let planned = [Inform, Happiness];
    let gold = [Inform];
    println!("levenshtein = {}", levenshtein(&planned, &gold));
    println!("nls         = {:.2}", nls(&planned, &gold));
    println!("nls disjoint = {:.2}", nls(&[Question], &[Directive]));

    let golds = [set(&[Inform]), set(&[Question, Surprise]), set(&[Directive])];
    let preds = [set(&[Inform, Happiness]), set(&[Question]), set(&[Commissive])];
    let r = multilabel_prf(&golds, &preds)?;
    println!("jaccard {:.3}", r.jaccard);
    for (name, p) in [("micro", r.micro), ("macro", r.macro_avg), ("samples", r.samples)] {
        println!("{name:<8} P {:.3}  R {:.3}  F1 {:.3}", p.precision, p.recall, p.f1);
    }
    Ok(())
}
