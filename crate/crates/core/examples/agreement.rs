//! Krippendorff's alpha on raw matrices and on step-1 judgments.

use std::collections::BTreeSet;

use socemo::metrics::{jaccard_distance, krippendorff_alpha, nominal_distance, AnnotationMatrix};
use socemo::protocol::{agreement_report, AgreementUnit};
use socemo::service::Bundle;

const BUNDLE: &str = include_str!("../tests/fixtures/tiny.jsonl");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let nominal = AnnotationMatrix::from_units(
        2,
        vec![
            vec![Some("a"), Some("a")],
            vec![Some("b"), Some("b")],
            vec![Some("a"), Some("b")],
            vec![Some("b"), Some("a")],
        ],
    );
    println!("nominal alpha {:.4}", krippendorff_alpha(&nominal, nominal_distance)?);

    let s = |xs: &[u8]| xs.iter().copied().collect::<BTreeSet<u8>>();
    let sets = AnnotationMatrix::from_units(
        3,
        vec![
            vec![Some(s(&[1, 2])), Some(s(&[1])), Some(s(&[1, 2]))],
            vec![Some(s(&[3])), Some(s(&[3, 4])), None],
            vec![Some(s(&[5])), Some(s(&[5])), Some(s(&[6]))],
        ],
    );
    println!("set-valued alpha {:.4}\n", krippendorff_alpha(&sets, jaccard_distance)?);

    let bundle = Bundle::from_jsonl(BUNDLE.as_bytes())?;
    let data = bundle.data();
    for unit in [AgreementUnit::ResponseIds, AgreementUnit::ModelKeys] {
        println!("{unit:?}");
        print!("{}", agreement_report(&data.pools, &data.step1, unit)?.to_table());
    }
    Ok(())
}
