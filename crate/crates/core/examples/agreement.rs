//! Annotator agreement: a six-rater fixture built to reach given kappa
//! values, and a model scored as if it were one more annotator.
//!
//!     cargo run --example agreement

use std::collections::BTreeMap;

use replyscore::metrics::{cohens_kappa, kappa_matrix, model_as_rater, rater_rows_table};
use replyscore::synthetic::{controlled_disagreement, REFERENCE_KAPPA};
use replyscore::SentimentLabel;

fn main() -> replyscore::Result<()> {
    use SentimentLabel::*;
    println!(
        "kappa([pos,pos,neg,neut], [pos,neg,neg,neut]) = {:.4}\n",
        cohens_kappa(&[Pos, Pos, Neg, Neut], &[Pos, Neg, Neg, Neut])?
    );

    let raters = controlled_disagreement(&REFERENCE_KAPPA, 1);
    print!("{}", kappa_matrix(&raters)?.to_table());

    // A "model" that copies A1 and always says NEG where A2 labelled.
    let mut model = raters["A1"].clone();
    for id in raters["A2"].keys() {
        model.insert(id.clone(), Neg);
    }
    let annotators: BTreeMap<_, _> = ["A1", "A2", "A4"]
        .iter()
        .map(|a| (a.to_string(), raters[*a].clone()))
        .collect();
    let rows = model_as_rater(&[("copy-A1 (4)".to_string(), model)], &annotators)?;
    println!();
    print!("{}", rater_rows_table(&rows));
    Ok(())
}
