//! Generates a corpus with the reference class totals, splits it 50-50 per
//! class and optionally writes it as JSON lines with a split field.
//!
//!     cargo run --example split_corpus [-- out.jsonl [scale]]
//!
//! `scale` divides the class totals (e.g. 10 for a tenth-size corpus).

use replyscore::corpus::{
    class_distribution, corpus_to_jsonl, distribution_table, stratified_split, validate_split, ClassDistribution,
    Corpus, Split,
};
use replyscore::synthetic::{annotate, synthetic_corpus, REFERENCE_TOTALS};

fn main() -> replyscore::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next();
    let scale: usize = args
        .next()
        .map(|s| s.parse().expect("scale is an integer"))
        .unwrap_or(1);
    let [p, n, u, m] = REFERENCE_TOTALS.map(|c| c / scale);
    let mut sentences = synthetic_corpus(&ClassDistribution::from_counts(p, n, u, m), 2024);
    annotate(
        &mut sentences,
        &["A1", "A2", "A3", "A4", "A5", "A6", "A7"],
        0.3,
        0.05,
        2024,
    );

    let split = stratified_split(&Corpus::new(sentences)?, 2024)?;
    validate_split(&split, 1)?;
    let table = distribution_table(
        &class_distribution(&split, Some(Split::Train))?,
        &class_distribution(&split, Some(Split::Test))?,
    );
    print!("{table}");
    if let Some(path) = out {
        std::fs::write(&path, corpus_to_jsonl(&split)?).expect("writable output path");
        println!("wrote {} sentences to {path}", split.len());
    }
    Ok(())
}
