//! Naive Bayes baseline and the random baseline.
//!
//!     cargo run --release --example naive_bayes

use replyscore::baseline::{build_vocab, evaluate_nb, random_baseline_f1, random_baseline_f1_mc, train_nb};
use replyscore::corpus::{binary_subset, stratified_split, ClassDistribution, Corpus, Split};
use replyscore::synthetic::{reference_shaped_corpus, reference_test_distribution};
use replyscore::Mode;

fn main() -> replyscore::Result<()> {
    let split = stratified_split(&Corpus::new(reference_shaped_corpus(5))?, 5)?;
    let (train, test) = (split.subset(Split::Train)?, split.subset(Split::Test)?);

    for mode in [Mode::FourClass, Mode::Binary] {
        let (tr, te) = match mode {
            Mode::FourClass => (train.clone(), test.clone()),
            Mode::Binary => (binary_subset(&train), binary_subset(&test)),
        };
        let vocab = build_vocab(&tr)?;
        let model = train_nb(&tr, &vocab, 1.0)?;
        let eval = evaluate_nb(&model, &te, mode, tr.len())?;
        let random = random_baseline_f1(&ClassDistribution::from_sentences(&te), mode)?;
        println!(
            "{mode}: naive Bayes {:.1}, random {:.1}, vocabulary {}",
            eval.macro_f1,
            random,
            vocab.len()
        );
        println!("  removed: {}", vocab.removed_top.join(" "));
    }

    let dist = reference_test_distribution();
    let closed = random_baseline_f1(&dist, Mode::FourClass)?;
    let mc = random_baseline_f1_mc(&dist, Mode::FourClass, 100_000, 1)?;
    println!(
        "\nrandom baseline on the reference test distribution: {closed:.2} (closed form), {:.2} [{:.2}, {:.2}] (Monte Carlo)",
        mc.mean, mc.ci95.0, mc.ci95.1
    );
    Ok(())
}
