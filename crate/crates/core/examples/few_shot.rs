//! Four-shot contexts from the training split and a multi-seed run.
//!
//!     cargo run --release --example few_shot

use replyscore::corpus::{stratified_split, ClassDistribution, Corpus, Split};
use replyscore::fewshot::{build_context, run_fewshot, sample_examples, FewShotConfig};
use replyscore::promptgrid::{expand_grid, filter_specs, GridConfig};
use replyscore::scoring::{HashNoiseBackend, LikelihoodMethod};
use replyscore::synthetic::synthetic_corpus;
use replyscore::Mode;

fn main() -> replyscore::Result<()> {
    let corpus = Corpus::new(synthetic_corpus(&ClassDistribution::from_counts(60, 70, 20, 10), 3))?;
    let split = stratified_split(&corpus, 3)?;
    let (train, test) = (split.subset(Split::Train)?, split.subset(Split::Test)?);
    let specs = filter_specs(
        &expand_grid(&GridConfig::default_grid())?,
        &["7-2-2".into(), "9-1-4".into()],
    )?;

    let examples = sample_examples(&train, 42, 0, &specs[0])?;
    let context = build_context(&examples, &specs[0], &test[0].text)?;
    println!(
        "context for {} under {} (sha256 {}):\n{}\n",
        test[0].id,
        specs[0].code,
        &context.hash()[..16],
        context.serialize()
    );

    let config = FewShotConfig {
        runs: 5,
        base_seed: 42,
        jobs: 4,
        ..FewShotConfig::default()
    };
    let out = run_fewshot(
        &test,
        &train,
        &specs,
        &LikelihoodMethod::ALL,
        &HashNoiseBackend::new(1),
        Mode::FourClass,
        &config,
    )?;
    print!("{}", out.report.to_table());
    let first = out.manifests[0]
        .entries
        .values()
        .next()
        .expect("one entry per test sentence");
    println!("run 0 examples for the first sentence: {:?}", first.example_ids);
    Ok(())
}
