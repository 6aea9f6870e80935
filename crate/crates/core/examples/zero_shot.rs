//! Zero-shot evaluation over the full grid with a response cache in front of
//! the backend. The second pass is served entirely from the cache.
//!
//!     cargo run --release --example zero_shot

use std::sync::Arc;

use replyscore::corpus::{binary_subset, ClassDistribution};
use replyscore::promptgrid::{expand_grid, GridConfig};
use replyscore::scoring::{
    evaluate_run, CachedBackend, CountingBackend, HashNoiseBackend, LikelihoodMethod, OracleBackend, ScoringOptions,
};
use replyscore::synthetic::synthetic_corpus;
use replyscore::Mode;

fn main() -> replyscore::Result<()> {
    let test = synthetic_corpus(&ClassDistribution::from_counts(40, 50, 14, 6), 1);
    let specs = expand_grid(&GridConfig::default_grid())?;
    let options = ScoringOptions {
        jobs: 4,
        ..ScoringOptions::default()
    };

    // Hash noise: every prompt is a coin toss, macro-F1 near chance.
    let noise = evaluate_run(
        &test,
        &specs,
        &LikelihoodMethod::ALL,
        &HashNoiseBackend::new(7),
        Mode::FourClass,
        &options,
    )?;
    println!(
        "noise backend, best cell: {} {} {:.1}",
        noise.report.best.prompt_code, noise.report.best.method, noise.report.best.macro_f1
    );

    // The oracle knows every gold label; wrap it in a counter and a cache.
    let cache_dir = std::env::temp_dir().join("replyscore-zero-shot-example");
    let _ = std::fs::remove_dir_all(&cache_dir);
    let oracle = Arc::new(CountingBackend::new(OracleBackend::new(
        &test,
        specs.iter().flat_map(|s| &s.replies),
    )));
    for pass in 1..=2 {
        let cache = CachedBackend::open(&cache_dir, oracle.clone())?;
        let run = evaluate_run(&test, &specs, &LikelihoodMethod::ALL, &cache, Mode::FourClass, &options)?;
        cache.flush()?;
        println!(
            "oracle pass {pass}: best {:.1}, {} cells, {} cache hits, {} backend calls so far",
            run.report.best.macro_f1,
            run.report.cells.len(),
            cache.hits(),
            oracle.calls()
        );
    }

    let binary = binary_subset(&test);
    let run = evaluate_run(
        &binary,
        &specs[..4],
        &LikelihoodMethod::ALL,
        &HashNoiseBackend::new(7),
        Mode::Binary,
        &options,
    )?;
    print!(
        "\nbinary mode, first four prompts, noise backend:\n{}",
        run.report.to_table()
    );
    Ok(())
}
