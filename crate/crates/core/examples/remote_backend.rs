//! The HTTP logprob protocol end to end: a local server wrapping a mock
//! backend, a cached client run, and an offline replay of the cache.
//!
//!     cargo run --example remote_backend
//!
//! Set REPLYSCORE_BACKEND_URL to score against a real server instead.

use std::sync::Arc;
use std::time::Duration;

use replyscore::corpus::ClassDistribution;
use replyscore::promptgrid::{expand_grid, filter_specs, GridConfig};
use replyscore::remote::{serve, RemoteBackend, RemoteOptions, BACKEND_URL_ENV};
use replyscore::scoring::{
    evaluate_run, CachedBackend, HashNoiseBackend, LikelihoodMethod, ScorerBackend, ScoringOptions,
};
use replyscore::synthetic::synthetic_corpus;
use replyscore::Mode;

fn main() -> replyscore::Result<()> {
    let test = synthetic_corpus(&ClassDistribution::from_counts(3, 3, 2, 2), 9);
    let specs = filter_specs(
        &expand_grid(&GridConfig::default_grid())?,
        &["7-2-2".into(), "9-1-4".into()],
    )?;
    let options = RemoteOptions {
        timeout: Duration::from_secs(10),
        retries: 1,
        batch: true,
    };

    let local = match std::env::var(BACKEND_URL_ENV) {
        Ok(_) => None,
        Err(_) => Some(serve(Arc::new(HashNoiseBackend::new(3)), "127.0.0.1:0", 2)?),
    };
    let client: Arc<dyn ScorerBackend> = match &local {
        Some(server) => Arc::new(RemoteBackend::new(&server.url(), options)?),
        None => Arc::new(RemoteBackend::from_env(options)?),
    };
    let backend_id = client.id().to_string();
    println!("scoring against {backend_id}");

    let cache_dir = std::env::temp_dir().join("replyscore-remote-example");
    let _ = std::fs::remove_dir_all(&cache_dir);
    let cache = CachedBackend::open(&cache_dir, client)?;
    let online = evaluate_run(
        &test,
        &specs,
        &LikelihoodMethod::ALL,
        &cache,
        Mode::FourClass,
        &ScoringOptions::default(),
    )?;
    cache.flush()?;
    println!(
        "online: {} responses fetched into {}",
        cache.misses(),
        cache.path().display()
    );
    drop(cache);
    drop(local);

    let replay = CachedBackend::replay(&cache_dir, &backend_id)?;
    let offline = evaluate_run(
        &test,
        &specs,
        &LikelihoodMethod::ALL,
        &replay,
        Mode::FourClass,
        &ScoringOptions::default(),
    )?;
    println!("offline replay identical: {}", online == offline);
    print!("{}", offline.report.to_table());
    Ok(())
}
