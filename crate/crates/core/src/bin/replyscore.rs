use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use replyscore::commands::{self, IaaConfig, Outcome, RunConfig, Settings};
use replyscore::label::Mode;
use replyscore::promptgrid::ReplyForm;
use replyscore::{Error, Result};

#[derive(Parser)]
#[command(
    name = "replyscore",
    version,
    about = "Prompt-grid sentiment classification by reply likelihood"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stratified 50-50 train/test split of a JSONL corpus.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write every rendered prompt and its replies for review.
    GenPrompts {
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        prompts: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Zero-shot classification over the prompt grid.
    Zeroshot(RunArgs),
    /// Four-shot classification averaged over several seeds.
    Fewshot(RunArgs),
    /// Naive Bayes and random baselines.
    Baseline(RunArgs),
    /// Cohen's kappa between annotators, and between models and annotators.
    Iaa {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: Vec<PathBuf>,
        /// 4 (all classes) or 2 (POS/NEG items only).
        #[arg(long, default_value = "4")]
        label_set: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Collect the text tables of all reports in a directory.
    Report {
        #[arg(long, default_value = "out")]
        dir: PathBuf,
    },
    /// Serve a mock backend over the /v1/score protocol.
    Serve {
        #[arg(long, default_value = "mock:noise")]
        backend: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Corpus whose gold labels the mock oracle knows.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with the same keys as the long flags (snake_case).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus with a split field, as written by `split`.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    grid: Option<PathBuf>,
    /// mock:oracle, mock:noise[:SEED], mock:constant:LABEL, replay:ID or an
    /// http(s) URL. Defaults to $REPLYSCORE_BACKEND_URL, then mock:oracle.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// four_class, binary or both.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, value_delimiter = ',')]
    prompts: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent sentences (and backend requests).
    #[arg(long)]
    jobs: Option<usize>,
    /// Request timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long)]
    context_suffix: Option<String>,
    /// noun, pronoun, bare or opinion.
    #[arg(long)]
    reply_form: Option<String>,
    #[arg(long)]
    smoothing: Option<f64>,
}

fn parse_reply_form(s: &str) -> Result<ReplyForm> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Config(format!("unknown reply form {s:?}")))
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let flags = Settings {
            corpus: self.corpus,
            train: self.train,
            test: self.test,
            grid: self.grid,
            backend: self.backend,
            methods: self.methods,
            mode: self.mode,
            prompts: self.prompts,
            seed: self.seed,
            runs: self.runs,
            cache_dir: self.cache_dir,
            out_dir: self.out,
            jobs: self.jobs,
            timeout_secs: self.timeout,
            retries: self.retries,
            context_suffix: self.context_suffix,
            reply_form: self.reply_form.as_deref().map(parse_reply_form).transpose()?,
            smoothing: self.smoothing,
        };
        Settings::layered(flags, self.config.as_deref())?.resolve()
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Split { corpus, seed, out } => commands::cmd_split(&corpus, seed, &out),
        Command::GenPrompts { grid, prompts, out } => commands::cmd_gen_prompts(grid.as_deref(), &prompts, &out),
        Command::Zeroshot(args) => commands::cmd_zeroshot(&args.resolve()?),
        Command::Fewshot(args) => commands::cmd_fewshot(&args.resolve()?),
        Command::Baseline(args) => commands::cmd_baseline(&args.resolve()?),
        Command::Iaa {
            corpus,
            predictions,
            label_set,
            out,
        } => {
            let label_set: Mode = label_set
                .parse()
                .map_err(|_| Error::Config(format!("label set must be 4 or 2, got {label_set:?}")))?;
            commands::cmd_iaa(&IaaConfig {
                corpus,
                predictions,
                label_set,
                out_dir: out,
            })
        }
        Command::Report { dir } => commands::cmd_report(&dir),
        Command::Serve {
            backend,
            addr,
            corpus,
            workers,
        } => {
            let known = match &corpus {
                Some(p) => replyscore::corpus::load_corpus(p)?.sentences,
                None => Vec::new(),
            };
            let cfg = Settings {
                backend: Some(backend),
                ..Settings::default()
            }
            .resolve()?;
            let specs = commands::load_specs(None, &[])?;
            let handle = commands::build_backend(&cfg, &[&known], &specs)?;
            let server = replyscore::remote::serve(Arc::clone(&handle.backend), &addr, workers)?;
            eprintln!("serving {} on {}", handle.id(), server.url());
            server.join();
            Ok(Outcome::default())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if let (Some(h), Some(m)) = (outcome.cache_hits, outcome.cache_misses) {
                eprintln!("cache: {h} hits, {m} backend calls");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
