//! The experiment stages behind the `replyscore` binary: split, gen-prompts,
//! zeroshot, fewshot, baseline, iaa and report.
//!
//! Settings come from command-line flags, an optional TOML file and the
//! environment, in that order of precedence.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::baseline::{
    build_vocab, evaluate_nb, random_baseline_f1, random_baseline_f1_mc, train_nb, MonteCarloEstimate, NbEvaluation,
};
use crate::corpus::{
    binary_subset, class_distribution, corpus_to_jsonl, distribution_table, load_corpus, stratified_split, to_jsonl,
    validate_split, ClassDistribution, LabeledSentence, Split,
};
use crate::error::{Error, Result};
use crate::fewshot::{run_fewshot, FewShotConfig, FewShotReport};
use crate::label::{Mode, SentimentLabel};
use crate::metrics::{annotator_views, kappa_matrix, model_as_rater, rater_rows_table, KappaMatrix, RaterRow};
use crate::promptgrid::{expand_grid, filter_specs, prompt_manifest, GridConfig, PromptSpec, ReplyForm};
use crate::remote::{RemoteBackend, RemoteOptions, BACKEND_URL_ENV};
use crate::report::{read_json, write_json, write_text, RunMetadata};
use crate::scoring::{
    evaluate_run, CachedBackend, ConstantBackend, HashNoiseBackend, LikelihoodMethod, OracleBackend, Prediction,
    RunReport, ScorerBackend, ScoringOptions,
};

/// Optional settings as given on the command line or in a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub corpus: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub backend: Option<String>,
    pub methods: Option<Vec<String>>,
    pub mode: Option<String>,
    pub prompts: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub context_suffix: Option<String>,
    pub reply_form: Option<ReplyForm>,
    pub smoothing: Option<f64>,
}

macro_rules! prefer {
    ($hi:expr, $lo:expr, $($field:ident),*) => {
        Settings { $($field: $hi.$field.or($lo.$field),)* }
    };
}

impl Settings {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        prefer!(
            self,
            lower,
            corpus,
            train,
            test,
            grid,
            backend,
            methods,
            mode,
            prompts,
            seed,
            runs,
            cache_dir,
            out_dir,
            jobs,
            timeout_secs,
            retries,
            context_suffix,
            reply_form,
            smoothing
        )
    }

    /// Settings taken from the environment.
    pub fn from_env() -> Settings {
        Settings {
            backend: std::env::var(BACKEND_URL_ENV).ok().filter(|s| !s.is_empty()),
            ..Settings::default()
        }
    }

    /// Flags, then the config file (if any), then the environment.
    pub fn layered(flags: Settings, config_file: Option<&Path>) -> Result<Settings> {
        let file = match config_file {
            Some(p) => Settings::from_toml_file(p)?,
            None => Settings::default(),
        };
        Ok(flags.over(file).over(Settings::from_env()))
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let methods = match self.methods {
            None => LikelihoodMethod::ALL.to_vec(),
            Some(list) => {
                let parsed = list
                    .iter()
                    .map(|m| m.parse())
                    .collect::<Result<Vec<LikelihoodMethod>>>()?;
                if parsed.is_empty() {
                    return Err(Error::Config("empty method list".to_string()));
                }
                parsed
            }
        };
        let modes = parse_modes(self.mode.as_deref().unwrap_or("four_class"))?;
        for path in [&self.corpus, &self.train, &self.test, &self.grid]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        Ok(RunConfig {
            corpus: self.corpus,
            train: self.train,
            test: self.test,
            grid: self.grid,
            backend: self.backend.unwrap_or_else(|| "mock:oracle".to_string()),
            methods,
            modes,
            prompts: self.prompts.unwrap_or_default(),
            seed: self.seed.unwrap_or(0),
            runs: self.runs.unwrap_or(5),
            cache_dir: self.cache_dir,
            out_dir: self.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            jobs: self.jobs.unwrap_or(1).max(1),
            timeout_secs: self.timeout_secs.unwrap_or(60),
            retries: self.retries.unwrap_or(2),
            context_suffix: self.context_suffix.unwrap_or_default(),
            reply_form: self.reply_form.unwrap_or(ReplyForm::Bare),
            smoothing: self.smoothing.unwrap_or(1.0),
        })
    }
}

/// `four_class`, `binary` or `both`.
pub fn parse_modes(s: &str) -> Result<Vec<Mode>> {
    match s {
        "both" => Ok(vec![Mode::FourClass, Mode::Binary]),
        other => Ok(vec![other
            .parse()
            .map_err(|_| Error::Config(format!("unknown mode {other:?}")))?]),
    }
}

/// Fully resolved settings; serialized into the run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub backend: String,
    pub methods: Vec<LikelihoodMethod>,
    pub modes: Vec<Mode>,
    pub prompts: Vec<String>,
    pub seed: u64,
    pub runs: usize,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub timeout_secs: u64,
    pub retries: u32,
    pub context_suffix: String,
    pub reply_form: ReplyForm,
    pub smoothing: f64,
}

/// What a command produced, for the caller to print.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub cache_hits: Option<u64>,
    pub cache_misses: Option<u64>,
}

/// Loads the grid (default when no path is given) and applies the prompt filter.
pub fn load_specs(grid: Option<&Path>, prompts: &[String]) -> Result<Vec<PromptSpec>> {
    let config = match grid {
        Some(p) => GridConfig::load(p)?,
        None => GridConfig::default_grid(),
    };
    filter_specs(&expand_grid(&config)?, prompts)
}

fn load_sentences(path: &Path) -> Result<Vec<LabeledSentence>> {
    Ok(load_corpus(path)?.sentences)
}

/// TRAIN and TEST from `--train`/`--test`, or from the split field of `--corpus`.
pub fn load_splits(cfg: &RunConfig) -> Result<(Option<Vec<LabeledSentence>>, Vec<LabeledSentence>)> {
    let from_corpus = match &cfg.corpus {
        Some(path) => {
            let corpus = load_corpus(path)?;
            if corpus.split_assignment.is_none() {
                return Err(Error::Config(format!(
                    "{} has no split field; run `split` first or pass --train/--test",
                    path.display()
                )));
            }
            Some((corpus.subset(Split::Train)?, corpus.subset(Split::Test)?))
        }
        None => None,
    };
    let train = match &cfg.train {
        Some(p) => Some(load_sentences(p)?),
        None => from_corpus.as_ref().map(|(t, _)| t.clone()),
    };
    let test = match (&cfg.test, from_corpus) {
        (Some(p), _) => load_sentences(p)?,
        (None, Some((_, t))) => t,
        (None, None) => return Err(Error::Config("no test data: pass --test or --corpus".to_string())),
    };
    Ok((train, test))
}

/// A backend plus its cache, if one is in front.
pub struct BackendHandle {
    pub backend: Arc<dyn ScorerBackend>,
    pub cache: Option<Arc<CachedBackend>>,
}

impl BackendHandle {
    pub fn id(&self) -> String {
        self.backend.id().to_string()
    }

    fn stats(&self, outcome: &mut Outcome) -> Result<()> {
        if let Some(c) = &self.cache {
            c.flush()?;
            outcome.cache_hits = Some(c.hits());
            outcome.cache_misses = Some(c.misses());
        }
        Ok(())
    }
}

/// Builds the backend named by `spec`:
///
/// * `mock:oracle` answers with the gold class of `known` sentences,
/// * `mock:noise[:SEED]` returns hash-derived logprobs,
/// * `mock:constant:LABEL` always prefers one class,
/// * `replay:BACKEND_ID` serves only responses recorded in the cache directory,
/// * `http://…` / `https://…` talks to a `/v1/score` server.
///
/// With a cache directory every backend except `replay` is wrapped in a cache.
pub fn build_backend(cfg: &RunConfig, known: &[&[LabeledSentence]], specs: &[PromptSpec]) -> Result<BackendHandle> {
    let replies = specs.iter().flat_map(|s| s.replies.iter());
    let spec = cfg.backend.as_str();
    let inner: Arc<dyn ScorerBackend> = if spec == "mock:oracle" {
        Arc::new(OracleBackend::new(known.iter().flat_map(|s| s.iter()), replies))
    } else if let Some(rest) = spec.strip_prefix("mock:noise") {
        let seed = match rest.strip_prefix(':') {
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("bad noise seed in {spec:?}")))?,
            None if rest.is_empty() => 0,
            None => return Err(Error::Config(format!("unknown backend {spec:?}"))),
        };
        Arc::new(HashNoiseBackend::new(seed))
    } else if let Some(label) = spec.strip_prefix("mock:constant:") {
        let label: SentimentLabel = label
            .parse()
            .map_err(|_| Error::Config(format!("bad label in {spec:?}")))?;
        Arc::new(ConstantBackend::new(label, replies))
    } else if let Some(id) = spec.strip_prefix("replay:") {
        let dir = cfg
            .cache_dir
            .as_ref()
            .ok_or_else(|| Error::Config("replay needs --cache-dir".to_string()))?;
        let cache = Arc::new(CachedBackend::replay(dir, id)?);
        return Ok(BackendHandle {
            backend: cache.clone(),
            cache: Some(cache),
        });
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        Arc::new(RemoteBackend::new(
            spec,
            RemoteOptions {
                timeout: Duration::from_secs(cfg.timeout_secs),
                retries: cfg.retries,
                batch: true,
            },
        )?)
    } else {
        return Err(Error::Config(format!("unknown backend {spec:?}")));
    };
    match &cfg.cache_dir {
        Some(dir) => {
            let cache = Arc::new(CachedBackend::open(dir, inner)?);
            Ok(BackendHandle {
                backend: cache.clone(),
                cache: Some(cache),
            })
        }
        None => Ok(BackendHandle {
            backend: inner,
            cache: None,
        }),
    }
}

fn predictions_jsonl(predictions: &[Prediction]) -> Result<String> {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads a predictions file written by `zeroshot` or `fewshot`.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn mode_data(mode: Mode, sentences: &[LabeledSentence]) -> Vec<LabeledSentence> {
    match mode {
        Mode::FourClass => sentences.to_vec(),
        Mode::Binary => binary_subset(sentences),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: ClassDistribution,
    pub test: ClassDistribution,
}

/// Stratified 50-50 split into `train.jsonl`, `test.jsonl`, `corpus.jsonl`
/// (with split fields) and a distribution table.
pub fn cmd_split(corpus_path: &Path, seed: u64, out_dir: &Path) -> Result<Outcome> {
    let corpus = load_corpus(corpus_path)?;
    let split = stratified_split(&corpus, seed)?;
    validate_split(&split, 1)?;
    let summary = SplitSummary {
        train: class_distribution(&split, Some(Split::Train))?,
        test: class_distribution(&split, Some(Split::Test))?,
    };
    let table = distribution_table(&summary.train, &summary.test);
    let files = vec![
        out_dir.join("train.jsonl"),
        out_dir.join("test.jsonl"),
        out_dir.join("corpus.jsonl"),
        out_dir.join("distribution.json"),
        out_dir.join("distribution.txt"),
    ];
    write_text(&files[0], &to_jsonl(&split.subset(Split::Train)?)?)?;
    write_text(&files[1], &to_jsonl(&split.subset(Split::Test)?)?)?;
    write_text(&files[2], &corpus_to_jsonl(&split)?)?;
    write_json(&files[3], &summary)?;
    write_text(&files[4], &table)?;
    #[derive(Serialize)]
    struct SplitConfig<'a> {
        corpus: &'a Path,
        seed: u64,
    }
    RunMetadata::new(
        "split",
        &SplitConfig {
            corpus: corpus_path,
            seed,
        },
        vec![seed],
        None,
    )?
    .write(out_dir)?;
    Ok(Outcome {
        summary: table,
        files,
        ..Outcome::default()
    })
}

/// Dumps every rendered prompt and its replies before any model call.
pub fn cmd_gen_prompts(grid: Option<&Path>, prompts: &[String], out_dir: &Path) -> Result<Outcome> {
    let specs = load_specs(grid, prompts)?;
    let manifest = prompt_manifest(&specs);
    let mut text = String::new();
    for spec in &specs {
        text.push_str(&format!("[{}]\n{}\n", spec.code, spec.rendered_template()));
        for r in &spec.replies {
            text.push_str(&format!("  {:<4} {}\n", r.label.to_string(), r.text));
        }
        text.push('\n');
    }
    let files = vec![out_dir.join("prompts.json"), out_dir.join("prompts.txt")];
    write_json(&files[0], &manifest)?;
    write_text(&files[1], &text)?;
    let distinct: std::collections::BTreeSet<&str> = specs
        .iter()
        .flat_map(|s| s.replies.iter().map(|r| r.text.as_str()))
        .collect();
    Ok(Outcome {
        summary: format!("{} prompts, {} distinct replies\n", specs.len(), distinct.len()),
        files,
        ..Outcome::default()
    })
}

/// Zero-shot runs over the configured grid, one report per mode.
pub fn cmd_zeroshot(cfg: &RunConfig) -> Result<Outcome> {
    let specs = load_specs(cfg.grid.as_deref(), &cfg.prompts)?;
    let (_, test) = load_splits(cfg)?;
    let handle = build_backend(cfg, &[&test], &specs)?;
    let options = ScoringOptions {
        context_suffix: cfg.context_suffix.clone(),
        jobs: cfg.jobs,
    };
    let mut outcome = Outcome::default();
    for &mode in &cfg.modes {
        let data = mode_data(mode, &test);
        let run = evaluate_run(&data, &specs, &cfg.methods, handle.backend.as_ref(), mode, &options)?;
        let stem = format!("zeroshot_{mode}");
        let files = [
            cfg.out_dir.join(format!("{stem}.json")),
            cfg.out_dir.join(format!("{stem}.txt")),
            cfg.out_dir.join(format!("predictions_{mode}.jsonl")),
        ];
        let table = run.report.to_table();
        write_json(&files[0], &run.report)?;
        write_text(&files[1], &table)?;
        write_text(&files[2], &predictions_jsonl(&run.predictions)?)?;
        outcome.summary.push_str(&table);
        outcome.files.extend(files);
    }
    RunMetadata::new("zeroshot", cfg, vec![], Some(handle.id()))?.write(&cfg.out_dir)?;
    handle.stats(&mut outcome)?;
    Ok(outcome)
}

/// Multi-seed few-shot runs, with per-run audit manifests.
pub fn cmd_fewshot(cfg: &RunConfig) -> Result<Outcome> {
    let specs = load_specs(cfg.grid.as_deref(), &cfg.prompts)?;
    let (train, test) = load_splits(cfg)?;
    let train = train.ok_or_else(|| Error::Config("few-shot needs training data: --train or --corpus".to_string()))?;
    let handle = build_backend(cfg, &[&test, &train], &specs)?;
    let config = FewShotConfig {
        runs: cfg.runs,
        base_seed: cfg.seed,
        reply_form: cfg.reply_form,
        context_suffix: cfg.context_suffix.clone(),
        jobs: cfg.jobs,
    };
    let mut outcome = Outcome::default();
    for &mode in &cfg.modes {
        let data = mode_data(mode, &test);
        let out = run_fewshot(
            &data,
            &train,
            &specs,
            &cfg.methods,
            handle.backend.as_ref(),
            mode,
            &config,
        )?;
        let stem = format!("fewshot_{mode}");
        let table = out.report.to_table();
        let mut files = vec![
            cfg.out_dir.join(format!("{stem}.json")),
            cfg.out_dir.join(format!("{stem}.txt")),
        ];
        write_json(&files[0], &out.report)?;
        write_text(&files[1], &table)?;
        for (manifest, predictions) in out.manifests.iter().zip(&out.predictions) {
            let m = cfg
                .out_dir
                .join("manifests")
                .join(format!("{stem}_run{}.json", manifest.run));
            write_json(&m, manifest)?;
            let p = cfg
                .out_dir
                .join(format!("predictions_{mode}_run{}.jsonl", manifest.run));
            write_text(&p, &predictions_jsonl(predictions)?)?;
            files.push(m);
            files.push(p);
        }
        outcome.summary.push_str(&table);
        outcome.files.extend(files);
    }
    let seeds = (0..cfg.runs as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    RunMetadata::new("fewshot", cfg, seeds, Some(handle.id()))?.write(&cfg.out_dir)?;
    handle.stats(&mut outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModeReport {
    pub mode: Mode,
    pub vocabulary_size: usize,
    pub removed_top: Vec<String>,
    pub naive_bayes: NbEvaluation,
    pub test_distribution: ClassDistribution,
    pub random_f1: f64,
    pub random_f1_monte_carlo: MonteCarloEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub smoothing: f64,
    pub event_model: String,
    pub modes: Vec<BaselineModeReport>,
}

impl BaselineReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for m in &self.modes {
            out.push_str(&format!(
                "{}: naive Bayes macro-F1 {:.1} (accuracy {:.1}, vocabulary {})\n",
                m.mode, m.naive_bayes.macro_f1, m.naive_bayes.accuracy, m.vocabulary_size
            ));
            let mc = &m.random_f1_monte_carlo;
            out.push_str(&format!(
                "{}: random baseline macro-F1 {:.1} (Monte Carlo {:.2}, 95% CI {:.2}-{:.2}, {} draws)\n",
                m.mode, m.random_f1, mc.mean, mc.ci95.0, mc.ci95.1, mc.draws
            ));
        }
        out
    }
}

pub const MONTE_CARLO_DRAWS: usize = 100_000;

/// Naive Bayes trained on TRAIN and scored on TEST, with the random baseline
/// of the TEST distribution, for each mode.
pub fn cmd_baseline(cfg: &RunConfig) -> Result<Outcome> {
    let (train, test) = load_splits(cfg)?;
    let train = train.ok_or_else(|| Error::Config("baseline needs training data: --train or --corpus".to_string()))?;
    if train.is_empty() {
        return Err(Error::Precondition("training set is empty".to_string()));
    }
    let mut modes = Vec::new();
    let mut files = Vec::new();
    for &mode in &cfg.modes {
        let tr = mode_data(mode, &train);
        let te = mode_data(mode, &test);
        if tr.is_empty() {
            return Err(Error::Precondition(format!("training set has no {mode} sentences")));
        }
        let vocab = build_vocab(&tr)?;
        let model = train_nb(&tr, &vocab, cfg.smoothing)?;
        let path = cfg.out_dir.join(format!("nb_model_{mode}.json"));
        model.save(&path)?;
        files.push(path);
        let dist = ClassDistribution::from_sentences(&te);
        modes.push(BaselineModeReport {
            mode,
            vocabulary_size: vocab.len(),
            removed_top: vocab.removed_top.clone(),
            naive_bayes: evaluate_nb(&model, &te, mode, tr.len())?,
            random_f1: random_baseline_f1(&dist, mode)?,
            random_f1_monte_carlo: random_baseline_f1_mc(&dist, mode, MONTE_CARLO_DRAWS, cfg.seed)?,
            test_distribution: dist,
        });
    }
    let report = BaselineReport {
        smoothing: cfg.smoothing,
        event_model: "multinomial".to_string(),
        modes,
    };
    let table = report.to_table();
    let json = cfg.out_dir.join("baseline.json");
    let txt = cfg.out_dir.join("baseline.txt");
    write_json(&json, &report)?;
    write_text(&txt, &table)?;
    files.extend([json, txt]);
    RunMetadata::new("baseline", cfg, vec![cfg.seed], None)?.write(&cfg.out_dir)?;
    Ok(Outcome {
        summary: table,
        files,
        ..Outcome::default()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaConfig {
    /// Corpus carrying annotator labels.
    pub corpus: PathBuf,
    /// Prediction files; each (prompt, method) pair becomes one row.
    pub predictions: Vec<PathBuf>,
    /// Label set of the comparison: FOUR_CLASS uses every annotated item,
    /// BINARY only items the annotator labelled POS or NEG.
    pub label_set: Mode,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaReport {
    pub label_set: Mode,
    pub annotators: KappaMatrix,
    pub models: Vec<RaterRow>,
}

impl IaaReport {
    pub fn to_table(&self) -> String {
        let mut out = self.annotators.to_table();
        if !self.models.is_empty() {
            out.push('\n');
            out.push_str(&rater_rows_table(&self.models));
        }
        out
    }
}

/// Pairwise annotator kappa, plus one row per model configuration when
/// prediction files are given.
pub fn cmd_iaa(cfg: &IaaConfig) -> Result<Outcome> {
    let corpus = load_corpus(&cfg.corpus)?;
    let mut views = annotator_views(&corpus.sentences);
    if cfg.label_set == Mode::Binary {
        for items in views.values_mut() {
            items.retain(|_, l| l.is_polar());
        }
        views.retain(|_, items| !items.is_empty());
    }
    let annotators = kappa_matrix(&views)?;
    let suffix = match cfg.label_set {
        Mode::FourClass => "(4)",
        Mode::Binary => "(2)",
    };
    let ids: std::collections::HashSet<&str> = corpus.sentences.iter().map(|s| s.id.as_str()).collect();
    let mut configurations: BTreeMap<(String, LikelihoodMethod), BTreeMap<String, SentimentLabel>> = BTreeMap::new();
    for path in &cfg.predictions {
        for p in load_predictions(path)? {
            if !ids.contains(p.sentence_id.as_str()) {
                return Err(Error::Alignment(format!(
                    "{}: prediction for {:?}, which is not in {}",
                    path.display(),
                    p.sentence_id,
                    cfg.corpus.display()
                )));
            }
            configurations
                .entry((p.prompt_code, p.method))
                .or_default()
                .insert(p.sentence_id, p.label);
        }
    }
    let named: Vec<(String, BTreeMap<String, SentimentLabel>)> = configurations
        .into_iter()
        .map(|((code, method), preds)| (format!("{code} {method} {suffix}"), preds))
        .collect();
    let report = IaaReport {
        label_set: cfg.label_set,
        annotators,
        models: model_as_rater(&named, &views)?,
    };
    let table = report.to_table();
    let files = vec![cfg.out_dir.join("iaa.json"), cfg.out_dir.join("iaa.txt")];
    write_json(&files[0], &report)?;
    write_text(&files[1], &table)?;
    RunMetadata::new("iaa", cfg, vec![], None)?.write(&cfg.out_dir)?;
    Ok(Outcome {
        summary: table,
        files,
        ..Outcome::default()
    })
}

/// Re-renders the text tables of every report found in `dir` into
/// `summary.txt`.
pub fn cmd_report(dir: &Path) -> Result<Outcome> {
    let mut summary = String::new();
    let mut section = |title: String, body: String| {
        summary.push_str(&format!("== {title} ==\n{body}\n"));
    };
    if dir.join("distribution.json").exists() {
        let s: SplitSummary = read_json(dir.join("distribution.json"))?;
        section("class distribution".into(), distribution_table(&s.train, &s.test));
    }
    for mode in [Mode::FourClass, Mode::Binary] {
        let z = dir.join(format!("zeroshot_{mode}.json"));
        if z.exists() {
            let r: RunReport = read_json(&z)?;
            section(format!("zero-shot {mode}"), r.to_table());
        }
        let f = dir.join(format!("fewshot_{mode}.json"));
        if f.exists() {
            let r: FewShotReport = read_json(&f)?;
            section(format!("few-shot {mode}"), r.to_table());
        }
    }
    if dir.join("baseline.json").exists() {
        let r: BaselineReport = read_json(dir.join("baseline.json"))?;
        section("baselines".into(), r.to_table());
    }
    if dir.join("iaa.json").exists() {
        let r: IaaReport = read_json(dir.join("iaa.json"))?;
        section("agreement".into(), r.to_table());
    }
    if summary.is_empty() {
        return Err(Error::Config(format!("no reports found in {}", dir.display())));
    }
    let path = dir.join("summary.txt");
    write_text(&path, &summary)?;
    Ok(Outcome {
        summary,
        files: vec![path],
        ..Outcome::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_env() {
        let flags = Settings {
            seed: Some(1),
            ..Default::default()
        };
        let file = Settings {
            seed: Some(2),
            runs: Some(3),
            backend: Some("mock:noise".into()),
            ..Default::default()
        };
        let env = Settings {
            backend: Some("http://env".into()),
            jobs: Some(4),
            ..Default::default()
        };
        let s = flags.over(file).over(env);
        assert_eq!(s.seed, Some(1));
        assert_eq!(s.runs, Some(3));
        assert_eq!(s.backend.as_deref(), Some("mock:noise"));
        assert_eq!(s.jobs, Some(4));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = toml::from_str::<Settings>("sed = 3").unwrap_err();
        assert!(err.to_string().contains("sed"));
    }

    #[test]
    fn missing_paths_are_config_errors() {
        let s = Settings {
            test: Some("/nonexistent/test.jsonl".into()),
            ..Default::default()
        };
        assert_eq!(s.resolve().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn modes_parse() {
        assert_eq!(parse_modes("both").unwrap().len(), 2);
        assert_eq!(parse_modes("binary").unwrap(), vec![Mode::Binary]);
        assert!(parse_modes("three").is_err());
    }
}
