//! Four-shot contexts drawn from the training split and multi-seed runs.
//!
//! For every test sentence one training sentence per class is sampled from a
//! ChaCha stream keyed by `(seed, sentence_index)`. The demonstrations are
//! rendered with the same prompt as the target and answered with the gold
//! class reply, so a serialized context looks like
//!
//! ```text
//! <query POS>\n<reply POS>\n<query NEG>\n<reply NEG>\n...\n<target query>
//! ```

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::LabeledSentence;
use crate::error::{Error, Result};
use crate::label::{Mode, SentimentLabel};
use crate::promptgrid::{render, PromptSpec, ReplyForm};
use crate::scoring::{
    aggregate, best_cell, check_mode, classify_context, mode_filter, with_jobs, BestCell, Cell, LikelihoodMethod,
    Prediction, RunReport, ScorerBackend,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub sentence_id: String,
    pub query: String,
    pub response: String,
    pub label: SentimentLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotContext {
    pub examples: Vec<FewShotExample>,
    pub target_query: String,
}

impl FewShotContext {
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            out.push_str(&ex.query);
            out.push('\n');
            out.push_str(&ex.response);
            out.push('\n');
        }
        out.push_str(&self.target_query);
        out
    }

    pub fn hash(&self) -> String {
        context_hash(&self.serialize())
    }
}

pub fn context_hash(context: &str) -> String {
    hex::encode(Sha256::digest(context.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotConfig {
    pub runs: usize,
    pub base_seed: u64,
    /// Reply form used for the demonstration answers.
    pub reply_form: ReplyForm,
    pub context_suffix: String,
    pub jobs: usize,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig {
            runs: 5,
            base_seed: 0,
            reply_form: ReplyForm::Bare,
            context_suffix: String::new(),
            jobs: 1,
        }
    }
}

/// Training sentences grouped by class, canonical class order.
struct Pools<'a> {
    by_class: [Vec<&'a LabeledSentence>; 4],
}

impl<'a> Pools<'a> {
    fn new(train: &'a [LabeledSentence]) -> Result<Self> {
        let mut by_class: [Vec<&LabeledSentence>; 4] = Default::default();
        for s in train {
            by_class[s.gold.index()].push(s);
        }
        for label in SentimentLabel::ALL {
            if by_class[label.index()].is_empty() {
                return Err(Error::MissingClass(label));
            }
        }
        Ok(Pools { by_class })
    }

    fn draw(&self, seed: u64, sentence_index: usize) -> [&'a LabeledSentence; 4] {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(sentence_index as u64);
        SentimentLabel::ALL.map(|label| {
            let pool = &self.by_class[label.index()];
            pool[rng.gen_range(0..pool.len())]
        })
    }
}

fn demonstration(sentence: &LabeledSentence, spec: &PromptSpec, form: ReplyForm) -> Result<FewShotExample> {
    let reply = spec
        .replies
        .iter()
        .find(|r| r.form == form && r.label == sentence.gold)
        .ok_or_else(|| {
            Error::Config(format!(
                "prompt {} has no {form:?} reply for {}",
                spec.code, sentence.gold
            ))
        })?;
    Ok(FewShotExample {
        sentence_id: sentence.id.clone(),
        query: render(spec, &sentence.text)?,
        response: reply.text.clone(),
        label: sentence.gold,
    })
}

/// One uniformly drawn training sentence per class, in order POS, NEG, NEUT,
/// MIX, answered with the bare reply of its class.
pub fn sample_examples(
    train: &[LabeledSentence],
    seed: u64,
    sentence_index: usize,
    spec: &PromptSpec,
) -> Result<Vec<FewShotExample>> {
    sample_examples_with(train, seed, sentence_index, spec, ReplyForm::Bare)
}

pub fn sample_examples_with(
    train: &[LabeledSentence],
    seed: u64,
    sentence_index: usize,
    spec: &PromptSpec,
    form: ReplyForm,
) -> Result<Vec<FewShotExample>> {
    let pools = Pools::new(train)?;
    pools
        .draw(seed, sentence_index)
        .iter()
        .map(|s| demonstration(s, spec, form))
        .collect()
}

pub fn build_context(examples: &[FewShotExample], spec: &PromptSpec, target_sentence: &str) -> Result<FewShotContext> {
    if examples.len() != 4 {
        return Err(Error::Precondition(format!(
            "a few-shot context needs 4 examples, got {}",
            examples.len()
        )));
    }
    let labels: HashSet<SentimentLabel> = examples.iter().map(|e| e.label).collect();
    if labels.len() != 4 {
        return Err(Error::Precondition(
            "few-shot examples must cover each class once".to_string(),
        ));
    }
    Ok(FewShotContext {
        examples: examples.to_vec(),
        target_query: render(spec, target_sentence)?,
    })
}

/// Per-run audit record: which training sentences served as examples for
/// each test sentence, and the hash of every serialized context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditManifest {
    pub run: usize,
    pub seed: u64,
    pub reply_form: ReplyForm,
    pub entries: BTreeMap<String, AuditEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub sentence_index: usize,
    pub example_ids: Vec<String>,
    /// Prompt code to context hash.
    pub context_hashes: BTreeMap<String, String>,
}

/// Rebuilds a serialized context from a manifest entry.
pub fn reconstruct_context(
    entry: &AuditEntry,
    form: ReplyForm,
    train: &[LabeledSentence],
    spec: &PromptSpec,
    target_sentence: &str,
) -> Result<String> {
    let examples = entry
        .example_ids
        .iter()
        .map(|id| {
            let s = train
                .iter()
                .find(|s| &s.id == id)
                .ok_or_else(|| Error::InvalidData(format!("example {id:?} is not in the training set")))?;
            demonstration(s, spec, form)
        })
        .collect::<Result<Vec<_>>>()?;
    let context = build_context(&examples, spec, target_sentence)?;
    let serialized = context.serialize();
    let code = spec.code.to_string();
    match entry.context_hashes.get(&code) {
        Some(h) if *h == context_hash(&serialized) => Ok(serialized),
        Some(_) => Err(Error::InvalidData(format!("context hash mismatch for prompt {code}"))),
        None => Err(Error::InvalidData(format!("manifest has no context for prompt {code}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotCell {
    pub prompt_code: String,
    pub method: LikelihoodMethod,
    pub f1_per_run: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotReport {
    pub mode: Mode,
    pub runs: usize,
    pub base_seed: u64,
    pub reply_form: ReplyForm,
    /// Always "population".
    pub std_kind: String,
    pub methods: Vec<LikelihoodMethod>,
    pub prompts: Vec<String>,
    pub cells: Vec<FewShotCell>,
    /// Highest mean macro-F1.
    pub best: BestCell,
}

impl FewShotReport {
    pub fn cell(&self, prompt_code: &str, method: LikelihoodMethod) -> Option<&FewShotCell> {
        self.cells
            .iter()
            .find(|c| c.prompt_code == prompt_code && c.method == method)
    }

    /// "mean ± std" per prompt and method.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<10}", "Prompt ID");
        for m in &self.methods {
            out.push_str(&format!("{:>14}", m.to_string()));
        }
        out.push('\n');
        for p in &self.prompts {
            out.push_str(&format!("{p:<10}"));
            for &m in &self.methods {
                match self.cell(p, m) {
                    Some(c) => out.push_str(&format!("{:>14}", format!("{:.1} ± {:.1}", c.mean, c.std))),
                    None => out.push_str(&format!("{:>14}", "-")),
                }
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "best ({}, {} runs, population std): {} {} mean macro-F1 {:.1}\n",
            self.mode, self.runs, self.best.prompt_code, self.best.method, self.best.macro_f1
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotOutput {
    pub report: FewShotReport,
    pub run_reports: Vec<RunReport>,
    pub manifests: Vec<AuditManifest>,
    /// Predictions of every run, run-major.
    pub predictions: Vec<Vec<Prediction>>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct Prepared {
    sentence: usize,
    spec: usize,
    context: String,
}

/// Runs `config.runs` few-shot evaluations; run `r` samples with seed
/// `base_seed + r`.
///
/// All contexts of a run are sampled sequentially before any scoring, so the
/// result does not depend on `jobs`.
pub fn run_fewshot(
    test: &[LabeledSentence],
    train: &[LabeledSentence],
    specs: &[PromptSpec],
    methods: &[LikelihoodMethod],
    backend: &dyn ScorerBackend,
    mode: Mode,
    config: &FewShotConfig,
) -> Result<FewShotOutput> {
    if config.runs == 0 {
        return Err(Error::Precondition("runs must be at least 1".to_string()));
    }
    if specs.is_empty() || methods.is_empty() {
        return Err(Error::Precondition(
            "need at least one prompt and one method".to_string(),
        ));
    }
    check_mode(test, mode)?;
    let train_ids: HashSet<&str> = train.iter().map(|s| s.id.as_str()).collect();
    if let Some(s) = test.iter().find(|s| train_ids.contains(s.id.as_str())) {
        return Err(Error::Precondition(format!(
            "test sentence {:?} is also in the training set",
            s.id
        )));
    }
    let pools = Pools::new(train)?;
    let filter = mode_filter(mode);
    let codes: Vec<String> = specs.iter().map(|s| s.code.to_string()).collect();

    let mut run_reports = Vec::with_capacity(config.runs);
    let mut manifests = Vec::with_capacity(config.runs);
    let mut all_predictions = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        let seed = config.base_seed.wrapping_add(run as u64);
        let mut prepared = Vec::with_capacity(test.len() * specs.len());
        let mut entries = BTreeMap::new();
        for (i, sentence) in test.iter().enumerate() {
            let drawn = pools.draw(seed, i);
            let mut hashes = BTreeMap::new();
            for (si, spec) in specs.iter().enumerate() {
                let examples = drawn
                    .iter()
                    .map(|s| demonstration(s, spec, config.reply_form))
                    .collect::<Result<Vec<_>>>()?;
                let context = build_context(&examples, spec, &sentence.text)?.serialize();
                hashes.insert(codes[si].clone(), context_hash(&context));
                prepared.push(Prepared {
                    sentence: i,
                    spec: si,
                    context: context + &config.context_suffix,
                });
            }
            entries.insert(
                sentence.id.clone(),
                AuditEntry {
                    sentence_index: i,
                    example_ids: drawn.iter().map(|s| s.id.clone()).collect(),
                    context_hashes: hashes,
                },
            );
        }
        let scored: Vec<Vec<Prediction>> = with_jobs(config.jobs, || {
            prepared
                .par_iter()
                .map(|p| {
                    classify_context(
                        &test[p.sentence].id,
                        &codes[p.spec],
                        &p.context,
                        &specs[p.spec].replies,
                        methods,
                        backend,
                        filter.as_ref(),
                    )
                })
                .collect::<Result<_>>()
        })?;
        let predictions: Vec<Prediction> = scored.into_iter().flatten().collect();
        run_reports.push(aggregate(mode, test, specs, methods, &predictions)?);
        all_predictions.push(predictions);
        manifests.push(AuditManifest {
            run,
            seed,
            reply_form: config.reply_form,
            entries,
        });
    }

    let mut cells = Vec::with_capacity(codes.len() * methods.len());
    let mut as_run_cells = Vec::with_capacity(cells.capacity());
    for code in &codes {
        for &method in methods {
            let f1_per_run: Vec<f64> = run_reports
                .iter()
                .map(|r| r.cell(code, method).map(|c| c.macro_f1).unwrap_or(f64::NAN))
                .collect();
            let (mean, std) = mean_std(&f1_per_run);
            as_run_cells.push(Cell {
                prompt_code: code.clone(),
                method,
                macro_f1: mean,
                accuracy: f64::NAN,
                confusion: crate::metrics::ConfusionMatrix::new(mode.labels()),
            });
            cells.push(FewShotCell {
                prompt_code: code.clone(),
                method,
                f1_per_run,
                mean,
                std,
            });
        }
    }
    let best = best_cell(&as_run_cells).expect("at least one cell");
    Ok(FewShotOutput {
        report: FewShotReport {
            mode,
            runs: config.runs,
            base_seed: config.base_seed,
            reply_form: config.reply_form,
            std_kind: "population".to_string(),
            methods: methods.to_vec(),
            prompts: codes,
            cells,
            best,
        },
        run_reports,
        manifests,
        predictions: all_predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptgrid::{expand_grid, GridConfig};

    fn spec() -> PromptSpec {
        expand_grid(&GridConfig::default_grid()).unwrap().remove(0)
    }

    fn one_per_class() -> Vec<LabeledSentence> {
        SentimentLabel::ALL
            .iter()
            .enumerate()
            .map(|(i, &l)| LabeledSentence::new(format!("t{i}"), format!("Setning {i} ."), l))
            .collect()
    }

    #[test]
    fn single_member_pools_are_forced() {
        let train = one_per_class();
        for seed in [0, 7, 99] {
            let ex = sample_examples(&train, seed, 3, &spec()).unwrap();
            let ids: Vec<&str> = ex.iter().map(|e| e.sentence_id.as_str()).collect();
            assert_eq!(ids, ["t0", "t1", "t2", "t3"]);
        }
    }

    #[test]
    fn missing_class_is_named() {
        let mut train = one_per_class();
        train.pop();
        assert!(matches!(
            sample_examples(&train, 0, 0, &spec()),
            Err(Error::MissingClass(SentimentLabel::Mix))
        ));
    }

    #[test]
    fn context_holds_four_responses_and_five_queries() {
        let s = spec();
        let ex = sample_examples(&one_per_class(), 1, 0, &s).unwrap();
        let ctx = build_context(&ex, &s, "Målet .").unwrap().serialize();
        assert_eq!(ctx.matches(&s.question).count(), 5);
        for e in &ex {
            assert!(ctx.contains(&format!("\n{}\n", e.response)));
        }
        assert!(ctx.ends_with(&render(&s, "Målet .").unwrap()));
    }

    #[test]
    fn empty_examples_are_rejected() {
        assert!(matches!(build_context(&[], &spec(), "x"), Err(Error::Precondition(_))));
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[80.0, 90.0]), (85.0, 5.0));
        assert_eq!(mean_std(&[42.0]), (42.0, 0.0));
    }
}
