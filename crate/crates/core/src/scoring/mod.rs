//! Likelihood scoring of reply completions and argmax classification.
//!
//! A sentence is classified under a prompt by scoring every admissible reply
//! as a completion of the rendered prompt and picking the best-scoring reply
//! under one of three likelihood normalisations:
//!
//! * [`LikelihoodMethod::L1Sum`]: sum of token log-probabilities,
//! * [`LikelihoodMethod::L2PerToken`]: the sum divided by the token count,
//! * [`LikelihoodMethod::L3PerChar`]: the sum divided by the character count.

mod backend;
mod cache;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use backend::{
    BackendResult, ConstantBackend, CountingBackend, FnBackend, HashNoiseBackend, OracleBackend, ScorerBackend,
};
pub use cache::{cache_key, CachedBackend};

use crate::corpus::LabeledSentence;
use crate::error::{BackendError, Error, Result};
use crate::label::{Mode, SentimentLabel};
use crate::metrics::{accuracy, macro_f1, ConfusionMatrix};
use crate::promptgrid::{render, PromptSpec, ReplyCandidate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProb {
    pub token: String,
    pub logprob: f64,
}

impl TokenLogProb {
    pub fn new(token: impl Into<String>, logprob: f64) -> Self {
        TokenLogProb {
            token: token.into(),
            logprob,
        }
    }
}

/// Per-token log-probabilities of one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionScore {
    pub completion: String,
    pub tokens: Vec<TokenLogProb>,
}

impl CompletionScore {
    pub fn new(completion: impl Into<String>, tokens: Vec<TokenLogProb>) -> Result<Self, BackendError> {
        let completion = completion.into();
        if tokens.is_empty() {
            return Err(BackendError::new(format!("no tokens returned for {completion:?}")));
        }
        if let Some(t) = tokens.iter().find(|t| !t.logprob.is_finite()) {
            return Err(BackendError::new(format!(
                "non-finite logprob {} for token {:?}",
                t.logprob, t.token
            )));
        }
        if tokens.iter().any(|t| t.token.is_empty()) {
            return Err(BackendError::new("backend returned an empty token"));
        }
        if completion.trim_start().is_empty() {
            return Err(BackendError::new("completion is empty"));
        }
        Ok(CompletionScore { completion, tokens })
    }

    /// Token count as reported by the backend.
    pub fn n(&self) -> usize {
        self.tokens.len()
    }

    /// Unicode scalar values of the completion, not counting leading whitespace.
    pub fn n_char(&self) -> usize {
        self.completion.trim_start().chars().count()
    }
}

pub fn l1(score: &CompletionScore) -> f64 {
    score.tokens.iter().map(|t| t.logprob).sum()
}

pub fn l2(score: &CompletionScore) -> f64 {
    l1(score) / score.n() as f64
}

pub fn l3(score: &CompletionScore) -> f64 {
    l1(score) / score.n_char() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LikelihoodMethod {
    #[serde(rename = "l1")]
    L1Sum,
    #[serde(rename = "l2")]
    L2PerToken,
    #[serde(rename = "l3")]
    L3PerChar,
}

impl LikelihoodMethod {
    pub const ALL: [LikelihoodMethod; 3] = [Self::L1Sum, Self::L2PerToken, Self::L3PerChar];

    pub fn score(self, score: &CompletionScore) -> f64 {
        match self {
            Self::L1Sum => l1(score),
            Self::L2PerToken => l2(score),
            Self::L3PerChar => l3(score),
        }
    }
}

impl fmt::Display for LikelihoodMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L1Sum => "L1",
            Self::L2PerToken => "L2",
            Self::L3PerChar => "L3",
        })
    }
}

impl FromStr for LikelihoodMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Self::L1Sum),
            "l2" => Ok(Self::L2PerToken),
            "l3" => Ok(Self::L3PerChar),
            other => Err(Error::Config(format!("unknown likelihood method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyScore {
    pub reply: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sentence_id: String,
    pub prompt_code: String,
    pub method: LikelihoodMethod,
    pub chosen_reply: String,
    pub label: SentimentLabel,
    /// Scores of the surviving replies, in canonical reply order.
    pub scores: Vec<ReplyScore>,
}

/// Options shared by zero- and few-shot scoring.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringOptions {
    /// Appended to every context before scoring (e.g. a trailing newline).
    #[serde(default)]
    pub context_suffix: String,
    /// Upper bound on concurrently scored sentences; 0 or 1 is sequential.
    #[serde(default)]
    pub jobs: usize,
}

fn filter_replies<'a>(
    replies: &'a [ReplyCandidate],
    class_filter: Option<&BTreeSet<SentimentLabel>>,
) -> Result<Vec<&'a ReplyCandidate>> {
    let kept: Vec<&ReplyCandidate> = replies
        .iter()
        .filter(|r| class_filter.is_none_or(|f| f.contains(&r.label)))
        .collect();
    if kept.is_empty() {
        return Err(Error::Precondition("no reply survives the class filter".to_string()));
    }
    Ok(kept)
}

/// Scores each reply once as a completion of `context`.
pub fn score_replies(
    context: &str,
    replies: &[&ReplyCandidate],
    backend: &dyn ScorerBackend,
) -> Result<Vec<CompletionScore>> {
    let items: Vec<(&str, &str)> = replies.iter().map(|r| (context, r.text.as_str())).collect();
    let results = backend.logprobs_batch(&items);
    if results.len() != replies.len() {
        return Err(Error::Backend(BackendError::new(format!(
            "backend returned {} results for {} replies",
            results.len(),
            replies.len()
        ))));
    }
    replies
        .iter()
        .zip(results)
        .map(|(reply, result)| {
            let wrap = |source: BackendError| Error::Scoring {
                reply: reply.text.clone(),
                attempts: source.attempts,
                source,
            };
            let tokens = result.map_err(wrap)?;
            CompletionScore::new(reply.text.clone(), tokens).map_err(wrap)
        })
        .collect()
}

/// First reply with the maximal score wins.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Picks a reply under each method from already computed completion scores.
pub fn predict_from_scores(
    sentence_id: &str,
    prompt_code: &str,
    replies: &[&ReplyCandidate],
    scores: &[CompletionScore],
    methods: &[LikelihoodMethod],
) -> Vec<Prediction> {
    methods
        .iter()
        .map(|&method| {
            let values: Vec<f64> = scores.iter().map(|s| method.score(s)).collect();
            let best = argmax(&values);
            Prediction {
                sentence_id: sentence_id.to_string(),
                prompt_code: prompt_code.to_string(),
                method,
                chosen_reply: replies[best].text.clone(),
                label: replies[best].label,
                scores: replies
                    .iter()
                    .zip(&values)
                    .map(|(r, &score)| ReplyScore {
                        reply: r.text.clone(),
                        score,
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Classifies a sentence from an already built context under several methods
/// at once; each reply is scored a single time.
pub fn classify_context(
    sentence_id: &str,
    prompt_code: &str,
    context: &str,
    replies: &[ReplyCandidate],
    methods: &[LikelihoodMethod],
    backend: &dyn ScorerBackend,
    class_filter: Option<&BTreeSet<SentimentLabel>>,
) -> Result<Vec<Prediction>> {
    let kept = filter_replies(replies, class_filter)?;
    let scores = score_replies(context, &kept, backend)?;
    Ok(predict_from_scores(sentence_id, prompt_code, &kept, &scores, methods))
}

/// Zero-shot classification of one sentence under one prompt and method.
/// With `class_filter = {POS, NEG}` only binary replies are scored.
pub fn classify(
    sentence: &LabeledSentence,
    spec: &PromptSpec,
    replies: &[ReplyCandidate],
    method: LikelihoodMethod,
    backend: &dyn ScorerBackend,
    class_filter: Option<&BTreeSet<SentimentLabel>>,
) -> Result<Prediction> {
    let context = render(spec, &sentence.text)?;
    let mut predictions = classify_context(
        &sentence.id,
        &spec.code.to_string(),
        &context,
        replies,
        &[method],
        backend,
        class_filter,
    )?;
    Ok(predictions.remove(0))
}

/// Reply labels admitted in `mode`; `None` means no filtering.
pub fn mode_filter(mode: Mode) -> Option<BTreeSet<SentimentLabel>> {
    match mode {
        Mode::FourClass => None,
        Mode::Binary => Some(SentimentLabel::BINARY.into_iter().collect()),
    }
}

/// Results for one (prompt, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub prompt_code: String,
    pub method: LikelihoodMethod,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub prompt_code: String,
    pub method: LikelihoodMethod,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub sentences: usize,
    pub methods: Vec<LikelihoodMethod>,
    pub prompts: Vec<String>,
    /// Prompt-major, method-minor.
    pub cells: Vec<Cell>,
    pub best: BestCell,
}

impl RunReport {
    pub fn cell(&self, prompt_code: &str, method: LikelihoodMethod) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.prompt_code == prompt_code && c.method == method)
    }

    /// Prompt rows, one macro-F1 column per method, plus the best cell.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<10}", "Prompt ID");
        for m in &self.methods {
            out.push_str(&format!("{:>8}", m.to_string()));
        }
        out.push('\n');
        for p in &self.prompts {
            out.push_str(&format!("{p:<10}"));
            for &m in &self.methods {
                let f1 = self.cell(p, m).map(|c| c.macro_f1).unwrap_or(f64::NAN);
                out.push_str(&format!("{f1:>8.1}"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "best ({}): {} {} macro-F1 {:.1}\n",
            self.mode, self.best.prompt_code, self.best.method, self.best.macro_f1
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub report: RunReport,
    pub predictions: Vec<Prediction>,
}

pub(crate) fn check_mode(sentences: &[LabeledSentence], mode: Mode) -> Result<()> {
    if mode == Mode::Binary {
        if let Some(s) = sentences.iter().find(|s| !s.gold.is_polar()) {
            return Err(Error::Precondition(format!(
                "binary mode expects POS/NEG sentences only; {:?} is {}",
                s.id, s.gold
            )));
        }
    }
    Ok(())
}

/// Runs `f` on a pool capped at `jobs` threads.
pub(crate) fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(f)
}

/// Builds the per-(prompt, method) report from predictions keyed by gold.
pub(crate) fn aggregate(
    mode: Mode,
    sentences: &[LabeledSentence],
    specs: &[PromptSpec],
    methods: &[LikelihoodMethod],
    predictions: &[Prediction],
) -> Result<RunReport> {
    let prompts: Vec<String> = specs.iter().map(|s| s.code.to_string()).collect();
    let gold: std::collections::HashMap<&str, SentimentLabel> =
        sentences.iter().map(|s| (s.id.as_str(), s.gold)).collect();
    let mut matrices: Vec<ConfusionMatrix> = vec![ConfusionMatrix::new(mode.labels()); prompts.len() * methods.len()];
    for p in predictions {
        let pi = prompts.iter().position(|c| *c == p.prompt_code);
        let mi = methods.iter().position(|&m| m == p.method);
        let (Some(pi), Some(mi)) = (pi, mi) else {
            return Err(Error::InvalidData(format!(
                "prediction for unknown cell {} {}",
                p.prompt_code, p.method
            )));
        };
        let g = gold
            .get(p.sentence_id.as_str())
            .ok_or_else(|| Error::InvalidData(format!("prediction for unknown sentence {:?}", p.sentence_id)))?;
        matrices[pi * methods.len() + mi].add(*g, p.label)?;
    }
    let mut cells = Vec::with_capacity(matrices.len());
    for (pi, p) in prompts.iter().enumerate() {
        for (mi, &m) in methods.iter().enumerate() {
            let cm = &matrices[pi * methods.len() + mi];
            cells.push(Cell {
                prompt_code: p.clone(),
                method: m,
                macro_f1: macro_f1(cm),
                accuracy: accuracy(cm),
                confusion: cm.clone(),
            });
        }
    }
    let best = best_cell(&cells).ok_or_else(|| Error::Precondition("run has no (prompt, method) cells".to_string()))?;
    Ok(RunReport {
        mode,
        sentences: sentences.len(),
        methods: methods.to_vec(),
        prompts,
        cells,
        best,
    })
}

/// Highest macro-F1; ties go to the earlier cell.
pub(crate) fn best_cell(cells: &[Cell]) -> Option<BestCell> {
    let mut best: Option<&Cell> = None;
    for c in cells {
        if best.is_none_or(|b| c.macro_f1 > b.macro_f1) {
            best = Some(c);
        }
    }
    best.map(|c| BestCell {
        prompt_code: c.prompt_code.clone(),
        method: c.method,
        macro_f1: c.macro_f1,
    })
}

/// Zero-shot evaluation over every (prompt, method) cell.
///
/// Sentences are scored concurrently up to `options.jobs`; predictions come
/// back in sentence, prompt, method order regardless of scheduling.
pub fn evaluate_run(
    test: &[LabeledSentence],
    specs: &[PromptSpec],
    methods: &[LikelihoodMethod],
    backend: &dyn ScorerBackend,
    mode: Mode,
    options: &ScoringOptions,
) -> Result<RunOutput> {
    check_mode(test, mode)?;
    if specs.is_empty() || methods.is_empty() {
        return Err(Error::Precondition(
            "need at least one prompt and one method".to_string(),
        ));
    }
    let filter = mode_filter(mode);
    let per_sentence: Vec<Vec<Prediction>> = with_jobs(options.jobs, || {
        test.par_iter()
            .map(|sentence| {
                let mut out = Vec::with_capacity(specs.len() * methods.len());
                for spec in specs {
                    let mut context = render(spec, &sentence.text)?;
                    context.push_str(&options.context_suffix);
                    out.extend(classify_context(
                        &sentence.id,
                        &spec.code.to_string(),
                        &context,
                        &spec.replies,
                        methods,
                        backend,
                        filter.as_ref(),
                    )?);
                }
                Ok(out)
            })
            .collect::<Result<_>>()
    })?;
    let predictions: Vec<Prediction> = per_sentence.into_iter().flatten().collect();
    let report = aggregate(mode, test, specs, methods, &predictions)?;
    Ok(RunOutput { report, predictions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptgrid::{expand_grid, GridConfig};

    fn score(completion: &str, logprobs: &[f64]) -> CompletionScore {
        let tokens = logprobs
            .iter()
            .enumerate()
            .map(|(i, &lp)| TokenLogProb::new(format!("t{i}"), lp))
            .collect();
        CompletionScore::new(completion, tokens).unwrap()
    }

    #[test]
    fn l1_sums() {
        assert_eq!(l1(&score("a b c", &[-1.0, -2.0, -3.0])), -6.0);
        assert_eq!(l1(&score("a", &[-0.5])), -0.5);
        assert_eq!(l1(&score("a b", &[0.0, 0.0])), 0.0);
    }

    #[test]
    fn l2_normalises_by_tokens() {
        assert_eq!(l2(&score("a b c", &[-1.0, -2.0, -3.0])), -2.0);
        let single = score("a", &[-0.5]);
        assert_eq!(l2(&single), l1(&single));
    }

    #[test]
    fn l3_normalises_by_characters() {
        assert_eq!(l3(&score("Positiv .", &[-2.0, -2.5])), -0.5);
        let one_char = score("x", &[-1.25, -0.5]);
        assert_eq!(l3(&one_char), l1(&one_char));
    }

    #[test]
    fn n_char_counts_scalars_and_skips_leading_space() {
        assert_eq!(score(" nøytral .", &[-1.0]).n_char(), 9);
    }

    #[test]
    fn invalid_backend_output_is_rejected() {
        assert!(CompletionScore::new("a", vec![]).is_err());
        assert!(CompletionScore::new("a", vec![TokenLogProb::new("a", f64::NAN)]).is_err());
        assert!(CompletionScore::new("a", vec![TokenLogProb::new("a", f64::NEG_INFINITY)]).is_err());
        assert!(CompletionScore::new("a", vec![TokenLogProb::new("", -1.0)]).is_err());
    }

    #[test]
    fn method_names_parse() {
        for m in LikelihoodMethod::ALL {
            assert_eq!(m.to_string().parse::<LikelihoodMethod>().unwrap(), m);
        }
    }

    #[test]
    fn ties_go_to_the_first_reply() {
        assert_eq!(argmax(&[-1.0, -1.0, -2.0]), 0);
        assert_eq!(argmax(&[-3.0, -1.0, -1.0]), 1);
    }

    #[test]
    fn empty_filtered_reply_set_is_rejected() {
        let spec = expand_grid(&GridConfig::default_grid()).unwrap().remove(0);
        let sentence = LabeledSentence::new("s", "Bra .", SentimentLabel::Pos);
        let backend = HashNoiseBackend::new(1);
        let empty = BTreeSet::new();
        let err = classify(
            &sentence,
            &spec,
            &spec.replies,
            LikelihoodMethod::L1Sum,
            &backend,
            Some(&empty),
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn backend_failure_names_the_reply() {
        let spec = expand_grid(&GridConfig::default_grid()).unwrap().remove(0);
        let sentence = LabeledSentence::new("s", "Bra .", SentimentLabel::Pos);
        let backend = FnBackend::new("failing", |_: &str, _: &str| {
            Err(BackendError::new("connection refused").with_attempts(3))
        });
        match classify(&sentence, &spec, &spec.replies, LikelihoodMethod::L1Sum, &backend, None) {
            Err(Error::Scoring { reply, attempts, .. }) => {
                assert_eq!(reply, spec.replies[0].text);
                assert_eq!(attempts, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn binary_mode_rejects_neutral_sentences() {
        let specs = expand_grid(&GridConfig::default_grid()).unwrap();
        let test = vec![LabeledSentence::new("s", "Ok .", SentimentLabel::Neut)];
        let err = evaluate_run(
            &test,
            &specs,
            &LikelihoodMethod::ALL,
            &HashNoiseBackend::new(0),
            Mode::Binary,
            &Default::default(),
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
    }
}
