//! Bag-of-words Naive Bayes and the uniform random baseline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassDistribution, LabeledSentence};
use crate::error::{Error, Result};
use crate::label::{Mode, SentimentLabel};
use crate::metrics::{accuracy, macro_f1, ConfusionMatrix};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const REMOVED_TOP: usize = 20;

/// Whitespace tokens, lowercased.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub tokens: BTreeSet<String>,
    /// Most frequent first.
    pub removed_top: Vec<String>,
}

impl Vocabulary {
    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Every training token except the 20 most frequent; frequency ties are
/// broken towards the lexicographically smaller token.
pub fn build_vocab(train: &[LabeledSentence]) -> Result<Vocabulary> {
    build_vocab_with(train, REMOVED_TOP)
}

pub fn build_vocab_with(train: &[LabeledSentence], remove: usize) -> Result<Vocabulary> {
    if train.is_empty() {
        return Err(Error::Precondition(
            "cannot build a vocabulary from an empty training set".to_string(),
        ));
    }
    let mut freq: HashMap<String, usize> = HashMap::new();
    for s in train {
        for t in tokenize(&s.text) {
            *freq.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let cut = remove.min(ranked.len());
    let removed_top = ranked[..cut].iter().map(|(t, _)| t.clone()).collect();
    let tokens = ranked[cut..].iter().map(|(t, _)| t.clone()).collect();
    Ok(Vocabulary { tokens, removed_top })
}

/// Multinomial Naive Bayes with add-`smoothing` estimates. Only classes seen
/// in training get a prior; the others can never be predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub format_version: u32,
    pub smoothing: f64,
    pub class_log_priors: BTreeMap<SentimentLabel, f64>,
    pub token_log_likelihoods: BTreeMap<SentimentLabel, BTreeMap<String, f64>>,
    pub vocabulary: Vocabulary,
}

pub fn train_nb(train: &[LabeledSentence], vocab: &Vocabulary, smoothing: f64) -> Result<NbModel> {
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::Config(format!("smoothing must be positive, got {smoothing}")));
    }
    if train.is_empty() {
        return Err(Error::Precondition("cannot train on an empty training set".to_string()));
    }
    let mut docs: BTreeMap<SentimentLabel, usize> = BTreeMap::new();
    let mut counts: BTreeMap<SentimentLabel, HashMap<&str, usize>> = BTreeMap::new();
    let mut totals: BTreeMap<SentimentLabel, usize> = BTreeMap::new();
    for s in train {
        *docs.entry(s.gold).or_default() += 1;
        let class_counts = counts.entry(s.gold).or_default();
        let total = totals.entry(s.gold).or_default();
        for t in tokenize(&s.text) {
            if let Some(known) = vocab.tokens.get(t.as_str()) {
                *class_counts.entry(known.as_str()).or_default() += 1;
                *total += 1;
            }
        }
    }
    let n = train.len() as f64;
    let v = vocab.len() as f64;
    let class_log_priors = docs.iter().map(|(&l, &d)| (l, (d as f64 / n).ln())).collect();
    let token_log_likelihoods = docs
        .keys()
        .map(|&label| {
            let denom = totals[&label] as f64 + smoothing * v;
            let class_counts = &counts[&label];
            let table = vocab
                .tokens
                .iter()
                .map(|t| {
                    let c = class_counts.get(t.as_str()).copied().unwrap_or(0) as f64;
                    (t.clone(), ((c + smoothing) / denom).ln())
                })
                .collect();
            (label, table)
        })
        .collect();
    Ok(NbModel {
        format_version: MODEL_FORMAT_VERSION,
        smoothing,
        class_log_priors,
        token_log_likelihoods,
        vocabulary: vocab.clone(),
    })
}

impl NbModel {
    /// Unnormalised log posterior of each trained class, canonical order.
    /// Out-of-vocabulary tokens are ignored.
    pub fn log_posteriors(&self, text: &str) -> Vec<(SentimentLabel, f64)> {
        let tokens: Vec<String> = tokenize(text).filter(|t| self.vocabulary.contains(t)).collect();
        self.class_log_priors
            .iter()
            .map(|(&label, &prior)| {
                let table = &self.token_log_likelihoods[&label];
                (label, prior + tokens.iter().map(|t| table[t]).sum::<f64>())
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::report::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: NbModel = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidData(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

/// Highest posterior; ties go to the earlier class in canonical order.
pub fn predict_nb(model: &NbModel, sentence_text: &str) -> SentimentLabel {
    let mut best: Option<(SentimentLabel, f64)> = None;
    for (label, lp) in model.log_posteriors(sentence_text) {
        if best.is_none_or(|(_, b)| lp > b) {
            best = Some((label, lp));
        }
    }
    best.expect("a trained model has at least one class").0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbEvaluation {
    pub mode: Mode,
    pub train_size: usize,
    pub test_size: usize,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate_nb(model: &NbModel, test: &[LabeledSentence], mode: Mode, train_size: usize) -> Result<NbEvaluation> {
    let mut cm = ConfusionMatrix::new(mode.labels());
    for s in test {
        cm.add(s.gold, predict_nb(model, &s.text))?;
    }
    Ok(NbEvaluation {
        mode,
        train_size,
        test_size: test.len(),
        macro_f1: macro_f1(&cm),
        accuracy: accuracy(&cm),
        confusion: cm,
    })
}

fn mode_counts(distribution: &ClassDistribution, mode: Mode) -> Result<Vec<usize>> {
    let counts: Vec<usize> = mode.labels().iter().map(|&l| distribution.get(l)).collect();
    if counts.iter().sum::<usize>() == 0 {
        return Err(Error::Precondition(
            "random baseline needs a nonempty distribution".to_string(),
        ));
    }
    Ok(counts)
}

/// Macro-F1 (percent) of the expected confusion matrix of a classifier that
/// picks one of the mode's k labels uniformly at random: class c with n_c of
/// N items gets F1 = 2 n_c / (k n_c + N).
pub fn random_baseline_f1(distribution: &ClassDistribution, mode: Mode) -> Result<f64> {
    let counts = mode_counts(distribution, mode)?;
    let k = counts.len() as f64;
    let n: f64 = counts.iter().sum::<usize>() as f64;
    let sum: f64 = counts.iter().map(|&c| 2.0 * c as f64 / (k * c as f64 + n)).sum();
    Ok(100.0 * sum / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub draws: usize,
    pub seed: u64,
}

/// Seeded Monte Carlo estimate of the expected macro-F1 of the uniform random
/// classifier. Each draw samples a full confusion matrix: the predictions for
/// the n_c items of class c are multinomial over the k labels.
pub fn random_baseline_f1_mc(
    distribution: &ClassDistribution,
    mode: Mode,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let counts = mode_counts(distribution, mode)?;
    if draws < 2 {
        return Err(Error::Precondition("need at least two draws".to_string()));
    }
    let labels = mode.labels();
    let k = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut cm = ConfusionMatrix::new(labels);
    for _ in 0..draws {
        for (g, &n_g) in counts.iter().enumerate() {
            let mut remaining = n_g as u64;
            for p in 0..k {
                let left = (k - p) as f64;
                let x = if p + 1 == k {
                    remaining
                } else {
                    Binomial::new(remaining, 1.0 / left)
                        .expect("valid binomial")
                        .sample(&mut rng)
                };
                cm.counts[g][p] = x;
                remaining -= x;
            }
        }
        let f1 = macro_f1(&cm);
        sum += f1;
        sum_sq += f1 * f1;
    }
    let d = draws as f64;
    let mean = sum / d;
    let var = ((sum_sq - d * mean * mean) / (d - 1.0)).max(0.0);
    let std_error = (var / d).sqrt();
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        ci95: (mean - 1.96 * std_error, mean + 1.96 * std_error),
        draws,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(id: &str, text: &str, gold: SentimentLabel) -> LabeledSentence {
        LabeledSentence::new(id, text, gold)
    }

    #[test]
    fn ten_distinct_tokens_leave_an_empty_vocabulary() {
        let train = vec![s("a", "a b c d e f g h i j", SentimentLabel::Pos)];
        let v = build_vocab(&train).unwrap();
        assert!(v.is_empty());
        assert_eq!(v.removed_top.len(), 10);
    }

    #[test]
    fn rank_ties_remove_the_smaller_token() {
        let train = vec![s("a", "b a c", SentimentLabel::Pos)];
        let v = build_vocab_with(&train, 2).unwrap();
        assert_eq!(v.removed_top, ["a", "b"]);
        assert!(v.contains("c"));
    }

    #[test]
    fn tokens_are_case_folded() {
        let train = vec![s("a", "Bra bra BRA", SentimentLabel::Pos)];
        assert_eq!(build_vocab_with(&train, 0).unwrap().tokens.len(), 1);
    }

    #[test]
    fn single_class_prior_is_zero_in_log_space() {
        let train = vec![s("a", "x y", SentimentLabel::Neg), s("b", "y z", SentimentLabel::Neg)];
        let v = build_vocab_with(&train, 0).unwrap();
        let m = train_nb(&train, &v, 1.0).unwrap();
        assert_eq!(m.class_log_priors.len(), 1);
        assert_eq!(m.class_log_priors[&SentimentLabel::Neg], 0.0);
    }

    #[test]
    fn absent_token_uses_the_smoothing_formula() {
        let train = vec![s("a", "x x y", SentimentLabel::Pos), s("b", "z", SentimentLabel::Neg)];
        let v = build_vocab_with(&train, 0).unwrap();
        let m = train_nb(&train, &v, 0.5).unwrap();
        let expected = (0.5f64 / (3.0 + 0.5 * 3.0)).ln();
        assert!((m.token_log_likelihoods[&SentimentLabel::Pos]["z"] - expected).abs() < 1e-12);
    }

    #[test]
    fn oov_sentence_takes_the_largest_prior() {
        let train = vec![
            s("a", "x", SentimentLabel::Neg),
            s("b", "y", SentimentLabel::Pos),
            s("c", "y", SentimentLabel::Pos),
        ];
        let v = build_vocab_with(&train, 0).unwrap();
        let m = train_nb(&train, &v, 1.0).unwrap();
        assert_eq!(predict_nb(&m, "ukjent ord"), SentimentLabel::Pos);
        assert_eq!(predict_nb(&m, "x x x"), SentimentLabel::Neg);
    }

    #[test]
    fn random_baseline_closed_forms() {
        let balanced = ClassDistribution::from_counts(50, 50, 0, 0);
        assert!((random_baseline_f1(&balanced, Mode::Binary).unwrap() - 50.0).abs() < 1e-12);
        let single = ClassDistribution::from_counts(10, 0, 0, 0);
        let f1 = random_baseline_f1(&single, Mode::Binary).unwrap();
        assert!((f1 - 100.0 / 3.0).abs() < 1e-12);
        assert!(random_baseline_f1(&ClassDistribution::default(), Mode::Binary).is_err());
    }

    #[test]
    fn smoothing_must_be_positive() {
        let train = vec![s("a", "x", SentimentLabel::Pos)];
        let v = build_vocab_with(&train, 0).unwrap();
        assert!(matches!(train_nb(&train, &v, 0.0), Err(Error::Config(_))));
    }
}
