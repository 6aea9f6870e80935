//! Classification metrics and Cohen's kappa agreement.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::SentimentLabel;

/// Gold-by-predicted counts over a fixed, ordered label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<SentimentLabel>,
    /// `counts[gold][predicted]`, indexed by position in `labels`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: &[SentimentLabel]) -> Self {
        ConfusionMatrix {
            labels: labels.to_vec(),
            counts: vec![vec![0; labels.len()]; labels.len()],
        }
    }

    pub fn from_pairs(
        labels: &[SentimentLabel],
        pairs: impl IntoIterator<Item = (SentimentLabel, SentimentLabel)>,
    ) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(labels);
        for (gold, predicted) in pairs {
            cm.add(gold, predicted)?;
        }
        Ok(cm)
    }

    fn position(&self, label: SentimentLabel) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::InvalidData(format!("label {label} outside the label set")))
    }

    pub fn add(&mut self, gold: SentimentLabel, predicted: SentimentLabel) -> Result<()> {
        let g = self.position(gold)?;
        let p = self.position(predicted)?;
        self.counts[g][p] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(
            self.labels, other.labels,
            "merging confusion matrices over different labels"
        );
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn gold_count(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn predicted_count(&self, i: usize) -> u64 {
        self.counts.iter().map(|row| row[i]).sum()
    }

    /// F1 per label, as a fraction. A label with no gold and no predicted
    /// items scores 0.
    pub fn per_class_f1(&self) -> Vec<f64> {
        (0..self.labels.len())
            .map(|i| {
                let tp = self.counts[i][i] as f64;
                let denom = (self.gold_count(i) + self.predicted_count(i)) as f64;
                if denom == 0.0 {
                    0.0
                } else {
                    2.0 * tp / denom
                }
            })
            .collect()
    }

    /// Predicted-label counts, keyed by label.
    pub fn prediction_counts(&self) -> BTreeMap<SentimentLabel, u64> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, self.predicted_count(i)))
            .collect()
    }
}

/// Unweighted mean of per-class F1 over the matrix's label set, in percent.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    if cm.labels.is_empty() {
        return 0.0;
    }
    let f1 = cm.per_class_f1();
    100.0 * f1.iter().sum::<f64>() / f1.len() as f64
}

/// Fraction of items on the diagonal, in percent.
pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    let correct: u64 = (0..cm.labels.len()).map(|i| cm.counts[i][i]).sum();
    100.0 * correct as f64 / total as f64
}

/// Unweighted Cohen's kappa between two aligned label sequences.
///
/// When chance agreement is 1 (both raters use one and the same label
/// throughout) the raters agree perfectly and 1.0 is returned.
pub fn cohens_kappa(a: &[SentimentLabel], b: &[SentimentLabel]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Alignment(format!(
            "sequences have different lengths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Precondition("kappa needs at least one item".to_string()));
    }
    let n = a.len() as f64;
    let mut count_a = [0usize; 4];
    let mut count_b = [0usize; 4];
    let mut agree = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        count_a[x.index()] += 1;
        count_b[y.index()] += 1;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = count_a
        .iter()
        .zip(&count_b)
        .map(|(&ca, &cb)| (ca as f64 / n) * (cb as f64 / n))
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Pairwise kappa over a set of raters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaMatrix {
    pub raters: Vec<String>,
    /// `None` where the two raters share no items.
    pub values: Vec<Vec<Option<f64>>>,
    pub overlap: Vec<Vec<usize>>,
}

impl KappaMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.raters.iter().position(|r| r == a)?;
        let j = self.raters.iter().position(|r| r == b)?;
        self.values[i][j]
    }

    /// Aligned text table, two decimals.
    pub fn to_table(&self) -> String {
        let width = self.raters.iter().map(String::len).max().unwrap_or(0).max(4) + 2;
        let mut out = format!("{:<width$}", "");
        for r in &self.raters {
            out.push_str(&format!("{r:>width$}"));
        }
        out.push('\n');
        for (i, r) in self.raters.iter().enumerate() {
            out.push_str(&format!("{r:<width$}"));
            for v in &self.values[i] {
                out.push_str(&format!("{:>width$}", fmt_kappa(*v)));
            }
            out.push('\n');
        }
        out
    }
}

fn fmt_kappa(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => "-".to_string(),
    }
}

/// Kappa over the item ids two raters both labelled, or `None` without overlap.
fn pair_kappa(
    a: &BTreeMap<String, SentimentLabel>,
    b: &BTreeMap<String, SentimentLabel>,
) -> Result<(Option<f64>, usize)> {
    let (xs, ys): (Vec<_>, Vec<_>) = a.iter().filter_map(|(id, &x)| b.get(id).map(|&y| (x, y))).unzip();
    if xs.is_empty() {
        return Ok((None, 0));
    }
    Ok((Some(cohens_kappa(&xs, &ys)?), xs.len()))
}

/// Pairwise kappa matrix; each pair is scored on the item ids both labelled.
pub fn kappa_matrix(raters: &BTreeMap<String, BTreeMap<String, SentimentLabel>>) -> Result<KappaMatrix> {
    if raters.len() < 2 {
        return Err(Error::Precondition(
            "kappa matrix needs at least two raters".to_string(),
        ));
    }
    let names: Vec<String> = raters.keys().cloned().collect();
    let n = names.len();
    let mut values = vec![vec![None; n]; n];
    let mut overlap = vec![vec![0; n]; n];
    for i in 0..n {
        let items = &raters[&names[i]];
        overlap[i][i] = items.len();
        values[i][i] = (!items.is_empty()).then_some(1.0);
        for j in (i + 1)..n {
            let (k, count) = pair_kappa(items, &raters[&names[j]])?;
            values[i][j] = k;
            values[j][i] = k;
            overlap[i][j] = count;
            overlap[j][i] = count;
        }
    }
    Ok(KappaMatrix {
        raters: names,
        values,
        overlap,
    })
}

/// Collects per-annotator label maps from sentences' annotator labels.
pub fn annotator_views<'a>(
    sentences: impl IntoIterator<Item = &'a crate::corpus::LabeledSentence>,
) -> BTreeMap<String, BTreeMap<String, SentimentLabel>> {
    let mut out: BTreeMap<String, BTreeMap<String, SentimentLabel>> = BTreeMap::new();
    for s in sentences {
        for (annotator, &label) in &s.annotator_labels {
            out.entry(annotator.clone()).or_default().insert(s.id.clone(), label);
        }
    }
    out
}

/// Kappa of one model configuration against each annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterRow {
    pub configuration: String,
    pub kappa: BTreeMap<String, Option<f64>>,
    pub overlap: BTreeMap<String, usize>,
}

/// Treats each model configuration as a rater and scores it against every
/// annotator on that annotator's items. Annotators with no overlapping item
/// get an absent entry.
pub fn model_as_rater(
    configurations: &[(String, BTreeMap<String, SentimentLabel>)],
    annotators: &BTreeMap<String, BTreeMap<String, SentimentLabel>>,
) -> Result<Vec<RaterRow>> {
    configurations
        .iter()
        .map(|(name, predictions)| {
            let mut kappa = BTreeMap::new();
            let mut overlap = BTreeMap::new();
            for (annotator, items) in annotators {
                let (k, count) = pair_kappa(predictions, items)?;
                kappa.insert(annotator.clone(), k);
                overlap.insert(annotator.clone(), count);
            }
            Ok(RaterRow {
                configuration: name.clone(),
                kappa,
                overlap,
            })
        })
        .collect()
}

/// Rows per configuration, columns per annotator; annotators without any
/// overlap in any row are dropped from the table.
pub fn rater_rows_table(rows: &[RaterRow]) -> String {
    let mut columns: Vec<&String> = rows
        .iter()
        .flat_map(|r| r.kappa.iter().filter(|(_, v)| v.is_some()).map(|(k, _)| k))
        .collect();
    columns.sort();
    columns.dedup();
    let first = rows.iter().map(|r| r.configuration.len()).max().unwrap_or(0).max(9) + 2;
    let mut out = format!("{:<first$}", "Prompt ID");
    for c in &columns {
        out.push_str(&format!("{c:>7}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{:<first$}", r.configuration));
        for c in &columns {
            out.push_str(&format!("{:>7}", fmt_kappa(r.kappa.get(*c).copied().flatten())));
        }
        out.push('\n');
    }
    out
}

/// Aligns two id-keyed label maps, failing when their id sets differ.
pub fn align_strict(
    a: &BTreeMap<String, SentimentLabel>,
    b: &BTreeMap<String, SentimentLabel>,
) -> Result<(Vec<SentimentLabel>, Vec<SentimentLabel>)> {
    let missing: Vec<&String> = a.keys().filter(|k| !b.contains_key(*k)).collect();
    let extra: Vec<&String> = b.keys().filter(|k| !a.contains_key(*k)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Alignment(format!(
            "{} id(s) only in the first source (e.g. {:?}), {} only in the second (e.g. {:?})",
            missing.len(),
            missing.first(),
            extra.len(),
            extra.first()
        )));
    }
    Ok(a.iter().map(|(k, &x)| (x, b[k])).unzip())
}

/// Label counts per label; used to check marginals.
pub fn label_counts(labels: &[SentimentLabel]) -> HashMap<SentimentLabel, usize> {
    let mut out = HashMap::new();
    for &l in labels {
        *out.entry(l).or_default() += 1;
    }
    out
}
