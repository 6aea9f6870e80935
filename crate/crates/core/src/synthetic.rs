//! Seeded synthetic corpora and annotator fixtures for tests and examples.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ClassDistribution, LabeledSentence};
use crate::label::SentimentLabel;

/// Class totals of the annotated patient-feedback corpus (POS, NEG, NEUT, MIX).
pub const REFERENCE_TOTALS: [usize; 4] = [2792, 3508, 953, 440];
/// Reference test split.
pub const REFERENCE_TEST: [usize; 4] = [1396, 1755, 477, 220];
/// Reference train split.
pub const REFERENCE_TRAIN: [usize; 4] = [1396, 1753, 476, 220];

pub fn reference_totals() -> ClassDistribution {
    let [p, n, u, m] = REFERENCE_TOTALS;
    ClassDistribution::from_counts(p, n, u, m)
}

pub fn reference_test_distribution() -> ClassDistribution {
    let [p, n, u, m] = REFERENCE_TEST;
    ClassDistribution::from_counts(p, n, u, m)
}

pub const STOPWORDS: [&str; 20] = [
    "og", "i", "det", "er", "på", "som", "en", "til", "å", "av", "med", "at", "for", "har", "de", "ikke", "den", "jeg",
    "var", "om",
];

const POS_WORDS: [&str; 15] = [
    "god",
    "flink",
    "hyggelig",
    "grundig",
    "trygg",
    "fornøyd",
    "rask",
    "vennlig",
    "dyktig",
    "imøtekommende",
    "anbefaler",
    "takknemlig",
    "profesjonell",
    "hjelpsom",
    "omsorgsfull",
];
const NEG_WORDS: [&str; 15] = [
    "dårlig",
    "lang",
    "frekk",
    "sur",
    "elendig",
    "misfornøyd",
    "treg",
    "arrogant",
    "skuffet",
    "vanskelig",
    "uhøflig",
    "feilbehandlet",
    "overså",
    "avvist",
    "klage",
];
const NEUT_WORDS: [&str; 15] = [
    "time",
    "legen",
    "kontoret",
    "resept",
    "timen",
    "telefon",
    "sykehuset",
    "timebestilling",
    "journal",
    "henvisning",
    "mandag",
    "uke",
    "kveld",
    "venterommet",
    "avdelingen",
];
const MIX_WORDS: [&str; 15] = [
    "delvis",
    "noenlunde",
    "både",
    "samtidig",
    "riktignok",
    "derimot",
    "blandede",
    "varierende",
    "tja",
    "stort sett",
    "halvveis",
    "ujevn",
    "tidvis",
    "middels",
    "sånn passe",
];

fn class_words(label: SentimentLabel) -> &'static [&'static str] {
    match label {
        SentimentLabel::Pos => &POS_WORDS,
        SentimentLabel::Neg => &NEG_WORDS,
        SentimentLabel::Neut => &NEUT_WORDS,
        SentimentLabel::Mix => &MIX_WORDS,
    }
}

fn one_word(words: &[&str], rng: &mut ChaCha8Rng) -> String {
    words.choose(rng).expect("nonempty word list").replace(' ', "_")
}

/// Sentences with the given class counts, in canonical class order.
///
/// Each sentence mixes a few function words with class-indicative words, and
/// now and then a word of another class, so lexical baselines score well
/// but not perfectly. Texts are unique and end with " .".
pub fn synthetic_corpus(counts: &ClassDistribution, seed: u64) -> Vec<LabeledSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(counts.total());
    let mut next_id = 0usize;
    for label in SentimentLabel::ALL {
        for _ in 0..counts.get(label) {
            let text = loop {
                let mut words: Vec<String> = (0..rng.gen_range(4..9))
                    .map(|_| STOPWORDS.choose(&mut rng).expect("stopwords").to_string())
                    .collect();
                let k = rng.gen_range(2..4);
                for _ in 0..k {
                    let source = if rng.gen_bool(0.25) {
                        *SentimentLabel::ALL.choose(&mut rng).expect("labels")
                    } else {
                        label
                    };
                    words.push(one_word(class_words(source), &mut rng));
                }
                if label == SentimentLabel::Mix {
                    words.push(one_word(&POS_WORDS, &mut rng));
                    words.push("men".to_string());
                    words.push(one_word(&NEG_WORDS, &mut rng));
                }
                words.shuffle(&mut rng);
                let mut text = words.join(" ");
                if let Some(first) = text.get(..1) {
                    text = first.to_uppercase() + &text[1..];
                }
                text.push_str(" .");
                if seen.insert(text.clone()) {
                    break text;
                }
            };
            next_id += 1;
            out.push(LabeledSentence::new(format!("s{next_id:05}"), text, label));
        }
    }
    out
}

/// A corpus with the class totals of the real one.
pub fn reference_shaped_corpus(seed: u64) -> Vec<LabeledSentence> {
    synthetic_corpus(&reference_totals(), seed)
}

/// Sentences whose vocabulary, once the 20 most frequent tokens are removed,
/// is disjoint between classes.
///
/// Every sentence contains all 20 [`STOPWORDS`] plus three distinct words of
/// its own class, so the stopwords are strictly the most frequent tokens
/// whenever more than one class is present.
pub fn separable_corpus(
    per_class: usize,
    classes: &[SentimentLabel],
    seed: u64,
    id_prefix: &str,
) -> Vec<LabeledSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * classes.len());
    for &label in classes {
        for i in 0..per_class {
            let mut words: Vec<String> = STOPWORDS.iter().map(|w| w.to_string()).collect();
            words.extend(
                class_words(label)
                    .choose_multiple(&mut rng, 3)
                    .map(|w| w.replace(' ', "_")),
            );
            words.shuffle(&mut rng);
            out.push(LabeledSentence::new(
                format!("{id_prefix}{}-{i:04}", label.as_str()),
                words.join(" ") + " .",
                label,
            ));
        }
    }
    out
}

/// Agreement targets of the six-annotator round (upper triangle, row-major).
pub const REFERENCE_KAPPA: [(&str, &str, f64); 15] = [
    ("A1", "A2", 0.96),
    ("A1", "A3", 0.95),
    ("A1", "A4", 0.95),
    ("A1", "A5", 0.96),
    ("A1", "A6", 0.95),
    ("A2", "A3", 0.95),
    ("A2", "A4", 0.92),
    ("A2", "A5", 0.95),
    ("A2", "A6", 0.92),
    ("A3", "A4", 0.95),
    ("A3", "A5", 0.95),
    ("A3", "A6", 0.93),
    ("A4", "A5", 0.92),
    ("A4", "A6", 0.93),
    ("A5", "A6", 0.92),
];

/// Block size and disagreement count realising `target` for two raters over
/// POS/NEG/NEUT.
///
/// In a block of m items with uniform marginals (m/3 per class), moving d
/// items cyclically POS→NEG→NEUT→POS (d a multiple of 3) keeps both
/// marginals uniform, so p_e = 1/3, p_o = 1 − d/m and kappa = 1 − 1.5 d/m.
/// Returns the smallest block whose kappa is closest to `target`.
pub fn disagreement_plan(target: f64) -> (usize, usize) {
    let mut best = (3, 0, f64::INFINITY);
    for m in (30..=900).step_by(3) {
        for d in (0..=m / 3).step_by(3) {
            let err = (1.0 - 1.5 * d as f64 / m as f64 - target).abs();
            if err + 1e-12 < best.2 {
                best = (m, d, err);
            }
        }
    }
    (best.0, best.1)
}

/// Kappa of a block built by [`disagreement_plan`].
pub fn planned_kappa(m: usize, d: usize) -> f64 {
    1.0 - 1.5 * d as f64 / m as f64
}

pub type RaterLabels = BTreeMap<String, BTreeMap<String, SentimentLabel>>;

/// Rater labels where each listed pair shares a private block of items built
/// to reach its target kappa; no other rater sees those items.
pub fn controlled_disagreement(pairs: &[(&str, &str, f64)], seed: u64) -> RaterLabels {
    let classes = [SentimentLabel::Pos, SentimentLabel::Neg, SentimentLabel::Neut];
    let next = |l: SentimentLabel| match l {
        SentimentLabel::Pos => SentimentLabel::Neg,
        SentimentLabel::Neg => SentimentLabel::Neut,
        _ => SentimentLabel::Pos,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raters: RaterLabels = BTreeMap::new();
    for &(a, b, target) in pairs {
        let (m, d) = disagreement_plan(target);
        let mut labels_a: Vec<SentimentLabel> = (0..m).map(|i| classes[i % 3]).collect();
        labels_a.shuffle(&mut rng);
        let mut labels_b = labels_a.clone();
        // d/3 disagreements drawn from each class keep the marginals uniform.
        for class in classes {
            let mut idx: Vec<usize> = (0..m).filter(|&i| labels_a[i] == class).collect();
            idx.shuffle(&mut rng);
            for &i in idx.iter().take(d / 3) {
                labels_b[i] = next(class);
            }
        }
        for i in 0..m {
            let id = format!("{a}-{b}-{i:04}");
            raters.entry(a.to_string()).or_default().insert(id.clone(), labels_a[i]);
            raters.entry(b.to_string()).or_default().insert(id, labels_b[i]);
        }
    }
    raters
}

/// Sentences carrying the rater labels as annotator labels; gold is the
/// label of the alphabetically first rater.
pub fn rater_sentences(raters: &RaterLabels) -> Vec<LabeledSentence> {
    let mut by_item: BTreeMap<&str, BTreeMap<String, SentimentLabel>> = BTreeMap::new();
    for (rater, items) in raters {
        for (id, &label) in items {
            by_item.entry(id).or_default().insert(rater.clone(), label);
        }
    }
    by_item
        .into_iter()
        .enumerate()
        .map(|(i, (id, labels))| {
            let gold = *labels.values().next().expect("at least one rater");
            let mut s = LabeledSentence::new(id, format!("Vurdering nummer {i} ."), gold);
            s.annotator_labels = labels;
            s
        })
        .collect()
}

/// Adds annotator labels: every sentence gets one annotator whose label is
/// the gold label; a `double_rate` share also gets a second annotator, who
/// picks a different class with probability `flip_rate`.
pub fn annotate(sentences: &mut [LabeledSentence], annotators: &[&str], double_rate: f64, flip_rate: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in sentences {
        let picked: Vec<&&str> = annotators.choose_multiple(&mut rng, 2).collect();
        s.annotator_labels.insert(picked[0].to_string(), s.gold);
        if picked.len() > 1 && rng.gen_bool(double_rate) {
            let label = if rng.gen_bool(flip_rate) {
                let others: Vec<SentimentLabel> = SentimentLabel::ALL.into_iter().filter(|&l| l != s.gold).collect();
                *others.choose(&mut rng).expect("three other labels")
            } else {
                s.gold
            };
            s.annotator_labels.insert(picked[1].to_string(), label);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shaped_counts_and_unique_texts() {
        let c = reference_shaped_corpus(1);
        assert_eq!(ClassDistribution::from_sentences(&c), reference_totals());
        let texts: HashSet<&str> = c.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts.len(), c.len());
    }

    #[test]
    fn plans_hit_the_reference_values() {
        for (_, _, target) in REFERENCE_KAPPA {
            let (m, d) = disagreement_plan(target);
            assert_eq!(d % 3, 0);
            assert!((planned_kappa(m, d) - target).abs() < 1e-9, "{target}: m={m} d={d}");
        }
    }
}
