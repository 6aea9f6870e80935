//! Labelled sentence corpus: JSON-lines ingestion, class distributions and
//! class-balanced train/test splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Intensity, SentimentLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidData(format!("unknown split {other:?}"))),
        }
    }
}

/// One pre-segmented sentence with its gold class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub comment_id: String,
    pub text: String,
    pub gold: SentimentLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<Intensity>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotator_labels: BTreeMap<String, SentimentLabel>,
}

impl LabeledSentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold: SentimentLabel) -> Self {
        LabeledSentence {
            id: id.into(),
            comment_id: String::new(),
            text: text.into(),
            gold,
            intensity: None,
            annotator_labels: BTreeMap::new(),
        }
    }
}

// Wire form: labels arrive as free strings so an unknown value can be reported
// by name rather than as a generic serde failure.
#[derive(Deserialize)]
struct Record {
    id: String,
    #[serde(default)]
    comment_id: String,
    text: String,
    gold: String,
    #[serde(default)]
    intensity: Option<Intensity>,
    #[serde(default)]
    annotator_labels: BTreeMap<String, String>,
    #[serde(default)]
    split: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<LabeledSentence>,
    pub split_assignment: Option<BTreeMap<String, Split>>,
}

impl Corpus {
    pub fn new(sentences: Vec<LabeledSentence>) -> Result<Self> {
        check_sentences(&sentences)?;
        Ok(Corpus {
            sentences,
            split_assignment: None,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split_assignment.as_ref()?.get(id).copied()
    }

    /// Sentences assigned to `split`, in corpus order.
    pub fn subset(&self, split: Split) -> Result<Vec<LabeledSentence>> {
        let assignment = self
            .split_assignment
            .as_ref()
            .ok_or_else(|| Error::Precondition("corpus has no split assignment".to_string()))?;
        Ok(self
            .sentences
            .iter()
            .filter(|s| assignment.get(&s.id) == Some(&split))
            .cloned()
            .collect())
    }
}

fn check_sentences(sentences: &[LabeledSentence]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in sentences {
        if s.text.trim().is_empty() {
            return Err(Error::InvalidData(format!("sentence {:?} has empty text", s.id)));
        }
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
    }
    Ok(())
}

/// Reads a JSON-lines corpus. Blank lines are skipped. A `split` field, when
/// present, must be present on every record.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    let mut splits: Vec<Option<Split>> = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if record.text.trim().is_empty() {
            return Err(parse_err(format!("sentence {:?} has empty text", record.id)));
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        let gold = record.gold.parse::<SentimentLabel>()?;
        let annotator_labels = record
            .annotator_labels
            .into_iter()
            .map(|(k, v)| Ok((k, v.parse::<SentimentLabel>()?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        splits.push(record.split.as_deref().map(str::parse).transpose()?);
        sentences.push(LabeledSentence {
            id: record.id,
            comment_id: record.comment_id,
            text: record.text,
            gold,
            intensity: record.intensity,
            annotator_labels,
        });
    }

    let split_assignment = if splits.iter().all(Option::is_none) {
        None
    } else if splits.iter().all(Option::is_some) {
        Some(
            sentences
                .iter()
                .zip(&splits)
                .map(|(s, split)| (s.id.clone(), split.unwrap()))
                .collect(),
        )
    } else {
        return Err(Error::InvalidData(format!(
            "{}: split field present on some records but not all",
            path.display()
        )));
    };
    Ok(Corpus {
        sentences,
        split_assignment,
    })
}

/// Serialises sentences as JSON lines, one record per line.
pub fn to_jsonl(sentences: &[LabeledSentence]) -> Result<String> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

/// Like [`to_jsonl`], adding each sentence's `split` field when the corpus
/// has a split assignment.
pub fn corpus_to_jsonl(corpus: &Corpus) -> Result<String> {
    let Some(assignment) = &corpus.split_assignment else {
        return to_jsonl(&corpus.sentences);
    };
    #[derive(Serialize)]
    struct WithSplit<'a> {
        #[serde(flatten)]
        sentence: &'a LabeledSentence,
        split: Split,
    }
    let mut out = String::new();
    for s in &corpus.sentences {
        let split = *assignment
            .get(&s.id)
            .ok_or_else(|| Error::InvalidData(format!("sentence {:?} has no split", s.id)))?;
        out.push_str(&serde_json::to_string(&WithSplit { sentence: s, split })?);
        out.push('\n');
    }
    Ok(out)
}

/// Per-class sentence counts. All four classes are always present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: BTreeMap<SentimentLabel, usize>,
}

impl Default for ClassDistribution {
    fn default() -> Self {
        ClassDistribution {
            counts: SentimentLabel::ALL.iter().map(|&l| (l, 0)).collect(),
        }
    }
}

impl ClassDistribution {
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a LabeledSentence>) -> Self {
        let mut dist = ClassDistribution::default();
        for s in sentences {
            *dist.counts.entry(s.gold).or_default() += 1;
        }
        dist
    }

    pub fn from_counts(pos: usize, neg: usize, neut: usize, mix: usize) -> Self {
        use SentimentLabel::*;
        ClassDistribution {
            counts: [(Pos, pos), (Neg, neg), (Neut, neut), (Mix, mix)].into_iter().collect(),
        }
    }

    pub fn get(&self, label: SentimentLabel) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn add(&self, other: &ClassDistribution) -> ClassDistribution {
        ClassDistribution {
            counts: SentimentLabel::ALL
                .iter()
                .map(|&l| (l, self.get(l) + other.get(l)))
                .collect(),
        }
    }
}

pub fn class_distribution(corpus: &Corpus, subset: Option<Split>) -> Result<ClassDistribution> {
    match subset {
        None => Ok(ClassDistribution::from_sentences(&corpus.sentences)),
        Some(split) => {
            let assignment = corpus
                .split_assignment
                .as_ref()
                .ok_or_else(|| Error::Precondition("corpus has no split assignment".to_string()))?;
            Ok(ClassDistribution::from_sentences(
                corpus
                    .sentences
                    .iter()
                    .filter(|s| assignment.get(&s.id) == Some(&split)),
            ))
        }
    }
}

/// Splits each class 50-50 after a seeded shuffle. TRAIN receives the floor
/// half, TEST the remainder, so per-class sizes differ by at most one.
pub fn stratified_split(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    if corpus.is_empty() {
        return Err(Error::Precondition("cannot split an empty corpus".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for label in SentimentLabel::ALL {
        let mut ids: Vec<&str> = corpus
            .sentences
            .iter()
            .filter(|s| s.gold == label)
            .map(|s| s.id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        let train_len = ids.len() / 2;
        for (i, id) in ids.into_iter().enumerate() {
            let split = if i < train_len { Split::Train } else { Split::Test };
            assignment.insert(id.to_string(), split);
        }
    }
    Ok(Corpus {
        sentences: corpus.sentences.clone(),
        split_assignment: Some(assignment),
    })
}

/// Checks that the split covers every sentence exactly once and that, per
/// class, TRAIN and TEST sizes differ by at most `max_class_diff`.
pub fn validate_split(corpus: &Corpus, max_class_diff: usize) -> Result<()> {
    let assignment = corpus
        .split_assignment
        .as_ref()
        .ok_or_else(|| Error::Precondition("corpus has no split assignment".to_string()))?;
    if assignment.len() != corpus.len() {
        return Err(Error::InvalidData(format!(
            "split assignment covers {} ids but corpus has {} sentences",
            assignment.len(),
            corpus.len()
        )));
    }
    if let Some(s) = corpus.sentences.iter().find(|s| !assignment.contains_key(&s.id)) {
        return Err(Error::InvalidData(format!("sentence {:?} has no split", s.id)));
    }
    let train = class_distribution(corpus, Some(Split::Train))?;
    let test = class_distribution(corpus, Some(Split::Test))?;
    for label in SentimentLabel::ALL {
        let diff = train.get(label).abs_diff(test.get(label));
        if diff > max_class_diff {
            return Err(Error::InvalidData(format!(
                "class {label} is unbalanced: {} train vs {} test (tolerance {max_class_diff})",
                train.get(label),
                test.get(label)
            )));
        }
    }
    Ok(())
}

/// Keeps only POS and NEG sentences, preserving order.
pub fn binary_subset(sentences: &[LabeledSentence]) -> Vec<LabeledSentence> {
    sentences.iter().filter(|s| s.gold.is_polar()).cloned().collect()
}

/// Aligned text table with Train/Test/Total rows.
pub fn distribution_table(train: &ClassDistribution, test: &ClassDistribution) -> String {
    let total = train.add(test);
    let mut out = format!("{:<6}", "");
    for label in SentimentLabel::ALL {
        out.push_str(&format!("{:>7}", label.to_string()));
    }
    out.push('\n');
    for (name, dist) in [("Train", train), ("Test", test), ("Total", &total)] {
        out.push_str(&format!("{name:<6}"));
        for label in SentimentLabel::ALL {
            out.push_str(&format!("{:>7}", dist.get(label)));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_records_in_file_order() {
        let f = write_tmp(&[
            r#"{"id":"b","comment_id":"c1","text":"God lege .","gold":"pos","intensity":"strong"}"#,
            r#"{"id":"a","comment_id":"c1","text":"Lang ventetid .","gold":"neg"}"#,
            "",
            r#"{"id":"c","text":"Jeg kom inn .","gold":"neut","annotator_labels":{"A1":"neut"}}"#,
        ]);
        let corpus = load_corpus(f.path()).unwrap();
        let ids: Vec<_> = corpus.sentences.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert_eq!(corpus.sentences[0].intensity, Some(Intensity::Strong));
        assert_eq!(corpus.sentences[2].annotator_labels["A1"], SentimentLabel::Neut);
        assert!(corpus.split_assignment.is_none());
    }

    #[test]
    fn unknown_label_names_the_value() {
        let f = write_tmp(&[r#"{"id":"s1","text":"x","gold":"positive-ish"}"#]);
        match load_corpus(f.path()) {
            Err(Error::UnknownLabel(v)) => assert_eq!(v, "positive-ish"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_tmp(&[
            r#"{"id":"s1","text":"x","gold":"pos"}"#,
            r#"{"id":"s1","text":"y","gold":"neg"}"#,
        ]);
        assert!(matches!(load_corpus(f.path()), Err(Error::DuplicateId(id)) if id == "s1"));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let f = write_tmp(&[r#"{"id":"s1","text":"x","gold":"pos"}"#, "{not json"]);
        match load_corpus(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partial_split_field_is_rejected() {
        let f = write_tmp(&[
            r#"{"id":"s1","text":"x","gold":"pos","split":"train"}"#,
            r#"{"id":"s2","text":"y","gold":"neg"}"#,
        ]);
        assert!(matches!(load_corpus(f.path()), Err(Error::InvalidData(_))));
    }

    #[test]
    fn empty_corpus_distribution_is_zero() {
        let dist = class_distribution(&Corpus::default(), None).unwrap();
        assert_eq!(dist.total(), 0);
        assert!(SentimentLabel::ALL.iter().all(|&l| dist.get(l) == 0));
    }

    #[test]
    fn single_member_class_goes_to_one_side() {
        let corpus = Corpus::new(vec![LabeledSentence::new("only", "Bra .", SentimentLabel::Mix)]).unwrap();
        let split = stratified_split(&corpus, 3).unwrap();
        let train = class_distribution(&split, Some(Split::Train)).unwrap();
        let test = class_distribution(&split, Some(Split::Test)).unwrap();
        assert_eq!(train.get(SentimentLabel::Mix) + test.get(SentimentLabel::Mix), 1);
        assert_eq!(train.get(SentimentLabel::Mix), 0);
    }

    #[test]
    fn binary_subset_preserves_order() {
        let sentences = vec![
            LabeledSentence::new("1", "a", SentimentLabel::Pos),
            LabeledSentence::new("2", "b", SentimentLabel::Mix),
            LabeledSentence::new("3", "c", SentimentLabel::Neg),
        ];
        let ids: Vec<_> = binary_subset(&sentences).into_iter().map(|s| s.id).collect();
        assert_eq!(ids, ["1", "3"]);
        let neutral = vec![LabeledSentence::new("n", "x", SentimentLabel::Neut)];
        assert!(binary_subset(&neutral).is_empty());
    }

    #[test]
    fn split_of_empty_corpus_is_precondition_error() {
        assert!(matches!(
            stratified_split(&Corpus::default(), 1),
            Err(Error::Precondition(_))
        ));
    }
}
