//! Coded prompt grid and the class-mapped reply candidates for each prompt.
//!
//! A grid configuration lists base prompts together with the variants to
//! expand them into. Each variant is identified by a [`PromptCode`] such as
//! `8-2-4-2`: base prompt 8, sentence before the question, all four classes
//! mentioned, positive word first.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::SentimentLabel;

const DEFAULT_GRID: &str = include_str!("../grid/default.toml");

/// Where the input sentence goes relative to the question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    SentenceAfter = 1,
    SentenceBefore = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mentions {
    None = 0,
    Two = 2,
    Four = 4,
}

/// Relative order of the positive and negative class words in the question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassOrder {
    PosLast = 1,
    PosFirst = 2,
}

/// Grammatical gender that replies and class words agree with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Masculine,
    Neuter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyForm {
    /// "Setningen er X ." / "Sentimentet er X ."
    Noun,
    /// "Den er X ." / "Det er X ."
    Pronoun,
    /// "X ."
    Bare,
    /// "Jeg vil si X ."
    Opinion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PromptCode {
    pub base: u8,
    pub placement: Placement,
    pub mentions: Mentions,
    pub order: Option<ClassOrder>,
}

impl fmt::Display for PromptCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.base, self.placement as u8, self.mentions as u8)?;
        if let Some(order) = self.order {
            write!(f, "-{}", order as u8)?;
        }
        Ok(())
    }
}

impl FromStr for PromptCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Config(format!("malformed prompt code {s:?}: {reason}"));
        let parts: Vec<&str> = s.split('-').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad("expected 3 or 4 dash-separated digits"));
        }
        let digit = |p: &str| p.parse::<u8>().map_err(|_| bad("non-numeric part"));
        let base = digit(parts[0])?;
        if !(1..=9).contains(&base) {
            return Err(bad("base prompt must be 1-9"));
        }
        let placement = match digit(parts[1])? {
            1 => Placement::SentenceAfter,
            2 => Placement::SentenceBefore,
            _ => return Err(bad("placement must be 1 or 2")),
        };
        let mentions = match digit(parts[2])? {
            0 => Mentions::None,
            2 => Mentions::Two,
            4 => Mentions::Four,
            _ => return Err(bad("mentions must be 0, 2 or 4")),
        };
        let order = match parts.get(3).map(|p| digit(p)).transpose()? {
            None => None,
            Some(1) => Some(ClassOrder::PosLast),
            Some(2) => Some(ClassOrder::PosFirst),
            Some(_) => return Err(bad("order must be 1 or 2")),
        };
        Ok(PromptCode {
            base,
            placement,
            mentions,
            order,
        })
    }
}

impl Serialize for PromptCode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PromptCode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One admissible completion and the class it maps to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplyCandidate {
    pub text: String,
    pub form: ReplyForm,
    pub gender: Gender,
    pub label: SentimentLabel,
}

/// A rendered prompt: the question for one code plus its reply set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub code: PromptCode,
    pub question: String,
    pub placement: Placement,
    pub separator: String,
    pub gender: Gender,
    /// Effective positive/negative order, when the question mentions classes.
    pub class_order: Option<ClassOrder>,
    pub replies: Vec<ReplyCandidate>,
}

pub const SENTENCE_SLOT: &str = "{sentence}";

impl PromptSpec {
    /// The prompt with a `{sentence}` slot where the input goes.
    pub fn rendered_template(&self) -> String {
        self.join(SENTENCE_SLOT)
    }

    fn join(&self, sentence: &str) -> String {
        match self.placement {
            Placement::SentenceBefore => format!("{sentence}{}{}", self.separator, self.question),
            Placement::SentenceAfter => format!("{}{}{sentence}", self.question, self.separator),
        }
    }
}

/// Places `sentence_text` before or after the question according to the
/// prompt's placement.
pub fn render(spec: &PromptSpec, sentence_text: &str) -> Result<String> {
    if sentence_text.trim().is_empty() {
        return Err(Error::Precondition("cannot render an empty sentence".to_string()));
    }
    Ok(spec.join(sentence_text))
}

/// The reply candidates of a prompt in canonical order (form-major, then
/// class in canonical class order).
pub fn generate_replies(spec: &PromptSpec) -> Vec<ReplyCandidate> {
    spec.replies.clone()
}

/// Maps each reply text to its class. Fails on duplicate texts.
pub fn reply_class_map(candidates: &[ReplyCandidate]) -> Result<HashMap<String, SentimentLabel>> {
    let mut map = HashMap::with_capacity(candidates.len());
    for c in candidates {
        if map.insert(c.text.clone(), c.label).is_some() {
            return Err(Error::InvalidData(format!("duplicate reply text {:?}", c.text)));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InherentOrder {
    pub two: ClassOrder,
    pub four: ClassOrder,
}

impl Default for InherentOrder {
    fn default() -> Self {
        InherentOrder {
            two: ClassOrder::PosFirst,
            four: ClassOrder::PosLast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassWords {
    pub pos: String,
    pub neg: String,
    pub neut: String,
    pub mix: String,
}

impl ClassWords {
    pub fn get(&self, label: SentimentLabel) -> &str {
        match label {
            SentimentLabel::Pos => &self.pos,
            SentimentLabel::Neg => &self.neg,
            SentimentLabel::Neut => &self.neut,
            SentimentLabel::Mix => &self.mix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderedClassWords {
    pub masculine: ClassWords,
    pub neuter: ClassWords,
}

impl GenderedClassWords {
    pub fn get(&self, gender: Gender) -> &ClassWords {
        match gender {
            Gender::Masculine => &self.masculine,
            Gender::Neuter => &self.neuter,
        }
    }
}

/// Reply template for one form. `{class}` is replaced with the class word,
/// `{Class}` with the capitalised class word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyFormConfig {
    pub form: ReplyForm,
    pub masculine: String,
    pub neuter: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasePrompt {
    pub id: u8,
    pub agreement: Gender,
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mention_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inherent_order: Option<InherentOrder>,
    /// "placement-mentions[-order]" strings.
    pub variants: Vec<String>,
}

impl BasePrompt {
    /// Whether the base wording already names the positive and negative class.
    pub fn mentions_binary(&self) -> bool {
        self.template.contains("{classes}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_separator")]
    pub separator: String,
    #[serde(default = "default_true")]
    pub tokenized_replies: bool,
    #[serde(default)]
    pub inherent_order: InherentOrder,
    pub class_words: GenderedClassWords,
    pub reply_forms: Vec<ReplyFormConfig>,
    pub base: Vec<BasePrompt>,
}

fn default_separator() -> String {
    "\n".to_string()
}

fn default_true() -> bool {
    true
}

impl GridConfig {
    /// The shipped 48-prompt configuration.
    pub fn default_grid() -> Self {
        Self::from_toml_str(DEFAULT_GRID).expect("shipped grid configuration parses")
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_GRID
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: GridConfig = toml::from_str(s).map_err(|e| Error::Config(format!("grid configuration: {e}")))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn check(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for b in &self.base {
            if !(1..=9).contains(&b.id) {
                return Err(Error::Config(format!("base prompt id {} outside 1-9", b.id)));
            }
            if !ids.insert(b.id) {
                return Err(Error::Config(format!("base prompt id {} listed twice", b.id)));
            }
            if !b.mentions_binary() && b.mention_template.is_none() && !b.variants.is_empty() {
                let needs_classes = b.variants.iter().any(|v| !v.ends_with("-0"));
                if needs_classes {
                    return Err(Error::Config(format!(
                        "base prompt {} has class-mentioning variants but no mention_template",
                        b.id
                    )));
                }
            }
        }
        if self.reply_forms.is_empty() {
            return Err(Error::Config("no reply forms configured".to_string()));
        }
        Ok(())
    }

    fn replies_for(&self, gender: Gender) -> Vec<ReplyCandidate> {
        let words = self.class_words.get(gender);
        let mut out = Vec::with_capacity(self.reply_forms.len() * 4);
        for form in &self.reply_forms {
            let template = match gender {
                Gender::Masculine => &form.masculine,
                Gender::Neuter => &form.neuter,
            };
            for label in SentimentLabel::ALL {
                let word = words.get(label);
                let mut text = template.replace("{Class}", &capitalize(word)).replace("{class}", word);
                if !self.tokenized_replies {
                    text = detokenize(&text);
                }
                out.push(ReplyCandidate {
                    text,
                    form: form.form,
                    gender,
                    label,
                });
            }
        }
        out
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn detokenize(text: &str) -> String {
    let mut out = text.to_string();
    for punct in [".", ",", "!", "?", ":"] {
        out = out.replace(&format!(" {punct}"), punct);
    }
    out
}

fn class_list(words: &ClassWords, mentions: Mentions, order: ClassOrder) -> String {
    let (first, second) = match order {
        ClassOrder::PosFirst => (&words.pos, &words.neg),
        ClassOrder::PosLast => (&words.neg, &words.pos),
    };
    match mentions {
        Mentions::None => String::new(),
        Mentions::Two => format!("{first} eller {second}"),
        Mentions::Four => format!("{first}, {second}, {} eller {}", words.mix, words.neut),
    }
}

fn parse_variant(base: u8, variant: &str) -> Result<PromptCode> {
    format!("{base}-{variant}").parse()
}

/// Builds the question text and effective class order for one code.
fn build_question(config: &GridConfig, base: &BasePrompt, code: PromptCode) -> Result<(String, Option<ClassOrder>)> {
    let invalid = |reason: String| Error::InvalidCombination {
        code: code.to_string(),
        reason,
    };
    let inherent = base.inherent_order.unwrap_or(config.inherent_order);
    match code.mentions {
        Mentions::None => {
            if base.mentions_binary() {
                return Err(invalid(format!(
                    "base prompt {} already mentions the positive and negative class",
                    base.id
                )));
            }
            if code.order.is_some() {
                return Err(invalid("an order digit needs class mentions".to_string()));
            }
            Ok((base.template.clone(), None))
        }
        mentions => {
            let inherent_order = match mentions {
                Mentions::Two => inherent.two,
                _ => inherent.four,
            };
            if code.order == Some(inherent_order) {
                return Err(invalid(
                    "order digit equals the inherent order; use the 3-digit code".to_string(),
                ));
            }
            let order = code.order.unwrap_or(inherent_order);
            let template = if base.mentions_binary() {
                &base.template
            } else {
                base.mention_template
                    .as_ref()
                    .ok_or_else(|| invalid(format!("base prompt {} has no mention_template", base.id)))?
            };
            let words = config.class_words.get(base.agreement);
            let question = template.replace("{classes}", &class_list(words, mentions, order));
            Ok((question, Some(order)))
        }
    }
}

/// Expands every configured variant into a [`PromptSpec`], in configuration
/// order. Codes must be unique.
pub fn expand_grid(config: &GridConfig) -> Result<Vec<PromptSpec>> {
    let masculine = config.replies_for(Gender::Masculine);
    let neuter = config.replies_for(Gender::Neuter);
    reply_class_map(&masculine)?;
    reply_class_map(&neuter)?;

    let mut specs = Vec::new();
    let mut seen = HashSet::new();
    for base in &config.base {
        for variant in &base.variants {
            let code = parse_variant(base.id, variant)?;
            if !seen.insert(code) {
                return Err(Error::Config(format!("prompt code {code} listed twice")));
            }
            let (question, class_order) = build_question(config, base, code)?;
            let replies = match base.agreement {
                Gender::Masculine => masculine.clone(),
                Gender::Neuter => neuter.clone(),
            };
            specs.push(PromptSpec {
                code,
                question,
                placement: code.placement,
                separator: config.separator.clone(),
                gender: base.agreement,
                class_order,
                replies,
            });
        }
    }
    Ok(specs)
}

/// Keeps the specs whose code appears in `codes`, in grid order. Every
/// requested code must exist.
pub fn filter_specs(specs: &[PromptSpec], codes: &[String]) -> Result<Vec<PromptSpec>> {
    if codes.is_empty() {
        return Ok(specs.to_vec());
    }
    let wanted: Vec<PromptCode> = codes.iter().map(|c| c.parse()).collect::<Result<_>>()?;
    for code in &wanted {
        if !specs.iter().any(|s| s.code == *code) {
            return Err(Error::Config(format!("prompt code {code} is not in the grid")));
        }
    }
    Ok(specs.iter().filter(|s| wanted.contains(&s.code)).cloned().collect())
}

/// Audit manifest entry: the rendered template and its replies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub rendered_template: String,
    pub replies: Vec<ReplyCandidate>,
}

/// `code -> rendered template + replies` for human review before any model call.
pub fn prompt_manifest(specs: &[PromptSpec]) -> BTreeMap<String, ManifestEntry> {
    specs
        .iter()
        .map(|s| {
            (
                s.code.to_string(),
                ManifestEntry {
                    rendered_template: s.rendered_template(),
                    replies: s.replies.clone(),
                },
            )
        })
        .collect()
}
