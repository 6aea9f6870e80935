use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::TokenLogProb;
use crate::corpus::LabeledSentence;
use crate::error::BackendError;
use crate::label::SentimentLabel;
use crate::promptgrid::ReplyCandidate;

pub type BackendResult = Result<Vec<TokenLogProb>, BackendError>;

/// Source of per-token log-probabilities for a completion given a context.
///
/// Implementations must be deterministic for fixed inputs and tolerate
/// concurrent calls.
pub trait ScorerBackend: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> &str;

    fn logprobs(&self, context: &str, completion: &str) -> BackendResult;

    /// Scores several pairs; backends with a batch endpoint override this.
    fn logprobs_batch(&self, items: &[(&str, &str)]) -> Vec<BackendResult> {
        items.iter().map(|(c, x)| self.logprobs(c, x)).collect()
    }
}

impl<B: ScorerBackend + ?Sized> ScorerBackend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn logprobs(&self, context: &str, completion: &str) -> BackendResult {
        (**self).logprobs(context, completion)
    }
    fn logprobs_batch(&self, items: &[(&str, &str)]) -> Vec<BackendResult> {
        (**self).logprobs_batch(items)
    }
}

impl<B: ScorerBackend + ?Sized> ScorerBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn logprobs(&self, context: &str, completion: &str) -> BackendResult {
        (**self).logprobs(context, completion)
    }
    fn logprobs_batch(&self, items: &[(&str, &str)]) -> Vec<BackendResult> {
        (**self).logprobs_batch(items)
    }
}

impl<B: ScorerBackend + ?Sized> ScorerBackend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn logprobs(&self, context: &str, completion: &str) -> BackendResult {
        (**self).logprobs(context, completion)
    }
    fn logprobs_batch(&self, items: &[(&str, &str)]) -> Vec<BackendResult> {
        (**self).logprobs_batch(items)
    }
}

fn whitespace_tokens(completion: &str, mut logprob: impl FnMut(usize, &str) -> f64) -> BackendResult {
    let tokens: Vec<TokenLogProb> = completion
        .split_whitespace()
        .enumerate()
        .map(|(i, t)| TokenLogProb::new(t, logprob(i, t)))
        .collect();
    if tokens.is_empty() {
        return Err(BackendError::new("empty completion"));
    }
    Ok(tokens)
}

fn reply_labels<'a>(replies: impl IntoIterator<Item = &'a ReplyCandidate>) -> HashMap<String, SentimentLabel> {
    replies.into_iter().map(|r| (r.text.clone(), r.label)).collect()
}

fn lookup_reply(map: &HashMap<String, SentimentLabel>, completion: &str) -> Result<SentimentLabel, BackendError> {
    map.get(completion)
        .copied()
        .ok_or_else(|| BackendError::new(format!("unknown reply {completion:?}")))
}

/// Favours the reply of the gold class of the sentence found in the context.
///
/// The target sentence is the last context line that matches a known
/// sentence text, which also holds for few-shot contexts where the target
/// query comes last. Matching replies get -0.1 per whitespace token, all
/// others -5.0, so the gold class wins under every method.
pub struct OracleBackend {
    gold: HashMap<String, SentimentLabel>,
    replies: HashMap<String, SentimentLabel>,
}

impl OracleBackend {
    pub fn new<'a>(
        sentences: impl IntoIterator<Item = &'a LabeledSentence>,
        replies: impl IntoIterator<Item = &'a ReplyCandidate>,
    ) -> Self {
        OracleBackend {
            gold: sentences.into_iter().map(|s| (s.text.clone(), s.gold)).collect(),
            replies: reply_labels(replies),
        }
    }

    fn target(&self, context: &str) -> Option<SentimentLabel> {
        context
            .lines()
            .rev()
            .find_map(|line| self.gold.get(line.trim()).copied())
    }
}

impl ScorerBackend for OracleBackend {
    fn id(&self) -> &str {
        "mock-oracle"
    }

    fn logprobs(&self, context: &str, completion: &str) -> BackendResult {
        let gold = self
            .target(context)
            .ok_or_else(|| BackendError::new("no known sentence in context"))?;
        let label = lookup_reply(&self.replies, completion)?;
        let lp = if label == gold { -0.1 } else { -5.0 };
        whitespace_tokens(completion, |_, _| lp)
    }
}

/// Prefers one class regardless of context: -0.1 per token for its replies,
/// -5.0 for everything else.
pub struct ConstantBackend {
    id: String,
    label: SentimentLabel,
    replies: HashMap<String, SentimentLabel>,
}

impl ConstantBackend {
    pub fn new<'a>(label: SentimentLabel, replies: impl IntoIterator<Item = &'a ReplyCandidate>) -> Self {
        ConstantBackend {
            id: format!("mock-constant-{}", label.as_str()),
            label,
            replies: reply_labels(replies),
        }
    }
}

impl ScorerBackend for ConstantBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn logprobs(&self, _context: &str, completion: &str) -> BackendResult {
        let lp = if lookup_reply(&self.replies, completion)? == self.label {
            -0.1
        } else {
            -5.0
        };
        whitespace_tokens(completion, |_, _| lp)
    }
}

/// Wraps a closure; handy for hand-scored fixtures.
pub struct FnBackend<F> {
    id: String,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&str, &str) -> BackendResult + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnBackend { id: id.into(), f }
    }
}

impl<F> ScorerBackend for FnBackend<F>
where
    F: Fn(&str, &str) -> BackendResult + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn logprobs(&self, context: &str, completion: &str) -> BackendResult {
        (self.f)(context, completion)
    }
}

/// Deterministic pseudo-random logprobs in [-8, 0) derived from a hash of
/// (seed, context, completion, token position).
pub struct HashNoiseBackend {
    id: String,
    seed: u64,
}

impl HashNoiseBackend {
    pub fn new(seed: u64) -> Self {
        HashNoiseBackend {
            id: format!("mock-noise-{seed}"),
            seed,
        }
    }
}

impl ScorerBackend for HashNoiseBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn logprobs(&self, context: &str, completion: &str) -> BackendResult {
        whitespace_tokens(completion, |i, _| {
            let mut h = Sha256::new();
            h.update(self.seed.to_le_bytes());
            h.update(context.as_bytes());
            h.update([0]);
            h.update(completion.as_bytes());
            h.update((i as u64).to_le_bytes());
            let bytes: [u8; 8] = h.finalize()[..8].try_into().expect("8 bytes");
            let unit = (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64;
            -8.0 * unit - 1e-3
        })
    }
}

/// Counts calls reaching the wrapped backend; each pair in a batch counts once.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicU64,
}

impl<B: ScorerBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: ScorerBackend> ScorerBackend for CountingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn logprobs(&self, context: &str, completion: &str) -> BackendResult {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.logprobs(context, completion)
    }

    fn logprobs_batch(&self, items: &[(&str, &str)]) -> Vec<BackendResult> {
        self.calls.fetch_add(items.len() as u64, Ordering::Relaxed);
        self.inner.logprobs_batch(items)
    }
}
