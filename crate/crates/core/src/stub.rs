//! Small deterministic runtimes for tests, examples and offline runs.
//!
//! None of these is a language model. They implement the runtime traits
//! with fixed or trivially computed outputs so the scoring pipeline can be
//! exercised and checked against hand-computed values.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Mutex;

use crate::augment::{GenerationClient, TranslationClient};
use crate::error::{Error, Result};
use crate::features::{EncoderClassifierRuntime, SentenceEncoderRuntime};
use crate::mlm::{MaskedLmRuntime, MaskedSequence, TokenId};
use crate::models::prompt::ChatMessage;
use crate::models::remote::ChatClient;
use crate::text::{words, Apostrophes};
use crate::vocab::{NerRuntime, RawEntity};

pub const UNK: &str = "[UNK]";
pub const MASK: &str = "[MASK]";

/// Word-level tokenizer shared by the stub language models. Ids 0 and 1
/// are `[UNK]` and `[MASK]`.
#[derive(Debug, Clone)]
pub struct WordVocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl WordVocab {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut v = WordVocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.push(UNK);
        v.push(MASK);
        for w in words {
            v.push(&w.as_ref().to_lowercase());
        }
        v
    }

    fn push(&mut self, w: &str) -> TokenId {
        if let Some(&id) = self.index.get(w) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(w.to_string());
        self.index.insert(w.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(&word.to_lowercase()).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn mask_id(&self) -> TokenId {
        1
    }

    /// One token per word; every span collapses to a single mask token.
    pub fn encode_masked(&self, text: &str, spans: &[Range<usize>]) -> Result<MaskedSequence> {
        let mut spans: Vec<Range<usize>> = spans.to_vec();
        spans.sort_by_key(|s| s.start);
        for pair in spans.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::usage("mask spans overlap"));
            }
        }
        let mut ids = Vec::new();
        let mut mask_positions = Vec::new();
        let mut next = 0;
        let mut emitted = false;
        for w in words(text, Apostrophes::Split) {
            while next < spans.len() && spans[next].end <= w.span.start {
                if !emitted {
                    mask_positions.push(ids.len());
                    ids.push(self.mask_id());
                }
                next += 1;
                emitted = false;
            }
            if next < spans.len() && spans[next].start < w.span.end {
                if !emitted {
                    mask_positions.push(ids.len());
                    ids.push(self.mask_id());
                    emitted = true;
                }
                continue;
            }
            ids.push(self.id(w.text).unwrap_or(0));
        }
        for _ in next..spans.len() {
            if !emitted {
                mask_positions.push(ids.len());
                ids.push(self.mask_id());
            }
            emitted = false;
        }
        Ok(MaskedSequence { ids, mask_positions })
    }
}

/// Returns fixed distributions: the k-th mask of a `predict` call reads
/// table `k % tables.len()`. Mass not assigned in a table goes to a filler
/// token outside the listed words.
#[derive(Debug, Clone)]
pub struct FixedTableMlm {
    vocab: WordVocab,
    tables: Vec<Vec<f32>>,
}

const FILLER: &str = "[FILL]";

impl FixedTableMlm {
    pub fn new<'a>(words: impl IntoIterator<Item = &'a str>, tables: Vec<Vec<(&str, f32)>>) -> Self {
        let words: Vec<&str> = words.into_iter().collect();
        let vocab = WordVocab::new(std::iter::once(FILLER).chain(words.iter().copied()));
        assert!(!tables.is_empty(), "at least one table");
        let filler = vocab.id(FILLER).expect("filler") as usize;
        let tables = tables
            .into_iter()
            .map(|t| {
                let mut d = vec![0f32; vocab.len()];
                for (w, p) in t {
                    let id = vocab.id(w).unwrap_or_else(|| panic!("{w} not in vocabulary"));
                    d[id as usize] = p;
                }
                let rest = 1.0 - d.iter().sum::<f32>();
                assert!(rest >= -1e-6, "table mass exceeds 1");
                d[filler] = rest.max(0.0);
                d
            })
            .collect();
        FixedTableMlm { vocab, tables }
    }
}

impl MaskedLmRuntime for FixedTableMlm {
    fn single_token_id(&self, word: &str) -> Option<TokenId> {
        self.vocab.id(word).filter(|&id| id > 1)
    }

    fn encode_masked(&self, text: &str, spans: &[Range<usize>]) -> Result<MaskedSequence> {
        self.vocab.encode_masked(text, spans)
    }

    fn predict(&self, _ids: &[TokenId], mask_positions: &[usize]) -> Result<Vec<Vec<f32>>> {
        Ok((0..mask_positions.len())
            .map(|k| self.tables[k % self.tables.len()].clone())
            .collect())
    }
}

/// Uniform distribution over its whole vocabulary (specials included).
#[derive(Debug, Clone)]
pub struct UniformMlm {
    vocab: WordVocab,
}

impl UniformMlm {
    pub fn new<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        UniformMlm {
            vocab: WordVocab::new(words),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

impl MaskedLmRuntime for UniformMlm {
    fn single_token_id(&self, word: &str) -> Option<TokenId> {
        self.vocab.id(word).filter(|&id| id > 1)
    }

    fn encode_masked(&self, text: &str, spans: &[Range<usize>]) -> Result<MaskedSequence> {
        self.vocab.encode_masked(text, spans)
    }

    fn predict(&self, _ids: &[TokenId], mask_positions: &[usize]) -> Result<Vec<Vec<f32>>> {
        let p = 1.0 / self.vocab.len() as f32;
        Ok(vec![vec![p; self.vocab.len()]; mask_positions.len()])
    }
}

/// A copy model: each mask predicts the words around it, weighted by
/// `1 / distance`, over a flat prior. Documents whose first-person words
/// sit close to their group words therefore score higher proximities.
#[derive(Debug, Clone)]
pub struct ContextMlm {
    vocab: WordVocab,
    /// Logit added per unit of proximity weight.
    pub boost: f32,
    /// Context radius in tokens.
    pub radius: usize,
}

impl ContextMlm {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        ContextMlm {
            vocab: WordVocab::new(words),
            boost: 4.0,
            radius: 8,
        }
    }

    pub fn vocab(&self) -> &WordVocab {
        &self.vocab
    }
}

impl MaskedLmRuntime for ContextMlm {
    fn single_token_id(&self, word: &str) -> Option<TokenId> {
        self.vocab.id(word).filter(|&id| id > 1)
    }

    fn encode_masked(&self, text: &str, spans: &[Range<usize>]) -> Result<MaskedSequence> {
        self.vocab.encode_masked(text, spans)
    }

    fn predict(&self, ids: &[TokenId], mask_positions: &[usize]) -> Result<Vec<Vec<f32>>> {
        let n = self.vocab.len();
        Ok(mask_positions
            .iter()
            .map(|&p| {
                let mut logits = vec![0f32; n];
                logits[0] = f32::NEG_INFINITY;
                logits[1] = f32::NEG_INFINITY;
                let lo = p.saturating_sub(self.radius);
                let hi = (p + self.radius + 1).min(ids.len());
                for (j, &id) in ids.iter().enumerate().take(hi).skip(lo) {
                    if j != p && id > 1 {
                        logits[id as usize] += self.boost / j.abs_diff(p) as f32;
                    }
                }
                softmax(&logits)
            })
            .collect())
    }
}

fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Signed feature hashing of lowercase words, L2-normalised.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    dim: usize,
}

impl HashingEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        HashingEncoder { dim }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl SentenceEncoderRuntime for HashingEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f32>> {
        let mut v = vec![0f32; self.dim];
        for w in words(text, Apostrophes::Keep) {
            let h = fnv1a(w.text.to_lowercase().as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Returns the same probabilities for every text.
#[derive(Debug, Clone, Copy)]
pub struct FixedClassifier {
    probs: [f64; 3],
}

impl FixedClassifier {
    pub fn new(probs: [f64; 3]) -> Self {
        FixedClassifier { probs }
    }

    pub fn uniform() -> Self {
        FixedClassifier::new([1.0 / 3.0; 3])
    }
}

impl EncoderClassifierRuntime for FixedClassifier {
    fn class_probabilities(&self, _text: &str) -> Result<[f64; 3]> {
        Ok(self.probs)
    }
}

/// Case-insensitive whole-word phrase lookup.
#[derive(Debug, Clone, Default)]
pub struct GazetteerNer {
    entries: Vec<(Vec<String>, String)>,
}

impl GazetteerNer {
    pub fn new<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        GazetteerNer {
            entries: entries
                .into_iter()
                .map(|(phrase, label)| {
                    let toks = words(phrase, Apostrophes::Keep)
                        .into_iter()
                        .map(|w| w.text.to_lowercase())
                        .collect();
                    (toks, label.to_string())
                })
                .collect(),
        }
    }
}

impl NerRuntime for GazetteerNer {
    fn entities(&self, text: &str) -> Result<Vec<RawEntity>> {
        let toks = words(text, Apostrophes::Keep);
        let lower: Vec<String> = toks.iter().map(|w| w.text.to_lowercase()).collect();
        let mut out = Vec::new();
        for (phrase, label) in &self.entries {
            if phrase.is_empty() || phrase.len() > lower.len() {
                continue;
            }
            for i in 0..=lower.len() - phrase.len() {
                if lower[i..i + phrase.len()] == phrase[..] {
                    out.push(RawEntity {
                        start: toks[i].span.start,
                        end: toks[i + phrase.len() - 1].span.end,
                        label: label.clone(),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Replays canned replies in order, repeating the last one.
#[derive(Debug)]
pub struct ScriptedChat {
    replies: Vec<String>,
    next: Mutex<usize>,
}

impl ScriptedChat {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        assert!(!replies.is_empty(), "at least one reply");
        ScriptedChat {
            replies,
            next: Mutex::new(0),
        }
    }
}

impl ChatClient for ScriptedChat {
    fn complete(&self, _messages: &[ChatMessage]) -> Result<String> {
        let mut i = self.next.lock().expect("not poisoned");
        let reply = self.replies[(*i).min(self.replies.len() - 1)].clone();
        *i += 1;
        Ok(reply)
    }
}

/// Round trip that returns the input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoTranslator;

impl TranslationClient for EchoTranslator {
    fn round_trip(&self, text: &str, _pivot: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

/// Replays canned essays in order, repeating the last one.
#[derive(Debug)]
pub struct ScriptedGenerator {
    replies: Vec<String>,
    next: Mutex<usize>,
}

impl ScriptedGenerator {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        assert!(!replies.is_empty(), "at least one reply");
        ScriptedGenerator {
            replies,
            next: Mutex::new(0),
        }
    }
}

impl GenerationClient for ScriptedGenerator {
    fn generate(&self, _prompt: &str) -> Result<String> {
        let mut i = self.next.lock().expect("not poisoned");
        let reply = self.replies[(*i).min(self.replies.len() - 1)].clone();
        *i += 1;
        Ok(reply)
    }
}
