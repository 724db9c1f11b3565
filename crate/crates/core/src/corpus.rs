//! Dataset records, VIFS discretization, seeded splits, and
//! sentence-preserving chunking with author round-robin balancing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{word_count, SentenceSegmenter};

/// Default seed used by every seeded operation in the crate.
pub const DEFAULT_SEED: u64 = 42;

pub const VIFS_MIN: f64 = 1.0;
pub const VIFS_MAX: f64 = 7.0;

/// Coarse identity fusion level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionLabel {
    Low,
    Medium,
    High,
}

impl FusionLabel {
    pub const ALL: [FusionLabel; 3] = [FusionLabel::Low, FusionLabel::Medium, FusionLabel::High];

    /// Class index used by the tree models: low 0, medium 1, high 2.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FusionLabel::Low => "low",
            FusionLabel::Medium => "medium",
            FusionLabel::High => "high",
        }
    }
}

impl fmt::Display for FusionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "low" => Ok(FusionLabel::Low),
            "medium" => Ok(FusionLabel::Medium),
            "high" => Ok(FusionLabel::High),
            other => Err(Error::usage(format!("unknown fusion label {other:?}"))),
        }
    }
}

/// Violence-risk class of a manifesto chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLabel {
    ViolentSelfSacrificial,
    IdeologicallyExtreme,
    Moderate,
}

impl RiskLabel {
    pub const ALL: [RiskLabel; 3] = [
        RiskLabel::ViolentSelfSacrificial,
        RiskLabel::IdeologicallyExtreme,
        RiskLabel::Moderate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLabel::ViolentSelfSacrificial => "violent_self_sacrificial",
            RiskLabel::IdeologicallyExtreme => "ideologically_extreme",
            RiskLabel::Moderate => "moderate",
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a record came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Human,
    Rtt,
    Genai,
    Oversampled,
}

impl Provenance {
    pub fn is_human(&self) -> bool {
        *self == Provenance::Human
    }
}

/// One line of a dataset file.
///
/// Optional fields are omitted from the serialized form rather than written
/// as `null`. Risk-corpus records carry `author` and `risk_label`; augmented
/// records carry `provenance` and `source_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub target_category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vifs_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<FusionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_label: Option<RiskLabel>,
    #[serde(default, skip_serializing_if = "Provenance::is_human")]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            target_category: String::new(),
            vifs_score: None,
            label: None,
            author: None,
            risk_label: None,
            provenance: Provenance::Human,
            source_id: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.vifs_score = Some(score);
        self
    }

    pub fn with_label(mut self, label: FusionLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_target(mut self, target: impl Into<String>) -> Self {
        self.target_category = target.into();
        self
    }

    pub fn with_risk(mut self, author: impl Into<String>, label: RiskLabel) -> Self {
        self.author = Some(author.into());
        self.risk_label = Some(label);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::usage(format!("document {:?} has empty text", self.id)));
        }
        if let Some(s) = self.vifs_score {
            if !(VIFS_MIN..=VIFS_MAX).contains(&s) {
                return Err(Error::usage(format!(
                    "document {:?} has VIFS score {s} outside [1, 7]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Streams validated documents from a line-delimited JSON file.
pub struct DocumentReader<R> {
    lines: std::io::Lines<R>,
    path: String,
    line_no: usize,
}

impl DocumentReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(BufReader::new(file), path.display().to_string()))
    }
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R, name: impl Into<String>) -> Self {
        DocumentReader {
            lines: reader.lines(),
            path: name.into(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<Document>(&line)
                .map_err(|e| Error::format(&self.path, format!("line {}: {e}", self.line_no)))
                .and_then(|d| {
                    d.validate().map_err(|e| {
                        Error::format(&self.path, format!("line {}: {e}", self.line_no))
                    })?;
                    Ok(d)
                });
            return Some(parsed);
        }
    }
}

pub fn read_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    DocumentReader::open(path)?.collect()
}

pub fn write_documents<'a>(
    path: impl AsRef<Path>,
    docs: impl IntoIterator<Item = &'a Document>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in docs {
        let line = serde_json::to_string(d).expect("document serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mean-plus-or-minus-one-sd cutoffs fitted on a score sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationBoundaries {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub low_cut: f64,
    pub high_cut: f64,
}

impl DiscretizationBoundaries {
    pub fn fit(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::usage("cannot discretize an empty score list"));
        }
        if let Some(s) = scores.iter().find(|s| !(VIFS_MIN..=VIFS_MAX).contains(*s)) {
            return Err(Error::usage(format!("score {s} outside [1, 7]")));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        Ok(DiscretizationBoundaries {
            mean,
            sd,
            low_cut: mean - sd,
            high_cut: mean + sd,
        })
    }

    /// Strictly beyond one sd is low/high; a score on a cut is medium.
    pub fn label(&self, score: f64) -> FusionLabel {
        if score < self.low_cut {
            FusionLabel::Low
        } else if score > self.high_cut {
            FusionLabel::High
        } else {
            FusionLabel::Medium
        }
    }
}

pub fn discretize(scores: &[f64]) -> Result<(DiscretizationBoundaries, Vec<FusionLabel>)> {
    let b = DiscretizationBoundaries::fit(scores)?;
    let labels = scores.iter().map(|&s| b.label(s)).collect();
    Ok((b, labels))
}

/// Train/validation/test fractions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        for f in [train, validation, test] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::usage(format!("split fraction {f} outside [0, 1]")));
            }
        }
        if (train + validation + test - 1.0).abs() > 1e-9 {
            return Err(Error::usage(format!(
                "split fractions sum to {}, expected 1",
                train + validation + test
            )));
        }
        Ok(SplitSpec {
            train,
            validation,
            test,
            seed,
        })
    }

    /// Floor train, floor validation, remainder to test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let validation = floor(self.validation).min(n - train);
        (train, validation, n - train - validation)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Index-level split: a seeded permutation of `0..n` cut into three parts.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Splits<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let (tr, va, _) = spec.sizes(n);
    let test = idx.split_off(tr + va);
    let validation = idx.split_off(tr);
    Splits {
        train: idx,
        validation,
        test,
    }
}

pub fn split<T>(items: Vec<T>, spec: &SplitSpec) -> Result<Splits<T>> {
    if items.is_empty() {
        return Err(Error::usage("cannot split an empty dataset"));
    }
    SplitSpec::new(spec.train, spec.validation, spec.test, spec.seed)?;
    let parts = split_indices(items.len(), spec);
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut take = |ix: &[usize]| -> Vec<T> {
        ix.iter()
            .map(|&i| slots[i].take().expect("indices are disjoint"))
            .collect()
    };
    Ok(Splits {
        train: take(&parts.train),
        validation: take(&parts.validation),
        test: take(&parts.test),
    })
}

/// A run of whole sentences produced by [`chunk_text`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextChunk {
    pub sentences: Vec<String>,
    pub word_count: usize,
}

impl TextChunk {
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

pub const DEFAULT_CHUNK_WORDS: usize = 300;

/// Greedy sentence packing: sentences are appended until the next one
/// would push the chunk past `target_words`. A sentence longer than the
/// target becomes a chunk on its own. Chunks never overshoot unless they hold
/// exactly one sentence.
pub fn chunk_text(
    text: &str,
    target_words: usize,
    segmenter: &dyn SentenceSegmenter,
) -> Vec<TextChunk> {
    let mut chunks = Vec::new();
    let mut current = TextChunk {
        sentences: Vec::new(),
        word_count: 0,
    };
    for sentence in segmenter.sentences(text) {
        let wc = word_count(sentence);
        if wc == 0 {
            continue;
        }
        if !current.sentences.is_empty() && current.word_count + wc > target_words {
            chunks.push(std::mem::replace(
                &mut current,
                TextChunk {
                    sentences: Vec::new(),
                    word_count: 0,
                },
            ));
        }
        current.sentences.push(sentence.to_string());
        current.word_count += wc;
    }
    if !current.sentences.is_empty() {
        chunks.push(current);
    }
    chunks
}

/// A labeled chunk of a risk-corpus document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub source_id: String,
    pub author: String,
    pub label: RiskLabel,
    /// Position of the chunk within its source document.
    pub index: usize,
    pub text: String,
    pub word_count: usize,
}

impl Chunk {
    pub fn id(&self) -> String {
        format!("{}#{}", self.source_id, self.index)
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::new(self.id(), self.text.clone()).with_risk(&self.author, self.label);
        d.source_id = Some(self.source_id.clone());
        d
    }
}

/// Chunks a risk-corpus record; it must carry `author` and `risk_label`.
pub fn chunk_document(
    doc: &Document,
    target_words: usize,
    segmenter: &dyn SentenceSegmenter,
) -> Result<Vec<Chunk>> {
    let author = doc
        .author
        .clone()
        .ok_or_else(|| Error::usage(format!("record {:?} has no author", doc.id)))?;
    let label = doc
        .risk_label
        .ok_or_else(|| Error::usage(format!("record {:?} has no risk_label", doc.id)))?;
    Ok(chunk_text(&doc.text, target_words, segmenter)
        .into_iter()
        .enumerate()
        .map(|(index, c)| Chunk {
            source_id: doc.id.clone(),
            author: author.clone(),
            label,
            index,
            word_count: c.word_count,
            text: c.text(),
        })
        .collect())
}

pub fn class_counts(chunks: &[Chunk]) -> BTreeMap<RiskLabel, usize> {
    let mut counts = BTreeMap::new();
    for c in chunks {
        *counts.entry(c.label).or_insert(0) += 1;
    }
    counts
}

/// Downsamples every class to `per_class` chunks by cycling through the
/// class's authors (in order of first appearance), taking each author's
/// chunks in document order.
pub fn balance_round_robin(chunks: &[Chunk], per_class: usize) -> Result<Vec<Chunk>> {
    // label -> authors in first-appearance order -> chunks
    let mut by_class: BTreeMap<RiskLabel, Vec<(String, Vec<&Chunk>)>> = BTreeMap::new();
    for c in chunks {
        let authors = by_class.entry(c.label).or_default();
        match authors.iter_mut().find(|(a, _)| *a == c.author) {
            Some((_, list)) => list.push(c),
            None => authors.push((c.author.clone(), vec![c])),
        }
    }
    let mut out = Vec::with_capacity(per_class * by_class.len());
    for (label, authors) in by_class.iter_mut() {
        let available: usize = authors.iter().map(|(_, l)| l.len()).sum();
        if per_class > available {
            return Err(Error::usage(format!(
                "class {label} has {available} chunks, fewer than the requested {per_class}"
            )));
        }
        for (_, list) in authors.iter_mut() {
            list.sort_by(|a, b| (&a.source_id, a.index).cmp(&(&b.source_id, b.index)));
        }
        let mut taken = 0;
        let mut round = 0;
        while taken < per_class {
            for (_, list) in authors.iter() {
                if taken == per_class {
                    break;
                }
                if let Some(c) = list.get(round) {
                    out.push((*c).clone());
                    taken += 1;
                }
            }
            round += 1;
        }
    }
    Ok(out)
}

/// Size of the smallest class present.
pub fn minority_size(chunks: &[Chunk]) -> usize {
    class_counts(chunks).values().copied().min().unwrap_or(0)
}
