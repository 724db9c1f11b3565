//! Identity (I), fusion-target (T) and kinship (K) vocabularies, static
//! embedding expansion, and mention spans used for masking.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{words, Apostrophes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VocabCategory {
    /// Identity words (first-person singular).
    I,
    /// Fusion-target words.
    T,
    /// Kinship words.
    K,
}

/// A seed term list plus its embedding-expanded superset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularySet {
    pub category: VocabCategory,
    pub seed_terms: BTreeSet<String>,
    pub expanded_terms: BTreeSet<String>,
}

impl VocabularySet {
    pub fn new<S: AsRef<str>>(category: VocabCategory, seeds: impl IntoIterator<Item = S>) -> Self {
        let seed_terms: BTreeSet<String> = seeds
            .into_iter()
            .map(|s| normalize_term(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        VocabularySet {
            category,
            expanded_terms: seed_terms.clone(),
            seed_terms,
        }
    }

    pub fn contains(&self, term: &str) -> bool {
        self.expanded_terms.contains(&normalize_term(term))
    }

    pub fn len(&self) -> usize {
        self.expanded_terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expanded_terms.is_empty()
    }

    /// Terms that are a single word (candidates for masked-LM scoring).
    pub fn single_word_terms(&self) -> impl Iterator<Item = &str> {
        self.expanded_terms
            .iter()
            .map(String::as_str)
            .filter(|t| !t.contains(char::is_whitespace))
    }
}

fn normalize_term(t: &str) -> String {
    t.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Seed term lists for the three vocabularies.
///
/// The fusion-target list is split into first-person plural pronouns, the
/// dataset-specific parameter terms, and generic collective nouns. Only the
/// `target_specific` list is meant to change between deployments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedLists {
    pub identity: Vec<String>,
    pub target_pronouns: Vec<String>,
    pub target_specific: Vec<String>,
    pub target_generic: Vec<String>,
    pub kinship: Vec<String>,
}

fn owned(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for SeedLists {
    fn default() -> Self {
        SeedLists {
            identity: owned(&["i", "me", "my", "mine", "myself"]),
            target_pronouns: owned(&["we", "us", "our", "ours", "ourselves"]),
            target_specific: owned(&[
                "religion", "religious", "church", "god", "college", "university", "school",
                "usa", "country", "america",
            ]),
            target_generic: owned(&["team", "class", "club", "society", "squad", "gang", "band", "crew"]),
            kinship: owned(&[
                "brother", "sister", "family", "motherland", "our blood", "fatherland", "sons",
                "daughters", "kin", "my people", "my race", "our people", "european race",
                "ancestry", "ancestor", "descendant", "fellow", "brethren", "comrades",
            ]),
        }
    }
}

impl SeedLists {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&raw).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }

    /// Replaces the parameterized part of the fusion-target list.
    pub fn with_target_terms<S: AsRef<str>>(mut self, terms: impl IntoIterator<Item = S>) -> Self {
        self.target_specific = terms.into_iter().map(|t| t.as_ref().to_string()).collect();
        self
    }

    pub fn identity_set(&self) -> VocabularySet {
        VocabularySet::new(VocabCategory::I, &self.identity)
    }

    pub fn target_set(&self) -> VocabularySet {
        VocabularySet::new(
            VocabCategory::T,
            self.target_pronouns
                .iter()
                .chain(&self.target_specific)
                .chain(&self.target_generic),
        )
    }

    pub fn kinship_set(&self) -> VocabularySet {
        VocabularySet::new(VocabCategory::K, &self.kinship)
    }
}

/// The three vocabularies used by the scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub identity: VocabularySet,
    pub target: VocabularySet,
    pub kinship: VocabularySet,
}

impl Vocabularies {
    /// Seeds only, no expansion.
    pub fn from_seeds(seeds: &SeedLists) -> Self {
        Vocabularies {
            identity: seeds.identity_set(),
            target: seeds.target_set(),
            kinship: seeds.kinship_set(),
        }
    }

    /// Expands T and K against the embedding table; I stays as seeded.
    pub fn build(seeds: &SeedLists, table: &EmbeddingTable, threshold: f64) -> Result<Self> {
        Ok(Vocabularies {
            identity: seeds.identity_set(),
            target: expand(&seeds.target_set(), table, threshold)?,
            kinship: expand(&seeds.kinship_set(), table, threshold)?,
        })
    }
}

/// Static word vectors, one per unique word.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: Option<usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a word; returns false (and keeps the old vector) for duplicates.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<bool> {
        match self.dim {
            Some(d) if d != vector.len() => {
                return Err(Error::usage(format!(
                    "vector for {word:?} has dimension {}, table has {d}",
                    vector.len()
                )))
            }
            None => self.dim = Some(vector.len()),
            _ => {}
        }
        if self.index.contains_key(word) {
            return Ok(false);
        }
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vector_at(&self, i: usize) -> &[f32] {
        let d = self.dim.unwrap_or(0);
        &self.data[i * d..(i + 1) * d]
    }

    /// Lowercase lookup first, then the raw form.
    pub fn get(&self, word: &str) -> Option<&[f32]> {
        let lower = word.to_lowercase();
        self.index
            .get(&lower)
            .or_else(|| self.index.get(word))
            .map(|&i| self.vector_at(i))
    }
}

/// Loads a plain-text embedding file: `word v1 v2 ... vd` per line. A
/// leading `count dim` header line (word2vec text format) is skipped.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut table = EmbeddingTable::new();
    for (no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        if no == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        let vector = rest
            .iter()
            .map(|v| f32::from_str(v))
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| Error::format(&name, format!("line {}: {e}", no + 1)))?;
        if vector.is_empty() {
            return Err(Error::format(&name, format!("line {}: word without vector", no + 1)));
        }
        table
            .insert(word, &vector)
            .map_err(|e| Error::format(&name, format!("line {}: {e}", no + 1)))?;
    }
    Ok(table)
}

fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na.sqrt() * nb.sqrt()))
    }
}

/// Single-hop expansion: adds every table word whose cosine similarity to
/// at least one seed exceeds `threshold`. Newly added words are not used as
/// anchors. Seeds absent from the table stay members but anchor nothing.
pub fn expand(seed: &VocabularySet, table: &EmbeddingTable, threshold: f64) -> Result<VocabularySet> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::usage(format!("expansion threshold {threshold} outside (0, 1]")));
    }
    let anchors: Vec<&[f32]> = seed
        .seed_terms
        .iter()
        .filter_map(|s| table.get(s))
        .collect();
    let mut out = seed.clone();
    if anchors.is_empty() {
        return Ok(out);
    }
    let added: Vec<String> = (0..table.len())
        .into_par_iter()
        .filter_map(|i| {
            let v = table.vector_at(i);
            anchors
                .iter()
                .filter_map(|a| cosine(v, a))
                .any(|c| c > threshold)
                .then(|| table.words()[i].to_lowercase())
        })
        .collect();
    out.expanded_terms.extend(added);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityLabel {
    /// Organizations.
    #[serde(rename = "ORG")]
    Org,
    /// Nationalities, religious or political groups.
    #[serde(rename = "NORP")]
    Norp,
    /// Geopolitical entities.
    #[serde(rename = "GPE")]
    Gpe,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 3] = [EntityLabel::Org, EntityLabel::Norp, EntityLabel::Gpe];

    pub fn parse(tag: &str) -> Option<Self> {
        match tag.trim().to_uppercase().as_str() {
            "ORG" => Some(EntityLabel::Org),
            "NORP" => Some(EntityLabel::Norp),
            "GPE" => Some(EntityLabel::Gpe),
            _ => None,
        }
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityLabel::Org => "ORG",
            EntityLabel::Norp => "NORP",
            EntityLabel::Gpe => "GPE",
        })
    }
}

/// An entity mention, as byte offsets into the document text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: EntityLabel,
}

impl EntitySpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// An entity as emitted by a tagger, before label filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntity {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// Named-entity tagger. Implementations must be callable from several
/// threads at once.
pub trait NerRuntime: Send + Sync {
    fn entities(&self, text: &str) -> Result<Vec<RawEntity>>;
}

/// Runs the tagger and keeps ORG/NORP/GPE spans (or the given subset),
/// resolving overlaps by keeping the longest span. Equal lengths keep the
/// earlier span. Output is sorted by start offset.
pub fn detect_entities(
    text: &str,
    ner: &dyn NerRuntime,
    labels: &BTreeSet<EntityLabel>,
) -> Result<Vec<EntitySpan>> {
    let spans: Vec<EntitySpan> = ner
        .entities(text)?
        .into_iter()
        .filter_map(|e| {
            let label = EntityLabel::parse(&e.label)?;
            let valid = e.start < e.end
                && e.end <= text.len()
                && text.is_char_boundary(e.start)
                && text.is_char_boundary(e.end);
            (valid && labels.contains(&label)).then_some(EntitySpan {
                start: e.start,
                end: e.end,
                label,
            })
        })
        .collect();
    Ok(resolve_overlaps(spans))
}

pub(crate) fn resolve_overlaps(mut spans: Vec<EntitySpan>) -> Vec<EntitySpan> {
    spans.sort_by(|a, b| b.len().cmp(&a.len()).then(a.start.cmp(&b.start)).then(a.label.cmp(&b.label)));
    let mut kept: Vec<EntitySpan> = Vec::new();
    for s in spans {
        if !kept.iter().any(|k| k.overlaps(&s)) {
            kept.push(s);
        }
    }
    kept.sort_by_key(|s| s.start);
    kept
}

/// Case-insensitive whole-word mentions of any vocabulary term, unioned
/// with `extra_spans` (snapped outward to word boundaries) and merged where
/// they overlap. Multiword terms match contiguous word sequences.
pub fn find_mentions(text: &str, vocab: &VocabularySet, extra_spans: &[EntitySpan]) -> Vec<Range<usize>> {
    let tokens = words(text, Apostrophes::Split);
    let lowered: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();

    let term_words: Vec<Vec<String>> = vocab
        .expanded_terms
        .iter()
        .map(|t| {
            words(t, Apostrophes::Split)
                .iter()
                .map(|w| w.text.to_lowercase())
                .collect::<Vec<_>>()
        })
        .filter(|w| !w.is_empty())
        .collect();
    let mut by_first: HashMap<&str, Vec<&[String]>> = HashMap::new();
    for tw in &term_words {
        by_first.entry(tw[0].as_str()).or_default().push(tw.as_slice());
    }

    let mut spans: Vec<Range<usize>> = Vec::new();
    for (i, w) in lowered.iter().enumerate() {
        let Some(cands) = by_first.get(w.as_str()) else { continue };
        for cand in cands {
            let n = cand.len();
            if i + n <= lowered.len() && lowered[i..i + n].iter().zip(cand.iter()).all(|(a, b)| a == b) {
                spans.push(tokens[i].span.start..tokens[i + n - 1].span.end);
            }
        }
    }

    for e in extra_spans {
        let touching: Vec<_> = tokens
            .iter()
            .filter(|t| t.span.start < e.end && e.start < t.span.end)
            .collect();
        if let (Some(first), Some(last)) = (touching.first(), touching.last()) {
            spans.push(first.span.start.min(e.start)..last.span.end.max(e.end));
        } else if e.start < e.end {
            spans.push(e.start..e.end);
        }
    }

    merge_spans(spans)
}

/// Merges overlapping ranges; output is sorted and pairwise disjoint.
pub fn merge_spans(mut spans: Vec<Range<usize>>) -> Vec<Range<usize>> {
    spans.sort_by_key(|r| (r.start, r.end));
    let mut out: Vec<Range<usize>> = Vec::with_capacity(spans.len());
    for r in spans {
        match out.last_mut() {
            Some(last) if r.start < last.end => last.end = last.end.max(r.end),
            _ => out.push(r),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_words() {
        let f = write_tmp("cat 1 0 0\ndog 0 1 0.5\n");
        let t = load_embeddings(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), Some(3));
        assert_eq!(t.get("DOG"), Some(&[0.0, 1.0, 0.5][..]));
    }

    #[test]
    fn empty_file_is_empty_table_and_expansion_is_identity() {
        let f = write_tmp("");
        let t = load_embeddings(f.path()).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.dim(), None);
        let seeds = VocabularySet::new(VocabCategory::K, ["kin", "family"]);
        assert_eq!(expand(&seeds, &t, 0.8).unwrap(), seeds);
    }

    #[test]
    fn duplicate_word_keeps_first() {
        let f = write_tmp("a 1 0\nb 0 1\na 5 5\n");
        let t = load_embeddings(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("a"), Some(&[1.0, 0.0][..]));
    }

    #[test]
    fn ragged_vectors_are_format_errors() {
        let f = write_tmp("a 1 0\nb 0 1 2\n");
        assert!(matches!(load_embeddings(f.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn word2vec_header_is_skipped() {
        let f = write_tmp("2 2\na 1 0\nb 0 1\n");
        assert_eq!(load_embeddings(f.path()).unwrap().len(), 2);
    }

    fn table(rows: &[(&str, [f32; 2])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new();
        for (w, v) in rows {
            t.insert(w, v).unwrap();
        }
        t
    }

    #[test]
    fn threshold_one_keeps_seeds() {
        let t = table(&[("kin", [1.0, 0.0]), ("clan", [0.99, 0.1]), ("tribe", [0.0, 1.0])]);
        let seeds = VocabularySet::new(VocabCategory::K, ["kin"]);
        assert_eq!(expand(&seeds, &t, 1.0).unwrap().expanded_terms, seeds.seed_terms);
        let e = expand(&seeds, &t, 0.8).unwrap();
        assert!(e.contains("clan") && !e.contains("tribe"));
    }

    #[test]
    fn seed_in_table_is_idempotent() {
        let t = table(&[("kin", [1.0, 0.0]), ("tribe", [0.0, 1.0])]);
        let seeds = VocabularySet::new(VocabCategory::K, ["kin"]);
        assert_eq!(expand(&seeds, &t, 0.8).unwrap(), seeds);
    }

    #[test]
    fn expansion_matches_pairwise_cosine_by_hand() {
        // seeds a=(1,0) and e=(0.1,0.9), |e| = 0.9055
        // b: max(cos(a,b)=0.6, cos(e,b)=0.78/0.9055=0.8614)
        // c: cos(a,c)=0.9/0.9055=0.9939;  d: cos(e,d)=0.9939
        let t = table(&[
            ("a", [1.0, 0.0]),
            ("b", [0.6, 0.8]),
            ("c", [0.9, 0.1]),
            ("d", [0.0, 1.0]),
            ("e", [0.1, 0.9]),
        ]);
        let seeds = VocabularySet::new(VocabCategory::T, ["a", "e"]);
        let got = expand(&seeds, &t, 0.8).unwrap();
        let expected: BTreeSet<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        assert_eq!(got.expanded_terms, expected);
        let got = expand(&seeds, &t, 0.9).unwrap();
        let expected: BTreeSet<String> = ["a", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        assert_eq!(got.expanded_terms, expected);
    }

    #[test]
    fn bad_threshold_is_usage_error() {
        let seeds = VocabularySet::new(VocabCategory::K, ["kin"]);
        assert!(expand(&seeds, &EmbeddingTable::new(), 0.0).is_err());
        assert!(expand(&seeds, &EmbeddingTable::new(), 1.5).is_err());
    }

    #[test]
    fn mentions_of_identity_words() {
        let v = SeedLists::default().identity_set();
        let text = "I am me";
        let m = find_mentions(text, &v, &[]);
        let got: Vec<_> = m.iter().map(|r| &text[r.clone()]).collect();
        assert_eq!(got, ["I", "me"]);
    }

    #[test]
    fn multiword_term_is_one_span() {
        let v = VocabularySet::new(VocabCategory::K, ["my people"]);
        let text = "These are My  People, truly.";
        let m = find_mentions(text, &v, &[]);
        assert_eq!(m.len(), 1);
        assert_eq!(&text[m[0].clone()], "My  People");
    }

    #[test]
    fn contraction_pronoun_is_masked() {
        let v = SeedLists::default().identity_set();
        let text = "I'm here, mine!";
        let got: Vec<_> = find_mentions(text, &v, &[]).iter().map(|r| &text[r.clone()]).collect();
        assert_eq!(got, ["I", "mine"]);
    }

    #[test]
    fn extra_spans_snap_and_merge() {
        let v = VocabularySet::new(VocabCategory::T, ["states"]);
        let text = "the United States army";
        let ent = EntitySpan { start: 5, end: 16, label: EntityLabel::Gpe };
        let m = find_mentions(text, &v, &[ent]);
        assert_eq!(m, vec![4..17]);
        // partial-word entity snaps to the whole word
        let ent = EntitySpan { start: 19, end: 21, label: EntityLabel::Org };
        let m = find_mentions(text, &VocabularySet::new(VocabCategory::T, Vec::<&str>::new()), &[ent]);
        assert_eq!(&text[m[0].clone()], "army");
    }

    struct FixedNer(Vec<RawEntity>);
    impl NerRuntime for FixedNer {
        fn entities(&self, _: &str) -> Result<Vec<RawEntity>> {
            Ok(self.0.clone())
        }
    }

    fn raw(start: usize, end: usize, label: &str) -> RawEntity {
        RawEntity { start, end, label: label.into() }
    }

    fn all_labels() -> BTreeSet<EntityLabel> {
        EntityLabel::ALL.into_iter().collect()
    }

    #[test]
    fn no_entities_yields_empty() {
        assert!(detect_entities("plain text", &FixedNer(vec![]), &all_labels()).unwrap().is_empty());
    }

    #[test]
    fn single_org_passes_through() {
        let text = "Acme Corp hired me";
        let got = detect_entities(text, &FixedNer(vec![raw(0, 9, "ORG")]), &all_labels()).unwrap();
        assert_eq!(got, vec![EntitySpan { start: 0, end: 9, label: EntityLabel::Org }]);
    }

    #[test]
    fn other_labels_are_dropped() {
        let text = "Alice went to Paris";
        let ner = FixedNer(vec![raw(0, 5, "PERSON"), raw(14, 19, "GPE")]);
        let got = detect_entities(text, &ner, &all_labels()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].label, EntityLabel::Gpe);
    }

    #[test]
    fn overlapping_spans_keep_longest() {
        let text = "the Bank of England said";
        let ner = FixedNer(vec![raw(12, 19, "GPE"), raw(4, 19, "ORG")]);
        let got = detect_entities(text, &ner, &all_labels()).unwrap();
        assert_eq!(got, vec![EntitySpan { start: 4, end: 19, label: EntityLabel::Org }]);
    }
}
