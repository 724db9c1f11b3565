//! Dictionary-based indices: affiliation and cognitive-processing rates,
//! the Unquestioning Affiliation Index (UAI) and its sample-independent
//! variant (nUAI), and Violence Risk Index (VRI) category scores.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::RiskLabel;
use crate::error::{Error, Result};
use crate::text::{words, Apostrophes, RuleSegmenter, SentenceSegmenter};

/// A word list. An entry ending in `*` matches any word with that prefix;
/// entries with spaces match contiguous word sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub name: String,
    exact: HashSet<String>,
    stems: Vec<String>,
    phrases: Vec<Vec<Entry>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Entry {
    Word(String),
    Stem(String),
}

impl Entry {
    fn parse(w: &str) -> Self {
        match w.strip_suffix('*') {
            Some(stem) => Entry::Stem(stem.to_string()),
            None => Entry::Word(w.to_string()),
        }
    }

    fn matches(&self, token: &str) -> bool {
        match self {
            Entry::Word(w) => w == token,
            Entry::Stem(s) => token.starts_with(s.as_str()),
        }
    }
}

impl Lexicon {
    pub fn new<S: AsRef<str>>(name: impl Into<String>, entries: impl IntoIterator<Item = S>) -> Result<Self> {
        let name = name.into();
        let mut lex = Lexicon {
            name: name.clone(),
            exact: HashSet::new(),
            stems: Vec::new(),
            phrases: Vec::new(),
        };
        for raw in entries {
            let entry = raw.as_ref().trim().to_lowercase();
            if entry.is_empty() {
                continue;
            }
            let parts: Vec<&str> = entry.split_whitespace().collect();
            if parts.iter().any(|p| p.trim_end_matches('*').contains('*') || *p == "*") {
                return Err(Error::usage(format!(
                    "lexicon {name}: wildcard only allowed as a trailing stem marker in {entry:?}"
                )));
            }
            if parts.len() > 1 {
                lex.phrases.push(parts.iter().map(|p| Entry::parse(p)).collect());
            } else if let Some(stem) = entry.strip_suffix('*') {
                lex.stems.push(stem.to_string());
            } else {
                lex.exact.insert(entry);
            }
        }
        if lex.is_empty() {
            return Err(Error::usage(format!("lexicon {name} has no entries")));
        }
        Ok(lex)
    }

    /// One entry per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let entries = raw
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        Lexicon::new(name, entries)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty() && self.stems.is_empty() && self.phrases.is_empty()
    }

    pub fn matches_word(&self, token: &str) -> bool {
        self.exact.contains(token) || self.stems.iter().any(|s| token.starts_with(s.as_str()))
    }

    /// Marks every token covered by a match.
    fn covered(&self, tokens: &[String]) -> Vec<bool> {
        let mut covered: Vec<bool> = tokens.iter().map(|t| self.matches_word(t)).collect();
        for phrase in &self.phrases {
            let n = phrase.len();
            for i in 0..tokens.len().saturating_sub(n - 1) {
                if phrase.iter().zip(&tokens[i..i + n]).all(|(e, t)| e.matches(t)) {
                    covered[i..i + n].iter_mut().for_each(|c| *c = true);
                }
            }
        }
        covered
    }
}

fn lower_tokens(text: &str) -> Vec<String> {
    words(text, Apostrophes::Keep)
        .into_iter()
        .map(|w| w.text.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateUnit {
    Word,
    Sentence,
}

/// Matched words over total words, or matching sentences over total
/// sentences. Empty text rates 0.
pub fn rate(text: &str, lexicon: &Lexicon, unit: RateUnit) -> f64 {
    rate_with(text, lexicon, unit, &RuleSegmenter::default())
}

pub fn rate_with(text: &str, lexicon: &Lexicon, unit: RateUnit, segmenter: &dyn SentenceSegmenter) -> f64 {
    match unit {
        RateUnit::Word => {
            let tokens = lower_tokens(text);
            if tokens.is_empty() {
                return 0.0;
            }
            let hits = lexicon.covered(&tokens).into_iter().filter(|c| *c).count();
            hits as f64 / tokens.len() as f64
        }
        RateUnit::Sentence => {
            let sentences = segmenter.sentences(text);
            if sentences.is_empty() {
                return 0.0;
            }
            let hits = sentences
                .iter()
                .filter(|s| lexicon.covered(&lower_tokens(s)).into_iter().any(|c| c))
                .count();
            hits as f64 / sentences.len() as f64
        }
    }
}

/// Per-word rates of affiliation (A) and cognitive-processing (C) words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexicalCounts {
    pub affiliation_rate: f64,
    pub cogproc_rate: f64,
}

impl LexicalCounts {
    pub fn measure(text: &str, affiliation: &Lexicon, cogproc: &Lexicon) -> Self {
        LexicalCounts {
            affiliation_rate: rate(text, affiliation, RateUnit::Word),
            cogproc_rate: rate(text, cogproc, RateUnit::Word),
        }
    }

    /// Naive UAI: `A - C`, independent of any sample.
    pub fn nuai(&self) -> f64 {
        self.affiliation_rate - self.cogproc_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UaiScores {
    /// `z(A) - z(C)` against the batch.
    pub uai: f64,
    /// `A - C`.
    pub nuai: f64,
    pub affiliation: f64,
    pub cogproc: f64,
}

fn zscores(xs: &[f64], what: &str) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        log::warn!("{what} has zero variance across the batch; its z-score is set to 0");
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / sd).collect()
}

/// UAI for a batch, z-scoring with the batch's population sd. A rate with
/// zero variance contributes 0 for every document.
pub fn uai_batch(sample: &[LexicalCounts]) -> Result<Vec<UaiScores>> {
    if sample.len() < 2 {
        return Err(Error::usage("UAI needs a batch of at least two documents"));
    }
    let a: Vec<f64> = sample.iter().map(|c| c.affiliation_rate).collect();
    let c: Vec<f64> = sample.iter().map(|c| c.cogproc_rate).collect();
    let za = zscores(&a, "affiliation rate");
    let zc = zscores(&c, "cognitive-processing rate");
    Ok(sample
        .iter()
        .zip(za.iter().zip(&zc))
        .map(|(counts, (za, zc))| UaiScores {
            uai: za - zc,
            nuai: counts.nuai(),
            affiliation: counts.affiliation_rate,
            cogproc: counts.cogproc_rate,
        })
        .collect())
}

pub const VRI_A_LEN: usize = 4;
pub const VRI_B_LEN: usize = 3;
pub const VRI_C_LEN: usize = 5;
pub const VRI_WEIGHTS: [f64; 3] = [0.54, 0.25, 0.21];

/// Denominator stand-in when the identification-identity rate is zero.
pub const IDENTIFICATION_EPSILON: f64 = 1e-6;
pub const IDENTIFICATION_CAP: f64 = 1e6;

/// VRI category scores: four highly significant (A), three significant (B)
/// and five other relevant (C) categories, plus the identification ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VriCategoryScores {
    pub a_scores: Vec<f64>,
    pub b_scores: Vec<f64>,
    pub c_scores: Vec<f64>,
    pub identification: f64,
}

impl VriCategoryScores {
    pub fn uniform(value: f64) -> Self {
        VriCategoryScores {
            a_scores: vec![value; VRI_A_LEN],
            b_scores: vec![value; VRI_B_LEN],
            c_scores: vec![value; VRI_C_LEN],
            identification: 0.0,
        }
    }

    /// The twelve category scores in A, B, C order.
    pub fn categories(&self) -> impl Iterator<Item = f64> + '_ {
        self.a_scores.iter().chain(&self.b_scores).chain(&self.c_scores).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VriClass {
    Low,
    Medium,
    High,
    VeryHigh,
}

impl VriClass {
    /// `< 10` low, `[10, 30]` medium, `(30, 70]` high, `> 70` very high.
    pub fn from_vri(vri: f64) -> Self {
        if vri < 10.0 {
            VriClass::Low
        } else if vri <= 30.0 {
            VriClass::Medium
        } else if vri <= 70.0 {
            VriClass::High
        } else {
            VriClass::VeryHigh
        }
    }

    pub fn risk(self) -> RiskLabel {
        match self {
            VriClass::Low | VriClass::Medium => RiskLabel::Moderate,
            VriClass::High => RiskLabel::IdeologicallyExtreme,
            VriClass::VeryHigh => RiskLabel::ViolentSelfSacrificial,
        }
    }
}

impl fmt::Display for VriClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VriClass::Low => "low",
            VriClass::Medium => "medium",
            VriClass::High => "high",
            VriClass::VeryHigh => "very_high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VriResult {
    pub a_bar: f64,
    pub b_bar: f64,
    pub c_bar: f64,
    pub vri: f64,
    pub vri_class: VriClass,
    pub mapped_risk: RiskLabel,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `VRI = 100 * (0.54 * mean(A) + 0.25 * mean(B) + 0.21 * mean(C))`.
pub fn vri_aggregate(scores: &VriCategoryScores) -> Result<VriResult> {
    let lens = (scores.a_scores.len(), scores.b_scores.len(), scores.c_scores.len());
    if lens != (VRI_A_LEN, VRI_B_LEN, VRI_C_LEN) {
        return Err(Error::usage(format!(
            "VRI expects 4/3/5 category scores, got {}/{}/{}",
            lens.0, lens.1, lens.2
        )));
    }
    let (a_bar, b_bar, c_bar) = (mean(&scores.a_scores), mean(&scores.b_scores), mean(&scores.c_scores));
    let vri = 100.0 * (VRI_WEIGHTS[0] * a_bar + VRI_WEIGHTS[1] * b_bar + VRI_WEIGHTS[2] * c_bar);
    let vri_class = VriClass::from_vri(vri);
    Ok(VriResult {
        a_bar,
        b_bar,
        c_bar,
        vri,
        vri_class,
        mapped_risk: vri_class.risk(),
    })
}

/// Ratio of two category rates with a guarded denominator.
pub fn identification_ratio(group_rate: f64, identity_rate: f64) -> f64 {
    if group_rate == 0.0 {
        return 0.0;
    }
    let denom = if identity_rate == 0.0 { IDENTIFICATION_EPSILON } else { identity_rate };
    (group_rate / denom).min(IDENTIFICATION_CAP)
}

/// Named category lexicons for the VRI groups.
#[derive(Debug, Clone)]
pub struct VriLexicons {
    pub a: Vec<Lexicon>,
    pub b: Vec<Lexicon>,
    pub c: Vec<Lexicon>,
    /// Index into `a` of the fusion category.
    pub fusion_index: usize,
    pub identification_group: Lexicon,
    pub identification_identity: Lexicon,
}

impl VriLexicons {
    /// Category scores are proportions of sentences containing a term.
    pub fn score(&self, text: &str) -> VriCategoryScores {
        let seg = RuleSegmenter::default();
        let sent = |l: &Lexicon| rate_with(text, l, RateUnit::Sentence, &seg);
        VriCategoryScores {
            a_scores: self.a.iter().map(sent).collect(),
            b_scores: self.b.iter().map(sent).collect(),
            c_scores: self.c.iter().map(sent).collect(),
            identification: identification_ratio(
                sent(&self.identification_group),
                sent(&self.identification_identity),
            ),
        }
    }

    pub fn fusion_score(&self, scores: &VriCategoryScores) -> f64 {
        scores.a_scores[self.fusion_index]
    }
}

/// All dictionaries the feature pipeline needs.
#[derive(Debug, Clone)]
pub struct LexiconBundle {
    pub affiliation: Lexicon,
    pub cogproc: Lexicon,
    pub vri: VriLexicons,
}

/// Lexical measurements for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalProfile {
    pub counts: LexicalCounts,
    pub vri: VriCategoryScores,
    pub vri_fusion: f64,
}

impl LexiconBundle {
    pub fn profile(&self, text: &str) -> LexicalProfile {
        let vri = self.vri.score(text);
        LexicalProfile {
            counts: LexicalCounts::measure(text, &self.affiliation, &self.cogproc),
            vri_fusion: self.vri.fusion_score(&vri),
            vri,
        }
    }

    /// Loads the manifest described in the README (`lexicons.toml`).
    /// Relative paths resolve against the manifest's directory.
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: LexiconManifest =
            toml::from_str(&raw).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.load(base)
    }

    /// The small open word lists shipped with the crate. They illustrate
    /// the formats and drive tests; they are not validated dictionaries.
    pub fn illustrative() -> Self {
        let parse = |name: &str, body: &str| {
            Lexicon::new(name, body.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')))
                .expect("bundled lexicon is valid")
        };
        let l = |name: &str| {
            let body = ILLUSTRATIVE
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, b)| *b)
                .expect("bundled lexicon exists");
            parse(name, body)
        };
        LexiconBundle {
            affiliation: l("affiliation"),
            cogproc: l("cogproc"),
            vri: VriLexicons {
                a: ["fusion", "dehumanization", "justification", "calls_to_violence"].map(l).to_vec(),
                b: ["slurs", "demonization", "hopelessness"].map(l).to_vec(),
                c: ["existential_threat", "conspiracy", "inevitable_war", "martyrdom", "role_model"]
                    .map(l)
                    .to_vec(),
                fusion_index: 0,
                identification_group: l("identification_group"),
                identification_identity: l("identification_identity"),
            },
        }
    }
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../lexicons/", $name, ".txt")))),*]
    };
}

const ILLUSTRATIVE: &[(&str, &str)] = bundled!(
    "affiliation",
    "cogproc",
    "fusion",
    "dehumanization",
    "justification",
    "calls_to_violence",
    "slurs",
    "demonization",
    "hopelessness",
    "existential_threat",
    "conspiracy",
    "inevitable_war",
    "martyrdom",
    "role_model",
    "identification_group",
    "identification_identity",
);

#[derive(Debug, Deserialize)]
struct NamedPath {
    name: String,
    path: PathBuf,
}

#[derive(Debug, Deserialize)]
struct VriManifest {
    #[serde(default = "default_fusion")]
    fusion_category: String,
    a: Vec<NamedPath>,
    b: Vec<NamedPath>,
    c: Vec<NamedPath>,
    identification_group: PathBuf,
    identification_identity: PathBuf,
}

fn default_fusion() -> String {
    "fusion".to_string()
}

#[derive(Debug, Deserialize)]
struct LexiconManifest {
    affiliation: PathBuf,
    cognitive_processing: PathBuf,
    vri: VriManifest,
}

impl LexiconManifest {
    fn load(self, base: &Path) -> Result<LexiconBundle> {
        let load = |p: &Path| Lexicon::from_file(base.join(p));
        let group = |items: &[NamedPath], expected: usize, label: &str| -> Result<Vec<Lexicon>> {
            if items.len() != expected {
                return Err(Error::config(format!(
                    "VRI group {label} needs {expected} categories, manifest lists {}",
                    items.len()
                )));
            }
            items
                .iter()
                .map(|np| {
                    let mut lex = load(&np.path)?;
                    lex.name = np.name.clone();
                    Ok(lex)
                })
                .collect()
        };
        let a = group(&self.vri.a, VRI_A_LEN, "A")?;
        let fusion_index = a
            .iter()
            .position(|l| l.name == self.vri.fusion_category)
            .ok_or_else(|| {
                Error::config(format!("fusion category {:?} not found in group A", self.vri.fusion_category))
            })?;
        Ok(LexiconBundle {
            affiliation: load(&self.affiliation)?,
            cogproc: load(&self.cognitive_processing)?,
            vri: VriLexicons {
                b: group(&self.vri.b, VRI_B_LEN, "B")?,
                c: group(&self.vri.c, VRI_C_LEN, "C")?,
                a,
                fusion_index,
                identification_group: load(&self.vri.identification_group)?,
                identification_identity: load(&self.vri.identification_identity)?,
            },
        })
    }
}
