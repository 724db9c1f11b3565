//! Fixed-layout feature vectors and their on-disk format.
//!
//! Layout (version 1), for a sentence-embedding dimension `D`:
//!
//! | indices        | group | contents                                         |
//! |----------------|-------|--------------------------------------------------|
//! | `0..D`         | A     | sentence embedding                               |
//! | `D..D+3`       | B     | classifier probabilities (low, medium, high)     |
//! | `D+3..D+7`     | C     | fusion proximity, fictive kinship, S(I->T), S(T->I) |
//! | `D+7..D+10`    | D     | affiliation rate, cognitive-processing rate, nUAI |
//! | `D+10..D+12`   | E     | VRI fusion, identification                       |

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::FusionLabel;
use crate::error::{Error, Result};
use crate::lexical::UaiScores;
use crate::mlm::FusionMetrics;

pub const LAYOUT_VERSION: u32 = 1;
pub const DEFAULT_EMBEDDING_DIM: usize = 768;
/// Columns after the embedding block.
pub const FIXED_COLUMNS: usize = 12;

/// Sentence encoder: text to a fixed-dimension vector.
pub trait SentenceEncoderRuntime: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f32>>;
}

/// Fine-tuned three-class classifier returning (low, medium, high)
/// probabilities.
pub trait EncoderClassifierRuntime: Send + Sync {
    fn class_probabilities(&self, text: &str) -> Result<[f64; 3]>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    #[serde(rename = "A")]
    Embeddings,
    #[serde(rename = "B")]
    ClassProbs,
    #[serde(rename = "C")]
    Clifs,
    #[serde(rename = "D")]
    Uai,
    #[serde(rename = "E")]
    Vri,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::Embeddings,
        FeatureGroup::ClassProbs,
        FeatureGroup::Clifs,
        FeatureGroup::Uai,
        FeatureGroup::Vri,
    ];

    pub fn letter(self) -> char {
        match self {
            FeatureGroup::Embeddings => 'A',
            FeatureGroup::ClassProbs => 'B',
            FeatureGroup::Clifs => 'C',
            FeatureGroup::Uai => 'D',
            FeatureGroup::Vri => 'E',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.letter() == c.to_ascii_uppercase())
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FeatureGroup::Embeddings => "embeddings",
            FeatureGroup::ClassProbs => "class_probs",
            FeatureGroup::Clifs => "clifs",
            FeatureGroup::Uai => "uai",
            FeatureGroup::Vri => "vri",
        };
        write!(f, "{}:{name}", self.letter())
    }
}

const FIXED_NAMES: [(&str, FeatureGroup); FIXED_COLUMNS] = [
    ("p_low", FeatureGroup::ClassProbs),
    ("p_medium", FeatureGroup::ClassProbs),
    ("p_high", FeatureGroup::ClassProbs),
    ("fusion_proximity", FeatureGroup::Clifs),
    ("fictive_kinship", FeatureGroup::Clifs),
    ("s_i_to_t", FeatureGroup::Clifs),
    ("s_t_to_i", FeatureGroup::Clifs),
    ("affiliation", FeatureGroup::Uai),
    ("cogproc", FeatureGroup::Uai),
    ("nuai", FeatureGroup::Uai),
    ("vri_fusion", FeatureGroup::Vri),
    ("identification", FeatureGroup::Vri),
];

/// Column names and group tags for a family of index-compatible vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub layout_version: u32,
    pub embedding_dim: usize,
    pub names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
}

impl FeatureSchema {
    /// The full layout for embedding dimension `dim`.
    pub fn full(dim: usize) -> Self {
        let mut names: Vec<String> = (0..dim).map(|i| format!("emb_{i}")).collect();
        let mut groups = vec![FeatureGroup::Embeddings; dim];
        for (n, g) in FIXED_NAMES {
            names.push(n.to_string());
            groups.push(g);
        }
        FeatureSchema {
            layout_version: LAYOUT_VERSION,
            embedding_dim: dim,
            names,
            groups,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Contiguous `(group, start, end)` runs.
    pub fn boundaries(&self) -> Vec<(FeatureGroup, usize, usize)> {
        let mut out: Vec<(FeatureGroup, usize, usize)> = Vec::new();
        for (i, g) in self.groups.iter().enumerate() {
            match out.last_mut() {
                Some((lg, _, end)) if lg == g && *end == i => *end = i + 1,
                _ => out.push((*g, i, i + 1)),
            }
        }
        out
    }

    pub fn retained_indices(&self, drop: &BTreeSet<FeatureGroup>) -> Vec<usize> {
        (0..self.len()).filter(|&i| !drop.contains(&self.groups[i])).collect()
    }

    pub fn mask_groups(&self, drop: &BTreeSet<FeatureGroup>) -> FeatureSchema {
        let keep = self.retained_indices(drop);
        FeatureSchema {
            layout_version: self.layout_version,
            embedding_dim: self.embedding_dim,
            names: keep.iter().map(|&i| self.names[i].clone()).collect(),
            groups: keep.iter().map(|&i| self.groups[i]).collect(),
        }
    }
}

/// One document's features with per-index group tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub groups: Vec<FeatureGroup>,
    /// Groups zero-filled because their runtime was unavailable.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub degraded: BTreeSet<FeatureGroup>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Removes (not zeroes) every column of the dropped groups.
pub fn mask_groups(v: &FeatureVector, drop: &BTreeSet<FeatureGroup>) -> FeatureVector {
    let keep: Vec<usize> = (0..v.len()).filter(|&i| !drop.contains(&v.groups[i])).collect();
    FeatureVector {
        values: keep.iter().map(|&i| v.values[i]).collect(),
        groups: keep.iter().map(|&i| v.groups[i]).collect(),
        degraded: v.degraded.difference(drop).copied().collect(),
    }
}

/// How to handle a missing optional runtime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssemblyMode {
    /// Missing runtimes are configuration errors.
    #[default]
    Strict,
    /// Missing runtimes zero-fill their block and are recorded.
    Degraded,
}

/// Builds feature vectors from per-document sub-scores.
pub struct FeatureAssembler<'a> {
    dim: usize,
    mode: AssemblyMode,
    encoder: Option<&'a dyn SentenceEncoderRuntime>,
    classifier: Option<&'a dyn EncoderClassifierRuntime>,
}

/// Lexical inputs to one feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexicalInputs {
    pub uai: UaiScores,
    pub vri_fusion: f64,
    pub identification: f64,
}

impl<'a> FeatureAssembler<'a> {
    /// `dim` is the embedding dimension; with an encoder present it must
    /// match the encoder's.
    pub fn new(
        dim: usize,
        mode: AssemblyMode,
        encoder: Option<&'a dyn SentenceEncoderRuntime>,
        classifier: Option<&'a dyn EncoderClassifierRuntime>,
    ) -> Result<Self> {
        if let Some(e) = encoder {
            if e.dim() != dim {
                return Err(Error::config(format!(
                    "encoder dimension {} does not match configured dimension {dim}",
                    e.dim()
                )));
            }
        }
        if mode == AssemblyMode::Strict {
            if encoder.is_none() {
                return Err(Error::config("sentence encoder missing (use degraded mode to zero-fill)"));
            }
            if classifier.is_none() {
                return Err(Error::config("encoder classifier missing (use degraded mode to zero-fill)"));
            }
        }
        Ok(FeatureAssembler {
            dim,
            mode,
            encoder,
            classifier,
        })
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::full(self.dim)
    }

    pub fn mode(&self) -> AssemblyMode {
        self.mode
    }

    pub fn assemble(&self, text: &str, metrics: &FusionMetrics, lexical: &LexicalInputs) -> Result<FeatureVector> {
        let mut values = Vec::with_capacity(self.dim + FIXED_COLUMNS);
        let mut degraded = BTreeSet::new();
        match self.encoder {
            Some(enc) => {
                let emb = enc.encode(text)?;
                if emb.len() != self.dim {
                    return Err(Error::config(format!(
                        "encoder returned {} values, layout expects {}",
                        emb.len(),
                        self.dim
                    )));
                }
                values.extend(emb.iter().map(|&x| x as f64));
            }
            None => {
                degraded.insert(FeatureGroup::Embeddings);
                values.extend(std::iter::repeat_n(0.0, self.dim));
            }
        }
        match self.classifier {
            Some(c) => values.extend(c.class_probabilities(text)?),
            None => {
                degraded.insert(FeatureGroup::ClassProbs);
                values.extend([0.0; 3]);
            }
        }
        values.extend([
            metrics.fusion_proximity,
            metrics.fictive_kinship,
            metrics.s_i_to_t,
            metrics.s_t_to_i,
            lexical.uai.affiliation,
            lexical.uai.cogproc,
            lexical.uai.nuai,
            lexical.vri_fusion,
            lexical.identification,
        ]);
        Ok(FeatureVector {
            values,
            groups: FeatureSchema::full(self.dim).groups,
            degraded,
        })
    }
}

/// Header line of a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub format: String,
    pub layout_version: u32,
    pub embedding_dim: usize,
    pub names: Vec<String>,
    pub groups: Vec<GroupBoundary>,
    #[serde(default)]
    pub degraded: BTreeSet<FeatureGroup>,
    /// Free-form provenance (seed, alpha, config hash).
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub provenance: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupBoundary {
    pub group: FeatureGroup,
    pub start: usize,
    pub end: usize,
}

pub const FEATURE_FORMAT: &str = "clifs-features";

impl FeatureHeader {
    pub fn new(schema: &FeatureSchema, degraded: BTreeSet<FeatureGroup>) -> Self {
        FeatureHeader {
            format: FEATURE_FORMAT.to_string(),
            layout_version: schema.layout_version,
            embedding_dim: schema.embedding_dim,
            names: schema.names.clone(),
            groups: schema
                .boundaries()
                .into_iter()
                .map(|(group, start, end)| GroupBoundary { group, start, end })
                .collect(),
            degraded,
            provenance: serde_json::Map::new(),
        }
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        let mut groups = vec![None; self.names.len()];
        for b in &self.groups {
            if b.start > b.end || b.end > groups.len() {
                return Err(Error::format("feature header", format!("bad group range {}..{}", b.start, b.end)));
            }
            for g in &mut groups[b.start..b.end] {
                *g = Some(b.group);
            }
        }
        let groups = groups
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::format("feature header", "group ranges do not cover every column"))?;
        Ok(FeatureSchema {
            layout_version: self.layout_version,
            embedding_dim: self.embedding_dim,
            names: self.names.clone(),
            groups,
        })
    }
}

/// One data line of a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<FusionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vifs_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<FusionMetrics>,
}

/// An in-memory feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub header: FeatureHeader,
    pub schema: FeatureSchema,
    pub records: Vec<FeatureRecord>,
}

impl FeatureMatrix {
    pub fn new(schema: FeatureSchema, records: Vec<FeatureRecord>) -> Self {
        FeatureMatrix {
            header: FeatureHeader::new(&schema, BTreeSet::new()),
            schema,
            records,
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.values.clone()).collect()
    }

    pub fn labels(&self) -> Option<Vec<FusionLabel>> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn scores(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.vifs_score).collect()
    }

    pub fn mask_groups(&self, drop: &BTreeSet<FeatureGroup>) -> FeatureMatrix {
        let keep = self.schema.retained_indices(drop);
        let schema = self.schema.mask_groups(drop);
        let mut header = FeatureHeader::new(&schema, self.header.degraded.difference(drop).copied().collect());
        header.provenance = self.header.provenance.clone();
        FeatureMatrix {
            header,
            schema,
            records: self
                .records
                .iter()
                .map(|r| FeatureRecord {
                    values: keep.iter().map(|&i| r.values[i]).collect(),
                    ..r.clone()
                })
                .collect(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::format(&name, "missing header line"))?
            .map_err(|e| Error::io(path, e))?;
        let header: FeatureHeader =
            serde_json::from_str(&first).map_err(|e| Error::format(&name, format!("header: {e}")))?;
        if header.format != FEATURE_FORMAT {
            return Err(Error::format(&name, format!("unexpected format {:?}", header.format)));
        }
        if header.layout_version != LAYOUT_VERSION {
            return Err(Error::format(&name, format!("unsupported layout version {}", header.layout_version)));
        }
        let schema = header.schema().map_err(|e| Error::format(&name, e.to_string()))?;
        let mut records = Vec::new();
        for (no, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FeatureRecord = serde_json::from_str(&line)
                .map_err(|e| Error::format(&name, format!("line {}: {e}", no + 2)))?;
            if rec.values.len() != schema.len() {
                return Err(Error::format(
                    &name,
                    format!("line {}: {} values, header declares {}", no + 2, rec.values.len(), schema.len()),
                ));
            }
            records.push(rec);
        }
        Ok(FeatureMatrix { header, schema, records })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = FeatureWriter::create(path, self.header.clone())?;
        for r in &self.records {
            w.write(r)?;
        }
        w.finish()
    }
}

/// Streams a feature file: header first, then one record per line.
pub struct FeatureWriter {
    out: BufWriter<Box<dyn Write>>,
    path: String,
    width: usize,
}

impl FeatureWriter {
    pub fn create(path: impl AsRef<Path>, header: FeatureHeader) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::from_writer(Box::new(file), path.display().to_string(), header)
    }

    pub fn from_writer(w: Box<dyn Write>, name: String, header: FeatureHeader) -> Result<Self> {
        let mut out = BufWriter::new(w);
        let line = serde_json::to_string(&header).expect("header serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(&name, e))?;
        Ok(FeatureWriter {
            out,
            path: name,
            width: header.names.len(),
        })
    }

    pub fn write(&mut self, record: &FeatureRecord) -> Result<()> {
        if record.values.len() != self.width {
            return Err(Error::config(format!(
                "record {} has {} values, header declares {}",
                record.id,
                record.values.len(),
                self.width
            )));
        }
        let line = serde_json::to_string(record)
            .map_err(|e| Error::format(&self.path, format!("record {}: {e}", record.id)))?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}
