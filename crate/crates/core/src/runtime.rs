//! Runtimes backed by exported ONNX models and `tokenizer.json` files.
//!
//! Each exported model ships with a JSON manifest:
//!
//! ```json
//! {
//!   "role": "masked_lm",
//!   "source_checkpoint": "roberta-base",
//!   "model_path": "model.onnx",
//!   "tokenizer_path": "tokenizer.json",
//!   "vocab_size": 50265,
//!   "hidden_size": 768,
//!   "max_sequence_length": 512,
//!   "mask_token": "<mask>",
//!   "parity": { "max_abs_deviation": 3.1e-6 }
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Models take
//! `input_ids` and `attention_mask` (and `token_type_ids` when declared) as
//! `i64` tensors of shape `[1, n]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    MaskedLm,
    SentenceEncoder,
    Ner,
    EncoderClassifier,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    Cls,
}

/// Deviations measured by the exporter against the source model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_abs_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmax_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub role: ModelRole,
    pub source_checkpoint: String,
    pub model_path: PathBuf,
    pub tokenizer_path: PathBuf,
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub max_sequence_length: usize,
    /// Output label names: BIO tags for NER, class names for the
    /// classifier.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_token: Option<String>,
    #[serde(default)]
    pub parity: ParityReport,
}

impl ExportManifest {
    /// Reads a manifest, resolves its paths and checks that the files exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: ExportManifest =
            serde_json::from_str(&raw).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut m.model_path, &mut m.tokenizer_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(Error::config(format!(
                    "{}: referenced file {} does not exist",
                    path.display(),
                    p.display()
                )));
            }
        }
        if m.max_sequence_length < 3 {
            return Err(Error::config(format!("{}: max_sequence_length too small", path.display())));
        }
        Ok(m)
    }

    pub fn expect_role(&self, role: ModelRole) -> Result<()> {
        if self.role != role {
            return Err(Error::config(format!("manifest describes a {:?} model, expected {role:?}", self.role)));
        }
        Ok(())
    }
}

#[cfg(feature = "onnx")]
pub use onnx::{OnnxClassifier, OnnxMaskedLm, OnnxNer, OnnxSentenceEncoder};

#[cfg(feature = "onnx")]
mod onnx {
    use std::ops::Range;

    use tokenizers::Tokenizer;
    use tract_onnx::prelude::*;

    use super::*;
    use crate::features::{EncoderClassifierRuntime, SentenceEncoderRuntime};
    use crate::mlm::{MaskedLmRuntime, MaskedSequence, TokenId};
    use crate::vocab::{NerRuntime, RawEntity};

    type Plan = TypedSimplePlan<TypedModel>;

    fn inference(what: &str, e: impl std::fmt::Display) -> Error {
        Error::inference(format!("{what}: {e}"))
    }

    /// A loaded graph plus its tokenizer.
    struct Session {
        plan: Plan,
        inputs: Vec<String>,
        tokenizer: Tokenizer,
        manifest: ExportManifest,
    }

    impl Session {
        fn open(manifest: ExportManifest, role: ModelRole) -> Result<Self> {
            manifest.expect_role(role)?;
            let load = |e: &dyn std::fmt::Display| {
                Error::config(format!("cannot load {}: {e}", manifest.model_path.display()))
            };
            let plan = tract_onnx::onnx()
                .model_for_path(&manifest.model_path)
                .and_then(|m| m.into_optimized())
                .and_then(|m| m.into_runnable())
                .map_err(|e| load(&e))?;
            let model = plan.model();
            let inputs = model
                .input_outlets()
                .map_err(|e| load(&e))?
                .iter()
                .map(|o| model.node(o.node).name.clone())
                .collect::<Vec<_>>();
            for name in &inputs {
                if !matches!(name.as_str(), "input_ids" | "attention_mask" | "token_type_ids") {
                    return Err(Error::config(format!(
                        "{}: unsupported model input {name:?}",
                        manifest.model_path.display()
                    )));
                }
            }
            let tokenizer = Tokenizer::from_file(&manifest.tokenizer_path).map_err(|e| {
                Error::config(format!("cannot load {}: {e}", manifest.tokenizer_path.display()))
            })?;
            Ok(Session {
                plan,
                inputs,
                tokenizer,
                manifest,
            })
        }

        /// Runs on one sequence and returns the first output as `f32`.
        fn run(&self, ids: &[u32]) -> Result<tract_ndarray::ArrayD<f32>> {
            let n = ids.len();
            if n > self.manifest.max_sequence_length {
                return Err(Error::inference(format!(
                    "sequence of {n} tokens exceeds the model limit of {}",
                    self.manifest.max_sequence_length
                )));
            }
            let tensor = |v: Vec<i64>| -> Result<TValue> {
                let a = tract_ndarray::Array2::from_shape_vec((1, n), v).map_err(|e| inference("input shape", e))?;
                Ok(Tensor::from(a).into())
            };
            let inputs = self
                .inputs
                .iter()
                .map(|name| match name.as_str() {
                    "input_ids" => tensor(ids.iter().map(|&i| i as i64).collect()),
                    "attention_mask" => tensor(vec![1; n]),
                    _ => tensor(vec![0; n]),
                })
                .collect::<Result<TVec<_>>>()?;
            let out = self.plan.run(inputs).map_err(|e| inference("model run", e))?;
            let first = out.into_iter().next().ok_or_else(|| Error::inference("model produced no output"))?;
            Ok(first
                .into_tensor()
                .cast_to::<f32>()
                .map_err(|e| inference("output type", e))?
                .to_array_view::<f32>()
                .map_err(|e| inference("output type", e))?
                .to_owned())
        }

        fn encode(&self, text: &str, special: bool) -> Result<tokenizers::Encoding> {
            self.tokenizer.encode(text, special).map_err(|e| inference("tokenizer", e))
        }

        /// Ids of `text` with special tokens, truncated to the model limit
        /// while keeping the final special token.
        fn encode_truncated(&self, text: &str) -> Result<Vec<u32>> {
            let e = self.encode(text, true)?;
            let mut ids = e.get_ids().to_vec();
            let max = self.manifest.max_sequence_length;
            if ids.len() > max {
                let last = *ids.last().expect("non-empty");
                ids.truncate(max - 1);
                ids.push(last);
            }
            Ok(ids)
        }

        /// Special tokens the post-processor puts before and after content.
        fn frame(&self) -> Result<(Vec<u32>, Vec<u32>)> {
            let e = self.encode("a", true)?;
            let (ids, special) = (e.get_ids(), e.get_special_tokens_mask());
            let prefix = special.iter().take_while(|&&s| s == 1).count();
            let suffix = special.iter().rev().take_while(|&&s| s == 1).count();
            if prefix == ids.len() {
                return Err(Error::config("tokenizer produced only special tokens for a probe word"));
            }
            Ok((ids[..prefix].to_vec(), ids[ids.len() - suffix..].to_vec()))
        }
    }

    fn softmax(logits: &[f32]) -> Vec<f64> {
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    pub struct OnnxMaskedLm {
        s: Session,
        mask_token: String,
        mask_id: u32,
        prefix: Vec<u32>,
        suffix: Vec<u32>,
    }

    impl OnnxMaskedLm {
        pub fn load(manifest: ExportManifest) -> Result<Self> {
            let s = Session::open(manifest, ModelRole::MaskedLm)?;
            let mask_token = s.manifest.mask_token.clone().unwrap_or_else(|| "[MASK]".into());
            let mask_id = s.tokenizer.token_to_id(&mask_token).ok_or_else(|| {
                Error::config(format!("mask token {mask_token:?} is not in the tokenizer vocabulary"))
            })?;
            let (prefix, suffix) = s.frame()?;
            Ok(OnnxMaskedLm {
                s,
                mask_token,
                mask_id,
                prefix,
                suffix,
            })
        }

        pub fn vocab_size(&self) -> usize {
            self.s.tokenizer.get_vocab_size(true)
        }
    }

    impl MaskedLmRuntime for OnnxMaskedLm {
        /// Tokenized with a leading space, so byte-level BPE vocabularies
        /// return the mid-sentence form.
        fn single_token_id(&self, word: &str) -> Option<TokenId> {
            let e = self.s.encode(&format!(" {word}"), false).ok()?;
            match e.get_ids() {
                [id] if *id != self.mask_id => Some(*id),
                _ => None,
            }
        }

        fn encode_masked(&self, text: &str, spans: &[Range<usize>]) -> Result<MaskedSequence> {
            let mut spans = spans.to_vec();
            spans.sort_by_key(|s| s.start);
            if spans.windows(2).any(|w| w[1].start < w[0].end) {
                return Err(Error::usage("mask spans overlap"));
            }
            let mut masked = String::with_capacity(text.len());
            let mut at = 0;
            for s in &spans {
                if s.end > text.len() || !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end) {
                    return Err(Error::usage(format!("mask span {s:?} is not a valid range of the text")));
                }
                masked.push_str(&text[at..s.start]);
                masked.push_str(&self.mask_token);
                at = s.end;
            }
            masked.push_str(&text[at..]);
            let ids = self.s.encode(&masked, false)?.get_ids().to_vec();
            let mask_positions: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] == self.mask_id).collect();
            if mask_positions.len() != spans.len() {
                return Err(Error::inference(format!(
                    "{} spans produced {} mask tokens",
                    spans.len(),
                    mask_positions.len()
                )));
            }
            Ok(MaskedSequence { ids, mask_positions })
        }

        fn predict(&self, ids: &[TokenId], mask_positions: &[usize]) -> Result<Vec<Vec<f32>>> {
            let full: Vec<u32> = self.prefix.iter().chain(ids).chain(&self.suffix).copied().collect();
            let logits = self.s.run(&full)?;
            let shape = logits.shape().to_vec();
            if shape.len() != 3 || shape[1] != full.len() {
                return Err(Error::inference(format!("unexpected logits shape {shape:?}")));
            }
            let logits = logits
                .into_shape_with_order((shape[1], shape[2]))
                .map_err(|e| inference("logits", e))?;
            mask_positions
                .iter()
                .map(|&p| {
                    let row = logits.row(p + self.prefix.len());
                    let row: Vec<f32> = row.iter().copied().collect();
                    Ok(softmax(&row).into_iter().map(|x| x as f32).collect())
                })
                .collect()
        }
    }

    pub struct OnnxSentenceEncoder {
        s: Session,
    }

    impl OnnxSentenceEncoder {
        pub fn load(manifest: ExportManifest) -> Result<Self> {
            Ok(OnnxSentenceEncoder {
                s: Session::open(manifest, ModelRole::SentenceEncoder)?,
            })
        }
    }

    impl SentenceEncoderRuntime for OnnxSentenceEncoder {
        fn dim(&self) -> usize {
            self.s.manifest.hidden_size
        }

        fn encode(&self, text: &str) -> Result<Vec<f32>> {
            let ids = self.s.encode_truncated(text)?;
            let h = self.s.run(&ids)?;
            let dim = self.dim();
            let shape = h.shape().to_vec();
            let mut v: Vec<f64> = match shape.as_slice() {
                [1, n, d] if *d == dim => {
                    let h = h.into_shape_with_order((*n, dim)).map_err(|e| inference("hidden states", e))?;
                    match self.s.manifest.pooling {
                        Pooling::Cls => h.row(0).iter().map(|&x| x as f64).collect(),
                        Pooling::Mean => (0..dim)
                            .map(|j| h.column(j).iter().map(|&x| x as f64).sum::<f64>() / *n as f64)
                            .collect(),
                    }
                }
                [1, d] if *d == dim => h.iter().map(|&x| x as f64).collect(),
                s => return Err(Error::inference(format!("unexpected encoder output shape {s:?}"))),
            };
            if self.s.manifest.normalize {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
            }
            Ok(v.into_iter().map(|x| x as f32).collect())
        }
    }

    pub struct OnnxClassifier {
        s: Session,
        /// Model output index for low, medium and high.
        order: [usize; 3],
    }

    impl OnnxClassifier {
        pub fn load(manifest: ExportManifest) -> Result<Self> {
            let s = Session::open(manifest, ModelRole::EncoderClassifier)?;
            let labels: Vec<String> = s.manifest.labels.iter().map(|l| l.to_ascii_lowercase()).collect();
            let find = |name: &str| {
                labels.iter().position(|l| l == name).ok_or_else(|| {
                    Error::config(format!("classifier manifest labels {labels:?} lack {name:?}"))
                })
            };
            let order = [find("low")?, find("medium")?, find("high")?];
            if labels.len() != 3 {
                return Err(Error::config(format!("classifier must have 3 labels, manifest lists {labels:?}")));
            }
            Ok(OnnxClassifier { s, order })
        }
    }

    impl EncoderClassifierRuntime for OnnxClassifier {
        fn class_probabilities(&self, text: &str) -> Result<[f64; 3]> {
            let ids = self.s.encode_truncated(text)?;
            let logits = self.s.run(&ids)?;
            if logits.len() != 3 {
                return Err(Error::inference(format!("classifier output shape {:?}", logits.shape())));
            }
            let p = softmax(&logits.iter().copied().collect::<Vec<_>>());
            Ok(self.order.map(|i| p[i]))
        }
    }

    /// Token-classification NER with BIO tags. Long texts are tagged in
    /// consecutive windows.
    pub struct OnnxNer {
        s: Session,
        prefix: Vec<u32>,
        suffix: Vec<u32>,
    }

    impl OnnxNer {
        pub fn load(manifest: ExportManifest) -> Result<Self> {
            let s = Session::open(manifest, ModelRole::Ner)?;
            if s.manifest.labels.is_empty() {
                return Err(Error::config("NER manifest lists no labels"));
            }
            let (prefix, suffix) = s.frame()?;
            Ok(OnnxNer { s, prefix, suffix })
        }
    }

    impl NerRuntime for OnnxNer {
        fn entities(&self, text: &str) -> Result<Vec<RawEntity>> {
            let e = self.s.encode(text, false)?;
            let ids = e.get_ids();
            let offsets = e.get_offsets();
            let window = self.s.manifest.max_sequence_length - self.prefix.len() - self.suffix.len();
            let labels = &self.s.manifest.labels;
            let mut tags = Vec::with_capacity(ids.len());
            for chunk in ids.chunks(window.max(1)) {
                let full: Vec<u32> = self.prefix.iter().chain(chunk).chain(&self.suffix).copied().collect();
                let logits = self.s.run(&full)?;
                let shape = logits.shape().to_vec();
                if shape.len() != 3 || shape[1] != full.len() || shape[2] != labels.len() {
                    return Err(Error::inference(format!("unexpected NER output shape {shape:?}")));
                }
                for t in 0..chunk.len() {
                    let row = logits.slice(tract_ndarray::s![0, t + self.prefix.len(), ..]);
                    let best = row
                        .iter()
                        .enumerate()
                        .fold((0, f32::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
                    tags.push(labels[best.0].as_str());
                }
            }
            let mut out: Vec<RawEntity> = Vec::new();
            let mut open: Option<RawEntity> = None;
            for (tag, &(start, end)) in tags.iter().zip(offsets) {
                let (bio, kind) = match tag.split_once('-') {
                    Some((b, k)) => (b, k),
                    None => ("O", ""),
                };
                match (bio, open.as_mut()) {
                    ("I", Some(cur)) if cur.label == kind => cur.end = end,
                    ("B", _) | ("I", _) => {
                        out.extend(open.take());
                        open = Some(RawEntity {
                            start,
                            end,
                            label: kind.to_string(),
                        });
                    }
                    _ => out.extend(open.take()),
                }
            }
            out.extend(open);
            Ok(out)
        }
    }
}
