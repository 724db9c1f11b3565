//! Per-document feature extraction: masked-LM metrics, lexical indices and
//! the assembled feature row.

use rayon::prelude::*;

use crate::corpus::Document;
use crate::error::Result;
use crate::features::{FeatureAssembler, FeatureRecord, FeatureSchema, FeatureVector, FeatureWriter, LexicalInputs};
use crate::lexical::{LexicalProfile, LexiconBundle, UaiScores};
use crate::mlm::{FusionMetrics, FusionScorer};

/// Documents scored per parallel batch when streaming.
pub const DEFAULT_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub metrics: FusionMetrics,
    pub lexical: LexicalProfile,
    pub features: FeatureVector,
}

impl Extraction {
    pub fn record(&self, doc: &Document) -> FeatureRecord {
        FeatureRecord {
            id: doc.id.clone(),
            values: self.features.values.clone(),
            label: doc.label,
            vifs_score: doc.vifs_score,
            metrics: Some(self.metrics),
        }
    }
}

pub struct FeaturePipeline<'a> {
    scorer: FusionScorer<'a>,
    lexicons: &'a LexiconBundle,
    assembler: FeatureAssembler<'a>,
}

impl<'a> FeaturePipeline<'a> {
    pub fn new(scorer: FusionScorer<'a>, lexicons: &'a LexiconBundle, assembler: FeatureAssembler<'a>) -> Self {
        FeaturePipeline {
            scorer,
            lexicons,
            assembler,
        }
    }

    pub fn schema(&self) -> FeatureSchema {
        self.assembler.schema()
    }

    pub fn assembler(&self) -> &FeatureAssembler<'a> {
        &self.assembler
    }

    pub fn lexicons(&self) -> &LexiconBundle {
        self.lexicons
    }

    /// Every value depends on `text` alone, so results do not change with
    /// batch composition.
    pub fn extract(&self, text: &str) -> Result<Extraction> {
        let metrics = self.scorer.score(text)?;
        let lexical = self.lexicons.profile(text);
        let inputs = LexicalInputs {
            uai: UaiScores {
                // batch-relative, not part of the layout
                uai: 0.0,
                nuai: lexical.counts.nuai(),
                affiliation: lexical.counts.affiliation_rate,
                cogproc: lexical.counts.cogproc_rate,
            },
            vri_fusion: lexical.vri_fusion,
            identification: lexical.vri.identification,
        };
        let features = self.assembler.assemble(text, &metrics, &inputs)?;
        Ok(Extraction {
            metrics,
            lexical,
            features,
        })
    }

    /// Parallel over documents; output order follows input order.
    pub fn extract_batch(&self, docs: &[Document]) -> Result<Vec<Extraction>> {
        docs.par_iter().map(|d| self.extract(&d.text)).collect()
    }

    /// Reads, scores and writes `batch` documents at a time. Returns the
    /// number of records written.
    pub fn stream(
        &self,
        docs: impl Iterator<Item = Result<Document>>,
        writer: &mut FeatureWriter,
        batch: usize,
    ) -> Result<usize> {
        let batch = batch.max(1);
        let mut buf = Vec::with_capacity(batch);
        let mut written = 0;
        let mut flush = |buf: &mut Vec<Document>| -> Result<()> {
            for (d, x) in buf.iter().zip(self.extract_batch(buf)?) {
                writer.write(&x.record(d))?;
            }
            written += buf.len();
            buf.clear();
            Ok(())
        };
        for d in docs {
            buf.push(d?);
            if buf.len() == batch {
                flush(&mut buf)?;
            }
        }
        flush(&mut buf)?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{AssemblyMode, FeatureHeader, FeatureMatrix};
    use crate::mlm::ScorerConfig;
    use crate::stub::{ContextMlm, FixedClassifier, HashingEncoder};
    use crate::vocab::{SeedLists, Vocabularies};

    fn docs() -> Vec<Document> {
        vec![
            Document::new("a", "I love my team and we are one family."),
            Document::new("b", "The club is fine. I think I go sometimes."),
            Document::new("c", "We stand with our brothers in the movement."),
        ]
    }

    #[test]
    fn stream_matches_batch_and_is_byte_stable() {
        let seeds = SeedLists::default().with_target_terms(["team", "club", "movement"]);
        let vocab = Vocabularies::from_seeds(&seeds);
        let words: Vec<String> = docs()
            .iter()
            .flat_map(|d| crate::text::words(&d.text, crate::text::Apostrophes::Split).into_iter().map(|w| w.text.to_lowercase()))
            .chain(seeds.identity.iter().cloned())
            .chain(seeds.kinship.iter().cloned())
            .collect();
        let mlm = ContextMlm::new(words);
        let enc = HashingEncoder::new(8);
        let clf = FixedClassifier::uniform();
        let lex = LexiconBundle::illustrative();
        let run = || {
            let scorer = FusionScorer::new(&vocab, &mlm, None, ScorerConfig::default()).unwrap();
            let asm = FeatureAssembler::new(8, AssemblyMode::Strict, Some(&enc), Some(&clf)).unwrap();
            let p = FeaturePipeline::new(scorer, &lex, asm);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("f.jsonl");
            let mut w = FeatureWriter::create(&path, FeatureHeader::new(&p.schema(), Default::default())).unwrap();
            let n = p.stream(docs().into_iter().map(Ok), &mut w, 2).unwrap();
            w.finish().unwrap();
            assert_eq!(n, 3);
            let m = FeatureMatrix::read(&path).unwrap();
            let batch = p.extract_batch(&docs()).unwrap();
            for (r, x) in m.records.iter().zip(&batch) {
                assert_eq!(r.values, x.features.values);
            }
            std::fs::read(&path).unwrap()
        };
        assert_eq!(run(), run());
    }
}
