//! Masked-LM identity fusion metrics.
//!
//! A directional proximity `S(x -> y)` masks every y-vocabulary mention in
//! a document (one mask per mention), reads the model's distribution at
//! each masked position, sums `p(w)^alpha` over the single-token
//! x-vocabulary words, and averages over the masks:
//!
//! ```text
//! S(x -> y) = 1/M_y * sum_m sum_{w in V_x} P(w | C_m)^alpha
//! ```
//!
//! Fusion proximity is the harmonic mean of `S(I -> T)` and `S(T -> I)`;
//! fictive kinship is `S(K -> T)`. Entity spans from a tagger are masked
//! alongside T mentions for `S(I -> T)` and `S(K -> T)` but not for the
//! reverse direction.

use std::collections::BTreeSet;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{detect_entities, find_mentions, EntityLabel, EntitySpan, NerRuntime, Vocabularies, VocabularySet};

pub type TokenId = u32;

/// Token ids for a text in which each masked span became one mask token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    /// Content tokens only; the runtime adds any special tokens itself.
    pub ids: Vec<TokenId>,
    /// Index into `ids` of each mask token, in text order.
    pub mask_positions: Vec<usize>,
}

/// A masked language model.
///
/// `predict` returns, for every requested mask position, the softmax
/// distribution over the whole model vocabulary. Implementations must be
/// deterministic and callable concurrently.
pub trait MaskedLmRuntime: Send + Sync {
    /// Id of `word` when it is exactly one token in running text.
    fn single_token_id(&self, word: &str) -> Option<TokenId>;

    fn encode_masked(&self, text: &str, spans: &[Range<usize>]) -> Result<MaskedSequence>;

    fn predict(&self, ids: &[TokenId], mask_positions: &[usize]) -> Result<Vec<Vec<f32>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Exponent applied to each candidate probability, in (0, 1].
    pub alpha: f64,
    /// Longest content-token window passed to the runtime in one call.
    pub max_sequence_tokens: usize,
    pub ner_labels: BTreeSet<EntityLabel>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            alpha: 0.5,
            max_sequence_tokens: 510,
            ner_labels: EntityLabel::ALL.into_iter().collect(),
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::usage(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.max_sequence_tokens < 2 {
            return Err(Error::usage("max_sequence_tokens must be at least 2"));
        }
        Ok(())
    }
}

/// The four masked-LM scores for one document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionMetrics {
    pub s_i_to_t: f64,
    pub s_t_to_i: f64,
    pub fusion_proximity: f64,
    pub fictive_kinship: f64,
    pub flags: MentionFlags,
}

/// Which scores were computed over zero masked mentions (and are 0 by
/// convention).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionFlags {
    pub s_i_to_t: bool,
    pub s_t_to_i: bool,
    pub fictive_kinship: bool,
}

impl MentionFlags {
    pub fn any(&self) -> bool {
        self.s_i_to_t || self.s_t_to_i || self.fictive_kinship
    }
}

/// Result of one directional proximity computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Directional {
    pub score: f64,
    /// Number of masked mentions (`M_y`).
    pub masks: usize,
}

impl Directional {
    pub fn no_mentions(&self) -> bool {
        self.masks == 0
    }
}

/// Harmonic mean of the two directional proximities; 0 when both are 0.
pub fn fusion_proximity(s_it: f64, s_ti: f64) -> Result<f64> {
    if s_it < 0.0 || s_ti < 0.0 || s_it.is_nan() || s_ti.is_nan() {
        return Err(Error::usage(format!(
            "directional scores must be non-negative, got {s_it} and {s_ti}"
        )));
    }
    let (lo, hi) = if s_it <= s_ti { (s_it, s_ti) } else { (s_ti, s_it) };
    if lo == 0.0 {
        return Ok(0.0);
    }
    // exact for equal inputs; the clamp absorbs last-bit rounding
    Ok((lo * (2.0 * (hi / (lo + hi)))).clamp(lo, hi))
}

/// Single-token ids of a vocabulary's single-word terms, deduplicated.
pub fn candidate_ids(vocab: &VocabularySet, runtime: &dyn MaskedLmRuntime) -> Vec<TokenId> {
    let ids: BTreeSet<TokenId> = vocab
        .single_word_terms()
        .filter_map(|t| runtime.single_token_id(t))
        .collect();
    ids.into_iter().collect()
}

/// Windows of at most `max_len` tokens covering `0..len`, overlapping by
/// half a window.
fn windows(len: usize, max_len: usize) -> Vec<Range<usize>> {
    if len <= max_len {
        return vec![0..len];
    }
    let stride = (max_len / 2).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + max_len).min(len);
        out.push(start..end);
        if end == len {
            break;
        }
        start = (start + stride).min(len - max_len);
    }
    out
}

/// Per-mask distributions for a whole sequence, running the model over
/// overlapping windows when the sequence is longer than the limit. Each
/// mask is read from the window whose centre is nearest to it.
fn predict_windowed(
    seq: &MaskedSequence,
    runtime: &dyn MaskedLmRuntime,
    max_len: usize,
) -> Result<Vec<Vec<f32>>> {
    let wins = windows(seq.ids.len(), max_len);
    if wins.len() == 1 {
        return runtime.predict(&seq.ids, &seq.mask_positions);
    }
    let mut assigned: Vec<Vec<(usize, usize)>> = vec![Vec::new(); wins.len()];
    for (k, &p) in seq.mask_positions.iter().enumerate() {
        let best = wins
            .iter()
            .enumerate()
            .filter(|(_, w)| w.contains(&p))
            .min_by(|(_, a), (_, b)| {
                let da = (2 * p).abs_diff(a.start + a.end - 1);
                let db = (2 * p).abs_diff(b.start + b.end - 1);
                da.cmp(&db)
            })
            .map(|(i, _)| i)
            .expect("windows cover the sequence");
        assigned[best].push((k, p));
    }
    let mut out: Vec<Option<Vec<f32>>> = vec![None; seq.mask_positions.len()];
    for (w, masks) in wins.iter().zip(&assigned) {
        if masks.is_empty() {
            continue;
        }
        // every mask inside the window stays masked, but only the assigned ones are read
        let local: Vec<usize> = masks.iter().map(|&(_, p)| p - w.start).collect();
        let dists = runtime.predict(&seq.ids[w.clone()], &local)?;
        if dists.len() != local.len() {
            return Err(Error::inference(format!(
                "runtime returned {} distributions for {} masks",
                dists.len(),
                local.len()
            )));
        }
        for (&(k, _), d) in masks.iter().zip(dists) {
            out[k] = Some(d);
        }
    }
    Ok(out.into_iter().map(|d| d.expect("every mask assigned")).collect())
}

/// Sums `p^alpha` over candidates at one mask.
fn mask_score(dist: &[f32], candidates: &[TokenId], alpha: f64) -> f64 {
    candidates
        .iter()
        .map(|&id| {
            let p = dist.get(id as usize).copied().unwrap_or(0.0).max(0.0) as f64;
            if p == 0.0 {
                0.0
            } else {
                p.powf(alpha)
            }
        })
        .sum()
}

/// `S(x -> y)` for pre-resolved candidate ids and mention spans.
pub fn directional_from_spans(
    text: &str,
    candidates: &[TokenId],
    mentions: &[Range<usize>],
    runtime: &dyn MaskedLmRuntime,
    cfg: &ScorerConfig,
) -> Result<Directional> {
    if mentions.is_empty() {
        return Ok(Directional { score: 0.0, masks: 0 });
    }
    let seq = runtime.encode_masked(text, mentions)?;
    if seq.mask_positions.len() != mentions.len() {
        return Err(Error::inference(format!(
            "runtime produced {} mask tokens for {} mentions",
            seq.mask_positions.len(),
            mentions.len()
        )));
    }
    let dists = predict_windowed(&seq, runtime, cfg.max_sequence_tokens)?;
    let total: f64 = dists.iter().map(|d| mask_score(d, candidates, cfg.alpha)).sum();
    Ok(Directional {
        score: total / mentions.len() as f64,
        masks: mentions.len(),
    })
}

/// `S(x -> y)`: candidates come from `candidate_vocab` (single-token words
/// only), masks from `mask_vocab` mentions plus `extra_spans`.
pub fn directional_score(
    text: &str,
    candidate_vocab: &VocabularySet,
    mask_vocab: &VocabularySet,
    extra_spans: &[EntitySpan],
    runtime: &dyn MaskedLmRuntime,
    cfg: &ScorerConfig,
) -> Result<Directional> {
    cfg.validate()?;
    if text.trim().is_empty() {
        return Err(Error::usage("cannot score empty text"));
    }
    let candidates = candidate_ids(candidate_vocab, runtime);
    let mentions = find_mentions(text, mask_vocab, extra_spans);
    directional_from_spans(text, &candidates, &mentions, runtime, cfg)
}

/// Scores documents against fixed vocabularies, caching candidate ids.
pub struct FusionScorer<'a> {
    vocab: &'a Vocabularies,
    mlm: &'a dyn MaskedLmRuntime,
    ner: Option<&'a dyn NerRuntime>,
    cfg: ScorerConfig,
    identity_ids: Vec<TokenId>,
    target_ids: Vec<TokenId>,
    kinship_ids: Vec<TokenId>,
}

impl<'a> FusionScorer<'a> {
    pub fn new(
        vocab: &'a Vocabularies,
        mlm: &'a dyn MaskedLmRuntime,
        ner: Option<&'a dyn NerRuntime>,
        cfg: ScorerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(FusionScorer {
            identity_ids: candidate_ids(&vocab.identity, mlm),
            target_ids: candidate_ids(&vocab.target, mlm),
            kinship_ids: candidate_ids(&vocab.kinship, mlm),
            vocab,
            mlm,
            ner,
            cfg,
        })
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.cfg
    }

    pub fn score(&self, text: &str) -> Result<FusionMetrics> {
        if text.trim().is_empty() {
            return Err(Error::usage("cannot score empty text"));
        }
        let entities = match self.ner {
            Some(ner) => detect_entities(text, ner, &self.cfg.ner_labels)?,
            None => Vec::new(),
        };
        let target_with_entities = find_mentions(text, &self.vocab.target, &entities);
        let identity_mentions = find_mentions(text, &self.vocab.identity, &[]);

        let it = directional_from_spans(text, &self.identity_ids, &target_with_entities, self.mlm, &self.cfg)?;
        let ti = directional_from_spans(text, &self.target_ids, &identity_mentions, self.mlm, &self.cfg)?;
        let kf = directional_from_spans(text, &self.kinship_ids, &target_with_entities, self.mlm, &self.cfg)?;

        Ok(FusionMetrics {
            s_i_to_t: it.score,
            s_t_to_i: ti.score,
            fusion_proximity: fusion_proximity(it.score, ti.score)?,
            fictive_kinship: kf.score,
            flags: MentionFlags {
                s_i_to_t: it.no_mentions(),
                s_t_to_i: ti.no_mentions(),
                fictive_kinship: kf.no_mentions(),
            },
        })
    }

    /// Scores many texts in parallel; output order follows input order.
    pub fn score_batch<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<FusionMetrics>> {
        texts.par_iter().map(|t| self.score(t.as_ref())).collect()
    }
}

pub fn compute_fusion_metrics(
    text: &str,
    vocab: &Vocabularies,
    mlm: &dyn MaskedLmRuntime,
    ner: Option<&dyn NerRuntime>,
    cfg: &ScorerConfig,
) -> Result<FusionMetrics> {
    FusionScorer::new(vocab, mlm, ner, cfg.clone())?.score(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stub::{FixedTableMlm, UniformMlm};
    use crate::vocab::{SeedLists, VocabCategory};

    fn cfg(alpha: f64) -> ScorerConfig {
        ScorerConfig {
            alpha,
            ..ScorerConfig::default()
        }
    }

    #[test]
    fn one_mask_one_candidate() {
        let mlm = FixedTableMlm::new(["me"], vec![vec![("me", 0.25)]]);
        let cand = VocabularySet::new(VocabCategory::I, ["me"]);
        let mask = VocabularySet::new(VocabCategory::T, ["team"]);
        let d = directional_score("the team won", &cand, &mask, &[], &mlm, &cfg(0.5)).unwrap();
        assert_eq!(d.masks, 1);
        assert!((d.score - 0.5).abs() < 1e-7);
    }

    #[test]
    fn two_masks_hand_evaluated() {
        // ((sqrt .04 + sqrt .09) + (sqrt .16 + 0)) / 2 = (0.5 + 0.4) / 2
        let mlm = FixedTableMlm::new(
            ["me", "my"],
            vec![vec![("me", 0.04), ("my", 0.09)], vec![("me", 0.16), ("my", 0.0)]],
        );
        let cand = VocabularySet::new(VocabCategory::I, ["me", "my"]);
        let mask = VocabularySet::new(VocabCategory::T, ["team", "club"]);
        let d = directional_score("team and club", &cand, &mask, &[], &mlm, &cfg(0.5)).unwrap();
        assert_eq!(d.masks, 2);
        assert!((d.score - 0.45).abs() < 1e-7, "{}", d.score);
    }

    #[test]
    fn zero_mentions_scores_zero() {
        let mlm = UniformMlm::new(["me", "team"]);
        let cand = VocabularySet::new(VocabCategory::I, ["me"]);
        let mask = VocabularySet::new(VocabCategory::T, ["team"]);
        let d = directional_score("nothing here", &cand, &mask, &[], &mlm, &cfg(0.5)).unwrap();
        assert_eq!((d.score, d.masks), (0.0, 0));
        assert!(d.no_mentions());
    }

    #[test]
    fn fusion_proximity_cases() {
        assert_eq!(fusion_proximity(0.3, 0.3).unwrap(), 0.3);
        assert!((fusion_proximity(0.2, 0.3).unwrap() - 0.24).abs() < 1e-12);
        assert_eq!(fusion_proximity(0.0, 0.7).unwrap(), 0.0);
        assert_eq!(fusion_proximity(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(fusion_proximity(-0.1, 0.2), Err(Error::Usage(_))));
    }

    #[test]
    fn rejects_bad_alpha() {
        let mlm = UniformMlm::new(["me"]);
        let v = VocabularySet::new(VocabCategory::I, ["me"]);
        assert!(directional_score("me", &v, &v, &[], &mlm, &cfg(0.0)).is_err());
        assert!(directional_score("me", &v, &v, &[], &mlm, &cfg(1.5)).is_err());
    }

    #[test]
    fn multiword_candidates_are_ignored() {
        let mlm = FixedTableMlm::new(["kin"], vec![vec![("kin", 0.25)]]);
        let cand = VocabularySet::new(VocabCategory::K, ["kin", "my people"]);
        assert_eq!(candidate_ids(&cand, &mlm).len(), 1);
    }

    #[test]
    fn no_identity_words_flags_reverse_direction() {
        let seeds = SeedLists::default();
        let vocab = Vocabularies::from_seeds(&seeds);
        let mlm = UniformMlm::new(["i", "me", "we", "team", "family"]);
        let m = compute_fusion_metrics("Our team is strong.", &vocab, &mlm, None, &cfg(0.5)).unwrap();
        assert_eq!(m.s_t_to_i, 0.0);
        assert!(m.flags.s_t_to_i);
        assert!(!m.flags.s_i_to_t);
        assert_eq!(m.fusion_proximity, 0.0);
    }

    #[test]
    fn uniform_runtime_closed_form() {
        // Uniform over V tokens: every mask scores |cands| * (1/V)^alpha.
        let words = ["i", "me", "my", "we", "our", "team", "brother", "family", "the", "is"];
        let mlm = UniformMlm::new(words);
        let v = mlm.vocab_size() as f64;
        let seeds = SeedLists::default();
        let vocab = Vocabularies::from_seeds(&seeds);
        let m = compute_fusion_metrics("I love our team and my family.", &vocab, &mlm, None, &cfg(0.5)).unwrap();
        let per = |n: f64| n * (1.0 / v).sqrt();
        // I candidates in vocab: i, me, my; T: we, our, team; K: brother, family
        assert!((m.s_i_to_t - per(3.0)).abs() < 1e-6);
        assert!((m.s_t_to_i - per(3.0)).abs() < 1e-6);
        assert!((m.fictive_kinship - per(2.0)).abs() < 1e-6);
        assert!((m.fusion_proximity - per(3.0)).abs() < 1e-6);
        assert!(!m.flags.any());
    }

    #[test]
    fn windows_cover_and_overlap() {
        assert_eq!(windows(5, 10), vec![0..5]);
        let w = windows(25, 10);
        assert_eq!(w.first().unwrap().start, 0);
        assert_eq!(w.last().unwrap().end, 25);
        for pair in w.windows(2) {
            assert!(pair[1].start < pair[0].end);
        }
        assert!(w.iter().all(|r| r.len() == 10));
    }

    #[test]
    fn windowed_scoring_matches_single_pass_for_context_free_runtime() {
        let mlm = FixedTableMlm::new(["me"], vec![vec![("me", 0.36)]]);
        let cand = VocabularySet::new(VocabCategory::I, ["me"]);
        let mask = VocabularySet::new(VocabCategory::T, ["team"]);
        let text = (0..60).map(|i| if i % 7 == 0 { "team" } else { "word" }).collect::<Vec<_>>().join(" ");
        let short = ScorerConfig { max_sequence_tokens: 8, ..cfg(0.5) };
        let a = directional_score(&text, &cand, &mask, &[], &mlm, &short).unwrap();
        let b = directional_score(&text, &cand, &mask, &[], &mlm, &cfg(0.5)).unwrap();
        assert_eq!(a.masks, b.masks);
        assert!((a.score - 0.6).abs() < 1e-6 && (b.score - 0.6).abs() < 1e-6);
    }
}
