//! Synthetic corpora with a planted fusion signal, for demos and desk-scale
//! checks with stub runtimes.
//!
//! Fused sentences put first-person words right next to a group noun and
//! use kinship and affiliation words. Distant sentences keep the two apart
//! behind filler and lean on cognitive-processing words. The share of
//! fused sentences grows with a latent score in [1, 7].

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{discretize, Document, RiskLabel, VIFS_MAX, VIFS_MIN};
use crate::error::Result;

const TARGETS: &[&str] = &["team", "club", "band", "crew", "squad", "society"];

const FUSED: &[&str] = &[
    "I and my {t} are one.",
    "My {t} is my family and I am my {t}.",
    "We are brothers and I would die for my {t}.",
    "I am one with my {t} and my people.",
    "My {t} and I belong together like kin.",
    "Our {t} is my blood and I am ours.",
    "I feel my {t} is me, we are one family.",
];

const DISTANT: &[&str] = &[
    "I think about things sometimes. It rained on the long road home that evening and then the {t} met.",
    "I wonder whether it matters. The weather was grey and quiet for most of the week while the {t} played.",
    "Maybe I consider it because of work. The town had a market on the square each morning near the {t}.",
    "I know how it goes. Someone painted the old fence by the river and later the {t} gathered.",
    "Perhaps I believe it is fine. The train was late again and the station smelled of coffee near the {t}.",
];

const NEUTRAL: &[&str] = &[
    "The afternoon was warm and the streets were busy.",
    "There was a long line at the bakery on the corner.",
    "The bus stopped twice before the bridge.",
    "Dinner was soup and bread with a little cheese.",
    "The garden needs water after the dry spell.",
];

/// Noise drawn from the risk lexicons, spread evenly over every class.
const VRI_NOISE: &[&str] = &[
    "They say the elite control the news.",
    "Some call the other side evil.",
    "People talk of a fight over the budget.",
    "It felt hopeless for a moment.",
    "The old hero statue was cleaned.",
    "Critics said the plan was necessary.",
];

fn fill(template: &str, target: &str) -> String {
    template.replace("{t}", target)
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().unwrap_or_default()
}

/// One document at latent fusion strength `p` in [0, 1].
fn compose<R: Rng>(rng: &mut R, p: f64, sentences: usize, vri_noise: f64) -> (String, &'static str) {
    let target = pick(rng, TARGETS);
    let mut out = Vec::with_capacity(sentences);
    for _ in 0..sentences {
        let u: f64 = rng.gen();
        let s = if u < 0.2 {
            pick(rng, NEUTRAL).to_string()
        } else if rng.gen::<f64>() < p {
            fill(pick(rng, FUSED), target)
        } else {
            fill(pick(rng, DISTANT), target)
        };
        out.push(s);
        if rng.gen::<f64>() < vri_noise {
            out.push(pick(rng, VRI_NOISE).to_string());
        }
    }
    (out.join(" "), target)
}

/// `n` scored and labelled documents. Scores are uniform on the scale and
/// labels come from z-score discretisation of the drawn scores.
pub fn fusion_corpus(n: usize, seed: u64) -> Result<Vec<Document>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let score: f64 = rng.gen_range(VIFS_MIN..=VIFS_MAX);
        let p = (score - VIFS_MIN) / (VIFS_MAX - VIFS_MIN);
        let len = rng.gen_range(6..=12);
        let (text, target) = compose(&mut rng, p, len, 0.0);
        let score = (score * 100.0).round() / 100.0;
        scores.push(score);
        docs.push(Document::new(format!("doc-{i:04}"), text).with_score(score).with_target(target));
    }
    if n > 0 {
        let (_, labels) = discretize(&scores)?;
        for (d, l) in docs.iter_mut().zip(labels) {
            d.label = Some(l);
        }
    }
    Ok(docs)
}

/// Long multi-author documents for the risk task. Violent self-sacrificial
/// authors write mostly fused text, moderates mostly distant text. Risk
/// lexicon words appear at the same rate in every class.
pub fn risk_corpus(authors_per_class: usize, docs_per_author: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    for label in RiskLabel::ALL {
        let base = match label {
            RiskLabel::ViolentSelfSacrificial => 0.85,
            RiskLabel::IdeologicallyExtreme => 0.5,
            RiskLabel::Moderate => 0.15,
        };
        for a in 0..authors_per_class {
            let author = format!("{}-{a:02}", label.as_str());
            for d in 0..docs_per_author {
                let p = (base + rng.gen_range(-0.1..0.1f64)).clamp(0.0, 1.0);
                let (text, target) = compose(&mut rng, p, 60, 0.3);
                docs.push(
                    Document::new(format!("{author}-{d}"), text)
                        .with_target(target)
                        .with_risk(author.clone(), label),
                );
            }
        }
    }
    docs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FusionLabel;
    use crate::text::word_count;

    #[test]
    fn fusion_corpus_is_seeded_and_labelled() {
        let a = fusion_corpus(60, 7).unwrap();
        assert_eq!(a, fusion_corpus(60, 7).unwrap());
        assert_ne!(a, fusion_corpus(60, 8).unwrap());
        assert!(a.iter().all(|d| d.label.is_some() && d.validate().is_ok()));
        for l in FusionLabel::ALL {
            assert!(a.iter().any(|d| d.label == Some(l)));
        }
    }

    #[test]
    fn high_scores_get_more_fused_sentences() {
        let docs = fusion_corpus(300, 1).unwrap();
        let rate = |l: FusionLabel| {
            let xs: Vec<f64> = docs
                .iter()
                .filter(|d| d.label == Some(l))
                .map(|d| d.text.matches(" one").count() as f64 / word_count(&d.text) as f64)
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(rate(FusionLabel::High) > 2.0 * rate(FusionLabel::Low));
    }

    #[test]
    fn risk_corpus_covers_authors() {
        let docs = risk_corpus(2, 3, 42);
        assert_eq!(docs.len(), 18);
        assert!(docs.iter().all(|d| d.validate().is_ok() && word_count(&d.text) > 600));
    }
}
