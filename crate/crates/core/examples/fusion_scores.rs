//! Directional proximities, fusion proximity and fictive kinship for a few
//! sentences, using the context-copy stub model.
//!
//!     cargo run --example fusion_scores

use clifs::mlm::{FusionScorer, ScorerConfig};
use clifs::stub::ContextMlm;
use clifs::vocab::{SeedLists, Vocabularies};

fn main() -> clifs::error::Result<()> {
    let seeds = SeedLists::default().with_target_terms(["party", "nation"]);
    let vocab = Vocabularies::from_seeds(&seeds);
    let words: Vec<&str> = vocab
        .identity
        .single_word_terms()
        .chain(vocab.target.single_word_terms())
        .chain(vocab.kinship.single_word_terms())
        .collect();
    let mlm = ContextMlm::new(words);
    let scorer = FusionScorer::new(&vocab, &mlm, None, ScorerConfig::default())?;

    for text in [
        "I am my party and my party is me. We are brothers.",
        "The party met on Tuesday. I think it rained, maybe, but I went home early that day anyway.",
        "My nation is my family.",
        "Nothing to see here.",
    ] {
        let m = scorer.score(text)?;
        println!("{text}");
        println!(
            "  S(I->T) {:.4}  S(T->I) {:.4}  f {:.4}  K {:.4}  flags {:?}",
            m.s_i_to_t, m.s_t_to_i, m.fusion_proximity, m.fictive_kinship, m.flags
        );
    }
    Ok(())
}
