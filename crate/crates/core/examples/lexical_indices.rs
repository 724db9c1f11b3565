//! Affiliation and cognitive-processing rates, UAI over a batch, nUAI, and
//! the violence risk index with its class mapping.
//!
//!     cargo run --example lexical_indices

use clifs::lexical::{uai_batch, vri_aggregate, LexiconBundle};

fn main() -> clifs::error::Result<()> {
    let lex = LexiconBundle::illustrative();
    let texts = [
        "We belong together, our team and our people, brothers and sisters.",
        "I think about whether it matters, maybe, because I wonder how it works.",
        "They control everything. It is hopeless; the elite are evil and we must fight.",
        "The bus was late and the coffee was cold.",
    ];

    let profiles: Vec<_> = texts.iter().map(|t| lex.profile(t)).collect();
    let counts: Vec<_> = profiles.iter().map(|p| p.counts).collect();
    let uai = uai_batch(&counts)?;

    for ((text, p), u) in texts.iter().zip(&profiles).zip(&uai) {
        let vri = vri_aggregate(&p.vri)?;
        println!("{text}");
        println!(
            "  affiliation {:.3}  cogproc {:.3}  UAI {:+.3}  nUAI {:+.3}",
            u.affiliation, u.cogproc, u.uai, u.nuai
        );
        println!(
            "  VRI {:.2} ({}, {})  fusion {:.3}  identification {:.3}",
            vri.vri,
            vri.vri_class,
            vri.mapped_risk.as_str(),
            p.vri_fusion,
            p.vri.identification
        );
    }
    Ok(())
}
