//! Writes the two synthetic corpora as JSONL.
//!
//!     cargo run --example synthetic_corpus -- out/

use std::path::PathBuf;

use clifs::corpus::{write_documents, FusionLabel};
use clifs::synth::{fusion_corpus, risk_corpus};

fn main() -> clifs::error::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synthetic".into()));
    std::fs::create_dir_all(&dir).map_err(|e| clifs::error::Error::io(&dir, e))?;

    let docs = fusion_corpus(600, 42)?;
    let (train, test): (Vec<_>, Vec<_>) = docs.iter().enumerate().partition(|(i, _)| i % 5 != 0);
    write_documents(dir.join("train.jsonl"), train.into_iter().map(|(_, d)| d))?;
    write_documents(dir.join("test.jsonl"), test.into_iter().map(|(_, d)| d))?;
    for l in FusionLabel::ALL {
        let n = docs.iter().filter(|d| d.label == Some(l)).count();
        println!("{:>6}: {n}", l.as_str());
    }

    let risk = risk_corpus(4, 3, 42);
    write_documents(dir.join("risk.jsonl"), &risk)?;
    println!("risk documents: {}", risk.len());
    Ok(())
}
