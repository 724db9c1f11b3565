//! Expands seed vocabularies against a word2vec-style text table.
//!
//!     cargo run --example vocab_expansion -- vectors.txt 0.8
//!
//! Without arguments a small table is built in memory.

use clifs::vocab::{expand, load_embeddings, EmbeddingTable, SeedLists, Vocabularies};

fn demo_table() -> EmbeddingTable {
    let mut t = EmbeddingTable::new();
    for (w, v) in [
        ("team", [1.0, 0.1, 0.0]),
        ("squad", [0.95, 0.15, 0.05]),
        ("crew", [0.9, 0.2, 0.1]),
        ("brother", [0.0, 1.0, 0.1]),
        ("bro", [0.05, 0.97, 0.1]),
        ("banana", [0.1, 0.0, 1.0]),
    ] {
        t.insert(w, &v).expect("fixed dimension");
    }
    t
}

fn main() -> clifs::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let table = match args.next() {
        Some(p) => load_embeddings(p)?,
        None => demo_table(),
    };
    let threshold: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.8);
    println!("{} vectors, dim {:?}, threshold {threshold}", table.len(), table.dim());

    let seeds = SeedLists::default();
    let k = expand(&seeds.kinship_set(), &table, threshold)?;
    let added: Vec<_> = k.expanded_terms.difference(&k.seed_terms).collect();
    println!("kinship additions: {added:?}");

    let v = Vocabularies::build(&seeds, &table, threshold)?;
    for (name, set) in [("I", &v.identity), ("T", &v.target), ("K", &v.kinship)] {
        println!("{name}: {} seeds, {} terms", set.seed_terms.len(), set.len());
    }
    Ok(())
}
