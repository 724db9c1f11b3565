//! Streams documents through the full feature pipeline into a JSONL
//! feature file and prints the column layout.
//!
//!     cargo run --example feature_pipeline -- out.features.jsonl

use clifs::cli::{Context, RunConfig};
use clifs::features::{FeatureHeader, FeatureMatrix, FeatureWriter};
use clifs::pipeline::DEFAULT_BATCH;
use clifs::synth::fusion_corpus;

fn main() -> clifs::error::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "features.jsonl".into());
    let mut cfg = RunConfig {
        stub: true,
        ..RunConfig::default()
    };
    cfg.features.embedding_dim = 16;
    let ctx = Context::new(cfg)?;
    let pipeline = ctx.pipeline()?;
    let schema = pipeline.schema();
    for (group, start, end) in schema.boundaries() {
        println!("{:?}: columns {start}..{end}", group);
    }

    let docs = fusion_corpus(50, 1)?;
    let mut w = FeatureWriter::create(&out, FeatureHeader::new(&schema, Default::default()))?;
    let n = pipeline.stream(docs.into_iter().map(Ok), &mut w, DEFAULT_BATCH)?;
    w.finish()?;

    let m = FeatureMatrix::read(&out)?;
    println!("wrote {n} rows of width {} to {out}", m.schema.len());
    let first = &m.records[0];
    let tail: Vec<String> = m.schema.names[16..]
        .iter()
        .zip(&first.values[16..])
        .map(|(k, v)| format!("{k}={v:.3}"))
        .collect();
    println!("{}: {}", first.id, tail.join(" "));
    Ok(())
}
