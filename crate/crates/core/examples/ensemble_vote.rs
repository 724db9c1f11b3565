//! Hard-voting ensemble of two local forests and two chat-model voters
//! prompted with retrieved examples. The chat clients here are scripted;
//! swap in `OpenAiChatClient` (feature `http`) for a live endpoint.
//!
//!     cargo run --release --example ensemble_vote

use std::sync::Arc;

use clifs::cli::{Context, RunConfig};
use clifs::features::FeatureGroup;
use clifs::models::ensemble::{LocalVoter, RemoteVoter, VoteInput};
use clifs::models::grid::{fit_classifier, HyperparameterGrid, TrainOptions, TrainParams};
use clifs::models::prompt::{LabeledExample, RagPromptBuilder, RetrievalIndex};
use clifs::models::remote::RemoteClassifier;
use clifs::models::{EnsembleModel, Voter, VoterKind};
use clifs::stub::{HashingEncoder, ScriptedChat};
use clifs::synth::fusion_corpus;

fn main() -> clifs::error::Result<()> {
    let mut cfg = RunConfig {
        stub: true,
        ..RunConfig::default()
    };
    cfg.features.embedding_dim = 16;
    let ctx = Context::new(cfg)?;
    let pipeline = ctx.pipeline()?;
    let schema = pipeline.schema();

    let docs = fusion_corpus(240, 9)?;
    let (train, test) = docs.split_at(200);
    let x: Vec<Vec<f64>> = pipeline.extract_batch(train)?.into_iter().map(|e| e.features.values).collect();
    let y: Vec<_> = train.iter().map(|d| d.label.expect("labelled")).collect();

    let cols = |keep: bool| -> Vec<usize> {
        (0..schema.len())
            .filter(|&i| (schema.groups[i] == FeatureGroup::Embeddings) == keep)
            .collect()
    };
    let project = |c: &[usize]| -> Vec<Vec<f64>> { x.iter().map(|r| c.iter().map(|&i| r[i]).collect()).collect() };
    let grid = HyperparameterGrid::single(TrainParams::default());
    let opts = TrainOptions::default();
    let (clifs_cols, emb_cols) = (cols(false), cols(true));
    let clifs_rf = fit_classifier(&project(&clifs_cols), &y, &grid, &opts)?.0;
    let emb_rf = fit_classifier(&project(&emb_cols), &y, &grid, &opts)?.0;

    let examples: Vec<LabeledExample> = train
        .iter()
        .map(|d| LabeledExample {
            text: d.text.clone(),
            label: d.label.expect("labelled"),
            score: d.vifs_score.expect("scored"),
        })
        .collect();
    let index = RetrievalIndex::build(examples, Arc::new(HashingEncoder::new(64)))?;
    let prompts = RagPromptBuilder::new(index, 3)?;

    let msgs = prompts.build(&test[0].text)?;
    println!("retrieval prompt: {} messages; system block starts:", msgs.len());
    println!("  {}...", msgs[0].content.chars().take(90).collect::<String>());

    let voters: Vec<Box<dyn Voter>> = vec![
        Box::new(LocalVoter::new(VoterKind::ClifsRf, clifs_rf, Some(clifs_cols))),
        Box::new(LocalVoter::new(VoterKind::EmbeddingRf, emb_rf, Some(emb_cols))),
        Box::new(RemoteVoter::new(
            VoterKind::Remote1,
            RemoteClassifier::new(Box::new(ScriptedChat::new(["medium"])), 3),
            prompts.clone(),
        )),
        Box::new(RemoteVoter::new(
            VoterKind::Remote2,
            RemoteClassifier::new(Box::new(ScriptedChat::new(["sorry?", "\"High.\""])), 3),
            prompts,
        )),
    ];
    let ensemble = EnsembleModel::new(voters)?;
    println!("voters in priority order: {:?}", ensemble.voter_kinds());

    let feats = pipeline.extract_batch(test)?;
    for (d, f) in test.iter().zip(&feats).take(8) {
        let input = VoteInput {
            text: &d.text,
            features: &f.features.values,
        };
        println!("{:<9} gold {:<6} vote {}", d.id, d.label.expect("labelled").as_str(), ensemble.predict(&input)?.as_str());
    }
    Ok(())
}
