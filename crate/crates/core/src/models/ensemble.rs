//! Hard-voting ensembles with a fixed voter priority for ties.

use serde::{Deserialize, Serialize};

use super::prompt::RagPromptBuilder;
use super::remote::RemoteClassifier;
use super::FittedModel;
use crate::corpus::FusionLabel;
use crate::error::{Error, Result};

/// Voter identities in tie-break priority order, highest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoterKind {
    ClifsRf,
    EmbeddingRf,
    Remote1,
    Remote2,
}

/// Plurality label of `votes`, which are listed in priority order. A tie
/// goes to the first voter whose label is among the tied ones.
pub fn hard_vote(votes: &[FusionLabel]) -> Result<FusionLabel> {
    if votes.len() < 2 {
        return Err(Error::usage("hard voting needs at least two votes"));
    }
    let mut counts = [0usize; 3];
    for v in votes {
        counts[v.index()] += 1;
    }
    let top = *counts.iter().max().expect("three classes");
    Ok(*votes
        .iter()
        .find(|v| counts[v.index()] == top)
        .expect("some vote reaches the maximum"))
}

/// What a voter sees for one document.
#[derive(Debug, Clone, Copy)]
pub struct VoteInput<'a> {
    pub text: &'a str,
    /// Full-layout feature row.
    pub features: &'a [f64],
}

pub trait Voter: Send + Sync {
    fn kind(&self) -> VoterKind;
    fn vote(&self, input: &VoteInput<'_>) -> Result<FusionLabel>;
}

/// A trained forest reading a subset of the feature columns.
pub struct LocalVoter {
    kind: VoterKind,
    model: FittedModel,
    columns: Option<Vec<usize>>,
}

impl LocalVoter {
    /// `columns` selects the model's inputs from the full row; `None`
    /// passes the row unchanged.
    pub fn new(kind: VoterKind, model: FittedModel, columns: Option<Vec<usize>>) -> Self {
        LocalVoter { kind, model, columns }
    }
}

impl Voter for LocalVoter {
    fn kind(&self) -> VoterKind {
        self.kind
    }

    fn vote(&self, input: &VoteInput<'_>) -> Result<FusionLabel> {
        let row: Vec<f64> = match &self.columns {
            Some(cols) => cols
                .iter()
                .map(|&i| {
                    input
                        .features
                        .get(i)
                        .copied()
                        .ok_or_else(|| Error::usage(format!("feature row lacks column {i}")))
                })
                .collect::<Result<_>>()?,
            None => input.features.to_vec(),
        };
        Ok(self.model.predict_labels(&[row])?[0])
    }
}

/// A chat model prompted with retrieved training examples.
pub struct RemoteVoter {
    kind: VoterKind,
    classifier: RemoteClassifier,
    prompts: RagPromptBuilder,
}

impl RemoteVoter {
    pub fn new(kind: VoterKind, classifier: RemoteClassifier, prompts: RagPromptBuilder) -> Self {
        RemoteVoter {
            kind,
            classifier,
            prompts,
        }
    }
}

impl Voter for RemoteVoter {
    fn kind(&self) -> VoterKind {
        self.kind
    }

    fn vote(&self, input: &VoteInput<'_>) -> Result<FusionLabel> {
        self.classifier.classify(&self.prompts.build(input.text)?)
    }
}

pub struct EnsembleModel {
    voters: Vec<Box<dyn Voter>>,
}

impl EnsembleModel {
    /// Orders voters by priority. Needs at least two distinct voters.
    pub fn new(mut voters: Vec<Box<dyn Voter>>) -> Result<Self> {
        voters.sort_by_key(|v| v.kind());
        if voters.len() < 2 {
            return Err(Error::config("an ensemble needs at least two voters"));
        }
        if voters.windows(2).any(|w| w[0].kind() == w[1].kind()) {
            return Err(Error::config("duplicate voter kind in ensemble"));
        }
        if !voters
            .iter()
            .any(|v| matches!(v.kind(), VoterKind::Remote1 | VoterKind::Remote2))
        {
            log::warn!("no remote voters configured; ensemble uses local voters only");
        }
        Ok(EnsembleModel { voters })
    }

    pub fn voter_kinds(&self) -> Vec<VoterKind> {
        self.voters.iter().map(|v| v.kind()).collect()
    }

    pub fn predict(&self, input: &VoteInput<'_>) -> Result<FusionLabel> {
        let votes = self
            .voters
            .iter()
            .map(|v| v.vote(input))
            .collect::<Result<Vec<_>>>()?;
        hard_vote(&votes)
    }
}
