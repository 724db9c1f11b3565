//! Few-shot and retrieval-augmented prompts for chat-model classifiers.

use std::sync::Arc;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::FusionLabel;
use crate::error::{Error, Result};
use crate::features::SentenceEncoderRuntime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: ChatRole, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

/// A training text with its label and scale score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: FusionLabel,
    pub score: f64,
}

const INTRO: &str = "You are a text classifier that determines the level of identity fusion in a given text. Identity fusion is when an individual's personal identity becomes strongly intertwined with their target's identity.";

const DESCRIPTION: &str = "Based on Swann et al. (2024), identity fusion is a psychological state in which an individual's personal identity becomes deeply intertwined with a target\u{2014}be it a group, leader, value, or cause\u{2014}resulting in porous boundaries between the self and that target. This fusion creates a powerful reciprocal bond where personal agency is channeled into extreme, pro-target behavior, with the individual experiencing a profound \"sense of oneness\" that can motivate costly and self-sacrificial actions in defense of the fusion target.";

const LABELS: &str = "In this task, label the text as:
- \"low\": Minimal fusion between individual and target identity. Low fusion is marked by a clear separation between the self and the target, so the individual shows little behavioral commitment to the target.
- \"medium\": Moderate fusion between individual and target identity. Medium fusion reflects a moderate integration where the personal self overlaps with the target enough to inspire occasional support without overwhelming personal autonomy.
- \"high\": Strong fusion; the individual's identity is almost completely merged with the target's identity. High fusion is characterized by an intense, nearly inseparable merging of identity with the target, driving individuals to engage in extreme, self-sacrificial actions for its sake.";

/// The classification request used for anchors, retrieved examples and
/// the query in the retrieval prompt.
pub fn classify_request(text: &str) -> String {
    format!(
        "Classify the following text into [low, medium, high]:\nText: \"{text}\"\nOutput only the label, nothing else.\nLabel: "
    )
}

/// Lowest-, middle- and highest-scoring training texts.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchors {
    pub low: LabeledExample,
    pub medium: LabeledExample,
    pub high: LabeledExample,
}

impl Anchors {
    /// Minimum and maximum score, and the example closest to the median
    /// score. Ties keep the earliest example.
    pub fn from_examples(examples: &[LabeledExample]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::usage("anchors need at least one training example"));
        }
        let mut lo = 0;
        let mut hi = 0;
        for (i, e) in examples.iter().enumerate() {
            if e.score < examples[lo].score {
                lo = i;
            }
            if e.score > examples[hi].score {
                hi = i;
            }
        }
        let mut scores: Vec<f64> = examples.iter().map(|e| e.score).collect();
        scores.sort_by(f64::total_cmp);
        let n = scores.len();
        let median = if n % 2 == 1 {
            scores[n / 2]
        } else {
            (scores[n / 2 - 1] + scores[n / 2]) / 2.0
        };
        let mut mid = 0;
        for (i, e) in examples.iter().enumerate() {
            if (e.score - median).abs() < (examples[mid].score - median).abs() {
                mid = i;
            }
        }
        Ok(Anchors {
            low: examples[lo].clone(),
            medium: examples[mid].clone(),
            high: examples[hi].clone(),
        })
    }
}

/// Single-message few-shot prompt: anchors, three sampled labelled
/// examples, then the query.
pub fn few_shot_prompt(anchors: &Anchors, samples: &[&LabeledExample], text: &str) -> String {
    let mut s = format!("{INTRO}\n\n{DESCRIPTION}\n\n{LABELS}\n\nBelow are three examples:\n\n");
    s += &format!(
        "Example 1 (Lowest Scoring - low):\nText: \"{}\"\nLabel: low\n\n",
        anchors.low.text
    );
    s += &format!(
        "Example 2 (Most Middle Scoring - medium):\nText: \"{}\"\nLabel: medium\n\n",
        anchors.medium.text
    );
    s += &format!(
        "Example 3 (Highest Scoring - high):\nText: \"{}\"\nLabel: high\n\n",
        anchors.high.text
    );
    s += "Now, it's your turn:\n\n";
    for e in samples {
        s += &format!(
            "Please classify the following text:\nText: \"{}\"\nLabel: \"{}\"\n\n",
            e.text,
            e.label.as_str()
        );
    }
    s += &format!("Please classify the following text:\nText: \"{text}\"\nLabel:");
    s
}

/// Three distinct training examples drawn uniformly.
pub fn sample_few_shot<'a>(examples: &'a [LabeledExample], rng: &mut ChaCha8Rng) -> Vec<&'a LabeledExample> {
    let k = examples.len().min(3);
    sample(rng, examples.len(), k).into_iter().map(|i| &examples[i]).collect()
}

/// System block of the retrieval prompt.
pub fn rag_system_block(anchors: &Anchors) -> String {
    format!(
        "{INTRO}\n\n{DESCRIPTION}\n\n{LABELS}\n\nBelow are a three examples:\n\n\
         Example 1 (Lowest Scoring - low):\n{}low\n\n\
         Example 2 (Most Middle Scoring - medium):\n{}medium\n\n\
         Example 3 (Highest Scoring - high):\n{}high",
        classify_request(&anchors.low.text),
        classify_request(&anchors.medium.text),
        classify_request(&anchors.high.text),
    )
}

/// Brute-force cosine index over training-text embeddings.
#[derive(Clone)]
pub struct RetrievalIndex {
    examples: Vec<LabeledExample>,
    vectors: Vec<Vec<f32>>,
    encoder: Arc<dyn SentenceEncoderRuntime>,
}

fn normalize(mut v: Vec<f32>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

impl RetrievalIndex {
    pub fn build(examples: Vec<LabeledExample>, encoder: Arc<dyn SentenceEncoderRuntime>) -> Result<Self> {
        let vectors = examples
            .iter()
            .map(|e| encoder.encode(&e.text).map(normalize))
            .collect::<Result<_>>()?;
        Ok(RetrievalIndex {
            examples,
            vectors,
            encoder,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    /// The `k` most cosine-similar examples, most similar first; equal
    /// similarities keep index order.
    pub fn nearest(&self, text: &str, k: usize) -> Result<Vec<(usize, f32)>> {
        let q = normalize(self.encoder.encode(text)?);
        let mut sims: Vec<(usize, f32)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.iter().zip(&q).map(|(a, b)| a * b).sum()))
            .collect();
        sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        sims.truncate(k);
        Ok(sims)
    }
}

/// Builds retrieval prompts: system block, `k` retrieved exchanges, query.
#[derive(Clone)]
pub struct RagPromptBuilder {
    anchors: Anchors,
    index: RetrievalIndex,
    pub k: usize,
}

pub const DEFAULT_NEIGHBORS: usize = 5;

impl RagPromptBuilder {
    pub fn new(index: RetrievalIndex, k: usize) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::usage("retrieval index is empty"));
        }
        Ok(RagPromptBuilder {
            anchors: Anchors::from_examples(index.examples())?,
            index,
            k,
        })
    }

    pub fn anchors(&self) -> &Anchors {
        &self.anchors
    }

    pub fn build(&self, text: &str) -> Result<Vec<ChatMessage>> {
        let mut msgs = vec![ChatMessage::new(ChatRole::System, rag_system_block(&self.anchors))];
        for (i, _) in self.index.nearest(text, self.k)? {
            let e = &self.index.examples()[i];
            msgs.push(ChatMessage::new(ChatRole::User, classify_request(&e.text)));
            msgs.push(ChatMessage::new(ChatRole::Assistant, e.label.as_str()));
        }
        msgs.push(ChatMessage::new(ChatRole::User, classify_request(text)));
        Ok(msgs)
    }
}
