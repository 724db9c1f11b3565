//! Identity fusion scoring from text.
//!
//! The crate computes masked-LM metaphor metrics (fusion proximity and
//! fictive kinship), lexical indices (UAI, VRI, identification), assembles
//! them with sentence embeddings into fixed-layout feature vectors, trains
//! random-forest models over them, and evaluates the results.
//!
//! Model runtimes are traits. `stub` has deterministic implementations;
//! `runtime` (feature `onnx`) loads exported ONNX models.

pub mod augment;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod lexical;
pub mod mlm;
pub mod models;
pub mod pipeline;
pub mod risk;
pub mod runtime;
pub mod stub;
pub mod synth;
pub mod text;
pub mod vocab;

pub use error::{Error, Result};
