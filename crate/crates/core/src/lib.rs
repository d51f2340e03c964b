//! Knowledge-base construction from a typed triple store and a parsed corpus.
//!
//! The pipeline links entity mentions to KB identities (dictionary and
//! embedding candidates, sub-graph disambiguation, then a neural context
//! ranker), bootstraps its own training data by self-training, builds
//! multi-instance multi-label bags by distant supervision, trains a
//! PCNN + C-GCN relation extractor with a selective gate, validates the
//! extracted triples against fact-type templates and writes them back into
//! the KB.

pub mod corpus;
pub mod datagen;
pub mod embeddings;
pub mod error;
pub mod kb;
pub mod linker;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod relex;
pub mod synth;

pub use error::{Error, Result};
