//! Intent collision detection and corpus merging.
//!
//! The crate is organised around the life cycle of a merged intent corpus:
//!
//! - [`corpus`] loads and normalizes intent-classification corpora.
//! - [`similarity`] provides phrase similarity kernels (n-gram Jaccard and
//!   cosine over precomputed embeddings).
//! - [`coverage`] and [`confusion`] are the two collision detectors.
//! - [`graph`] holds the collision meta-dataset and its analyses.
//! - [`evaluation`] scores detectors against the meta-dataset with AUC.
//! - [`merge`] builds arbitrated and naive combined corpora.
//! - [`bench`] benchmarks a softmax classifier on in-scope accuracy and
//!   out-of-scope detection.

pub mod bench;
pub mod confusion;
pub mod corpus;
pub mod coverage;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod matrix;
pub mod merge;
pub mod similarity;
mod seed;

pub use corpus::{Corpus, Intent, IntentRef, Query};
pub use error::{Error, Result};
pub use graph::CollisionGraph;
