//! Answer sentence reranking.
//!
//! Each candidate sentence and its two neighbours are aligned to the question
//! with entropic optimal transport over contextual token embeddings. The
//! aligned words give sentence representations and transport costs, which
//! feed a three-node sentence graph (candidate, previous, next). Learned
//! edge weights drive a small GCN, a head scores the candidate, and a
//! pair discriminator over node states adds a mutual-information term to the
//! training loss.
//!
//! Batch work runs through [`Exec`], which uses rayon with the default
//! `parallel` feature and a plain iterator otherwise. Results are identical
//! in both modes.

pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod metrics;
pub mod mine;
pub mod reranker;
pub mod sinkhorn;
pub mod synthetic;
pub mod training;

pub use dataset::{Corpus, QAInstance, Sentence, Split};
pub use embeddings::{EmbeddingStore, FrequencyTable};
pub use error::{Error, Result};
pub use exec::Exec;
pub use metrics::{evaluate, MetricsReport};
pub use reranker::ModelParams;
pub use sinkhorn::SinkhornConfig;
pub use training::{train, Checkpoint, TrainConfig};
