//! Sector classification over a code taxonomy by embedding similarity.
//!
//! Enterprise descriptions and taxonomy nodes live in one or more embedding
//! spaces. A query is matched either against every leaf ([`SearchMode::Flat`])
//! or level by level with a beam of width `k` ([`SearchMode::Group`]). Linear
//! per-level adapters, trained with an in-batch contrastive loss, reshape the
//! query space. Predicted codes feed an emission estimate of
//! `revenue * intensity`, scored by MAPE.
//!
//! Module map:
//!
//! - [`taxonomy`]: loading, validation and navigation of the code tree
//! - [`embedding`]: vectors, stores, file formats and text encoders
//! - [`corpus`]: enterprise records, preprocessing, augmentation, splits
//! - [`adapter`]: linear adapters, the loss and its gradient, training
//! - [`reasoning`]: flat and beam search
//! - [`evaluation`]: Acc@k, beam sweeps, ablations
//! - [`emission`]: intensity lookup, estimates, MAPE
//! - [`theory`]: entropy and cost comparisons of flat vs hierarchical search
//! - [`synthetic`]: seeded trees, embeddings and query sets for experiments
//! - [`config`] and [`cli`]: the run configuration and command implementations

pub mod adapter;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod emission;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod reasoning;
pub mod rng;
pub mod synthetic;
pub mod taxonomy;
pub mod theory;

pub use adapter::{Adapter, TrainConfig};
pub use embedding::{EmbeddingStore, Prepared, Vector};
pub use error::{Error, Result};
pub use reasoning::{BeamConfig, ClassificationResult, GroupReasoner, QueryInput, SearchMode};
pub use taxonomy::{Taxonomy, TaxonomyNode};
