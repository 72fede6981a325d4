//! Continual learning over an ordered stream of dataset partitions.
//!
//! A small hashed-feature MLP classifier is fine-tuned partition by
//! partition. Forgetting of earlier partitions is mitigated by replaying a
//! budgeted store of representative exemplars (clustered for diversity,
//! loss-filtered for informativeness) and by an elastic, Fisher-weighted
//! penalty whose strength adapts to the TF-IDF similarity between the new
//! data and the stored exemplars. Naive fine-tuning, random replay, plain
//! EWC and joint training are provided as baselines.

pub mod cluster;
pub mod corpus;
pub mod error;
pub mod ewc;
pub mod exemplar;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod report;
pub mod rng;
pub mod strategy;
pub mod textvec;

pub use error::{Error, Result};

/// Version string embedded in every report the harness writes.
pub const VERSION: &str = concat!("repeat-core ", env!("CARGO_PKG_VERSION"));
