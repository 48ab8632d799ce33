//! Predicting adminship election outcomes from contribution and social-graph
//! features.
//!
//! The pipeline runs in stages, each a module:
//!
//! - [`ingest`]: parse vote records and event tables, derive election cases,
//!   generate seeded synthetic corpora.
//! - [`graph`]: per-candidate snapshots of the weighted user-talk graph and
//!   its admin/bureaucrat restrictions.
//! - [`metrics`]: degrees, talk counts, closeness, PageRank, betweenness, Gini.
//! - [`features`]: candidate profiles, the four feature sets and correlation
//!   pruning.
//! - [`forest`]: random forest classifier with out-of-bag permutation
//!   importance.
//! - [`eval`]: repeated holdout evaluation and paired model comparison.
//! - [`analysis`]: class densities, promotion probability curves and
//!   thresholds.

pub mod analysis;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
pub use features::{CandidateProfile, FeatureSet, ModelKind, ProfileTable};
pub use forest::{Dataset, ForestConfig, ForestModel};
pub use graph::{Scope, TalkGraph};
pub use ingest::{
    InteractionEvent, InteractionKind, RevisionEvent, RfaCase, Role, RoleAssignment, Timestamp,
    UserId,
};

/// Version string embedded in every serialized artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
