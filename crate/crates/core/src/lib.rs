//! Uniform random samples of a join computed from per-table models.
//!
//! Each table is summarized by a [`TableModel`] that reports frequencies of
//! its join attributes and conditional distributions between them. A query's
//! join attributes form a chain skeleton ([`join_graph`]); one leaf-to-root
//! elimination pass ([`inference`]) yields the join size and the statistics
//! that drive ancestral sampling ([`sampler`]). With exact models the samples
//! are uniform over the true join result.
//!
//! All numeric code is generic over [`Scalar`]: `f32`, `f64`, or the exact
//! [`Rational`]. The aliases below fix the common choices.

pub mod catalog;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod inference;
pub mod join_graph;
pub mod num;
pub mod plan;
pub mod sampler;
pub mod synth;
pub mod table_model;

pub use catalog::{Catalog, ColumnRef, JoinQuery, ModelRegistry, TableMeta};
pub use data::Table;
pub use error::{Error, ErrorClass, Result};
pub use inference::{run_inference, InferenceResult};
pub use join_graph::{build_skeleton, Skeleton};
pub use num::{Rational, Scalar};
pub use plan::{QueryPlan, SampleOptions};
pub use sampler::SampleMatrix;
pub use table_model::{ExactNestedIndex, ModelKind, TableModel};

/// Double-precision model registry.
pub type Registry = ModelRegistry<f64>;
/// Double-precision model join.
pub type Plan = QueryPlan<f64>;
/// Exact rational model join, for verification.
pub type ExactPlan = QueryPlan<Rational>;
/// Double-precision shared model handle.
pub type SharedModel = std::sync::Arc<dyn TableModel<f64>>;
