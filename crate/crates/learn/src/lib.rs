//! Learned per-table models.
//!
//! A table is summarized by skip-gram embeddings of its values, a split of the
//! second join attribute's values into dissimilar clusters, and one small
//! conditional network per cluster. The pieces combine into a [`LearnedModel`]
//! that plugs into the model join like any other [`modeljoin::TableModel`].

pub mod cdg;
pub mod cluster;
pub mod kmeans;
pub mod model;
pub mod skipgram;

pub use cdg::{CdgConfig, Head, Mlp};
pub use cluster::{cluster_dissimilar, ClusterMap};
pub use model::{learn_exact_per_pair, learn_table, load_model, LearnConfig, LearnedModel};
pub use skipgram::{train_embeddings, EmbeddingTable, SkipGramConfig};
