//! The assembled learned table model and its model-file encoding.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use modeljoin::table_model::{build_exact, load_core_model, normalize, Dist, FreqMap, Manifest};
use modeljoin::{
    Error, ExactNestedIndex, ModelKind, Result, Scalar, Table, TableMeta, TableModel,
};
use modeljoin::table_model::ModelFile;

use crate::cdg::{train_cdg, CdgConfig, Head};
use crate::cluster::{cluster_dissimilar, mixture_weights, ClusterMap};
use crate::skipgram::{train_embeddings, EmbeddingTable, SkipGramConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub embedding: SkipGramConfig,
    pub network: CdgConfig,
    /// Number of final clusters `C`.
    pub clusters: usize,
    /// Answer unseen conditioning values with the second-JA marginal.
    pub marginal_fallback: bool,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            embedding: SkipGramConfig::default(),
            network: CdgConfig::default(),
            clusters: 1,
            marginal_fallback: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedModel {
    meta: TableMeta,
    /// Per-JA frequencies and non-JA conditionals; no pair index.
    marginals: ExactNestedIndex,
    embeddings: EmbeddingTable,
    clusters: ClusterMap,
    heads: Vec<Head<f64>>,
    config: LearnConfig,
}

fn column_of(meta: &TableMeta, attr: &str) -> Result<usize> {
    meta.attr_index(attr)
        .ok_or_else(|| Error::Schema(format!("{} has no attribute {attr}", meta.table_id)))
}

fn seeded(cfg: &LearnConfig) -> (SkipGramConfig, CdgConfig) {
    let mut e = cfg.embedding.clone();
    e.seed = cfg.seed;
    let mut n = cfg.network.clone();
    n.seed = cfg.seed;
    (e, n)
}

/// Trains embeddings, clusters and per-cluster networks for `table`.
pub fn learn_table(table: &Table, cfg: &LearnConfig) -> Result<LearnedModel> {
    let index = build_exact(table)?;
    let (ecfg, ncfg) = seeded(cfg);
    ncfg.validate()?;
    let embeddings = train_embeddings(table, &ecfg)?;
    let meta = table.meta.clone();
    let (clusters, heads) = if meta.join_attrs.len() == 2 {
        let first = column_of(&meta, &meta.join_attrs[0])?;
        let second = column_of(&meta, &meta.join_attrs[1])?;
        let values: Vec<String> = index.second_counts().keys().cloned().collect();
        let mut clusters = cluster_dissimilar(&embeddings, second, &values, cfg.clusters, cfg.seed)?;
        clusters.weights = mixture_weights(&index, &clusters.clusters);
        let heads = train_cdg(&index, &embeddings, first, &clusters.clusters, &ncfg)?;
        (clusters, heads)
    } else {
        (empty_clusters(), Vec::new())
    };
    Ok(LearnedModel {
        meta,
        marginals: index.without_pairs(),
        embeddings,
        clusters,
        heads,
        config: cfg.clone(),
    })
}

fn empty_clusters() -> ClusterMap {
    ClusterMap {
        temporary: BTreeMap::new(),
        clusters: Vec::new(),
        weights: BTreeMap::new(),
    }
}

/// One single-valued cluster per distinct pair, weighted by the pair's share
/// of its first value. Reproduces the exact conditionals.
pub fn learn_exact_per_pair(table: &Table, cfg: &LearnConfig) -> Result<LearnedModel> {
    let index = build_exact(table)?;
    if table.meta.join_attrs.len() != 2 {
        return Err(Error::Capability(format!(
            "table {} needs two join attributes for per-pair heads",
            table.id()
        )));
    }
    let (ecfg, _) = seeded(cfg);
    let embeddings = train_embeddings(table, &ecfg)?;
    let mut clusters = empty_clusters();
    for (x, inner) in index.pair_counts() {
        let total = index.first_counts()[x] as f64;
        let mut w = Vec::with_capacity(inner.len());
        for (y, &n) in inner {
            w.push((clusters.clusters.len(), n as f64 / total));
            clusters.clusters.push(vec![y.clone()]);
        }
        clusters.weights.insert(x.clone(), w);
    }
    let heads = vec![Head::Point; clusters.clusters.len()];
    let mut config = cfg.clone();
    config.clusters = clusters.clusters.len();
    Ok(LearnedModel {
        meta: table.meta.clone(),
        marginals: index.without_pairs(),
        embeddings,
        clusters,
        heads,
        config,
    })
}

impl LearnedModel {
    pub fn clusters(&self) -> &ClusterMap {
        &self.clusters
    }

    pub fn heads(&self) -> &[Head<f64>] {
        &self.heads
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    pub fn config(&self) -> &LearnConfig {
        &self.config
    }

    pub fn network_count(&self) -> usize {
        self.heads.iter().filter(|h| matches!(h, Head::Network(_))).count()
    }

    pub fn set_marginal_fallback(&mut self, on: bool) {
        self.config.marginal_fallback = on;
    }

    /// `Σ_c w(x, c) · P_c(· | x)` in double precision.
    pub fn conditional(&self, x: &str) -> Result<BTreeMap<String, f64>> {
        if self.meta.join_attrs.len() != 2 {
            return Err(Error::Capability(format!(
                "table {} has {} join attribute(s); conditionals need two",
                self.meta.table_id,
                self.meta.join_attrs.len()
            )));
        }
        let Some(weights) = self.clusters.weights.get(x) else {
            if self.config.marginal_fallback {
                let f: FreqMap<f64> = TableModel::<f64>::second_ja_freq(&self.marginals)?;
                return normalize(f).ok_or_else(|| {
                    Error::ModelInconsistency(format!("table {} is empty", self.meta.table_id))
                });
            }
            return Err(Error::UnseenValue {
                table: self.meta.table_id.clone(),
                value: x.to_string(),
            });
        };
        let first = column_of(&self.meta, &self.meta.join_attrs[0])?;
        let input = self.embeddings.input_of(first, x).ok_or_else(|| {
            Error::ModelInconsistency(format!("value {x} has weights but no embedding"))
        })?;
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for &(c, w) in weights {
            let members = &self.clusters.clusters[c];
            let probs = self.heads[c].predict(input, members.len());
            for (y, p) in members.iter().zip(probs) {
                *out.entry(y.clone()).or_default() += w * p;
            }
        }
        out.retain(|_, p| *p > 0.0);
        Ok(out)
    }

    pub fn to_model_file(&self) -> Result<ModelFile> {
        let mut manifest = Manifest::new(ModelKind::Learned, self.meta.clone());
        manifest.seed = Some(self.config.seed);
        let c = &self.config;
        for (k, v) in [
            ("clusters", self.clusters.len().to_string()),
            ("embed_dim", c.embedding.dim.to_string()),
            ("negatives", c.embedding.negatives.to_string()),
            ("embed_epochs", c.embedding.epochs.to_string()),
            ("hidden", c.network.hidden.to_string()),
            ("depth", c.network.depth.to_string()),
            ("epochs", c.network.epochs.to_string()),
            ("lr", c.network.lr.to_string()),
        ] {
            manifest.params.insert(k.to_string(), v);
        }
        ModelFile::new(manifest, self)
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        if file.manifest.kind != ModelKind::Learned {
            return Err(Error::Schema(format!(
                "expected a learned model, found {}",
                file.manifest.kind
            )));
        }
        file.payload_as()
    }
}

impl<T: Scalar> TableModel<T> for LearnedModel {
    fn table_id(&self) -> &str {
        &self.meta.table_id
    }

    fn table_size(&self) -> u64 {
        TableModel::<T>::table_size(&self.marginals)
    }

    fn join_attrs(&self) -> &[String] {
        &self.meta.join_attrs
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Learned
    }

    fn first_ja_freq(&self) -> Result<FreqMap<T>> {
        self.marginals.first_ja_freq()
    }

    fn second_ja_freq(&self) -> Result<FreqMap<T>> {
        self.marginals.second_ja_freq()
    }

    fn cond_second_given_first(&self, dv: &str) -> Result<Dist<T>> {
        Ok(self
            .conditional(dv)?
            .into_iter()
            .map(|(k, p)| (k, T::from_f64_lossy(p)))
            .collect())
    }

    fn cond_nonja(&self, attr: &str, given: &[(&str, &str)]) -> Result<Dist<T>> {
        self.marginals.cond_nonja(attr, given)
    }
}

/// Decodes any model file, learned or not.
pub fn load_model<T: Scalar>(file: &ModelFile) -> Result<Arc<dyn TableModel<T>>> {
    if let Some(m) = load_core_model(file)? {
        return Ok(m);
    }
    Ok(Arc::new(LearnedModel::from_model_file(file)?))
}
