//! Dissimilarity clustering of second-JA values.
//!
//! K-means first groups similar embeddings into temporary clusters; every
//! final cluster then receives an even, randomly chosen share of each
//! temporary cluster, so the values inside a final cluster are dissimilar.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use modeljoin::sampler::row_rng;
use modeljoin::{Error, ExactNestedIndex, Result};

use crate::kmeans::kmeans;
use crate::skipgram::EmbeddingTable;

const DOMAIN_DEAL: u64 = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMap {
    /// Temporary (k-means) cluster of each second-JA value.
    pub temporary: BTreeMap<String, usize>,
    /// Members of each final cluster, sorted.
    pub clusters: Vec<Vec<String>>,
    /// First-JA value → `(cluster, weight)` with positive weights summing to 1.
    pub weights: BTreeMap<String, Vec<(usize, f64)>>,
}

impl ClusterMap {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Final cluster of each value; the last cluster wins if a value repeats.
    pub fn final_of(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for (c, members) in self.clusters.iter().enumerate() {
            for v in members {
                m.insert(v.as_str(), c);
            }
        }
        m
    }
}

/// Splits `values` (second-JA values embedded under `column`) into `c` final
/// clusters. Mixture weights are left empty; see [`mixture_weights`].
pub fn cluster_dissimilar(
    emb: &EmbeddingTable,
    column: usize,
    values: &[String],
    c: usize,
    seed: u64,
) -> Result<ClusterMap> {
    if c == 0 || c > values.len() {
        return Err(Error::Parameter(format!(
            "{c} clusters requested for {} distinct values",
            values.len()
        )));
    }
    let points = values
        .iter()
        .map(|v| {
            emb.input_of(column, v)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Parameter(format!("value {v} has no embedding")))
        })
        .collect::<Result<Vec<_>>>()?;
    let km = kmeans(&points, c, seed)?;

    let mut temp_members: Vec<Vec<&String>> = vec![Vec::new(); c];
    for (v, &a) in values.iter().zip(&km.assignment) {
        temp_members[a].push(v);
    }
    let mut rng = row_rng(seed, DOMAIN_DEAL, 0);
    let mut clusters: Vec<Vec<String>> = vec![Vec::new(); c];
    let mut next = 0usize;
    for members in &mut temp_members {
        members.shuffle(&mut rng);
        for v in members.iter() {
            clusters[next % c].push((*v).clone());
            next += 1;
        }
    }
    for m in &mut clusters {
        m.sort();
    }
    Ok(ClusterMap {
        temporary: values.iter().cloned().zip(km.assignment).collect(),
        clusters,
        weights: BTreeMap::new(),
    })
}

/// `w(x, c)`: the share of first value `x`'s rows whose second value lies in `c`.
pub fn mixture_weights(
    index: &ExactNestedIndex,
    clusters: &[Vec<String>],
) -> BTreeMap<String, Vec<(usize, f64)>> {
    let mut of: BTreeMap<&str, usize> = BTreeMap::new();
    for (c, members) in clusters.iter().enumerate() {
        for v in members {
            of.insert(v, c);
        }
    }
    let mut out = BTreeMap::new();
    for (x, inner) in index.pair_counts() {
        let total = index.first_counts()[x] as f64;
        let mut per: BTreeMap<usize, u64> = BTreeMap::new();
        for (y, &n) in inner {
            if let Some(&c) = of.get(y.as_str()) {
                *per.entry(c).or_default() += n;
            }
        }
        out.insert(
            x.clone(),
            per.into_iter().map(|(c, n)| (c, n as f64 / total)).collect(),
        );
    }
    out
}
