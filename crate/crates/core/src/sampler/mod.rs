//! Ancestral sampling over the skeleton chain.
//!
//! The root value is drawn with probability `ℱ₁(dv)/ℱ₀`; each later node draws
//! `dvᵢ` with probability proportional to `P(dvᵢ | dvᵢ₋₁) · ℱᵢ(dvᵢ) / f¹(dvᵢ)`,
//! `P` and `f¹` taken from the edge table entering node `i`. Row `r` uses only
//! its own random stream, so rows are independent and any partition of rows
//! across workers yields the same output.

mod cyclic;
mod rng;

use std::collections::BTreeMap;
use std::io::Write;
use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use parking_lot::Mutex;
use rayon::prelude::*;

use crate::catalog::ModelRegistry;
use crate::data::write_rows;
use crate::error::{Error, Result};
use crate::inference::{ChainModels, FrequencyTable, InferenceResult};
use crate::join_graph::{NonSkeletonAttachment, SkeletonGraph};
use crate::num::Scalar;
use crate::table_model::{normalize, Dist, FreqMap, TableModel};

pub use cyclic::{acceptance_probability, reject_cyclic, EliminatedModels};
pub use rng::{row_rng, Categorical, DOMAIN_ACCEPT, DOMAIN_NONJA, DOMAIN_ORACLE, DOMAIN_SKELETON};

/// Capacity of the per-generator memo of conditional distributions.
pub const MEMO_CAPACITY: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMatrix {
    /// Skeleton labels root to leaf, then attached non-JAs.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub seed: u64,
}

impl SampleMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(writer, &self.columns, &self.rows)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("tokens are UTF-8"))
    }
}

/// Runs `f` for every index in `0..n`, in parallel when `workers > 1`, keeping index order.
pub fn par_map<R, F>(n: usize, workers: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    if workers <= 1 || n < 2 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// `n` independent root draws with probability `ℱ₁(dv)/ℱ₀`.
pub fn sample_root<T: Scalar>(f1: &FrequencyTable<T>, n: usize, seed: u64) -> Result<Vec<String>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let cat = Categorical::from_weights(&f1.freqs).ok_or(Error::EmptyJoin)?;
    Ok((0..n)
        .map(|r| {
            let mut rng = row_rng(seed, DOMAIN_SKELETON, r as u64);
            cat.sample(&mut rng).to_string()
        })
        .collect())
}

/// Distribution of node `i` given the sampled parent value.
///
/// `model_in` is the edge table entering node `i`, oriented parent to child,
/// and `f_in1` its second-JA frequencies.
pub fn conditional_step<T: Scalar>(
    prev: &str,
    f_i: &FrequencyTable<T>,
    model_in: &dyn TableModel<T>,
    f_in1: &FreqMap<T>,
) -> Result<Dist<T>> {
    let cond = model_in.cond_second_given_first(prev)?;
    let mut weights = BTreeMap::new();
    for (dv, p) in cond {
        let Some(fi) = f_i.get(&dv) else { continue };
        let denom = f_in1.get(&dv).cloned().unwrap_or_else(T::zero);
        if !denom.is_positive() {
            return Err(Error::ModelInconsistency(format!(
                "value {dv} of table {} has join frequency but zero table frequency",
                model_in.table_id()
            )));
        }
        weights.insert(dv, p * fi.clone() / denom);
    }
    normalize(weights).ok_or_else(|| {
        Error::ModelInconsistency(format!(
            "no continuation of {prev} at node {} has positive probability",
            f_i.label
        ))
    })
}

type Memo = Mutex<LruCache<(usize, String), Arc<Categorical>>>;

fn new_memo() -> Memo {
    Mutex::new(LruCache::new(
        NonZeroUsize::new(MEMO_CAPACITY).expect("positive capacity"),
    ))
}

fn memoized(
    memo: &Memo,
    key: (usize, String),
    build: impl FnOnce() -> Result<Categorical>,
) -> Result<Arc<Categorical>> {
    if let Some(hit) = memo.lock().get(&key) {
        return Ok(hit.clone());
    }
    let value = Arc::new(build()?);
    memo.lock().put(key, value.clone());
    Ok(value)
}

/// Skeleton sampler bound to one inference result.
pub struct SkeletonGenerator<T: Scalar> {
    graph: SkeletonGraph,
    models: ChainModels<T>,
    result: InferenceResult<T>,
    /// Second-JA frequencies of the edge entering node `i`, index `i - 1`.
    incoming_second: Vec<FreqMap<T>>,
    root: Option<Categorical>,
    memo: Memo,
}

impl<T: Scalar> SkeletonGenerator<T> {
    pub fn new(
        graph: SkeletonGraph,
        models: ChainModels<T>,
        result: InferenceResult<T>,
    ) -> Result<Self> {
        let incoming_second = models
            .edges
            .iter()
            .map(|m| m.second_ja_freq())
            .collect::<Result<_>>()?;
        let root = Categorical::from_weights(&result.root().freqs);
        Ok(SkeletonGenerator {
            graph,
            models,
            result,
            incoming_second,
            root,
            memo: new_memo(),
        })
    }

    pub fn graph(&self) -> &SkeletonGraph {
        &self.graph
    }

    pub fn result(&self) -> &InferenceResult<T> {
        &self.result
    }

    pub fn models(&self) -> &ChainModels<T> {
        &self.models
    }

    /// Exact conditional of node `level` given the parent value.
    pub fn step(&self, level: usize, prev: &str) -> Result<Dist<T>> {
        conditional_step(
            prev,
            &self.result.tables[level],
            self.models.edges[level - 1].as_ref(),
            &self.incoming_second[level - 1],
        )
    }

    fn step_categorical(&self, level: usize, prev: &str) -> Result<Arc<Categorical>> {
        memoized(&self.memo, (level, prev.to_string()), || {
            let d = self.step(level, prev)?;
            Categorical::from_weights(&d).ok_or_else(|| {
                Error::ModelInconsistency(format!("degenerate conditional after {prev}"))
            })
        })
    }

    /// Skeleton values of row `r`.
    pub fn row(&self, seed: u64, r: u64) -> Result<Vec<String>> {
        let root = self.root.as_ref().ok_or(Error::EmptyJoin)?;
        let mut rng = row_rng(seed, DOMAIN_SKELETON, r);
        let mut out = Vec::with_capacity(self.graph.len());
        out.push(root.sample(&mut rng).to_string());
        for level in 1..self.graph.len() {
            let cat = self.step_categorical(level, &out[level - 1])?;
            out.push(cat.sample(&mut rng).to_string());
        }
        Ok(out)
    }

    /// `n` skeleton rows; identical for any worker count.
    pub fn generate(&self, n: usize, seed: u64, workers: usize) -> Result<SampleMatrix> {
        if n > 0 && self.root.is_none() {
            return Err(Error::EmptyJoin);
        }
        let rows = par_map(n, workers, |r| self.row(seed, r as u64))?;
        Ok(SampleMatrix {
            columns: self.graph.labels(),
            rows,
            seed,
        })
    }

    /// Probability that one row equals `tuple`, computed in `T` without sampling.
    pub fn analytic_probability<S: AsRef<str>>(&self, tuple: &[S]) -> Result<T> {
        if tuple.len() != self.graph.len() {
            return Err(Error::Parameter(format!(
                "expected {} skeleton values, got {}",
                self.graph.len(),
                tuple.len()
            )));
        }
        if self.result.is_empty() {
            return Ok(T::zero());
        }
        let Some(f1) = self.result.root().get(tuple[0].as_ref()) else {
            return Ok(T::zero());
        };
        let mut p = f1.clone() / self.result.join_size.clone();
        for level in 1..tuple.len() {
            let d = self.step(level, tuple[level - 1].as_ref())?;
            match d.get(tuple[level].as_ref()) {
                Some(q) => p = p * q.clone(),
                None => return Ok(T::zero()),
            }
        }
        Ok(p)
    }

    /// Every skeleton tuple with positive probability, refusing beyond `cap` tuples.
    pub fn distribution(&self, cap: usize) -> Result<BTreeMap<Vec<String>, T>> {
        let mut out = BTreeMap::new();
        if self.result.is_empty() {
            return Ok(out);
        }
        let mut frontier: Vec<(Vec<String>, T)> = self
            .result
            .root()
            .freqs
            .iter()
            .map(|(k, f)| (vec![k.clone()], f.clone() / self.result.join_size.clone()))
            .collect();
        for level in 1..self.graph.len() {
            let mut next = Vec::new();
            for (prefix, p) in frontier {
                for (dv, q) in self.step(level, &prefix[level - 1])? {
                    let mut t = prefix.clone();
                    t.push(dv);
                    next.push((t, p.clone() * q));
                }
                if next.len() > cap {
                    return Err(Error::CapExceeded {
                        estimate: next.len(),
                        cap,
                    });
                }
            }
            frontier = next;
        }
        if frontier.len() > cap {
            return Err(Error::CapExceeded {
                estimate: frontier.len(),
                cap,
            });
        }
        out.extend(frontier);
        Ok(out)
    }
}

/// Appends each attached non-JA, drawn from its table's conditional given the
/// same-table JA values already in the row.
pub fn attach_nonjas<T: Scalar>(
    mut matrix: SampleMatrix,
    attachments: &NonSkeletonAttachment,
    registry: &ModelRegistry<T>,
    seed: u64,
    workers: usize,
) -> Result<SampleMatrix> {
    if attachments.is_empty() {
        return Ok(matrix);
    }
    let models: Vec<&Arc<dyn TableModel<T>>> = attachments
        .attachments
        .iter()
        .map(|a| registry.model(&a.column.table))
        .collect::<Result<_>>()?;
    let memo: Mutex<LruCache<(usize, Vec<String>), Arc<Categorical>>> = Mutex::new(LruCache::new(
        NonZeroUsize::new(MEMO_CAPACITY).expect("positive capacity"),
    ));
    let rows = std::mem::take(&mut matrix.rows);
    let extended = par_map(rows.len(), workers, |r| {
        let mut row = rows[r].clone();
        let mut rng = row_rng(seed, DOMAIN_NONJA, r as u64);
        for (ai, a) in attachments.attachments.iter().enumerate() {
            let values: Vec<String> = a.given.iter().map(|(_, n)| row[*n].clone()).collect();
            let key = (ai, values);
            let cached = memo.lock().get(&key).cloned();
            let cat = match cached {
                Some(c) => c,
                None => {
                    let given: Vec<(&str, &str)> = a
                        .given
                        .iter()
                        .zip(&key.1)
                        .map(|((attr, _), v)| (attr.as_str(), v.as_str()))
                        .collect();
                    let d = models[ai].cond_nonja(&a.column.attr, &given)?;
                    let c = Arc::new(Categorical::from_weights(&d).ok_or_else(|| {
                        Error::ModelInconsistency(format!(
                            "empty distribution for {} given {given:?}",
                            a.column
                        ))
                    })?);
                    memo.lock().put(key, c.clone());
                    c
                }
            };
            row.push(cat.sample(&mut rng).to_string());
        }
        Ok(row)
    })?;
    matrix.rows = extended;
    matrix.columns.extend(attachments.labels());
    Ok(matrix)
}
