//! Single leaf-to-root elimination pass producing the join frequency tables.
//!
//! For node `i` the table `ℱᵢ(dv)` counts join tuples of the sub-chain from `i`
//! to the leaf whose value at `i` is `dv`. It is the product, over the shared
//! support, of the incoming edge table's second-JA frequency, every unary
//! table's frequency, and the outgoing edge table's first-JA frequency times
//! the propagation factor
//!
//! ```text
//! Λ(dv) = Σ_DV P(DV | dv) · ℱᵢ₊₁(DV) / f¹(DV)
//! ```
//!
//! where `P` and `f¹` belong to the outgoing edge table. On a plain chain this
//! is the usual leaf product `f¹ₙ₋₁ · f⁰ₙ` followed by the elimination steps
//! `ℱᵢ = fᵢ¹ · fᵢ₊₁⁰ · Λᵢ₊₁`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::catalog::{JaPosition, ModelRegistry};
use crate::error::{Error, Result};
use crate::join_graph::SkeletonGraph;
use crate::num::{sum, Scalar};
use crate::table_model::{Dist, FreqMap, TableModel};

/// Distance to the nearest integer below which exact-model frequencies are rounded.
pub const SNAP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable<T> {
    pub node: usize,
    pub label: String,
    /// Strictly positive frequencies only.
    pub freqs: FreqMap<T>,
}

impl<T: Scalar> FrequencyTable<T> {
    pub fn get(&self, dv: &str) -> Option<&T> {
        self.freqs.get(dv)
    }

    pub fn total(&self) -> T {
        sum(self.freqs.values())
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InferenceStats {
    /// `(dv, DV)` conditional entries visited while computing `Λ`.
    pub pairs_touched: u64,
    pub elapsed_micros: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult<T> {
    /// Root first.
    pub tables: Vec<FrequencyTable<T>>,
    pub join_size: T,
    /// Whether every model involved was exact, so frequencies are integers.
    pub exact: bool,
    pub stats: InferenceStats,
}

impl<T: Scalar> InferenceResult<T> {
    pub fn root(&self) -> &FrequencyTable<T> {
        &self.tables[0]
    }

    pub fn is_empty(&self) -> bool {
        !self.join_size.is_positive()
    }

    pub fn report(&self) -> InferenceReport {
        InferenceReport {
            join_size: self.join_size.to_f64_lossy(),
            exact: self.exact,
            levels: self
                .tables
                .iter()
                .map(|t| LevelReport {
                    node: t.label.clone(),
                    support: t.freqs.len(),
                    total: t.total().to_f64_lossy(),
                })
                .collect(),
            stats: self.stats.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub node: String,
    pub support: usize,
    pub total: f64,
}

/// Serializable summary for the command line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceReport {
    pub join_size: f64,
    pub exact: bool,
    pub levels: Vec<LevelReport>,
    pub stats: InferenceStats,
}

/// Models bound to skeleton positions, with edge tables oriented parent to child.
pub struct ChainModels<T: Scalar> {
    /// `edges[i]` links node `i` to node `i + 1`; its first JA is the parent side.
    pub edges: Vec<Arc<dyn TableModel<T>>>,
    /// Per node: unary tables and which of their JAs sits on the node.
    pub unary: Vec<Vec<(Arc<dyn TableModel<T>>, JaPosition)>>,
}

impl<T: Scalar> ChainModels<T> {
    pub fn all_exact(&self) -> bool {
        self.edges.iter().all(|m| m.is_exact())
            && self.unary.iter().flatten().all(|(m, _)| m.is_exact())
    }
}

/// Looks up and orients the model of every skeleton table.
pub fn bind_models<T: Scalar>(
    g: &SkeletonGraph,
    registry: &ModelRegistry<T>,
) -> Result<ChainModels<T>> {
    let mut edges = Vec::with_capacity(g.edges.len());
    for e in &g.edges {
        let m = registry.model(&e.table_id)?.clone();
        let oriented = match m.ja_position(&e.parent_attr) {
            Some(JaPosition::First) => m,
            Some(JaPosition::Second) => m.reversed().ok_or_else(|| {
                Error::Capability(format!(
                    "the model of {} cannot be traversed from {} to {}; choose the other root",
                    e.table_id, e.parent_attr, e.child_attr
                ))
            })?,
            None => {
                return Err(Error::ModelInconsistency(format!(
                    "model of {} does not declare join attribute {}",
                    e.table_id, e.parent_attr
                )))
            }
        };
        edges.push(oriented);
    }
    let mut unary = Vec::with_capacity(g.unary.len());
    for factors in &g.unary {
        let mut node = Vec::with_capacity(factors.len());
        for u in factors {
            let m = registry.model(&u.table_id)?.clone();
            let pos = m.ja_position(&u.attr).ok_or_else(|| {
                Error::ModelInconsistency(format!(
                    "model of {} does not declare join attribute {}",
                    u.table_id, u.attr
                ))
            })?;
            node.push((m, pos));
        }
        unary.push(node);
    }
    Ok(ChainModels { edges, unary })
}

/// `ℱ(dv) = a(dv) · b(dv)` on the shared support, zero products omitted.
pub fn leaf_frequency<T: Scalar>(f_prev_second: &FreqMap<T>, f_first: &FreqMap<T>) -> FreqMap<T> {
    product(&[f_prev_second, f_first])
}

fn product<T: Scalar>(factors: &[&FreqMap<T>]) -> FreqMap<T> {
    let Some((smallest, _)) = factors.iter().enumerate().min_by_key(|(_, f)| f.len()) else {
        return FreqMap::new();
    };
    let mut out = FreqMap::new();
    'dv: for (dv, v) in factors[smallest] {
        let mut acc = v.clone();
        for (i, f) in factors.iter().enumerate() {
            if i == smallest {
                continue;
            }
            match f.get(dv) {
                Some(x) => acc = acc * x.clone(),
                None => continue 'dv,
            }
        }
        if acc.is_positive() {
            out.insert(dv.clone(), acc);
        }
    }
    out
}

/// `Λ(dv) = Σ_DV P(DV | dv) · ℱ_next(DV) / f¹(DV)`.
pub fn propagation_factor<T: Scalar>(
    cond: &Dist<T>,
    f_next: &FreqMap<T>,
    f_next_second: &FreqMap<T>,
    counter: Option<&AtomicU64>,
) -> Result<T> {
    let mut acc = T::zero();
    for (big, p) in cond {
        if let Some(c) = counter {
            c.fetch_add(1, Ordering::Relaxed);
        }
        let Some(fn_) = f_next.get(big) else { continue };
        let denom = f_next_second.get(big).cloned().unwrap_or_else(T::zero);
        if !denom.is_positive() {
            return Err(Error::ModelInconsistency(format!(
                "value {big} has join frequency {fn_:?} but zero table frequency"
            )));
        }
        acc = acc + p.clone() * fn_.clone() / denom;
    }
    Ok(acc)
}

fn conditional<T: Scalar>(model: &dyn TableModel<T>, dv: &str) -> Result<Dist<T>> {
    model.cond_second_given_first(dv).map_err(|e| match e {
        Error::UnseenValue { table, value } => Error::ModelInconsistency(format!(
            "table {table} reports frequency for {value} but no conditional"
        )),
        other => other,
    })
}

/// One elimination step: `ℱᵢ(dv) = fᵢ¹(dv) · fᵢ₊₁⁰(dv) · Λᵢ₊₁(dv)`.
///
/// `cond` is table `i+1`'s conditional of its second JA given its first.
pub fn eliminate_step<T: Scalar>(
    f_i1: &FreqMap<T>,
    f_ip10: &FreqMap<T>,
    cond: &dyn TableModel<T>,
    f_next: &FreqMap<T>,
    f_ip11: &FreqMap<T>,
) -> Result<FreqMap<T>> {
    node_frequency(&[f_i1], Some((f_ip10, cond, f_next, f_ip11)), None)
}

fn node_frequency<T: Scalar>(
    factors: &[&FreqMap<T>],
    outgoing: Option<(&FreqMap<T>, &dyn TableModel<T>, &FreqMap<T>, &FreqMap<T>)>,
    counter: Option<&AtomicU64>,
) -> Result<FreqMap<T>> {
    let Some((f_out0, model, f_next, f_out1)) = outgoing else {
        return Ok(product(factors));
    };
    let mut all: Vec<&FreqMap<T>> = factors.to_vec();
    all.push(f_out0);
    let base = product(&all);
    let mut out = FreqMap::new();
    if f_next.is_empty() {
        return Ok(out);
    }
    for (dv, v) in base {
        let lambda = propagation_factor(&conditional(model, &dv)?, f_next, f_out1, counter)?;
        let f = v * lambda;
        if f.is_positive() {
            out.insert(dv, f);
        }
    }
    Ok(out)
}

fn snap<T: Scalar>(m: FreqMap<T>) -> FreqMap<T> {
    m.into_iter()
        .map(|(k, v)| (k, v.snap_integer(SNAP_TOLERANCE)))
        .filter(|(_, v)| v.is_positive())
        .collect()
}

/// Computes every `ℱᵢ`, leaf to root, and `ℱ₀ = Σ ℱ₁`.
pub fn run_inference<T: Scalar>(
    g: &SkeletonGraph,
    models: &ChainModels<T>,
) -> Result<InferenceResult<T>> {
    let started = Instant::now();
    let m = g.nodes.len();
    if m == 0 {
        return Err(Error::UnsupportedShape("empty skeleton".into()));
    }
    let exact = models.all_exact();
    let counter = AtomicU64::new(0);
    let mut tables: Vec<Option<FreqMap<T>>> = vec![None; m];
    // second-JA frequencies of the edge entering node i+1, reused by node i
    let mut next_in: Option<FreqMap<T>> = None;
    for i in (0..m).rev() {
        let mut owned: Vec<FreqMap<T>> = Vec::new();
        let incoming = match i {
            0 => None,
            _ => Some(models.edges[i - 1].second_ja_freq()?),
        };
        if let Some(f) = &incoming {
            owned.push(f.clone());
        }
        for (model, pos) in &models.unary[i] {
            owned.push(model.ja_freq(*pos)?);
        }
        let factors: Vec<&FreqMap<T>> = owned.iter().collect();
        let downstream_empty = i + 1 < m && tables[i + 1].as_ref().is_some_and(|t| t.is_empty());
        let freqs = if downstream_empty {
            FreqMap::new()
        } else if i + 1 < m {
            let edge = &models.edges[i];
            let f_out0 = edge.first_ja_freq()?;
            let f_out1 = next_in.as_ref().expect("set by the previous step");
            let f_next = tables[i + 1].as_ref().expect("computed leaf first");
            node_frequency(
                &factors,
                Some((&f_out0, edge.as_ref(), f_next, f_out1)),
                Some(&counter),
            )?
        } else {
            node_frequency(&factors, None, None)?
        };
        tables[i] = Some(if exact { snap(freqs) } else { freqs });
        next_in = incoming;
    }
    let tables: Vec<FrequencyTable<T>> = tables
        .into_iter()
        .enumerate()
        .map(|(i, f)| FrequencyTable {
            node: i,
            label: g.nodes[i].label.clone(),
            freqs: f.expect("every level computed"),
        })
        .collect();
    let mut join_size = tables[0].total();
    if exact {
        join_size = join_size.snap_integer(SNAP_TOLERANCE);
    }
    Ok(InferenceResult {
        tables,
        join_size,
        exact,
        stats: InferenceStats {
            pairs_touched: counter.into_inner(),
            elapsed_micros: started.elapsed().as_micros(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::resolve_query;
    use crate::fixtures;
    use crate::join_graph::build_skeleton;
    use crate::num::Rational;
    use crate::table_model::{build_exact, ExactNestedIndex};

    fn f(pairs: &[(&str, u64)]) -> FreqMap<u64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn chain4<T: Scalar>() -> (SkeletonGraph, InferenceResult<T>) {
        let reg = fixtures::chain4_registry::<T>();
        let rq = resolve_query(&fixtures::chain4_query(), &fixtures::chain4_catalog(), &reg)
            .unwrap();
        let s = build_skeleton(&rq, None).unwrap();
        let models = bind_models(&s.graph, &reg).unwrap();
        let r = run_inference(&s.graph, &models).unwrap();
        (s.graph, r)
    }

    fn as_u64<T: Scalar>(m: &FreqMap<T>) -> FreqMap<u64> {
        m.iter()
            .map(|(k, v)| {
                let x = v.to_f64_lossy();
                assert_eq!(x, x.round());
                (k.clone(), x as u64)
            })
            .collect()
    }

    #[test]
    fn chain4_tables() {
        let (_, r) = chain4::<f64>();
        assert_eq!(as_u64(&r.tables[2].freqs), f(&[("e1", 1), ("e2", 3)]));
        assert_eq!(as_u64(&r.tables[1].freqs), f(&[("d2", 4)]));
        assert_eq!(as_u64(&r.tables[0].freqs), f(&[("b3", 8)]));
        assert_eq!(r.join_size, 8.0);
        assert!(r.exact);
    }

    #[test]
    fn chain4_rational() {
        let (_, r) = chain4::<Rational>();
        assert_eq!(r.join_size, Rational::from_count(8));
        assert_eq!(r.tables[1].freqs["d2"], Rational::from_count(4));
    }

    #[test]
    fn leaf_product_omits_missing() {
        let d3 = build_exact(&fixtures::chain4_table("D3")).unwrap();
        let d4 = build_exact(&fixtures::chain4_table("D4")).unwrap();
        let a: FreqMap<f64> = TableModel::<f64>::second_ja_freq(&d3).unwrap();
        let b: FreqMap<f64> = TableModel::<f64>::first_ja_freq(&d4).unwrap();
        let leaf = leaf_frequency(&a, &b);
        assert_eq!(leaf.len(), 2);
        assert!(!leaf.contains_key("e3"));
        assert_eq!(leaf["e2"], 3.0);

        let one: FreqMap<f64> = [("v".to_string(), 1.0)].into();
        assert_eq!(leaf_frequency(&one, &one), one);
    }

    #[test]
    fn propagation_factors() {
        let d3 = build_exact(&fixtures::chain4_table("D3")).unwrap();
        let d2 = build_exact(&fixtures::chain4_table("D2")).unwrap();
        let f_e: FreqMap<Rational> = [
            ("e1".to_string(), Rational::from_count(1)),
            ("e2".to_string(), Rational::from_count(3)),
        ]
        .into();
        let d3_second: FreqMap<Rational> = TableModel::<Rational>::second_ja_freq(&d3).unwrap();
        let l_d2 = propagation_factor(&d3.exact_conditional("d2").unwrap(), &f_e, &d3_second, None)
            .unwrap();
        assert_eq!(l_d2, Rational::new(4.into(), 3.into()));
        let l_d1 = propagation_factor(&d3.exact_conditional("d1").unwrap(), &f_e, &d3_second, None)
            .unwrap();
        assert_eq!(l_d1, Rational::from_count(0));

        let f_d: FreqMap<Rational> = [("d2".to_string(), Rational::from_count(4))].into();
        let d2_second: FreqMap<Rational> = TableModel::<Rational>::second_ja_freq(&d2).unwrap();
        let l_b3 = propagation_factor(&d2.exact_conditional("b3").unwrap(), &f_d, &d2_second, None)
            .unwrap();
        assert_eq!(l_b3, Rational::from_count(2));
    }

    #[test]
    fn eliminate_step_to_d() {
        let d2 = build_exact(&fixtures::chain4_table("D2")).unwrap();
        let d3 = build_exact(&fixtures::chain4_table("D3")).unwrap();
        let f_e: FreqMap<f64> = [("e1".to_string(), 1.0), ("e2".to_string(), 3.0)].into();
        let out = eliminate_step(
            &TableModel::<f64>::second_ja_freq(&d2).unwrap(),
            &TableModel::<f64>::first_ja_freq(&d3).unwrap(),
            &d3,
            &f_e,
            &TableModel::<f64>::second_ja_freq(&d3).unwrap(),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert!((out["d2"] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_table_join_size() {
        let reg = fixtures::chain4_registry::<f64>();
        let q = crate::catalog::JoinQuery::new(&[], &["D3.E = D4.E"]).unwrap();
        let rq = resolve_query(&q, &fixtures::chain4_catalog(), &reg).unwrap();
        let s = build_skeleton(&rq, None).unwrap();
        let r = run_inference(&s.graph, &bind_models(&s.graph, &reg).unwrap()).unwrap();
        assert_eq!(r.join_size, 4.0);
    }

    #[test]
    fn empty_table_gives_empty_join() {
        let mut reg = fixtures::chain4_registry::<f64>();
        let meta = fixtures::chain4_catalog().get("D4").unwrap().clone();
        let empty = ExactNestedIndex::from_rows::<Vec<String>>(&meta, &[]).unwrap();
        reg.register("D4", Arc::new(empty));
        let rq = resolve_query(&fixtures::chain4_query(), &fixtures::chain4_catalog(), &reg)
            .unwrap();
        let s = build_skeleton(&rq, None).unwrap();
        let r = run_inference(&s.graph, &bind_models(&s.graph, &reg).unwrap()).unwrap();
        assert_eq!(r.join_size, 0.0);
        assert!(r.tables.iter().all(|t| t.is_empty()));
    }

    #[test]
    fn reversed_root_gives_same_size() {
        let reg = fixtures::chain4_registry::<f64>();
        let rq = resolve_query(&fixtures::chain4_query(), &fixtures::chain4_catalog(), &reg)
            .unwrap();
        let s = build_skeleton(&rq, Some("E")).unwrap();
        let r = run_inference(&s.graph, &bind_models(&s.graph, &reg).unwrap()).unwrap();
        assert_eq!(r.join_size, 8.0);
        assert_eq!(r.tables[0].freqs["e2"], 6.0);
        assert_eq!(r.tables[0].freqs["e1"], 2.0);
    }

    #[test]
    fn single_pass_touch_count() {
        let (_, r) = chain4::<f64>();
        // D: d1 (1 pair) and d2 (3 pairs) of D3; B: b1 (1) and b3 (2) of D2
        assert_eq!(r.stats.pairs_touched, 7);
    }

    #[test]
    fn deterministic() {
        let (_, a) = chain4::<f64>();
        let (_, b) = chain4::<f64>();
        assert_eq!(a.tables, b.tables);
        assert_eq!(a.report().levels, b.report().levels);
    }
}
