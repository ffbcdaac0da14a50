use std::sync::Arc;

use rand::Rng;

use super::{par_map, row_rng, SampleMatrix, SkeletonGenerator, DOMAIN_ACCEPT};
use crate::catalog::ModelRegistry;
use crate::error::{Error, Result};
use crate::join_graph::EliminatedEdge;
use crate::num::Scalar;
use crate::table_model::TableModel;

/// Models of the eliminated edges with their largest pair frequency.
pub struct EliminatedModels<T: Scalar> {
    edges: Vec<(EliminatedEdge, Arc<dyn TableModel<T>>, T)>,
}

impl<T: Scalar> EliminatedModels<T> {
    pub fn bind(eliminated: &[EliminatedEdge], registry: &ModelRegistry<T>) -> Result<Self> {
        let mut edges = Vec::with_capacity(eliminated.len());
        for e in eliminated {
            let m = registry.model(&e.table_id)?.clone();
            let fmax = m.max_pair_frequency()?;
            edges.push((e.clone(), m, fmax));
        }
        Ok(EliminatedModels { edges })
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// `Π_e f_e(x, y) / f_e,max` for the endpoint values carried by `row`.
pub fn acceptance_probability<T: Scalar>(row: &[String], models: &EliminatedModels<T>) -> Result<T> {
    let mut p = T::one();
    for (e, m, fmax) in &models.edges {
        if !fmax.is_positive() {
            return Ok(T::zero());
        }
        let f = m.pair_frequency(&row[e.first_node], &row[e.second_node])?;
        if !f.is_positive() {
            return Ok(T::zero());
        }
        p = p * f / fmax.clone();
    }
    Ok(p)
}

/// Draws skeleton candidates until `n` are accepted.
///
/// Candidate `r` and its acceptance test depend only on `(seed, r)`; the first
/// `n` accepted candidates in index order form the output, so the result does
/// not depend on the worker count. At most `budget` candidates are tried.
pub fn reject_cyclic<T: Scalar>(
    generator: &SkeletonGenerator<T>,
    eliminated: &EliminatedModels<T>,
    n: usize,
    seed: u64,
    budget: usize,
    workers: usize,
) -> Result<SampleMatrix> {
    if eliminated.is_empty() {
        return generator.generate(n, seed, workers);
    }
    let columns = generator.graph().labels();
    if n == 0 {
        return Ok(SampleMatrix {
            columns,
            rows: Vec::new(),
            seed,
        });
    }
    let batch = (2 * n).clamp(256, 1 << 16);
    let mut rows = Vec::with_capacity(n);
    let mut tried = 0usize;
    while rows.len() < n {
        if tried >= budget {
            return Err(Error::BudgetExceeded {
                accepted: rows.len(),
                target: n,
                attempts: tried,
                rate: rows.len() as f64 / tried.max(1) as f64,
            });
        }
        let size = batch.min(budget - tried);
        let start = tried;
        let results = par_map(size, workers, |i| {
            let r = (start + i) as u64;
            let row = generator.row(seed, r)?;
            let p = acceptance_probability(&row, eliminated)?.to_f64_lossy();
            let u: f64 = row_rng(seed, DOMAIN_ACCEPT, r).gen();
            Ok((u < p).then_some(row))
        })?;
        tried += size;
        for row in results.into_iter().flatten() {
            if rows.len() == n {
                break;
            }
            rows.push(row);
        }
    }
    log::info!("rejection sampling accepted {n} of {tried} candidates");
    Ok(SampleMatrix {
        columns,
        rows,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{resolve_query, Catalog, JoinQuery, TableMeta};
    use crate::inference::{bind_models, run_inference};
    use crate::join_graph::build_skeleton;
    use crate::table_model::ExactNestedIndex;

    fn triangle(rows3: &[[&str; 2]]) -> (SkeletonGenerator<f64>, EliminatedModels<f64>) {
        let metas = vec![
            TableMeta::new("T1", &["X", "Y"], 0, &["X", "Y"]),
            TableMeta::new("T2", &["Y", "Z"], 0, &["Y", "Z"]),
            TableMeta::new("T3", &["Z", "X"], 0, &["Z", "X"]),
        ];
        let data: [Vec<Vec<String>>; 3] = [
            vec![vec!["x1".into(), "y1".into()], vec!["x2".into(), "y1".into()]],
            vec![vec!["y1".into(), "z1".into()], vec!["y1".into(), "z2".into()]],
            rows3.iter().map(|r| vec![r[0].to_string(), r[1].to_string()]).collect(),
        ];
        let mut reg = ModelRegistry::new();
        for (m, rows) in metas.iter().zip(&data) {
            reg.register(
                m.table_id.clone(),
                Arc::new(ExactNestedIndex::from_rows(m, rows).unwrap()) as Arc<dyn TableModel<f64>>,
            );
        }
        let q = JoinQuery::new(&[], &["T1.Y = T2.Y", "T2.Z = T3.Z", "T3.X = T1.X"]).unwrap();
        let rq = resolve_query(&q, &Catalog::new(metas).unwrap(), &reg).unwrap();
        let s = build_skeleton(&rq, None).unwrap();
        let models = bind_models(&s.graph, &reg).unwrap();
        let r = run_inference(&s.graph, &models).unwrap();
        let g = SkeletonGenerator::new(s.graph.clone(), models, r).unwrap();
        (g, EliminatedModels::bind(&s.eliminated, &reg).unwrap())
    }

    #[test]
    fn rejects_pairs_absent_from_eliminated_table() {
        let (g, e) = triangle(&[["z1", "x1"]]);
        let m = reject_cyclic(&g, &e, 50, 4, 100_000, 1).unwrap();
        let x = m.column_index("X").unwrap();
        let z = m.column_index("Z").unwrap();
        assert!(m.rows.iter().all(|r| r[x] == "x1" && r[z] == "z1"));
    }

    #[test]
    fn budget_exceeded_reports_rate() {
        let (g, e) = triangle(&[["z9", "x9"], ["z8", "x8"], ["z7", "x7"]]);
        match reject_cyclic(&g, &e, 5, 4, 1000, 1) {
            Err(Error::BudgetExceeded { accepted, attempts, rate, .. }) => {
                assert_eq!(accepted, 0);
                assert_eq!(attempts, 1000);
                assert_eq!(rate, 0.0);
            }
            other => panic!("expected budget error, got {:?}", other.map(|m| m.len())),
        }
    }

    #[test]
    fn worker_count_invariant() {
        let (g, e) = triangle(&[["z1", "x1"], ["z2", "x2"], ["z2", "x1"]]);
        let a = reject_cyclic(&g, &e, 300, 9, 1_000_000, 1).unwrap();
        let b = reject_cyclic(&g, &e, 300, 9, 1_000_000, 3).unwrap();
        assert_eq!(a, b);
    }
}
