use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::catalog::{ColumnRef, JoinQuery};
use crate::data::Table;
use crate::error::{Error, Result};
use crate::sampler::{row_rng, DOMAIN_ORACLE};

/// The exact join of small tables, projected and kept as distinct tuples with multiplicities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleJoin {
    pub columns: Vec<String>,
    /// Sorted by tuple; every count is positive.
    pub tuples: Vec<(Vec<String>, u64)>,
    pub size: u64,
}

impl OracleJoin {
    pub fn distinct(&self) -> usize {
        self.tuples.len()
    }

    pub fn count(&self, tuple: &[String]) -> u64 {
        self.tuples
            .binary_search_by(|(t, _)| t.as_slice().cmp(tuple))
            .map_or(0, |i| self.tuples[i].1)
    }

    /// Every join tuple, repeated by multiplicity.
    pub fn expand(&self) -> Vec<Vec<String>> {
        self.tuples
            .iter()
            .flat_map(|(t, c)| std::iter::repeat(t.clone()).take(*c as usize))
            .collect()
    }

    /// `n` uniform draws with replacement from the join result.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<String>>> {
        if n > 0 && self.size == 0 {
            return Err(Error::EmptyJoin);
        }
        let mut cum = Vec::with_capacity(self.tuples.len());
        let mut acc = 0u64;
        for (_, c) in &self.tuples {
            acc += c;
            cum.push(acc);
        }
        Ok((0..n)
            .map(|r| {
                let u = row_rng(seed, DOMAIN_ORACLE, r as u64).gen_range(0..self.size);
                let i = cum.partition_point(|&c| c <= u);
                self.tuples[i].0.clone()
            })
            .collect())
    }

    /// Renames the output columns.
    pub fn with_columns(mut self, columns: Vec<String>) -> Self {
        assert_eq!(columns.len(), self.columns.len());
        self.columns = columns;
        self
    }
}

struct Compressed<'a> {
    table: &'a str,
    columns: Vec<String>,
    rows: Vec<(Vec<String>, u64)>,
}

fn compress<'a>(t: &'a Table, needed: &[String]) -> Result<Compressed<'a>> {
    let idx: Vec<usize> = needed.iter().map(|a| t.column(a)).collect::<Result<_>>()?;
    let mut counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for row in &t.rows {
        *counts
            .entry(idx.iter().map(|&i| row[i].clone()).collect())
            .or_insert(0) += 1;
    }
    Ok(Compressed {
        table: t.id(),
        columns: needed.to_vec(),
        rows: counts.into_iter().collect(),
    })
}

/// Joins `tables` as `query` says and projects onto `output`.
///
/// Tables are first reduced to distinct rows over the columns the query
/// touches, then hash-joined with multiplicities multiplied. `cap` bounds the
/// number of distinct intermediate tuples.
pub fn oracle_join(
    tables: &[Table],
    query: &JoinQuery,
    output: &[ColumnRef],
    cap: usize,
) -> Result<OracleJoin> {
    let mut parts = Vec::with_capacity(query.tables.len());
    for id in &query.tables {
        let t = tables
            .iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Error::Resolution(format!("no data for table {id}")))?;
        let mut needed: Vec<String> = Vec::new();
        let cols = query
            .joins
            .iter()
            .flat_map(|j| [&j.left, &j.right])
            .chain(output.iter());
        for c in cols {
            if &c.table == id && !needed.contains(&c.attr) {
                needed.push(c.attr.clone());
            }
        }
        parts.push(compress(t, &needed)?);
    }
    if parts.is_empty() {
        return Err(Error::Resolution("query names no tables".into()));
    }

    let mut slots: Vec<ColumnRef> = Vec::new();
    let mut partial: Vec<(Vec<String>, u64)> = vec![(Vec::new(), 1)];
    let mut included: Vec<String> = Vec::new();
    let mut remaining: Vec<usize> = (0..parts.len()).collect();
    while !remaining.is_empty() {
        let linked = |i: &usize| {
            query.joins.iter().any(|j| {
                let t = parts[*i].table;
                (j.left.table == t && included.contains(&j.right.table))
                    || (j.right.table == t && included.contains(&j.left.table))
            })
        };
        let pick = remaining.iter().position(linked).unwrap_or(0);
        let p = &parts[remaining.remove(pick)];

        // (slot in partial, column in p)
        let mut keys: Vec<(usize, usize)> = Vec::new();
        for j in &query.joins {
            let (mine, other) = if j.left.table == p.table {
                (&j.left, &j.right)
            } else if j.right.table == p.table {
                (&j.right, &j.left)
            } else {
                continue;
            };
            if let Some(s) = slots.iter().position(|c| c == other) {
                let c = p.columns.iter().position(|a| a == &mine.attr).expect("needed");
                keys.push((s, c));
            }
        }
        let mut index: HashMap<Vec<&str>, Vec<usize>> = HashMap::new();
        for (ri, (row, _)) in p.rows.iter().enumerate() {
            index
                .entry(keys.iter().map(|&(_, c)| row[c].as_str()).collect())
                .or_default()
                .push(ri);
        }
        let mut next = Vec::new();
        for (tuple, count) in &partial {
            let key: Vec<&str> = keys.iter().map(|&(s, _)| tuple[s].as_str()).collect();
            let Some(matches) = index.get(&key) else { continue };
            for &ri in matches {
                let (row, c) = &p.rows[ri];
                let mut t = tuple.clone();
                t.extend(row.iter().cloned());
                let n = count.checked_mul(*c).ok_or_else(|| {
                    Error::Parameter("oracle join multiplicity overflows 64 bits".into())
                })?;
                next.push((t, n));
            }
            if next.len() > cap {
                return Err(Error::CapExceeded {
                    estimate: next.len(),
                    cap,
                });
            }
        }
        partial = next;
        slots.extend(p.columns.iter().map(|a| ColumnRef::new(p.table, a.as_str())));
        included.push(p.table.to_string());
    }

    let proj: Vec<usize> = output
        .iter()
        .map(|c| {
            slots
                .iter()
                .position(|s| s == c)
                .ok_or_else(|| Error::Resolution(format!("{c} is not a column of the query")))
        })
        .collect::<Result<_>>()?;
    let mut out: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    let mut size = 0u64;
    for (t, c) in partial {
        let key = proj.iter().map(|&i| t[i].clone()).collect();
        *out.entry(key).or_insert(0) += c;
        size = size
            .checked_add(c)
            .ok_or_else(|| Error::Parameter("oracle join size overflows 64 bits".into()))?;
    }
    Ok(OracleJoin {
        columns: output.iter().map(|c| c.to_string()).collect(),
        tuples: out.into_iter().collect(),
        size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::TableMeta;
    use crate::fixtures;

    fn cols(spec: &[&str]) -> Vec<ColumnRef> {
        spec.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn chain4_oracle() {
        let o = oracle_join(
            &fixtures::chain4_tables(),
            &fixtures::chain4_query(),
            &cols(&["D1.B", "D2.D", "D3.E"]),
            1000,
        )
        .unwrap();
        assert_eq!(o.size, 8);
        assert_eq!(
            o.tuples,
            vec![
                (vec!["b3".into(), "d2".into(), "e1".into()], 2),
                (vec!["b3".into(), "d2".into(), "e2".into()], 6),
            ]
        );
        assert_eq!(o.expand().len(), 8);
    }

    #[test]
    fn full_rows_of_chain4() {
        let o = oracle_join(
            &fixtures::chain4_tables(),
            &fixtures::chain4_query(),
            &cols(&["D1.A", "D2.C", "D4.F"]),
            1000,
        )
        .unwrap();
        assert_eq!(o.size, 8);
        let a2 = o.tuples.iter().filter(|(t, _)| t[0] == "a2").map(|(_, c)| c).sum::<u64>();
        assert_eq!(a2, 4);
    }

    #[test]
    fn empty_table_joins_to_nothing() {
        let mut tables = fixtures::chain4_tables();
        tables[3].rows.clear();
        let o = oracle_join(&tables, &fixtures::chain4_query(), &cols(&["D1.B"]), 100).unwrap();
        assert_eq!(o.size, 0);
        assert!(o.tuples.is_empty());
        assert!(o.sample(1, 0).is_err());
    }

    #[test]
    fn single_table_is_itself() {
        let q = JoinQuery::new(&["D4.E", "D4.F"], &[]).unwrap();
        let o = oracle_join(&fixtures::chain4_tables(), &q, &cols(&["D4.E", "D4.F"]), 100).unwrap();
        assert_eq!(o.size, 4);
        assert_eq!(o.count(&["e2".to_string(), "f1".to_string()]), 2);
    }

    #[test]
    fn cap_is_enforced() {
        let r = oracle_join(
            &fixtures::chain4_tables(),
            &fixtures::chain4_query(),
            &cols(&["D1.A", "D2.C", "D4.F"]),
            1,
        );
        assert!(matches!(r, Err(Error::CapExceeded { cap: 1, .. })));
    }

    #[test]
    fn cyclic_condition_applies_both_keys() {
        let t = |id: &str, a: &str, b: &str, rows: &[&[&str]]| {
            Table::from_strs(TableMeta::new(id, &[a, b], 0, &[a, b]), rows).unwrap()
        };
        let tables = vec![
            t("T1", "X", "Y", &[&["x1", "y1"], &["x2", "y1"]]),
            t("T2", "Y", "Z", &[&["y1", "z1"]]),
            t("T3", "Z", "X", &[&["z1", "x1"]]),
        ];
        let q = JoinQuery::new(&[], &["T1.Y = T2.Y", "T2.Z = T3.Z", "T3.X = T1.X"]).unwrap();
        let o = oracle_join(&tables, &q, &cols(&["T1.X", "T1.Y", "T2.Z"]), 100).unwrap();
        assert_eq!(o.size, 1);
        assert_eq!(o.tuples[0].0, ["x1", "y1", "z1"]);
    }

    #[test]
    fn oracle_sampling_is_uniform_over_tuples() {
        let o = oracle_join(
            &fixtures::chain4_tables(),
            &fixtures::chain4_query(),
            &cols(&["D3.E"]),
            100,
        )
        .unwrap();
        let s = o.sample(20_000, 3).unwrap();
        let e2 = s.iter().filter(|t| t[0] == "e2").count() as f64 / 20_000.0;
        assert!((e2 - 0.75).abs() < 0.015);
        assert_eq!(s, o.sample(20_000, 3).unwrap());
    }
}
