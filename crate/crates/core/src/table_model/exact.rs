use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{require_two_jas, Dist, FreqMap, ModelKind, TableModel};
use crate::catalog::TableMeta;
use crate::data::Table;
use crate::error::{Error, Result};
use crate::num::Scalar;

type Counts = BTreeMap<String, u64>;

/// Exact model: nested first → second → count index plus per-JA frequency maps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactNestedIndex {
    table_id: String,
    table_size: u64,
    attributes: Vec<String>,
    join_attrs: Vec<String>,
    first: Counts,
    second: Counts,
    pairs: BTreeMap<String, Counts>,
    /// attribute → sorted (JA values, counts of the attribute's values).
    nonja: BTreeMap<String, Vec<(Vec<String>, Counts)>>,
}

/// Builds the exact index from raw rows.
pub fn build_exact(table: &Table) -> Result<ExactNestedIndex> {
    ExactNestedIndex::from_rows(&table.meta, &table.rows)
}

impl ExactNestedIndex {
    pub fn from_rows<R: AsRef<[String]>>(meta: &TableMeta, rows: &[R]) -> Result<Self> {
        meta.validate()?;
        let ja_idx: Vec<usize> = meta
            .join_attrs
            .iter()
            .map(|a| meta.attr_index(a).expect("validated"))
            .collect();
        let nonja_idx: Vec<(String, usize)> = meta
            .non_join_attrs()
            .map(|a| (a.clone(), meta.attr_index(a).expect("validated")))
            .collect();

        let mut first = Counts::new();
        let mut second = Counts::new();
        let mut pairs: BTreeMap<String, Counts> = BTreeMap::new();
        let mut nonja: BTreeMap<String, BTreeMap<Vec<String>, Counts>> = BTreeMap::new();

        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != meta.attributes.len() {
                return Err(Error::Ingestion(format!(
                    "table {} row {r} has {} values, expected {}",
                    meta.table_id,
                    row.len(),
                    meta.attributes.len()
                )));
            }
            let key: Vec<String> = ja_idx.iter().map(|&i| row[i].clone()).collect();
            if let Some(pos) = key.iter().position(|v| v.is_empty()) {
                return Err(Error::Ingestion(format!(
                    "table {} row {r} is missing join attribute {}",
                    meta.table_id, meta.join_attrs[pos]
                )));
            }
            match key.as_slice() {
                [] => {}
                [a] => *first.entry(a.clone()).or_default() += 1,
                [a, b] => {
                    *first.entry(a.clone()).or_default() += 1;
                    *second.entry(b.clone()).or_default() += 1;
                    *pairs
                        .entry(a.clone())
                        .or_default()
                        .entry(b.clone())
                        .or_default() += 1;
                }
                _ => unreachable!("at most two join attributes"),
            }
            for (attr, i) in &nonja_idx {
                *nonja
                    .entry(attr.clone())
                    .or_default()
                    .entry(key.clone())
                    .or_default()
                    .entry(row[*i].clone())
                    .or_default() += 1;
            }
        }
        if meta.join_attrs.len() == 1 {
            second = first.clone();
        }
        let nonja = nonja
            .into_iter()
            .map(|(a, m)| (a, m.into_iter().collect()))
            .collect();
        Ok(ExactNestedIndex {
            table_id: meta.table_id.clone(),
            table_size: rows.len() as u64,
            attributes: meta.attributes.clone(),
            join_attrs: meta.join_attrs.clone(),
            first,
            second,
            pairs,
            nonja,
        })
    }

    pub fn meta(&self) -> TableMeta {
        TableMeta {
            table_id: self.table_id.clone(),
            attributes: self.attributes.clone(),
            row_count: self.table_size,
            join_attrs: self.join_attrs.clone(),
        }
    }

    pub fn first_counts(&self) -> &Counts {
        &self.first
    }

    pub fn second_counts(&self) -> &Counts {
        &self.second
    }

    /// Nested pair counts: first value → second value → count.
    pub fn pair_counts(&self) -> &BTreeMap<String, Counts> {
        &self.pairs
    }

    pub fn pair_count(&self, x: &str, y: &str) -> u64 {
        self.pairs
            .get(x)
            .and_then(|m| m.get(y))
            .copied()
            .unwrap_or(0)
    }

    /// Exact conditional `P(second | first = x)` as counts over `f⁰(x)`.
    pub fn exact_conditional<T: Scalar>(&self, x: &str) -> Result<Dist<T>> {
        require_two_jas(&self.table_id, &self.join_attrs)?;
        let Some(inner) = self.pairs.get(x) else {
            return Err(Error::UnseenValue {
                table: self.table_id.clone(),
                value: x.to_string(),
            });
        };
        let total = T::from_count(self.first[x]);
        Ok(inner
            .iter()
            .map(|(y, &c)| (y.clone(), T::from_count(c) / total.clone()))
            .collect())
    }

    /// A copy keeping only the per-JA frequencies and non-JA conditionals.
    pub fn without_pairs(&self) -> ExactNestedIndex {
        ExactNestedIndex {
            pairs: BTreeMap::new(),
            ..self.clone()
        }
    }

    /// The same table with the JA roles swapped.
    pub fn reversed_index(&self) -> ExactNestedIndex {
        let mut pairs: BTreeMap<String, Counts> = BTreeMap::new();
        for (x, inner) in &self.pairs {
            for (y, &c) in inner {
                pairs.entry(y.clone()).or_default().insert(x.clone(), c);
            }
        }
        let nonja = self
            .nonja
            .iter()
            .map(|(a, entries)| {
                let mut rev: Vec<(Vec<String>, Counts)> = entries
                    .iter()
                    .map(|(k, c)| (k.iter().rev().cloned().collect(), c.clone()))
                    .collect();
                rev.sort();
                (a.clone(), rev)
            })
            .collect();
        ExactNestedIndex {
            table_id: self.table_id.clone(),
            table_size: self.table_size,
            attributes: self.attributes.clone(),
            join_attrs: self.join_attrs.iter().rev().cloned().collect(),
            first: self.second.clone(),
            second: self.first.clone(),
            pairs,
            nonja,
        }
    }

    fn counts_as<T: Scalar>(&self, c: &Counts) -> Result<FreqMap<T>> {
        if self.join_attrs.is_empty() {
            return Err(Error::Capability(format!(
                "table {} has no join attributes",
                self.table_id
            )));
        }
        Ok(c.iter()
            .map(|(k, &v)| (k.clone(), T::from_count(v)))
            .collect())
    }

    /// Counts of a non-JA attribute's values among rows matching `given`.
    pub fn nonja_counts(&self, attr: &str, given: &[(&str, &str)]) -> Result<Counts> {
        let entries = self.nonja.get(attr).ok_or_else(|| {
            Error::Capability(format!(
                "table {} has no non-join attribute {attr}",
                self.table_id
            ))
        })?;
        let mut filters = Vec::with_capacity(given.len());
        for (a, v) in given {
            let pos = self.join_attrs.iter().position(|j| j == a).ok_or_else(|| {
                Error::Capability(format!(
                    "{a} is not a join attribute of table {}",
                    self.table_id
                ))
            })?;
            filters.push((pos, *v));
        }
        let mut out = Counts::new();
        if filters.len() == self.join_attrs.len() {
            let key: Vec<String> = {
                let mut k = vec![String::new(); filters.len()];
                for (pos, v) in &filters {
                    k[*pos] = v.to_string();
                }
                k
            };
            if let Ok(i) = entries.binary_search_by(|(k, _)| k.cmp(&key)) {
                out = entries[i].1.clone();
            }
        } else {
            for (k, counts) in entries {
                if filters.iter().all(|(pos, v)| k[*pos] == *v) {
                    for (val, c) in counts {
                        *out.entry(val.clone()).or_default() += c;
                    }
                }
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> TableModel<T> for ExactNestedIndex {
    fn table_id(&self) -> &str {
        &self.table_id
    }

    fn table_size(&self) -> u64 {
        self.table_size
    }

    fn join_attrs(&self) -> &[String] {
        &self.join_attrs
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Exact
    }

    fn first_ja_freq(&self) -> Result<FreqMap<T>> {
        self.counts_as(&self.first)
    }

    fn second_ja_freq(&self) -> Result<FreqMap<T>> {
        self.counts_as(&self.second)
    }

    fn cond_second_given_first(&self, dv: &str) -> Result<Dist<T>> {
        self.exact_conditional(dv)
    }

    fn cond_nonja(&self, attr: &str, given: &[(&str, &str)]) -> Result<Dist<T>> {
        let counts = self.nonja_counts(attr, given)?;
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::ModelInconsistency(format!(
                "no rows of table {} match {given:?}",
                self.table_id
            )));
        }
        let total = T::from_count(total);
        Ok(counts
            .into_iter()
            .map(|(k, c)| (k, T::from_count(c) / total.clone()))
            .collect())
    }

    fn distinct_pairs(&self) -> Option<usize> {
        Some(self.pairs.values().map(|m| m.len()).sum())
    }

    fn reversed(&self) -> Option<Arc<dyn TableModel<T>>> {
        Some(Arc::new(self.reversed_index()))
    }

    fn is_exact(&self) -> bool {
        true
    }

    fn pair_frequency(&self, x: &str, y: &str) -> Result<T> {
        Ok(T::from_count(self.pair_count(x, y)))
    }

    fn max_pair_frequency(&self) -> Result<T> {
        let m = self
            .pairs
            .values()
            .flat_map(|inner| inner.values())
            .copied()
            .max()
            .unwrap_or(0);
        Ok(T::from_count(m))
    }
}
