//! The per-table model interface and the exact nested-index backend.
//!
//! Inference and sampling only ever see a table through [`TableModel`]: the
//! frequencies of its join attributes (JAs), the conditional distribution of
//! the second JA given the first, and non-JA conditionals given same-table JA
//! values. Zero-frequency entries are never returned.

mod exact;
mod io;
mod perturb;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::JaPosition;
use crate::error::{Error, Result};
use crate::num::Scalar;

pub use exact::{build_exact, ExactNestedIndex};
pub use io::{load_core_model, Manifest, ModelFile, MODEL_FORMAT_VERSION};
pub use perturb::{perturb_exact, PerturbedModel};

/// Sparse frequency map keyed by value token.
pub type FreqMap<T> = BTreeMap<String, T>;

/// Sparse probability distribution keyed by value token.
pub type Dist<T> = BTreeMap<String, T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Exact,
    Perturbed,
    Learned,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Exact => "exact",
            ModelKind::Perturbed => "perturbed",
            ModelKind::Learned => "learned",
        })
    }
}

pub trait TableModel<T: Scalar>: Send + Sync {
    fn table_id(&self) -> &str;

    fn table_size(&self) -> u64;

    /// Declared join attributes, first then second.
    fn join_attrs(&self) -> &[String];

    fn kind(&self) -> ModelKind;

    /// `f⁰`: frequencies of the first JA. Single-JA tables report their only JA.
    fn first_ja_freq(&self) -> Result<FreqMap<T>>;

    /// `f¹`: frequencies of the second JA. Single-JA tables report their only JA.
    fn second_ja_freq(&self) -> Result<FreqMap<T>>;

    /// `P(second | first = dv)`.
    fn cond_second_given_first(&self, dv: &str) -> Result<Dist<T>>;

    /// Distribution of a non-JA attribute given observed values of (some of)
    /// this table's JAs, as `(attribute, value)` pairs.
    fn cond_nonja(&self, attr: &str, given: &[(&str, &str)]) -> Result<Dist<T>>;

    /// Number of distinct (first, second) pairs, when known.
    fn distinct_pairs(&self) -> Option<usize> {
        None
    }

    /// The same table with first and second JA swapped, if the backend supports it.
    fn reversed(&self) -> Option<Arc<dyn TableModel<T>>> {
        None
    }

    /// Whether every answer is an exact count or ratio of counts.
    fn is_exact(&self) -> bool {
        false
    }

    fn ja_position(&self, attr: &str) -> Option<JaPosition> {
        match self.join_attrs().iter().position(|a| a == attr)? {
            0 => Some(JaPosition::First),
            _ => Some(JaPosition::Second),
        }
    }

    fn ja_freq(&self, pos: JaPosition) -> Result<FreqMap<T>> {
        match pos {
            JaPosition::First => self.first_ja_freq(),
            JaPosition::Second => self.second_ja_freq(),
        }
    }

    /// Frequency of the pair (first = x, second = y).
    fn pair_frequency(&self, x: &str, y: &str) -> Result<T> {
        let f0 = self.first_ja_freq()?;
        let Some(fx) = f0.get(x) else {
            return Ok(T::zero());
        };
        let cond = self.cond_second_given_first(x)?;
        Ok(cond.get(y).map_or_else(T::zero, |p| p.clone() * fx.clone()))
    }

    /// Largest pair frequency over all (first, second) pairs.
    fn max_pair_frequency(&self) -> Result<T> {
        let mut best = T::zero();
        for (x, fx) in self.first_ja_freq()? {
            for p in self.cond_second_given_first(&x)?.into_values() {
                let f = p * fx.clone();
                if f > best {
                    best = f;
                }
            }
        }
        Ok(best)
    }
}

/// Requires a model to carry two JAs for conditional queries.
pub(crate) fn require_two_jas(table_id: &str, join_attrs: &[String]) -> Result<()> {
    if join_attrs.len() < 2 {
        return Err(Error::Capability(format!(
            "table {table_id} has {} join attribute(s); conditionals need two",
            join_attrs.len()
        )));
    }
    Ok(())
}

/// Normalizes non-negative weights into a distribution, dropping zeros.
pub fn normalize<T: Scalar>(weights: BTreeMap<String, T>) -> Option<Dist<T>> {
    let total = crate::num::sum(weights.values());
    if !total.is_positive() {
        return None;
    }
    Some(
        weights
            .into_iter()
            .filter(|(_, w)| w.is_positive())
            .map(|(k, w)| (k, w / total.clone()))
            .collect(),
    )
}
