use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dist, ExactNestedIndex, FreqMap, ModelKind, TableModel};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// An exact model whose conditionals are moved a fixed total-variation
/// distance `epsilon` away from the truth. Frequencies stay exact.
pub struct PerturbedModel<T: Scalar> {
    base: Arc<ExactNestedIndex>,
    epsilon: T,
    seed: u64,
    conds: BTreeMap<String, Dist<T>>,
}

impl<T: Scalar> PerturbedModel<T> {
    pub fn base(&self) -> &ExactNestedIndex {
        &self.base
    }

    pub fn epsilon(&self) -> &T {
        &self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Moves probability mass `epsilon` per conditioning value, deterministically under `seed`.
///
/// The recipient is a seeded choice among second-JA values outside the
/// condition's support (all existing mass scales by `1 − ε`); when the support
/// is the whole domain, the least likely value receives `ε` taken
/// proportionally from the others. Either way the total-variation distance to
/// the exact conditional is `ε`. A condition whose support is the entire
/// single-valued domain cannot move and is left as is.
pub fn perturb_exact<T: Scalar>(
    m: Arc<ExactNestedIndex>,
    epsilon: T,
    seed: u64,
) -> Result<PerturbedModel<T>> {
    if epsilon < T::zero() || epsilon >= T::one() {
        return Err(Error::Parameter("epsilon must lie in [0, 1)".into()));
    }
    let domain: Vec<&String> = m.second_counts().keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conds = BTreeMap::new();
    for x in m.pair_counts().keys() {
        let p: Dist<T> = m.exact_conditional(x)?;
        let outside: Vec<&String> = domain
            .iter()
            .copied()
            .filter(|y| !p.contains_key(*y))
            .collect();
        // one draw per condition keeps the stream aligned regardless of branch
        let pick: f64 = rng.gen();
        let q = if epsilon == T::zero() {
            p
        } else if !outside.is_empty() {
            let idx = ((pick * outside.len() as f64) as usize).min(outside.len() - 1);
            let keep = T::one() - epsilon.clone();
            let mut q: Dist<T> = p.into_iter().map(|(y, v)| (y, v * keep.clone())).collect();
            q.insert(outside[idx].clone(), epsilon.clone());
            q
        } else if p.len() > 1 {
            let (star, p_star) = p
                .iter()
                .min_by(|a, b| a.1.partial_cmp(b.1).expect("probabilities are ordered"))
                .map(|(k, v)| (k.clone(), v.clone()))
                .expect("non-empty");
            let rest = T::one() - p_star.clone();
            let moved = if epsilon > rest {
                log::warn!("table {}: condition {x} can only move {rest:?}", m.meta().table_id);
                rest.clone()
            } else {
                epsilon.clone()
            };
            let scale = T::one() - moved.clone() / rest;
            p.into_iter()
                .map(|(y, v)| {
                    if y == star {
                        (y, v + moved.clone())
                    } else {
                        (y, v * scale.clone())
                    }
                })
                .filter(|(_, v)| v.is_positive())
                .collect()
        } else {
            log::warn!(
                "table {}: condition {x} has a single-valued domain and cannot be perturbed",
                m.meta().table_id
            );
            p
        };
        conds.insert(x.clone(), q);
    }
    Ok(PerturbedModel {
        base: m,
        epsilon,
        seed,
        conds,
    })
}

impl<T: Scalar> TableModel<T> for PerturbedModel<T> {
    fn table_id(&self) -> &str {
        TableModel::<T>::table_id(self.base.as_ref())
    }

    fn table_size(&self) -> u64 {
        TableModel::<T>::table_size(self.base.as_ref())
    }

    fn join_attrs(&self) -> &[String] {
        TableModel::<T>::join_attrs(self.base.as_ref())
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Perturbed
    }

    fn first_ja_freq(&self) -> Result<FreqMap<T>> {
        self.base.first_ja_freq()
    }

    fn second_ja_freq(&self) -> Result<FreqMap<T>> {
        self.base.second_ja_freq()
    }

    fn cond_second_given_first(&self, dv: &str) -> Result<Dist<T>> {
        self.conds.get(dv).cloned().ok_or_else(|| Error::UnseenValue {
            table: self.base.meta().table_id,
            value: dv.to_string(),
        })
    }

    fn cond_nonja(&self, attr: &str, given: &[(&str, &str)]) -> Result<Dist<T>> {
        self.base.cond_nonja(attr, given)
    }

    fn distinct_pairs(&self) -> Option<usize> {
        TableModel::<T>::distinct_pairs(self.base.as_ref())
    }
}
