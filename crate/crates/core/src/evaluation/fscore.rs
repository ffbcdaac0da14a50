use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::OracleJoin;
use crate::error::{Error, Result};
use crate::num::{min, Scalar};
use crate::sampler::row_rng;
use crate::table_model::{Dist, ExactNestedIndex, TableModel};

const DOMAIN_FSCORE: u64 = 5;

/// Wilson score interval for a proportion observed over `trials`.
pub fn wilson_interval(proportion: f64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&proportion) || trials == 0 || !(confidence > 0.0 && confidence < 1.0)
    {
        return Err(Error::Parameter(format!(
            "wilson interval needs p in [0,1], trials >= 1, confidence in (0,1); got {proportion}, {trials}, {confidence}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z = normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = trials as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (proportion + z2 / (2.0 * n)) / denom;
    let half = z / denom * (proportion * (1.0 - proportion) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// `Σ_y min(p(y), q(y))`, which is `1 − TV(p, q)`.
pub fn overlap<T: Scalar>(p: &Dist<T>, q: &Dist<T>) -> T {
    let mut acc = T::zero();
    for (k, a) in p {
        if let Some(b) = q.get(k) {
            acc = acc + min(a, b);
        }
    }
    acc
}

/// Confusion entries for one conditioning value. Each is a probability mass;
/// `tp + fp = tp + fn_ = 1`, so precision, recall and F-score all equal `tp`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Confusion<T> {
    pub tp: T,
    pub fp: T,
    #[serde(rename = "fn")]
    pub fn_: T,
}

impl<T: Scalar> Confusion<T> {
    pub fn from_overlap(f: T) -> Self {
        let miss = T::one() - f.clone();
        Confusion {
            tp: f,
            fp: miss.clone(),
            fn_: miss,
        }
    }

    pub fn precision(&self) -> T {
        self.tp.clone() / (self.tp.clone() + self.fp.clone())
    }

    pub fn recall(&self) -> T {
        self.tp.clone() / (self.tp.clone() + self.fn_.clone())
    }

    pub fn fscore(&self) -> T {
        self.tp.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerativeConfusion<T> {
    /// Per distinct drawn conditioning value.
    pub per_condition: BTreeMap<String, Confusion<T>>,
    /// How often each conditioning value was drawn.
    pub draws: BTreeMap<String, u64>,
    pub fscore: T,
    pub sample_size: u64,
    pub confidence: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Draws `sample_size` first-JA values by true frequency and averages the
/// per-value overlap between the model's and the true conditional.
pub fn generative_fscore<T: Scalar>(
    model: &dyn TableModel<T>,
    truth: &ExactNestedIndex,
    sample_size: u64,
    alpha: f64,
    seed: u64,
) -> Result<GenerativeConfusion<T>> {
    if sample_size == 0 {
        return Err(Error::Parameter("sample size must be positive".into()));
    }
    if model.join_attrs() != TableModel::<T>::join_attrs(truth) {
        return Err(Error::Parameter(format!(
            "model of {} and truth of {} disagree on join attributes",
            model.table_id(),
            TableModel::<T>::table_id(truth)
        )));
    }
    let firsts: Vec<(&String, u64)> = truth.first_counts().iter().map(|(k, v)| (k, *v)).collect();
    let total: u64 = firsts.iter().map(|(_, c)| c).sum();
    if total == 0 {
        return Err(Error::Parameter("truth table is empty".into()));
    }
    let mut cum = Vec::with_capacity(firsts.len());
    let mut acc = 0u64;
    for (_, c) in &firsts {
        acc += c;
        cum.push(acc);
    }
    let mut draws: BTreeMap<String, u64> = BTreeMap::new();
    for r in 0..sample_size {
        let u = row_rng(seed, DOMAIN_FSCORE, r).gen_range(0..total);
        let i = cum.partition_point(|&c| c <= u);
        *draws.entry(firsts[i].0.clone()).or_insert(0) += 1;
    }
    let mut per_condition = BTreeMap::new();
    let mut weighted = T::zero();
    for (x, k) in &draws {
        let p: Dist<T> = truth.exact_conditional(x)?;
        let q = model.cond_second_given_first(x)?;
        let c = Confusion::from_overlap(overlap(&p, &q));
        weighted = weighted + c.fscore() * T::from_count(*k);
        per_condition.insert(x.clone(), c);
    }
    let fscore = weighted / T::from_count(sample_size);
    let confidence = 1.0 - alpha;
    let (lower, upper) =
        wilson_interval(fscore.to_f64_lossy().clamp(0.0, 1.0), sample_size, confidence)?;
    Ok(GenerativeConfusion {
        per_condition,
        draws,
        fscore,
        sample_size,
        confidence,
        lower,
        upper,
    })
}

/// `Σ_t min(P_gen(t), count(t)/size)` over the oracle's tuples.
pub fn join_fscore(oracle: &OracleJoin, mut prob: impl FnMut(&[String]) -> Result<f64>) -> Result<f64> {
    if oracle.size == 0 {
        return Err(Error::EmptyJoin);
    }
    let size = oracle.size as f64;
    let mut acc = 0.0;
    for (t, c) in &oracle.tuples {
        acc += prob(t)?.min(*c as f64 / size);
    }
    Ok(acc)
}

/// Overlap between a sample's empirical distribution and the oracle's.
pub fn sample_fscore<S: AsRef<[String]>>(sample: &[S], oracle: &OracleJoin) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Parameter("empty sample".into()));
    }
    let mut counts: BTreeMap<&[String], u64> = BTreeMap::new();
    for s in sample {
        *counts.entry(s.as_ref()).or_insert(0) += 1;
    }
    let n = sample.len() as f64;
    join_fscore(oracle, |t| Ok(counts.get(t).copied().unwrap_or(0) as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::num::Rational;
    use crate::table_model::build_exact;

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(0.0, 10, 0.95).unwrap();
        assert!(lo.abs() < 1e-12);
        assert!((hi - 0.2775).abs() < 5e-4);
        let (_, hi) = wilson_interval(1.0, 10, 0.95).unwrap();
        assert!((hi - 1.0).abs() < 1e-12);
        let (lo, hi) = wilson_interval(0.5, 10_000_000, 0.95).unwrap();
        assert!(hi - lo < 1e-3);
        assert!(wilson_interval(1.5, 10, 0.95).is_err());
    }

    #[test]
    fn overlap_examples() {
        let p: Dist<f64> = [("y1".to_string(), 0.5), ("y2".to_string(), 0.5)].into();
        let q: Dist<f64> = [("y1".to_string(), 0.75), ("y2".to_string(), 0.25)].into();
        assert_eq!(overlap(&p, &q), 0.75);
        let r: Dist<f64> = [("y3".to_string(), 1.0)].into();
        assert_eq!(overlap(&p, &r), 0.0);
        let c = Confusion::from_overlap(0.75);
        assert_eq!(c.precision(), c.recall());
        assert_eq!(c.tp + c.fn_, 1.0);
    }

    #[test]
    fn truth_against_itself() {
        let d3 = build_exact(&fixtures::chain4_table("D3")).unwrap();
        let g = generative_fscore::<Rational>(&d3, &d3, 1000, 0.05, 1).unwrap();
        assert_eq!(g.fscore, Rational::from_count(1));
        assert!(g.upper >= 1.0 - 1e-12);
        assert_eq!(g.draws.values().sum::<u64>(), 1000);
    }

    #[test]
    fn single_ja_model_lacks_conditional() {
        let d4 = build_exact(&fixtures::chain4_table("D4")).unwrap();
        let r = generative_fscore::<f64>(&d4, &d4, 10, 0.05, 1);
        assert!(matches!(r, Err(Error::Capability(_))));
    }

    #[test]
    fn sample_fscore_of_oracle_sample() {
        let o = crate::evaluation::oracle_join(
            &fixtures::chain4_tables(),
            &fixtures::chain4_query(),
            &["D3.E".parse().unwrap()],
            100,
        )
        .unwrap();
        let exact = join_fscore(&o, |t| Ok(if t[0] == "e1" { 0.25 } else { 0.75 })).unwrap();
        assert!((exact - 1.0).abs() < 1e-12);
        let s = vec![vec!["e2".to_string()]; 10];
        assert!((sample_fscore(&s, &o).unwrap() - 0.75).abs() < 1e-12);
    }
}
