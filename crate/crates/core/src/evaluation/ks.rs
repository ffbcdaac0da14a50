use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// `C(α) = sqrt(−½ ln(α/2))`.
pub fn c_alpha(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// Two-sample KS rejection threshold `C(α)·sqrt((n+m)/(n·m))`.
pub fn critical_value(alpha: f64, n: usize, m: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha {alpha} outside (0, 1)")));
    }
    if n == 0 || m == 0 {
        return Err(Error::Parameter("sample sizes must be positive".into()));
    }
    let (n, m) = (n as f64, m as f64);
    Ok(c_alpha(alpha) * ((n + m) / (n * m)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfStep {
    pub point: Vec<String>,
    pub cdf_a: f64,
    pub cdf_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsReport {
    pub statistic: f64,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub c_alpha: f64,
    pub critical_value: f64,
    /// Whether the same-distribution hypothesis is retained.
    pub retained: bool,
    pub steps: Vec<CdfStep>,
}

/// Two-sample KS over tuples, ordered lexicographically by token.
pub fn ks_two_sample<S: AsRef<[String]>>(a: &[S], b: &[S], alpha: f64) -> Result<KsReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("KS test needs two non-empty samples".into()));
    }
    let crit = critical_value(alpha, a.len(), b.len())?;
    let mut counts: BTreeMap<&[String], (usize, usize)> = BTreeMap::new();
    for t in a {
        counts.entry(t.as_ref()).or_default().0 += 1;
    }
    for t in b {
        counts.entry(t.as_ref()).or_default().1 += 1;
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut ca, mut cb) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    let mut steps = Vec::with_capacity(counts.len());
    for (point, (x, y)) in counts {
        ca += x;
        cb += y;
        let (fa, fb) = (ca as f64 / n, cb as f64 / m);
        d = d.max((fa - fb).abs());
        steps.push(CdfStep {
            point: point.to_vec(),
            cdf_a: fa,
            cdf_b: fb,
        });
    }
    Ok(KsReport {
        statistic: d,
        n: a.len(),
        m: b.len(),
        alpha,
        c_alpha: c_alpha(alpha),
        critical_value: crit,
        retained: d < crit,
        steps,
    })
}
