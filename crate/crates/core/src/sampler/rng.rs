use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::num::Scalar;
use crate::table_model::Dist;

/// Stream domains, so that different uses of one master seed never overlap.
pub const DOMAIN_SKELETON: u64 = 1;
pub const DOMAIN_NONJA: u64 = 2;
pub const DOMAIN_ACCEPT: u64 = 3;
pub const DOMAIN_ORACLE: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for row `row`, independent of every other row and domain.
pub fn row_rng(seed: u64, domain: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(row);
    rng
}

/// A finite distribution prepared for inverse-CDF draws in token order.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    tokens: Vec<String>,
    cdf: Vec<f64>,
}

impl Categorical {
    /// `None` when no weight is positive.
    pub fn from_weights<T: Scalar>(weights: &Dist<T>) -> Option<Self> {
        let mut tokens = Vec::with_capacity(weights.len());
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for (k, w) in weights {
            let w = w.to_f64_lossy();
            if w > 0.0 {
                acc += w;
                tokens.push(k.clone());
                cdf.push(acc);
            }
        }
        if tokens.is_empty() || !acc.is_finite() {
            return None;
        }
        for c in &mut cdf {
            *c /= acc;
        }
        *cdf.last_mut().expect("non-empty") = 1.0;
        Some(Categorical { tokens, cdf })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        let u: f64 = rng.gen();
        let i = self.cdf.partition_point(|&c| c <= u).min(self.tokens.len() - 1);
        &self.tokens[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_reproducible_and_distinct() {
        let a: u64 = row_rng(7, DOMAIN_SKELETON, 3).gen();
        let b: u64 = row_rng(7, DOMAIN_SKELETON, 3).gen();
        let c: u64 = row_rng(7, DOMAIN_SKELETON, 4).gen();
        let d: u64 = row_rng(7, DOMAIN_NONJA, 3).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn categorical_drops_zero_weights() {
        let w: Dist<f64> = [("a".to_string(), 0.0), ("b".to_string(), 2.0)].into();
        let c = Categorical::from_weights(&w).unwrap();
        assert_eq!(c.tokens(), ["b"]);
        let mut rng = row_rng(1, 1, 1);
        assert_eq!(c.sample(&mut rng), "b");
        let z: Dist<f64> = [("a".to_string(), 0.0)].into();
        assert!(Categorical::from_weights(&z).is_none());
    }

    #[test]
    fn categorical_frequencies() {
        let w: Dist<f64> = [("x".to_string(), 1.0), ("y".to_string(), 3.0)].into();
        let c = Categorical::from_weights(&w).unwrap();
        let mut rng = row_rng(42, 1, 0);
        let n = 40_000;
        let ys = (0..n).filter(|_| c.sample(&mut rng) == "y").count();
        assert!((ys as f64 / n as f64 - 0.75).abs() < 0.01);
    }
}
