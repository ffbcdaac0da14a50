//! Skip-gram embeddings with negative sampling over column-tagged tuple values.
//!
//! Each row is a sentence whose words are `"{column}:{value}"` tokens. For every
//! (center, context) pair the trainer ascends
//! `log σ(v'_o · v_c) + Σ_k log σ(−v'_k · v_c)` with `k` noise tokens drawn from
//! the unigram distribution raised to `noise_exponent`.

use std::collections::BTreeMap;

use modeljoin::{Error, Result, Table};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    /// Embedding dimension `N`.
    pub dim: usize,
    /// Context size; `None` uses every other value of the row.
    pub context: Option<usize>,
    /// Negative samples per positive pair.
    pub negatives: usize,
    pub noise_exponent: f64,
    pub epochs: usize,
    /// Initial SGD step, decayed linearly over training.
    pub lr: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 64,
            context: None,
            negatives: 5,
            noise_exponent: 0.75,
            epochs: 5,
            lr: 0.025,
            seed: 0,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.negatives == 0 || self.context == Some(0) {
            return Err(Error::Parameter(
                "embedding dimension, negatives and context must be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

pub fn token(column: usize, value: &str) -> String {
    format!("{column}:{value}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    /// Token → row of `input`/`output`.
    pub vocab: BTreeMap<String, usize>,
    pub input: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    pub fn input_of(&self, column: usize, value: &str) -> Option<&[f64]> {
        self.vocab.get(&token(column, value)).map(|&i| self.input[i].as_slice())
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let u = &self.input[*self.vocab.get(a)?];
        let v = &self.input[*self.vocab.get(b)?];
        let nu = dot(u, u).sqrt();
        let nv = dot(v, v).sqrt();
        (nu > 0.0 && nv > 0.0).then(|| dot(u, v) / (nu * nv))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampling objective for one center vector, its positive output
/// vector and the noise output vectors.
pub fn pair_objective(center: &[f64], positive: &[f64], negatives: &[Vec<f64>]) -> f64 {
    log_sigmoid(dot(positive, center))
        + negatives.iter().map(|n| log_sigmoid(-dot(n, center))).sum::<f64>()
}

/// Gradient of [`pair_objective`] w.r.t. the center, positive and negatives.
pub fn pair_gradient(
    center: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let gp = 1.0 - sigmoid(dot(positive, center));
    let mut d_center: Vec<f64> = positive.iter().map(|p| gp * p).collect();
    let d_pos: Vec<f64> = center.iter().map(|c| gp * c).collect();
    let mut d_negs = Vec::with_capacity(negatives.len());
    for n in negatives {
        let gn = -sigmoid(dot(n, center));
        for (d, x) in d_center.iter_mut().zip(n) {
            *d += gn * x;
        }
        d_negs.push(center.iter().map(|c| gn * c).collect());
    }
    (d_center, d_pos, d_negs)
}

/// Trains embeddings for every column-tagged value of `table`.
pub fn train_embeddings(table: &Table, cfg: &SkipGramConfig) -> Result<EmbeddingTable> {
    cfg.validate()?;
    if table.rows.is_empty() {
        return Err(Error::Parameter(format!(
            "table {} has no rows to embed",
            table.id()
        )));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for row in &table.rows {
        for (j, v) in row.iter().enumerate() {
            *counts.entry(token(j, v)).or_default() += 1;
        }
    }
    let vocab: BTreeMap<String, usize> = counts.keys().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let noise_weights: Vec<f64> = counts.values().map(|&c| (c as f64).powf(cfg.noise_exponent)).collect();
    let noise = WeightedIndex::new(&noise_weights)
        .map_err(|e| Error::Parameter(format!("noise distribution: {e}")))?;
    let sentences: Vec<Vec<usize>> = table
        .rows
        .iter()
        .map(|row| row.iter().enumerate().map(|(j, v)| vocab[&token(j, v)]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let scale = 0.5 / d as f64;
    let mut input: Vec<Vec<f64>> = (0..vocab.len())
        .map(|_| (0..d).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect();
    let mut output = vec![vec![0.0; d]; vocab.len()];

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let total = (cfg.epochs * sentences.len()).max(1) as f64;
    let mut done = 0usize;
    let mut grad = vec![0.0; d];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &s in &order {
            let lr = cfg.lr * (1.0 - done as f64 / total).max(1e-4);
            done += 1;
            let words = &sentences[s];
            for (i, &center) in words.iter().enumerate() {
                for (j, &ctx) in words.iter().enumerate() {
                    let near = cfg.context.map_or(true, |c| i.abs_diff(j) <= c);
                    if i == j || !near {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (ctx, 1.0)
                        } else {
                            let n = noise.sample(&mut rng);
                            if n == ctx {
                                continue;
                            }
                            (n, 0.0)
                        };
                        let g = lr * (label - sigmoid(dot(&input[center], &output[target])));
                        for (gi, o) in grad.iter_mut().zip(&output[target]) {
                            *gi += g * o;
                        }
                        let (inp, out) = (&input[center], &mut output[target]);
                        for (o, x) in out.iter_mut().zip(inp) {
                            *o += g * x;
                        }
                    }
                    for (x, g) in input[center].iter_mut().zip(&grad) {
                        *x += g;
                    }
                }
            }
        }
    }
    Ok(EmbeddingTable {
        dim: d,
        vocab,
        input,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use modeljoin::fixtures;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let center = vec![0.3, -0.7];
        let pos = vec![0.5, 0.2];
        let negs = vec![vec![-0.4, 0.9], vec![0.1, 0.6], vec![0.8, -0.3]];
        let (dc, dp, dn) = pair_gradient(&center, &pos, &negs);
        let h = 1e-6;
        let f = |c: &[f64], p: &[f64], n: &[Vec<f64>]| pair_objective(c, p, n);
        for i in 0..2 {
            let (mut a, mut b) = (center.clone(), center.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (f(&a, &pos, &negs) - f(&b, &pos, &negs)) / (2.0 * h);
            assert!(rel_err(fd, dc[i]) < 1e-4, "center {i}: {fd} vs {}", dc[i]);

            let (mut a, mut b) = (pos.clone(), pos.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (f(&center, &a, &negs) - f(&center, &b, &negs)) / (2.0 * h);
            assert!(rel_err(fd, dp[i]) < 1e-4);

            for k in 0..negs.len() {
                let (mut a, mut b) = (negs.clone(), negs.clone());
                a[k][i] += h;
                b[k][i] -= h;
                let fd = (f(&center, &pos, &a) - f(&center, &pos, &b)) / (2.0 * h);
                assert!(rel_err(fd, dn[k][i]) < 1e-4);
            }
        }
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }

    #[test]
    fn shared_context_makes_values_similar() {
        let d1 = fixtures::chain4_table("D1");
        let cfg = SkipGramConfig {
            dim: 8,
            epochs: 300,
            ..Default::default()
        };
        let e = train_embeddings(&d1, &cfg).unwrap();
        let a23 = e.cosine("0:a2", "0:a3").unwrap();
        let a12 = e.cosine("0:a1", "0:a2").unwrap();
        assert!(a23 > a12, "{a23} vs {a12}");
    }

    #[test]
    fn single_row_has_every_vector() {
        let mut t = fixtures::chain4_table("D2");
        t.rows.truncate(1);
        let e = train_embeddings(&t, &SkipGramConfig::default()).unwrap();
        assert_eq!(e.len(), 3);
        assert!(e.input.iter().chain(&e.output).all(|v| v.len() == 64));
    }

    #[test]
    fn deterministic_per_seed() {
        let d1 = fixtures::chain4_table("D1");
        let cfg = SkipGramConfig::default();
        assert_eq!(train_embeddings(&d1, &cfg).unwrap(), train_embeddings(&d1, &cfg).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let d1 = fixtures::chain4_table("D1");
        let cfg = SkipGramConfig {
            dim: 0,
            ..Default::default()
        };
        assert!(train_embeddings(&d1, &cfg).is_err());
    }
}
