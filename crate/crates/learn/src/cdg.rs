//! Conditional discrete generators: one small feed-forward network per final
//! cluster mapping a first-JA embedding to a softmax over the cluster's
//! second-JA values, trained on negative log likelihood with Adam.

use std::collections::BTreeMap;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use modeljoin::sampler::row_rng;
use modeljoin::{Error, ExactNestedIndex, Result, TableModel};

use crate::skipgram::EmbeddingTable;

const DOMAIN_CDG: u64 = 12;

fn cast<F: Float>(x: f64) -> F {
    F::from(x).expect("finite constant")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Serialize + DeserializeOwned")]
pub struct Dense<F> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub w: Vec<F>,
    pub b: Vec<F>,
}

impl<F: Float> Dense<F> {
    fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Dense {
            inputs,
            outputs,
            w: (0..inputs * outputs)
                .map(|_| cast(rng.gen_range(-limit..limit)))
                .collect(),
            b: vec![F::zero(); outputs],
        }
    }

    fn apply(&self, x: &[F], out: &mut Vec<F>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.b[o];
            for (w, v) in row.iter().zip(x) {
                acc = acc + *w * *v;
            }
            out.push(acc);
        }
    }
}

/// Feed-forward network: tanh hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Serialize + DeserializeOwned")]
pub struct Mlp<F> {
    pub layers: Vec<Dense<F>>,
}

pub fn softmax<F: Float>(logits: &[F]) -> Vec<F> {
    let m = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let e: Vec<F> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s = e.iter().copied().fold(F::zero(), |a, b| a + b);
    e.into_iter().map(|v| v / s).collect()
}

impl<F: Float> Mlp<F> {
    pub fn new<R: Rng>(input: usize, hidden: usize, depth: usize, output: usize, rng: &mut R) -> Self {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat(hidden).take(depth));
        widths.push(output);
        Mlp {
            layers: widths.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Layer activations; the last entry holds the logits.
    fn trace(&self, x: &[F]) -> Vec<Vec<F>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(acts.last().expect("input"), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[F]) -> Vec<F> {
        softmax(self.trace(x).last().expect("logits"))
    }

    /// Mean negative log likelihood of `(input, class)` examples.
    pub fn nll(&self, batch: &[(&[F], usize)]) -> F {
        let mut acc = F::zero();
        for (x, y) in batch {
            acc = acc - self.forward(x)[*y].ln();
        }
        acc / cast(batch.len() as f64)
    }

    /// Mean NLL and its gradient, flattened layer by layer as `w` then `b`.
    pub fn gradient(&self, batch: &[(&[F], usize)]) -> (F, Vec<F>) {
        let mut grad = vec![F::zero(); self.param_count()];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.w.len() + l.b.len();
        }
        let scale = F::one() / cast(batch.len() as f64);
        let mut loss = F::zero();
        for (x, y) in batch {
            let acts = self.trace(x);
            let mut delta = softmax(acts.last().expect("logits"));
            loss = loss - delta[*y].ln();
            delta[*y] = delta[*y] - F::one();
            for (li, layer) in self.layers.iter().enumerate().rev() {
                let a = &acts[li];
                let (gw, gb) = grad[offsets[li]..].split_at_mut(layer.w.len());
                for o in 0..layer.outputs {
                    let d = delta[o] * scale;
                    gb[o] = gb[o] + d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, v) in row.iter_mut().zip(a) {
                        *g = *g + d * *v;
                    }
                }
                if li == 0 {
                    break;
                }
                let mut prev = vec![F::zero(); layer.inputs];
                for o in 0..layer.outputs {
                    let row = &layer.w[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p = *p + *w * delta[o];
                    }
                }
                for (p, v) in prev.iter_mut().zip(a) {
                    *p = *p * (F::one() - *v * *v);
                }
                delta = prev;
            }
        }
        (loss * scale, grad)
    }

    pub fn params(&self) -> Vec<F> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[F]) {
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = it.next().expect("parameter count");
            }
        }
    }
}

/// Adaptive-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
}

impl<F: Float> Adam<F> {
    pub fn new(params: usize, lr: f64) -> Self {
        Adam {
            lr: cast(lr),
            beta1: cast(0.9),
            beta2: cast(0.999),
            eps: cast(1e-8),
            m: vec![F::zero(); params],
            v: vec![F::zero(); params],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp<F>, grad: &[F]) {
        self.t += 1;
        let c1 = F::one() - self.beta1.powi(self.t);
        let c2 = F::one() - self.beta2.powi(self.t);
        let mut i = 0;
        for l in &mut net.layers {
            for p in l.w.iter_mut().chain(l.b.iter_mut()) {
                let g = grad[i];
                self.m[i] = self.beta1 * self.m[i] + (F::one() - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (F::one() - self.beta2) * g * g;
                let mh = self.m[i] / c1;
                let vh = self.v[i] / c2;
                *p = *p - self.lr * mh / (vh.sqrt() + self.eps);
                i += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdgConfig {
    pub hidden: usize,
    pub depth: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for CdgConfig {
    fn default() -> Self {
        CdgConfig {
            hidden: 200,
            depth: 5,
            epochs: 5,
            lr: 0.0005,
            batch: 32,
            seed: 0,
        }
    }
}

impl CdgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.depth == 0 || self.batch == 0 {
            return Err(Error::Parameter("hidden width, depth and batch must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Full-data NLL after each epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

/// Trains `net` on `(input, class)` examples, one per table row.
///
/// An epoch is `steps_per_epoch` minibatches drawn by cycling through
/// reshuffled passes over `examples`.
pub fn train_network<F: Float, R: Rng>(
    net: &mut Mlp<F>,
    examples: &[(&[F], usize)],
    steps_per_epoch: usize,
    cfg: &CdgConfig,
    rng: &mut R,
) -> TrainReport {
    let mut adam = Adam::new(net.param_count(), cfg.lr);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut pos = order.len();
    let mut report = TrainReport::default();
    let mut batch = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.epochs {
        for _ in 0..steps_per_epoch {
            batch.clear();
            while batch.len() < cfg.batch.min(examples.len()) {
                if pos == order.len() {
                    order.shuffle(rng);
                    pos = 0;
                }
                batch.push(examples[order[pos]]);
                pos += 1;
            }
            let (_, g) = net.gradient(&batch);
            adam.step(net, &g);
        }
        report.losses.push(net.nll(examples).to_f64().unwrap_or(f64::NAN));
    }
    report
}

/// One final cluster's conditional generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Serialize + DeserializeOwned")]
pub enum Head<F> {
    Network(Mlp<F>),
    /// No training pairs: uniform over the cluster's values.
    Uniform,
    /// Single-valued cluster.
    Point,
}

impl<F: Float> Head<F> {
    pub fn predict(&self, x: &[F], width: usize) -> Vec<F> {
        match self {
            Head::Network(net) => net.forward(x),
            Head::Uniform => vec![F::one() / cast(width as f64); width],
            Head::Point => vec![F::one()],
        }
    }
}

/// Trains one head per cluster on the pairs whose second value lies in it.
/// Inputs are the first-JA embeddings under `first_column`. Every network
/// takes one step per `batch` table rows per epoch, whatever its share.
pub fn train_cdg(
    index: &ExactNestedIndex,
    emb: &EmbeddingTable,
    first_column: usize,
    clusters: &[Vec<String>],
    cfg: &CdgConfig,
) -> Result<Vec<Head<f64>>> {
    cfg.validate()?;
    let inputs: BTreeMap<&str, &[f64]> = index
        .first_counts()
        .keys()
        .map(|x| {
            emb.input_of(first_column, x)
                .map(|v| (x.as_str(), v))
                .ok_or_else(|| Error::Parameter(format!("value {x} has no embedding")))
        })
        .collect::<Result<_>>()?;
    let steps = (TableModel::<f64>::table_size(index) as usize).div_ceil(cfg.batch);
    clusters
        .par_iter()
        .enumerate()
        .map(|(c, members)| {
            if members.len() == 1 {
                return Ok(Head::Point);
            }
            let class: BTreeMap<&str, usize> =
                members.iter().enumerate().map(|(i, y)| (y.as_str(), i)).collect();
            let mut examples: Vec<(&[f64], usize)> = Vec::new();
            for (x, inner) in index.pair_counts() {
                for (y, &n) in inner {
                    if let Some(&k) = class.get(y.as_str()) {
                        examples.extend(std::iter::repeat((inputs[x.as_str()], k)).take(n as usize));
                    }
                }
            }
            if examples.is_empty() {
                log::warn!("cluster {c} has no training pairs; using a uniform head");
                return Ok(Head::Uniform);
            }
            let mut rng = row_rng(cfg.seed, DOMAIN_CDG, c as u64);
            let mut net = Mlp::new(emb.dim, cfg.hidden, cfg.depth, members.len(), &mut rng);
            let report = train_network(&mut net, &examples, steps, cfg, &mut rng);
            log::debug!("cluster {c}: {} examples, losses {:?}", examples.len(), report.losses);
            Ok(Head::Network(net))
        })
        .collect()
}
