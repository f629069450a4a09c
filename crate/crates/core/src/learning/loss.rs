//! Contrastive, claim-classification and joint losses with exact gradients.
//!
//! Similarity is the plain inner product. For query `i` the contrastive
//! candidates are every positive and every negative in the batch (in-batch
//! negatives), or only its own positive and negatives when in-batch sampling
//! is off:
//!
//! ```text
//! l_i = -log exp(h_i.h_i+ / tau) / sum_j (exp(h_i.h_j+ / tau) + sum_m exp(h_i.h_jm- / tau))
//! ```

use crate::error::{Error, Result};

/// Floor applied to the gold probability before taking its log.
pub const NLI_PROB_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    /// Per-example negatives; lists may differ in length.
    pub negatives: Vec<Vec<Vec<f64>>>,
    pub tau: f64,
}

/// Gradients with the same shapes as the batch embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveGrad {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<Vec<f64>>>,
}

pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

impl ContrastiveBatch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    fn validate(&self) -> Result<usize> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.tau
            )));
        }
        let n = self.queries.len();
        if n == 0 {
            return Err(Error::Config("contrastive batch is empty".into()));
        }
        if self.positives.len() != n || self.negatives.len() != n {
            return Err(Error::Config(
                "queries, positives and negatives differ in count".into(),
            ));
        }
        let d = self.queries[0].len();
        let all = self
            .queries
            .iter()
            .chain(&self.positives)
            .chain(self.negatives.iter().flatten());
        for v in all {
            if v.len() != d {
                return Err(Error::Dimension {
                    index: None,
                    expected: d,
                    got: v.len(),
                });
            }
        }
        Ok(d)
    }
}

/// Where a candidate embedding lives in the batch.
#[derive(Clone, Copy)]
enum Slot {
    Positive(usize),
    Negative(usize, usize),
}

/// Mean contrastive loss over the batch and its gradient with respect to
/// every embedding.
pub fn contrastive_loss(
    batch: &ContrastiveBatch,
    in_batch: bool,
) -> Result<(f64, ContrastiveGrad)> {
    let d = batch.validate()?;
    let n = batch.len();
    let tau = batch.tau;
    let mut grad = ContrastiveGrad {
        queries: vec![vec![0.0; d]; n],
        positives: vec![vec![0.0; d]; n],
        negatives: batch
            .negatives
            .iter()
            .map(|negs| vec![vec![0.0; d]; negs.len()])
            .collect(),
    };
    let vector = |slot: Slot| match slot {
        Slot::Positive(j) => &batch.positives[j],
        Slot::Negative(j, m) => &batch.negatives[j][m],
    };

    let mut total = 0.0;
    for i in 0..n {
        let owners: Vec<usize> = if in_batch { (0..n).collect() } else { vec![i] };
        let mut slots: Vec<Slot> = owners.iter().map(|&j| Slot::Positive(j)).collect();
        for &j in &owners {
            slots.extend((0..batch.negatives[j].len()).map(|m| Slot::Negative(j, m)));
        }
        let target = owners
            .iter()
            .position(|&j| j == i)
            .expect("own positive present");
        let q = &batch.queries[i];
        let logits: Vec<f64> = slots.iter().map(|&s| inner(q, vector(s)) / tau).collect();
        total += log_sum_exp(&logits) - logits[target];

        let probs = softmax(&logits);
        for (c, (&slot, p)) in slots.iter().zip(probs).enumerate() {
            let coef = (p - if c == target { 1.0 } else { 0.0 }) / (n as f64 * tau);
            if coef == 0.0 {
                continue;
            }
            axpy(coef, vector(slot), &mut grad.queries[i]);
            let dst = match slot {
                Slot::Positive(j) => &mut grad.positives[j],
                Slot::Negative(j, m) => &mut grad.negatives[j][m],
            };
            axpy(coef, q, dst);
        }
    }
    Ok((total / n as f64, grad))
}

/// Linear map from `h ⊕ h+` (length `2d`) to three class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationHead {
    dim: usize,
    /// `2d x 3`, row-major.
    pub weights: Vec<f64>,
    pub bias: [f64; 3],
}

impl ClassificationHead {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            weights: vec![0.0; 2 * dim * 3],
            bias: [0.0; 3],
        }
    }

    pub fn from_parts(dim: usize, weights: Vec<f64>, bias: [f64; 3]) -> Result<Self> {
        if weights.len() != 2 * dim * 3 {
            return Err(Error::Config(format!(
                "head needs {} weights, got {}",
                6 * dim,
                weights.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classification head".into()));
        }
        Ok(Self { dim, weights, bias })
    }

    /// Embedding dimension `d` of each input half.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn logits(&self, h: &[f64], h_pos: &[f64]) -> Result<[f64; 3]> {
        for v in [h, h_pos] {
            if v.len() != self.dim {
                return Err(Error::Dimension {
                    index: None,
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        let mut out = self.bias;
        for (r, z) in h.iter().chain(h_pos).enumerate() {
            for (y, o) in out.iter_mut().enumerate() {
                *o += z * self.weights[r * 3 + y];
            }
        }
        Ok(out)
    }
}

pub fn softmax3(logits: [f64; 3]) -> [f64; 3] {
    let p = softmax(&logits);
    [p[0], p[1], p[2]]
}

/// Class probabilities `softmax(Linear(h ⊕ h+))`.
pub fn classification_probs(
    head: &ClassificationHead,
    h: &[f64],
    h_pos: &[f64],
) -> Result<[f64; 3]> {
    Ok(softmax3(head.logits(h, h_pos)?))
}

/// Cross entropy of the gold class.
pub fn nli_loss(probs: &[f64; 3], gold: usize) -> Result<f64> {
    let p = *probs
        .get(gold)
        .ok_or_else(|| Error::Config(format!("gold class {gold} out of range")))?;
    if p < NLI_PROB_FLOOR {
        log::warn!("gold probability {p:e} floored at {NLI_PROB_FLOOR:e}");
        return Ok(-NLI_PROB_FLOOR.ln());
    }
    Ok(-p.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiTaskWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl MultiTaskWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.alpha) || !unit.contains(&self.beta) {
            return Err(Error::Config(format!(
                "alpha and beta must lie in [0, 1], got {} and {}",
                self.alpha, self.beta
            )));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::Config("alpha and beta cannot both be zero".into()));
        }
        Ok(())
    }

    /// Weights with `alpha / beta = ratio`, scaled so `alpha + beta = 1`.
    pub fn from_ratio(ratio: f64) -> Result<Self> {
        if ratio.is_nan() || ratio < 0.0 {
            return Err(Error::Config(format!(
                "loss ratio must be non-negative, got {ratio}"
            )));
        }
        if ratio.is_infinite() {
            return Self::new(1.0, 0.0);
        }
        Self::new(ratio / (ratio + 1.0), 1.0 / (ratio + 1.0))
    }
}

impl Default for MultiTaskWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
        }
    }
}

pub fn joint_loss(weights: MultiTaskWeights, contrastive: f64, nli: f64) -> f64 {
    weights.alpha * contrastive + weights.beta * nli
}
