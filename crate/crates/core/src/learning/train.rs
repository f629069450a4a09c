//! Full-batch gradient descent for the dual encoder and classification head.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::learning::encoder::{DualEncoderModel, Features, Side};
use crate::learning::loss::{
    contrastive_loss, nli_loss, softmax3, ContrastiveBatch, MultiTaskWeights,
};
use crate::learning::schedule::{build_schedule, MixedObjectiveSchedule, ObjectiveKind};

/// One training record. Contrastive files omit `label`; multitask files
/// carry it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingExample {
    pub query: String,
    pub positive: String,
    pub negatives: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

pub fn read_training_file(path: impl AsRef<Path>) -> Result<Vec<TrainingExample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn write_training_records<W: Write>(
    mut w: W,
    records: &[TrainingExample],
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Contrastive,
    MultiTask(MultiTaskWeights),
}

impl Objective {
    pub fn weights(self) -> MultiTaskWeights {
        match self {
            Objective::Contrastive => MultiTaskWeights {
                alpha: 1.0,
                beta: 0.0,
            },
            Objective::MultiTask(w) => w,
        }
    }

    pub fn for_kind(kind: ObjectiveKind, weights: MultiTaskWeights) -> Self {
        match kind {
            ObjectiveKind::Contrastive => Objective::Contrastive,
            ObjectiveKind::Multitask => Objective::MultiTask(weights),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    pub tau: f64,
    pub in_batch: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            tau: 1.0,
            in_batch: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub total: f64,
    pub contrastive: f64,
    /// Mean classification loss, when the objective includes it.
    pub nli: Option<f64>,
}

/// Gradient of the objective with respect to every model parameter, laid
/// out like the parameters themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub query: Vec<f64>,
    pub sentence: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: [f64; 3],
}

impl ModelGrad {
    fn all(&self) -> impl Iterator<Item = &f64> {
        self.query
            .iter()
            .chain(&self.sentence)
            .chain(&self.head_weights)
            .chain(&self.head_bias)
    }
}

fn accumulate(weights: &mut [f64], dim: usize, features: &Features, dh: &[f64]) {
    for &(f, x) in features {
        for (w, g) in weights[f * dim..(f + 1) * dim].iter_mut().zip(dh) {
            *w += x * g;
        }
    }
}

/// Mean joint loss of `examples` and its exact gradient.
pub fn objective_and_gradient(
    model: &DualEncoderModel,
    examples: &[TrainingExample],
    objective: Objective,
    opts: LossOptions,
) -> Result<(StepLoss, ModelGrad)> {
    if examples.is_empty() {
        return Err(Error::Config("minibatch is empty".into()));
    }
    let weights = objective.weights();
    weights.validate()?;
    let enc = &model.encoder;
    let d = enc.embed_dim();
    let n = examples.len();

    let qf: Vec<Features> = examples.iter().map(|e| enc.features(&e.query)).collect();
    let pf: Vec<Features> = examples.iter().map(|e| enc.features(&e.positive)).collect();
    let nf: Vec<Vec<Features>> = examples
        .iter()
        .map(|e| e.negatives.iter().map(|t| enc.features(t)).collect())
        .collect();
    let batch = ContrastiveBatch {
        queries: qf.iter().map(|f| enc.project(Side::Query, f)).collect(),
        positives: pf.iter().map(|f| enc.project(Side::Sentence, f)).collect(),
        negatives: nf
            .iter()
            .map(|fs| fs.iter().map(|f| enc.project(Side::Sentence, f)).collect())
            .collect(),
        tau: opts.tau,
    };
    let (cl, cg) = contrastive_loss(&batch, opts.in_batch)?;

    let mut dq: Vec<Vec<f64>> = cg
        .queries
        .iter()
        .map(|g| g.iter().map(|v| weights.alpha * v).collect())
        .collect();
    let mut dp: Vec<Vec<f64>> = cg
        .positives
        .iter()
        .map(|g| g.iter().map(|v| weights.alpha * v).collect())
        .collect();
    let dn: Vec<Vec<Vec<f64>>> = cg
        .negatives
        .iter()
        .map(|gs| {
            gs.iter()
                .map(|g| g.iter().map(|v| weights.alpha * v).collect())
                .collect()
        })
        .collect();

    let mut head_weights = vec![0.0; model.head.weights.len()];
    let mut head_bias = [0.0; 3];
    let mut nli = None;
    if let Objective::MultiTask(_) = objective {
        let mut total = 0.0;
        for (i, ex) in examples.iter().enumerate() {
            let gold = ex
                .label
                .ok_or_else(|| Error::Config(format!("multitask example {i} has no label")))?
                .index();
            let (h, hp) = (&batch.queries[i], &batch.positives[i]);
            let probs = softmax3(model.head.logits(h, hp)?);
            total += nli_loss(&probs, gold)?;
            let mut dlogits = probs;
            dlogits[gold] -= 1.0;
            for g in &mut dlogits {
                *g *= weights.beta / n as f64;
            }
            for (y, g) in dlogits.iter().enumerate() {
                head_bias[y] += g;
            }
            for (r, z) in h.iter().chain(hp).enumerate() {
                let mut dz = 0.0;
                for (y, g) in dlogits.iter().enumerate() {
                    head_weights[r * 3 + y] += z * g;
                    dz += model.head.weights[r * 3 + y] * g;
                }
                if r < d {
                    dq[i][r] += dz;
                } else {
                    dp[i][r - d] += dz;
                }
            }
        }
        nli = Some(total / n as f64);
    }

    let mut query = vec![0.0; enc.weights(Side::Query).len()];
    let mut sentence = vec![0.0; enc.weights(Side::Sentence).len()];
    for i in 0..n {
        accumulate(&mut query, d, &qf[i], &dq[i]);
        accumulate(&mut sentence, d, &pf[i], &dp[i]);
        for (f, g) in nf[i].iter().zip(&dn[i]) {
            accumulate(&mut sentence, d, f, g);
        }
    }

    let total = weights.alpha * cl + weights.beta * nli.unwrap_or(0.0);
    Ok((
        StepLoss {
            total,
            contrastive: cl,
            nli,
        },
        ModelGrad {
            query,
            sentence,
            head_weights,
            head_bias,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub learning_rate: f64,
    pub loss: LossOptions,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            loss: LossOptions::default(),
        }
    }
}

/// One gradient-descent update on the whole minibatch.
pub fn train_step(
    model: &mut DualEncoderModel,
    examples: &[TrainingExample],
    objective: Objective,
    cfg: StepConfig,
) -> Result<StepLoss> {
    let (loss, grad) = objective_and_gradient(model, examples, objective, cfg.loss)?;
    if !loss.total.is_finite() || grad.all().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "training step diverged: loss {} (contrastive {}, nli {:?}) on {} examples, lr {}",
            loss.total,
            loss.contrastive,
            loss.nli,
            examples.len(),
            cfg.learning_rate
        )));
    }
    let lr = cfg.learning_rate;
    let step = |params: &mut [f64], grads: &[f64]| {
        for (p, g) in params.iter_mut().zip(grads) {
            *p -= lr * g;
        }
    };
    step(model.encoder.weights_mut(Side::Query), &grad.query);
    step(model.encoder.weights_mut(Side::Sentence), &grad.sentence);
    step(&mut model.head.weights, &grad.head_weights);
    step(&mut model.head.bias, &grad.head_bias);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub in_batch: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            tau: 1.0,
            batch_size: 32,
            alpha: 1.0,
            beta: 0.0,
            in_batch: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub cycle: u32,
    pub dataset: String,
    pub objective: ObjectiveKind,
    pub mean_loss: f64,
    pub steps: usize,
}

/// Runs every epoch slot of `schedule` against the tagged datasets.
/// Each epoch shuffles its dataset with a generator keyed by the seed and
/// the epoch number, then steps through consecutive minibatches.
pub fn train(
    model: &mut DualEncoderModel,
    datasets: &BTreeMap<String, Vec<TrainingExample>>,
    schedule: &MixedObjectiveSchedule,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let weights = MultiTaskWeights::new(cfg.alpha, cfg.beta)?;
    let slots = build_schedule(schedule)?;
    let step_cfg = StepConfig {
        learning_rate: cfg.learning_rate,
        loss: LossOptions {
            tau: cfg.tau,
            in_batch: cfg.in_batch,
        },
    };
    let mut logs = Vec::with_capacity(slots.len());
    for (epoch, slot) in slots.iter().enumerate() {
        let data = datasets
            .get(&slot.dataset)
            .ok_or_else(|| Error::Config(format!("no dataset tagged {:?}", slot.dataset)))?;
        if data.is_empty() {
            return Err(Error::Config(format!(
                "dataset {:?} is empty",
                slot.dataset
            )));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        order.shuffle(&mut rng);
        let objective = Objective::for_kind(slot.objective, weights);
        let mut sum = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainingExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            sum += train_step(model, &batch, objective, step_cfg)?.total;
            steps += 1;
        }
        log::info!(
            "epoch {epoch} ({} {:?}): mean loss {:.6}",
            slot.dataset,
            slot.objective,
            sum / steps as f64
        );
        logs.push(EpochLog {
            cycle: slot.cycle,
            dataset: slot.dataset.clone(),
            objective: slot.objective,
            mean_loss: sum / steps as f64,
            steps,
        });
    }
    Ok(logs)
}
