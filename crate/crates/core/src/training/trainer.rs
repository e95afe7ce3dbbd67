//! Mini-batch Adam training of the built-in encoder.
//!
//! Determinism: the train/validation split is a seeded shuffle fixed for the
//! whole run, epoch `k` shuffles with ChaCha stream `k`, and every gradient
//! reduction is summed in slot order. Training can therefore be resumed from a
//! checkpoint carrying optimizer state and reproduce a single uninterrupted run
//! bit for bit.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::batch::{batch_loss, batch_loss_and_grad, Corpus, Gradients, LossBreakdown};
use super::{TrainConfig, TrainError, TrainingSample};
use crate::encoder::checkpoint::{Checkpoint, OptimizerState};
use crate::encoder::{BuiltinEncoderParams, EncoderError};

const SPLIT_STREAM: u64 = u64::MAX;
const VALIDATION_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

/// Mean losses for one epoch and split. Epoch 0 is the evaluation before any update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub epoch: u64,
    pub split: Split,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<LossRow>,
    pub clamped: usize,
}

impl TrainOutcome {
    pub fn params(&self) -> &BuiltinEncoderParams {
        &self.checkpoint.params
    }

    pub fn final_row(&self, split: Split) -> Option<&LossRow> {
        self.curve.iter().rev().find(|r| r.split == split)
    }

    pub fn first_row(&self, split: Split) -> Option<&LossRow> {
        self.curve.iter().find(|r| r.split == split)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic 80/20 style split of item indices.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, SPLIT_STREAM));
    let n_val = (n as f64 * validation_fraction).floor() as usize;
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

struct Adam<'a> {
    config: &'a TrainConfig,
}

impl Adam<'_> {
    fn update(
        &self,
        step: u64,
        param: &mut [f64],
        m: &mut [f64],
        v: &mut [f64],
        grad: &[f64],
    ) {
        let c = self.config;
        let (b1, b2) = (c.adam_beta1, c.adam_beta2);
        let bc1 = 1.0 - b1.powi(step as i32);
        let bc2 = 1.0 - b2.powi(step as i32);
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.adam_epsilon);
        }
    }

    /// Dense update of the projection, lazy update of the touched token rows.
    fn step(&self, params: &mut BuiltinEncoderParams, opt: &mut OptimizerState, grads: &Gradients) {
        opt.step += 1;
        let step = opt.step;
        self.update(step, &mut params.projection, &mut opt.proj_m, &mut opt.proj_v, &grads.projection);
        let d = params.dim;
        for (bucket, row_grad) in &grads.tokens {
            let r = *bucket as usize * d..(*bucket as usize + 1) * d;
            self.update(
                step,
                &mut params.token_table[r.clone()],
                &mut opt.token_m[r.clone()],
                &mut opt.token_v[r],
                row_grad,
            );
        }
    }
}

fn mean_rows(rows: &[LossBreakdown]) -> LossBreakdown {
    let n = rows.len().max(1) as f64;
    let mut out = LossBreakdown::default();
    for r in rows {
        out.sd += r.sd / n;
        out.clec += r.clec / n;
        out.bce += r.bce / n;
        out.total += r.total / n;
        out.n_sd += r.n_sd;
        out.n_clec += r.n_clec;
        out.n_bce += r.n_bce;
        out.clamped += r.clamped;
    }
    out
}

fn evaluate(
    params: &BuiltinEncoderParams,
    corpus: &Corpus,
    items: &[usize],
    config: &TrainConfig,
) -> Result<LossBreakdown, TrainError> {
    let mut rng = rng_for(config.seed, VALIDATION_STREAM);
    let mut rows = Vec::new();
    for chunk in items.chunks(config.batch_size) {
        let batch = corpus.batch(chunk, config.negatives_per_positive, &mut rng);
        rows.push(batch_loss(params, corpus, &batch, config)?);
    }
    Ok(mean_rows(&rows))
}

/// Diverged weights surface as non-finite embeddings; report them as such.
fn diverged(epoch: u64, batch: usize) -> impl FnOnce(TrainError) -> TrainError {
    move |e| match e {
        TrainError::Encoder(EncoderError::NonFinite | EncoderError::ZeroNorm) => TrainError::NonFiniteLoss {
            epoch,
            batch,
            detail: e.to_string(),
        },
        other => other,
    }
}

/// Trains for `config.epochs` epochs starting after `init`'s completed epochs.
/// A checkpoint without optimizer state starts a fresh run at epoch 1 and the
/// curve also gets an epoch-0 row per split.
pub fn train(
    samples: &[TrainingSample],
    config: &TrainConfig,
    init: Checkpoint,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let Checkpoint {
        mut params,
        optimizer,
    } = init;
    params.validate()?;
    let fresh = optimizer.is_none();
    let mut opt = optimizer.unwrap_or_else(|| OptimizerState::zeros(&params));
    if opt.token_m.len() != params.token_table.len() || opt.proj_m.len() != params.projection.len() {
        return Err(TrainError::IncompatibleState(
            "optimizer moments do not match the weight shapes".into(),
        ));
    }

    let corpus = Corpus::new(samples, &params)?;
    let (train_ids, val_ids) = split_indices(corpus.len(), config.validation_fraction, config.seed);
    if train_ids.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let adam = Adam { config };
    let mut curve = Vec::new();
    let mut clamped = 0;
    let record = |curve: &mut Vec<LossRow>, epoch, split, loss| curve.push(LossRow { epoch, split, loss });

    if fresh {
        let train_loss = evaluate(&params, &corpus, &train_ids, config)?;
        record(&mut curve, 0, Split::Train, train_loss);
        if !val_ids.is_empty() {
            let val_loss = evaluate(&params, &corpus, &val_ids, config)?;
            record(&mut curve, 0, Split::Val, val_loss);
        }
    }

    let first = opt.epochs_completed + 1;
    for epoch in first..first + config.epochs as u64 {
        let mut rng = rng_for(config.seed, epoch);
        let mut order = train_ids.clone();
        order.shuffle(&mut rng);
        let mut rows = Vec::new();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = corpus.batch(chunk, config.negatives_per_positive, &mut rng);
            let (loss, grads) = batch_loss_and_grad(&params, &corpus, &batch, config).map_err(diverged(epoch, b))?;
            if !loss.total.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!(
                        "sd={} clec={} bce={} total={} finite_grads={}",
                        loss.sd,
                        loss.clec,
                        loss.bce,
                        loss.total,
                        grads.is_finite()
                    ),
                });
            }
            clamped += loss.clamped;
            adam.step(&mut params, &mut opt, &grads);
            rows.push(loss);
        }
        let train_loss = mean_rows(&rows);
        record(&mut curve, epoch, Split::Train, train_loss);
        if !val_ids.is_empty() {
            let val_loss = evaluate(&params, &corpus, &val_ids, config).map_err(diverged(epoch, 0))?;
            record(&mut curve, epoch, Split::Val, val_loss);
        }
        opt.epochs_completed = epoch;
        tracing::debug!(epoch, loss = train_loss.total, "epoch done");
    }
    if clamped > 0 {
        tracing::warn!(clamped, "BCE probabilities were clamped during training");
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params,
            optimizer: Some(opt),
        },
        curve,
        clamped,
    })
}

/// Writes `epoch,split,loss` plus one column per loss term with a positive weight.
type Term = fn(&LossBreakdown) -> f64;

pub fn write_loss_csv(
    path: impl AsRef<Path>,
    curve: &[LossRow],
    config: &TrainConfig,
) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    let weights = config.loss_weights;
    let terms: Vec<(&str, Term)> = [
        ("sd", weights.sd, (|l: &LossBreakdown| l.sd) as Term),
        ("clec", weights.clec, |l: &LossBreakdown| l.clec),
        ("bce", weights.bce, |l: &LossBreakdown| l.bce),
    ]
    .into_iter()
    .filter(|(_, weight, _)| *weight > 0.0)
    .map(|(name, _, f)| (name, f))
    .collect();
    let mut header = vec!["epoch", "split", "loss"];
    header.extend(terms.iter().map(|(n, _)| *n));
    w.write_record(&header)?;
    for row in curve {
        let mut rec = vec![row.epoch.to_string(), row.split.to_string(), row.loss.total.to_string()];
        rec.extend(terms.iter().map(|(_, f)| f(&row.loss).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
