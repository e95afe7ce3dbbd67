//! `train`: fit the built-in encoder on a JSONL training file.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use polyedit_core::encoder::checkpoint::Checkpoint;
use polyedit_core::encoder::BuiltinEncoderParams;
use polyedit_core::training::{read_samples_jsonl, train, write_loss_csv, Distance, LossWeights, Split, TrainConfig};
use serde::Serialize;

use super::{emit, sha256_file, write_json};
use crate::config::{require_file, usage, RunConfig};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training samples (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve CSV; defaults to the checkpoint path with a `.loss.csv` suffix.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Enabled loss terms, e.g. `sd,clec,bce` or `bce`.
    #[arg(long, value_parser = parse_losses)]
    pub loss: Option<LossWeights>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// `l2` or `one_minus_cosine`.
    #[arg(long, value_parser = parse_distance)]
    pub distance: Option<Distance>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub init_seed: Option<u64>,
}

fn parse_losses(s: &str) -> Result<LossWeights, String> {
    let mut on = [false; 3];
    for term in s.split(',').map(str::trim) {
        match term {
            "sd" => on[0] = true,
            "clec" => on[1] = true,
            "bce" => on[2] = true,
            other => return Err(format!("unknown loss term `{other}` (expected sd, clec, bce)")),
        }
    }
    Ok(LossWeights::only(on[0], on[1], on[2]))
}

fn parse_distance(s: &str) -> Result<Distance, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    data_sha256: String,
    resume_sha256: Option<String>,
    checkpoint_sha256: String,
    fingerprint: String,
    epochs_completed: u64,
    final_train_loss: Option<f64>,
    final_val_loss: Option<f64>,
    clamped_probabilities: usize,
    config: &'a TrainConfig,
}

pub fn run(args: &TrainArgs, config: &RunConfig) -> anyhow::Result<()> {
    let mut tc = config.train.clone();
    tc.epochs = args.epochs.unwrap_or(tc.epochs);
    tc.learning_rate = args.lr.unwrap_or(tc.learning_rate);
    tc.batch_size = args.batch_size.unwrap_or(tc.batch_size);
    tc.margin = args.margin.unwrap_or(tc.margin);
    tc.distance = args.distance.unwrap_or(tc.distance);
    tc.seed = args.seed.unwrap_or(tc.seed);
    tc.loss_weights = args.loss.unwrap_or(tc.loss_weights);
    tc.validate().map_err(|e| usage(e.to_string()))?;

    require_file(&args.data, "training data")?;
    let init = match &args.resume {
        Some(path) => {
            require_file(path, "resume checkpoint")?;
            Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => {
            let dim = args.dim.unwrap_or(config.init.dim);
            let vocab = args.vocab_size.unwrap_or(config.init.vocab_size);
            if dim == 0 || vocab == 0 {
                return Err(usage("encoder dim and vocab size must be positive"));
            }
            Checkpoint {
                params: BuiltinEncoderParams::init(dim, vocab, args.init_seed.unwrap_or(config.init.seed)),
                optimizer: None,
            }
        }
    };

    let samples = read_samples_jsonl(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    tracing::info!(samples = samples.len(), epochs = tc.epochs, "training");
    let outcome = train(&samples, &tc, init)?;
    outcome.checkpoint.save(&args.out)?;
    let loss_csv = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    write_loss_csv(&loss_csv, &outcome.curve, &tc)?;

    let summary = TrainSummary {
        data_sha256: sha256_file(&args.data)?,
        resume_sha256: args.resume.as_deref().map(sha256_file).transpose()?,
        checkpoint_sha256: sha256_file(&args.out)?,
        fingerprint: outcome.params().fingerprint(),
        epochs_completed: outcome
            .checkpoint
            .optimizer
            .as_ref()
            .map_or(0, |o| o.epochs_completed),
        final_train_loss: outcome.final_row(Split::Train).map(|r| r.loss.total),
        final_val_loss: outcome.final_row(Split::Val).map(|r| r.loss.total),
        clamped_probabilities: outcome.clamped,
        config: &tc,
    };
    write_json(&args.out.with_extension("manifest.json"), &summary)?;
    emit(&format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    Ok(())
}
