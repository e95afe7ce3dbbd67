//! `init-encoder`: write an untrained built-in encoder checkpoint.

use std::path::PathBuf;

use clap::Args;
use polyedit_core::encoder::checkpoint::Checkpoint;
use polyedit_core::encoder::BuiltinEncoderParams;

use crate::config::{usage, RunConfig};

#[derive(Debug, Args)]
pub struct InitEncoderArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(args: &InitEncoderArgs, config: &RunConfig) -> anyhow::Result<()> {
    let dim = args.dim.unwrap_or(config.init.dim);
    let vocab = args.vocab_size.unwrap_or(config.init.vocab_size);
    if dim == 0 || vocab == 0 {
        return Err(usage("encoder dim and vocab size must be positive"));
    }
    let params = BuiltinEncoderParams::init(dim, vocab, args.seed.unwrap_or(config.init.seed));
    let fingerprint = params.fingerprint();
    Checkpoint {
        params,
        optimizer: None,
    }
    .save(&args.out)?;
    super::emit(&format!("{fingerprint}\n"))?;
    Ok(())
}
