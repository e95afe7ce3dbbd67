//! Process exit codes derived from the error chain.

use polyedit_core::encoder::EncoderError;
use polyedit_core::eval::EvalError;
use polyedit_core::fact_store::FactError;
use polyedit_core::orchestrator::{LlmError, OrchestratorError};
use polyedit_core::synth::SynthError;
use polyedit_core::training::TrainError;

use crate::config::UsageError;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERIC: u8 = 4;
pub const LLM_TRANSPORT: u8 = 5;

fn llm(e: &LlmError) -> u8 {
    match e {
        LlmError::Transport(_) | LlmError::EmptyResponse => LLM_TRANSPORT,
        LlmError::Script(_) => DATA,
    }
}

fn orchestrator(e: &OrchestratorError) -> u8 {
    match e {
        OrchestratorError::InvalidConfig(_) => USAGE,
        OrchestratorError::Llm(e) => llm(e),
        OrchestratorError::Retrieve(_) => DATA,
    }
}

fn classify_one(e: &(dyn std::error::Error + 'static)) -> Option<u8> {
    if e.is::<UsageError>() {
        return Some(USAGE);
    }
    if let Some(e) = e.downcast_ref::<TrainError>() {
        return Some(match e {
            TrainError::NonFiniteLoss { .. } => NUMERIC,
            TrainError::InvalidConfig(_) => USAGE,
            _ => DATA,
        });
    }
    if let Some(e) = e.downcast_ref::<EvalError>() {
        return Some(match e {
            EvalError::Orchestrator(o) => orchestrator(o),
            EvalError::InvalidPolicy(_) => USAGE,
            _ => DATA,
        });
    }
    if let Some(e) = e.downcast_ref::<OrchestratorError>() {
        return Some(orchestrator(e));
    }
    if let Some(e) = e.downcast_ref::<LlmError>() {
        return Some(llm(e));
    }
    if let Some(e) = e.downcast_ref::<SynthError>() {
        return Some(match e {
            SynthError::InvalidOption(_) => USAGE,
            _ => DATA,
        });
    }
    if e.is::<FactError>() || e.is::<EncoderError>() {
        return Some(DATA);
    }
    None
}

/// The first recognized error in the chain decides; anything else is a data error.
pub fn code_for(err: &anyhow::Error) -> u8 {
    err.chain().find_map(classify_one).unwrap_or(DATA)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;
    use polyedit_core::http::HttpError;

    #[test]
    fn codes() {
        let transport = EvalError::Orchestrator(OrchestratorError::Llm(LlmError::Transport(HttpError::Timeout {
            attempts: 2,
        })));
        assert_eq!(code_for(&anyhow::Error::from(transport)), LLM_TRANSPORT);
        let nan = TrainError::NonFiniteLoss {
            epoch: 1,
            batch: 0,
            detail: String::new(),
        };
        assert_eq!(code_for(&Err::<(), _>(nan).context("training").unwrap_err()), NUMERIC);
        assert_eq!(code_for(&crate::config::usage("bad flag")), USAGE);
        assert_eq!(code_for(&anyhow::Error::from(FactError::DuplicateEditId("e".into()))), DATA);
        assert_eq!(code_for(&anyhow::anyhow!("other")), DATA);
    }
}
