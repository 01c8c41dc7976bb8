//! Resumable runs: chain states saved to JSON between epochs of sweeps.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::sampler::{ChainError, ChainOutput, ChainState, RunPlan};
use crate::worldline::WeightModel;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("checkpoint {path}: malformed: {source}")]
    Format { path: PathBuf, source: serde_json::Error },
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint params hash {found} does not match the configured model ({expected})")]
    ParamsMismatch { found: String, expected: String },
    #[error("checkpoint run plan differs from the requested one: {0}")]
    PlanMismatch(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Everything needed to continue a run bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params_hash: String,
    pub params: ModelParams,
    pub plan: RunPlan,
    pub chains: Vec<ChainState>,
}

impl Checkpoint {
    pub fn fresh(p: &ModelParams, plan: &RunPlan) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            params_hash: p.params_hash(),
            params: p.clone(),
            plan: plan.clone(),
            chains: (0..plan.chains).map(|i| ChainState::new(p, plan, i)).collect(),
        }
    }

    pub fn sweeps_done(&self) -> u64 {
        self.chains.iter().map(|c| c.sweeps_done).min().unwrap_or(0)
    }

    pub fn is_complete(&self) -> bool {
        self.chains.iter().all(|c| c.is_complete(&self.plan))
    }

    /// Writes to a sibling temporary file and renames it over `path`, so an
    /// interrupted write never leaves a truncated checkpoint.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io_err = |source| CheckpointError::Io { path: path.to_path_buf(), source };
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(&tmp, text).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
        let cp: Checkpoint =
            serde_json::from_str(&text).map_err(|source| CheckpointError::Format { path: path.to_path_buf(), source })?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: cp.version });
        }
        Ok(cp)
    }

    /// A resumed run must describe the same model; its plan comes from the
    /// checkpoint, and must agree with `plan` when one is given.
    pub fn check_against(&self, p: &ModelParams, plan: Option<&RunPlan>) -> Result<(), CheckpointError> {
        let expected = p.params_hash();
        if self.params_hash != expected || self.params.params_hash() != expected {
            return Err(CheckpointError::ParamsMismatch { found: self.params_hash.clone(), expected });
        }
        if let Some(plan) = plan {
            if plan != &self.plan {
                return Err(CheckpointError::PlanMismatch(format!("checkpoint {:?}, requested {:?}", self.plan, plan)));
            }
        }
        if self.chains.len() != self.plan.chains {
            return Err(CheckpointError::PlanMismatch(format!(
                "{} chain states for {} chains",
                self.chains.len(),
                self.plan.chains
            )));
        }
        Ok(())
    }
}

/// Where and how often to checkpoint.
#[derive(Clone, Debug, Default)]
pub struct CheckpointPolicy {
    pub path: Option<PathBuf>,
    /// Sweeps per epoch; `None` runs to completion in one epoch.
    pub every: Option<u64>,
}

pub enum RunOutcome {
    Complete(ChainOutput),
    /// Stopped early; the last checkpoint (if any) holds the state.
    Interrupted(Checkpoint),
}

/// Advances all chains in epochs, saving after each one. A raised `stop`
/// flag ends the run after the current sweep of every chain, with a
/// checkpoint written.
pub fn run_resumable(
    mut cp: Checkpoint,
    policy: &CheckpointPolicy,
    stop: Option<&AtomicBool>,
) -> Result<RunOutcome, CheckpointError> {
    let w = WeightModel::new(&cp.params);
    let total = cp.plan.total_sweeps();
    let every = policy.every.unwrap_or(total).max(1);
    loop {
        if cp.is_complete() {
            if let Some(path) = &policy.path {
                cp.save(path)?;
            }
            return Ok(RunOutcome::Complete(ChainOutput::merge(&cp.chains)));
        }
        let until = (cp.sweeps_done() / every + 1) * every;
        let plan = cp.plan.clone();
        cp.chains.par_iter_mut().try_for_each(|c| c.advance(&w, &plan, until, stop))?;
        if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            if let Some(path) = &policy.path {
                cp.save(path)?;
            }
            return Ok(RunOutcome::Interrupted(cp));
        }
        if let Some(path) = &policy.path {
            cp.save(path)?;
        }
    }
}
