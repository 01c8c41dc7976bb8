//! Executes run points and writes their artifacts.

use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::Instant;

use wlqmc::checkpoint::{run_resumable, Checkpoint, CheckpointError, CheckpointPolicy, RunOutcome};
use wlqmc::ed_oracle::{thermal_expectations, OracleError};
use wlqmc::observables::{detect_plateau, finalize, ObservableError};

use crate::config::{ConfigError, RunConfig};
use crate::csv::{self, CsvError};
use crate::report::{MeasurementReport, OracleReport, REPORT_SCHEMA};

pub const PROFILE_FILE: &str = "profile.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const ORACLE_REPORT_FILE: &str = "oracle.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("--resume {0}: {1}")]
    Resume(PathBuf, String),
}

impl RunError {
    pub fn is_weight_violation(&self) -> bool {
        matches!(self, RunError::Checkpoint(CheckpointError::Chain(_)))
    }
}

/// Artifact directory of one `V_c`: the output directory itself for a
/// single value, `vc_<value>` below it for a scan.
pub fn point_dir(cfg: &RunConfig, out: &Path, v_c: f64) -> PathBuf {
    if cfg.v_c_list.len() == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("vc_{v_c:?}"))
    }
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::Io(dir.to_path_buf(), e))
}

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| RunError::Io(path.to_path_buf(), e))
}

/// Result of one run point.
pub enum PointOutcome {
    Complete(Box<MeasurementReport>),
    /// Stopped by a signal; a checkpoint was written.
    Interrupted(PathBuf),
}

/// Runs one `V_c`, starting from `resume` when given, and writes the CSV,
/// the JSON report and a checkpoint into `dir`.
pub fn run_point(
    cfg: &RunConfig,
    v_c: f64,
    dir: &Path,
    resume: Option<&Path>,
    stop: Option<&AtomicBool>,
) -> Result<PointOutcome, RunError> {
    let p = cfg.params_at(v_c);
    create_dir(dir)?;
    let cp = match resume {
        Some(path) => {
            let cp = Checkpoint::load(path)?;
            cp.check_against(&p, Some(&cfg.plan))?;
            cp
        }
        None => Checkpoint::fresh(&p, &cfg.plan),
    };
    let policy = CheckpointPolicy {
        path: Some(dir.join(CHECKPOINT_FILE)),
        every: (cfg.checkpoint_every > 0).then_some(cfg.checkpoint_every),
    };
    let t0 = Instant::now();
    let out = match run_resumable(cp, &policy, stop)? {
        RunOutcome::Complete(out) => out,
        RunOutcome::Interrupted(_) => return Ok(PointOutcome::Interrupted(dir.join(CHECKPOINT_FILE))),
    };
    let wall = t0.elapsed().as_secs_f64();
    let fin = finalize(&out.acc)?;
    let report = MeasurementReport::new(&p, &cfg.plan, fin, out.stats, &cfg.plateau, wall);
    csv::write(&dir.join(PROFILE_FILE), &report.profile, "qmc", &report.physics_hash)?;
    write_file(&dir.join(REPORT_FILE), &report.to_json())?;
    Ok(PointOutcome::Complete(Box::new(report)))
}

/// Checkpoint to resume one point from, given the `--resume` argument: a
/// checkpoint file (single-`V_c` configs) or a previous output directory.
fn resume_source(cfg: &RunConfig, resume: &Path, v_c: f64) -> Result<Option<PathBuf>, RunError> {
    if resume.is_file() {
        if cfg.v_c_list.len() > 1 {
            return Err(RunError::Resume(
                resume.to_path_buf(),
                "a V_c scan resumes from its output directory, not a single checkpoint".into(),
            ));
        }
        return Ok(Some(resume.to_path_buf()));
    }
    if !resume.is_dir() {
        return Err(RunError::Resume(resume.to_path_buf(), "no such checkpoint file or directory".into()));
    }
    let path = point_dir(cfg, resume, v_c).join(CHECKPOINT_FILE);
    if path.is_file() {
        Ok(Some(path))
    } else if cfg.v_c_list.len() == 1 {
        Err(RunError::Resume(resume.to_path_buf(), format!("{} not found", path.display())))
    } else {
        // scan point never started
        Ok(None)
    }
}

/// Runs every `V_c` of the config in turn. Stops at the first interrupted
/// point.
pub fn run_all(
    cfg: &RunConfig,
    out: &Path,
    resume: Option<&Path>,
    stop: Option<&AtomicBool>,
    mut progress: impl FnMut(f64, &PointOutcome),
) -> Result<Vec<(f64, PointOutcome)>, RunError> {
    cfg.validate()?;
    let mut results = Vec::new();
    for &v_c in &cfg.v_c_list {
        let from = match resume {
            Some(r) => resume_source(cfg, r, v_c)?,
            None => None,
        };
        let outcome = run_point(cfg, v_c, &point_dir(cfg, out, v_c), from.as_deref(), stop)?;
        progress(v_c, &outcome);
        let stopped = matches!(outcome, PointOutcome::Interrupted(_));
        results.push((v_c, outcome));
        if stopped {
            break;
        }
    }
    Ok(results)
}

/// Exact profile of every `V_c`, written in the run layout.
pub fn oracle_all(cfg: &RunConfig, out: &Path) -> Result<Vec<OracleReport>, RunError> {
    cfg.validate()?;
    let mut reports = Vec::new();
    for &v_c in &cfg.v_c_list {
        let p = cfg.params_at(v_c);
        let exact = thermal_expectations(&p, p.temperature)?;
        let dir = point_dir(cfg, out, v_c);
        create_dir(&dir)?;
        let report = OracleReport {
            schema_version: REPORT_SCHEMA,
            physics_hash: p.physics_hash(),
            dimension: exact.dimension,
            ground_energy: exact.ground_energy,
            saturation_probability: exact.saturation_probability,
            plateaus: detect_plateau(&exact.profile, &cfg.plateau),
            profile: exact.profile,
            params: p,
        };
        csv::write(&dir.join(PROFILE_FILE), &report.profile, "oracle", &report.physics_hash)?;
        write_file(&dir.join(ORACLE_REPORT_FILE), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        reports.push(report);
    }
    Ok(reports)
}
