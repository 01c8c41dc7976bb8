use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use wlqmc_cli::compare::compare;
use wlqmc_cli::config::{ConfigError, RunConfig};
use wlqmc_cli::exit;
use wlqmc_cli::run::{oracle_all, run_all, PointOutcome, RunError};

#[derive(Parser)]
#[command(name = "wlqmc", version, about = "World-line QMC for trapped 1D Bose-Fermi mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo simulation for every V_c in the config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Measurement sweeps.
        #[arg(long)]
        sweeps: Option<u64>,
        /// Thermalization sweeps.
        #[arg(long)]
        therm: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Checkpoint file, or the output directory of an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Exact-diagonalization profile for small systems.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two profile CSVs site by site.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        z: f64,
    },
}

fn load_config(path: &Path) -> Result<RunConfig, (i32, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| (exit::INVALID, format!("{}: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(|e| (exit::INVALID, format!("{}: {e}", path.display())))
}

fn run_error(e: RunError) -> (i32, String) {
    let code = match &e {
        RunError::Config(_) => exit::INVALID,
        _ if e.is_weight_violation() => exit::WEIGHT_VIOLATION,
        _ => exit::RUNTIME,
    };
    (code, e.to_string())
}

fn execute(cli: Cli) -> Result<i32, (i32, String)> {
    match cli.command {
        Command::Run { config, seed, sweeps, therm, out, resume } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.plan.seed = s;
            }
            if let Some(s) = sweeps {
                cfg.plan.measure_sweeps = s;
            }
            if let Some(s) = therm {
                cfg.plan.therm_sweeps = s;
            }
            let out = out.unwrap_or_else(|| cfg.out.clone());
            cfg.validate().map_err(|e: ConfigError| (exit::INVALID, e.to_string()))?;

            let stop = Arc::new(AtomicBool::new(false));
            for sig in [signal_hook::consts::SIGTERM, signal_hook::consts::SIGINT] {
                signal_hook::flag::register(sig, Arc::clone(&stop))
                    .map_err(|e| (exit::RUNTIME, format!("cannot install signal handler: {e}")))?;
            }
            let results = run_all(&cfg, &out, resume.as_deref(), Some(&stop), |v_c, outcome| match outcome {
                PointOutcome::Complete(r) => {
                    let plateau = r
                        .plateaus
                        .iter()
                        .map(|p| format!("m={} sites {}-{}{}", p.filling, p.start, p.end, if p.mixed_mott { " mixed" } else { "" }))
                        .collect::<Vec<_>>()
                        .join(", ");
                    eprintln!(
                        "V_c = {v_c}: {} bins, max tau {:.1}, {:.1}s, plateaus: {}",
                        r.bins,
                        r.max_autocorrelation,
                        r.wall_time_seconds,
                        if plateau.is_empty() { "none".into() } else { plateau }
                    );
                    if r.saturation_warning {
                        eprintln!("warning: boson cutoff saturated in {:.2e} of samples; raise n_max", r.saturation_fraction);
                    }
                }
                PointOutcome::Interrupted(cp) => eprintln!("V_c = {v_c}: interrupted, checkpoint at {}", cp.display()),
            })
            .map_err(run_error)?;
            if results.iter().any(|(_, o)| matches!(o, PointOutcome::Interrupted(_))) {
                return Ok(exit::INTERRUPTED);
            }
            Ok(exit::OK)
        }
        Command::Oracle { config, out } => {
            let cfg = load_config(&config)?;
            for r in oracle_all(&cfg, &out).map_err(run_error)? {
                eprintln!("V_c = {}: dimension {}, ground energy {:.10}", r.params.v_c, r.dimension, r.ground_energy);
            }
            Ok(exit::OK)
        }
        Command::Compare { a, b, z } => {
            let ta = wlqmc_cli::csv::read(&a).map_err(|e| (exit::RUNTIME, e.to_string()))?;
            let tb = wlqmc_cli::csv::read(&b).map_err(|e| (exit::RUNTIME, e.to_string()))?;
            let c = compare(&ta, &tb, z).map_err(|e| (exit::RUNTIME, e.to_string()))?;
            print!("{}", c.summary());
            Ok(if c.passed() { exit::OK } else { exit::COMPARE_FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::INVALID as u8 } else { exit::OK as u8 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
