//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use wlqmc::{ModelParams, PlateauCriteria, RunPlan};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid configuration:\n{}", .0.iter().map(|m| format!("  - {m}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

/// Everything one `run` invocation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Model; its `v_c` is the first entry of `v_c_list`.
    pub params: ModelParams,
    /// Trap curvatures to run, each independently.
    pub v_c_list: Vec<f64>,
    pub plan: RunPlan,
    pub out: PathBuf,
    pub plateau: PlateauCriteria,
    /// Sweeps between checkpoints; 0 writes one only on completion or
    /// interruption.
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let params = ModelParams::default();
        RunConfig {
            v_c_list: vec![params.v_c],
            params,
            plan: RunPlan::default(),
            out: PathBuf::from("out"),
            plateau: PlateauCriteria::default(),
            checkpoint_every: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "sites",
    "n_bosons",
    "n_fermions",
    "t_b",
    "t_f",
    "u_bb",
    "u_bf",
    "v_c",
    "temperature",
    "trotter",
    "n_max",
    "seed",
    "therm_sweeps",
    "measure_sweeps",
    "measure_interval",
    "bin_size",
    "chains",
    "out",
    "plateau_density_tol",
    "plateau_kappa_frac",
    "plateau_min_sites",
    "checkpoint_every",
];

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| ConfigError::Syntax { line, message: format!("{key}: cannot parse {v:?}: {e}") })
}

/// Config key of a model field as named in validation messages.
fn config_key(field: &str) -> &str {
    match field {
        "L" => "sites",
        "N_b" => "n_bosons",
        "N_f" => "n_fermions",
        "U_bb" => "u_bb",
        "U_bf" => "u_bf",
        "V_c" => "v_c",
        "T" => "temperature",
        "L_tau" => "trotter",
        other => other,
    }
}

impl RunConfig {
    /// The model at one trap curvature of the scan.
    pub fn params_at(&self, v_c: f64) -> ModelParams {
        ModelParams { v_c, ..self.params.clone() }
    }

    /// Parses a configuration; keys not given keep their defaults.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<(&str, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, message: format!("expected `key = value`, found {content:?}") });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&key) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::Syntax { line, message: format!("unknown key {key:?}") });
            };
            if let Some((_, first)) = seen.iter().find(|(k, _)| *k == key) {
                return Err(ConfigError::Syntax { line, message: format!("{key} already set on line {first}") });
            }
            seen.push((key, line));
            if value.is_empty() {
                return Err(ConfigError::Syntax { line, message: format!("{key}: missing value") });
            }
            let p = &mut cfg.params;
            match key {
                "sites" => p.sites = parse_num(line, key, value)?,
                "n_bosons" => p.n_bosons = parse_num(line, key, value)?,
                "n_fermions" => p.n_fermions = parse_num(line, key, value)?,
                "t_b" => p.t_b = parse_num(line, key, value)?,
                "t_f" => p.t_f = parse_num(line, key, value)?,
                "u_bb" => p.u_bb = parse_num(line, key, value)?,
                "u_bf" => p.u_bf = parse_num(line, key, value)?,
                "v_c" => {
                    cfg.v_c_list = value
                        .split(',')
                        .map(|v| parse_num(line, key, v.trim()))
                        .collect::<Result<_, _>>()?;
                }
                "temperature" => p.temperature = parse_num(line, key, value)?,
                "trotter" => p.trotter = parse_num(line, key, value)?,
                "n_max" => p.n_max = parse_num(line, key, value)?,
                "seed" => cfg.plan.seed = parse_num(line, key, value)?,
                "therm_sweeps" => cfg.plan.therm_sweeps = parse_num(line, key, value)?,
                "measure_sweeps" => cfg.plan.measure_sweeps = parse_num(line, key, value)?,
                "measure_interval" => cfg.plan.measure_interval = parse_num(line, key, value)?,
                "bin_size" => cfg.plan.bin_size = parse_num(line, key, value)?,
                "chains" => cfg.plan.chains = parse_num(line, key, value)?,
                "out" => cfg.out = PathBuf::from(value),
                "plateau_density_tol" => cfg.plateau.density_tol = parse_num(line, key, value)?,
                "plateau_kappa_frac" => cfg.plateau.kappa_frac = parse_num(line, key, value)?,
                "plateau_min_sites" => cfg.plateau.min_sites = parse_num(line, key, value)?,
                "checkpoint_every" => cfg.checkpoint_every = parse_num(line, key, value)?,
                _ => unreachable!("key list and match disagree on {key}"),
            }
        }
        cfg.params.v_c = cfg.v_c_list[0];
        Ok(cfg)
    }

    /// Every violated invariant of the model (at each scanned `V_c`), the
    /// plan and the detector thresholds.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        for (i, &v) in self.v_c_list.iter().enumerate() {
            if let Err(e) = self.params_at(v).validate() {
                for viol in e.0 {
                    // model errors repeat across the scan; report them once
                    if i == 0 || viol.field == "V_c" {
                        bad.push(format!("{} ({}): {}", config_key(viol.field), viol.field, viol.message));
                    }
                }
            }
        }
        let mut sorted = self.v_c_list.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            bad.push("v_c: values must be distinct".into());
        }
        if let Err(e) = self.plan.validate() {
            bad.extend(e.split("; ").map(String::from));
        }
        let pl = &self.plateau;
        if !(pl.density_tol > 0.0 && pl.density_tol < 0.5) {
            bad.push(format!("plateau_density_tol must be in (0, 0.5), got {}", pl.density_tol));
        }
        if !(pl.kappa_frac > 0.0 && pl.kappa_frac <= 1.0) {
            bad.push(format!("plateau_kappa_frac must be in (0, 1], got {}", pl.kappa_frac));
        }
        if pl.min_sites < 1 {
            bad.push("plateau_min_sites must be at least 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }

    /// Writes every key; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let vcs: Vec<String> = self.v_c_list.iter().map(|v| format!("{v:?}")).collect();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("sites", p.sites.to_string());
        kv("n_bosons", p.n_bosons.to_string());
        kv("n_fermions", p.n_fermions.to_string());
        kv("t_b", format!("{:?}", p.t_b));
        kv("t_f", format!("{:?}", p.t_f));
        kv("u_bb", format!("{:?}", p.u_bb));
        kv("u_bf", format!("{:?}", p.u_bf));
        kv("v_c", vcs.join(", "));
        kv("temperature", format!("{:?}", p.temperature));
        kv("trotter", p.trotter.to_string());
        kv("n_max", p.n_max.to_string());
        kv("seed", self.plan.seed.to_string());
        kv("therm_sweeps", self.plan.therm_sweeps.to_string());
        kv("measure_sweeps", self.plan.measure_sweeps.to_string());
        kv("measure_interval", self.plan.measure_interval.to_string());
        kv("bin_size", self.plan.bin_size.to_string());
        kv("chains", self.plan.chains.to_string());
        kv("out", self.out.display().to_string());
        kv("plateau_density_tol", format!("{:?}", self.plateau.density_tol));
        kv("plateau_kappa_frac", format!("{:?}", self.plateau.kappa_frac));
        kv("plateau_min_sites", self.plateau.min_sites.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        s
    }
}
