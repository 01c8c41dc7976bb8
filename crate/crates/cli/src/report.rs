//! JSON measurement report of one run point.

use serde::{Deserialize, Serialize};

use wlqmc::observables::{detect_plateau, Autocorrelation, Finalized};
use wlqmc::sampler::{AcceptanceStats, RNG_IDENTITY};
use wlqmc::{ModelParams, Plateau, PlateauCriteria, Profile, RunPlan, Species};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumRules {
    pub n_b: f64,
    pub n_f: f64,
    pub expected_n_b: usize,
    pub expected_n_f: usize,
}

impl SumRules {
    /// Largest deviation from the particle numbers.
    pub fn deviation(&self) -> f64 {
        (self.n_b - self.expected_n_b as f64).abs().max((self.n_f - self.expected_n_f as f64).abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub schema_version: u32,
    pub params: ModelParams,
    pub plan: RunPlan,
    pub physics_hash: String,
    pub params_hash: String,
    pub seed: u64,
    pub rng: String,
    pub profile: Profile,
    pub sum_rules: SumRules,
    pub plateau_criteria: PlateauCriteria,
    pub plateaus: Vec<Plateau>,
    pub acceptance: AcceptanceStats,
    /// Integrated autocorrelation times in measurements.
    pub autocorrelation: Autocorrelation,
    pub max_autocorrelation: f64,
    pub bins: usize,
    pub measurements: usize,
    pub saturation_fraction: f64,
    pub saturation_warning: bool,
    pub wall_time_seconds: f64,
}

impl MeasurementReport {
    pub fn new(
        p: &ModelParams,
        plan: &RunPlan,
        fin: Finalized,
        acceptance: AcceptanceStats,
        criteria: &PlateauCriteria,
        wall_time_seconds: f64,
    ) -> Self {
        let sum_rules = SumRules {
            n_b: fin.profile.total(Species::Boson),
            n_f: fin.profile.total(Species::Fermion),
            expected_n_b: p.n_bosons,
            expected_n_f: p.n_fermions,
        };
        MeasurementReport {
            schema_version: REPORT_SCHEMA,
            params: p.clone(),
            plan: plan.clone(),
            physics_hash: p.physics_hash(),
            params_hash: p.params_hash(),
            seed: plan.seed,
            rng: RNG_IDENTITY.to_string(),
            plateaus: detect_plateau(&fin.profile, criteria),
            profile: fin.profile,
            sum_rules,
            plateau_criteria: *criteria,
            acceptance,
            max_autocorrelation: fin.autocorrelation.max(),
            autocorrelation: fin.autocorrelation,
            bins: fin.bins,
            measurements: fin.measurements,
            saturation_fraction: fin.saturation_fraction,
            saturation_warning: fin.saturation_warning,
            wall_time_seconds,
        }
    }

    /// The report with the wall time zeroed, for comparing runs.
    pub fn without_timing(&self) -> MeasurementReport {
        MeasurementReport { wall_time_seconds: 0.0, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Exact-diagonalization counterpart written by the `oracle` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub params: ModelParams,
    pub physics_hash: String,
    pub dimension: usize,
    pub ground_energy: f64,
    pub saturation_probability: f64,
    pub profile: Profile,
    pub plateaus: Vec<Plateau>,
}
