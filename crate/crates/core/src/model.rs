//! Lattice Hamiltonian for a one-dimensional trapped Bose-Fermi mixture.
//!
//! ```text
//! H = -t_b Σ (b†_i b_{i+1} + h.c.) - t_f Σ (f†_i f_{i+1} + h.c.)
//!     + U_bb/2 Σ n_bi (n_bi - 1) + U_bf Σ n_bi n_fi
//!     + V_c Σ (i - L/2)² (n_bi + n_fi)
//! ```
//!
//! Sites are 0-based, `i ∈ {0, …, L-1}`, and the trap is centred on `L/2`
//! (site 40 for an 80-site chain). The chain is open. Fermions are spinless
//! and hardcore; bosons are truncated at `n_max` per site.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The two particle species.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Species {
    Boson,
    Fermion,
}

impl Species {
    pub const ALL: [Species; 2] = [Species::Boson, Species::Fermion];

    pub fn other(self) -> Species {
        match self {
            Species::Boson => Species::Fermion,
            Species::Fermion => Species::Boson,
        }
    }
}

/// Couplings, particle numbers and discretization of one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of lattice sites `L`.
    pub sites: usize,
    pub n_bosons: usize,
    pub n_fermions: usize,
    pub t_b: f64,
    pub t_f: f64,
    pub u_bb: f64,
    pub u_bf: f64,
    /// Trap curvature `V_c`.
    pub v_c: f64,
    /// Temperature in units with `k_B = 1`.
    pub temperature: f64,
    /// Trotter number `L_tau`; the world-line lattice has `2 * L_tau` slices.
    pub trotter: usize,
    /// Maximum boson occupancy per site.
    pub n_max: usize,
}

impl Default for ModelParams {
    /// 35 bosons and 30 fermions on 80 sites at `T = 0.08`, `L_tau = 100`,
    /// `t_b = t_f = 1`, `U_bb = U_bf = 8`. The trap curvature defaults to a
    /// value inside the plateau-forming range.
    fn default() -> Self {
        ModelParams {
            sites: 80,
            n_bosons: 35,
            n_fermions: 30,
            t_b: 1.0,
            t_f: 1.0,
            u_bb: 8.0,
            u_bf: 8.0,
            v_c: 0.004,
            temperature: 0.08,
            trotter: 100,
            n_max: 4,
        }
    }
}

/// One violated parameter invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every invariant violated by a parameter set.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("invalid model parameters: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct Violations(pub Vec<Violation>);

impl ModelParams {
    pub fn beta(&self) -> f64 {
        1.0 / self.temperature
    }

    /// Imaginary-time step `β / L_tau` of one full Trotter step.
    pub fn dtau(&self) -> f64 {
        self.beta() / self.trotter as f64
    }

    /// Number of world-line time slices, two per Trotter step.
    pub fn slices(&self) -> usize {
        2 * self.trotter
    }

    pub fn count(&self, species: Species) -> usize {
        match species {
            Species::Boson => self.n_bosons,
            Species::Fermion => self.n_fermions,
        }
    }

    pub fn hopping(&self, species: Species) -> f64 {
        match species {
            Species::Boson => self.t_b,
            Species::Fermion => self.t_f,
        }
    }

    /// Per-site occupancy bound: `n_max` for bosons, 1 for fermions.
    pub fn max_occupancy(&self, species: Species) -> usize {
        match species {
            Species::Boson => self.n_max,
            Species::Fermion => 1,
        }
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), Violations> {
        let mut v = Vec::new();
        let mut bad = |field: &'static str, message: String| v.push(Violation { field, message });

        if self.sites < 2 {
            bad("L", format!("need at least 2 sites, got {}", self.sites));
        }
        if self.n_fermions > self.sites {
            bad(
                "N_f",
                format!("{} hardcore fermions do not fit on {} sites", self.n_fermions, self.sites),
            );
        }
        if self.n_max < 1 {
            bad("n_max", "boson cutoff must be at least 1".into());
        } else if self.n_bosons > self.n_max * self.sites {
            bad(
                "N_b",
                format!(
                    "{} bosons exceed capacity n_max * L = {}",
                    self.n_bosons,
                    self.n_max * self.sites
                ),
            );
        }
        for (field, value) in [("t_b", self.t_b), ("t_f", self.t_f)] {
            if !(value > 0.0 && value.is_finite()) {
                bad(field, format!("hopping must be positive and finite, got {value}"));
            }
        }
        for (field, value) in [("U_bb", self.u_bb), ("U_bf", self.u_bf), ("V_c", self.v_c)] {
            if !(value >= 0.0 && value.is_finite()) {
                bad(field, format!("must be non-negative and finite, got {value}"));
            }
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            bad("T", format!("temperature must be positive, got {}", self.temperature));
        }
        if self.trotter < 2 || self.trotter % 2 != 0 {
            bad("L_tau", format!("Trotter number must be even and >= 2, got {}", self.trotter));
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(Violations(v))
        }
    }

    /// Per-particle trap energy `V_c (i - L/2)²` at site `i`.
    pub fn trap_potential(&self, i: usize) -> f64 {
        assert!(i < self.sites, "site {i} outside chain of {} sites", self.sites);
        let x = i as f64 - self.sites as f64 / 2.0;
        self.v_c * x * x
    }

    /// On-site interaction plus trap energy of `n_b` bosons and `n_f`
    /// fermions sitting on site `i`.
    pub fn diagonal_energy(&self, n_b: usize, n_f: usize, i: usize) -> f64 {
        debug_assert!(n_b <= self.n_max && n_f <= 1);
        let nb = n_b as f64;
        let nf = n_f as f64;
        0.5 * self.u_bb * nb * (nb - 1.0) + self.u_bf * nb * nf + self.trap_potential(i) * (nb + nf)
    }

    /// Digest of everything that defines the Hamiltonian and the thermal
    /// state (couplings, particle numbers, `T`, `n_max`), excluding the
    /// Trotter number. QMC and exact results for the same physical system
    /// share this hash.
    pub fn physics_hash(&self) -> String {
        let mut h = Sha256::new();
        for n in [self.sites, self.n_bosons, self.n_fermions, self.n_max] {
            h.update((n as u64).to_le_bytes());
        }
        for x in [self.t_b, self.t_f, self.u_bb, self.u_bf, self.v_c, self.temperature] {
            h.update(x.to_bits().to_le_bytes());
        }
        hex16(&h.finalize())
    }

    /// Digest of the full parameter set including the Trotter number.
    pub fn params_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.physics_hash().as_bytes());
        h.update((self.trotter as u64).to_le_bytes());
        hex16(&h.finalize())
    }
}

fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}
