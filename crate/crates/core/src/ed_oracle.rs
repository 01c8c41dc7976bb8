//! Exact diagonalization in the canonical sector for small chains.
//!
//! Fermion sign convention: states are site-ordered occupation strings.
//! A nearest-neighbour hop on an open chain never moves a fermion past
//! another one, so every fermion hop element is exactly `-t_f`. This no
//! longer holds once hops beyond nearest neighbours or periodic boundaries
//! are introduced.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::model::ModelParams;
use crate::observables::{Estimate, Profile, SiteEstimates};

/// Largest basis handled by the dense solver.
pub const MAX_DIMENSION: usize = 20_000;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("basis dimension {dimension} exceeds the dense limit {limit}")]
    TooLarge { dimension: usize, limit: usize },
}

/// Canonical Fock basis: every boson string with `N_b` particles (each site
/// at most `n_max`) times every fermion string with `N_f` particles.
#[derive(Clone, Debug)]
pub struct FockBasis {
    sites: usize,
    bosons: Vec<Vec<u8>>,
    fermions: Vec<Vec<u8>>,
    boson_index: HashMap<Vec<u8>, usize>,
    fermion_index: HashMap<Vec<u8>, usize>,
}

fn enumerate(sites: usize, particles: usize, max_occ: usize) -> Vec<Vec<u8>> {
    fn rec(site: usize, left: usize, max_occ: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if site == cur.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let room = (cur.len() - site - 1) * max_occ;
        for n in (0..=left.min(max_occ)).rev() {
            if left - n > room {
                break;
            }
            cur[site] = n as u8;
            rec(site + 1, left - n, max_occ, cur, out);
        }
        cur[site] = 0;
    }
    let mut out = Vec::new();
    rec(0, particles, max_occ, &mut vec![0; sites], &mut out);
    out
}

/// Number of ways to place `particles` on `sites` sites with at most
/// `max_occ` per site, saturating at `usize::MAX`.
fn count_states(sites: usize, particles: usize, max_occ: usize) -> usize {
    let mut ways = vec![0usize; particles + 1];
    ways[0] = 1;
    for _ in 0..sites {
        let mut next = vec![0usize; particles + 1];
        for (n, &w) in ways.iter().enumerate() {
            for k in 0..=max_occ.min(particles - n) {
                next[n + k] = next[n + k].saturating_add(w);
            }
        }
        ways = next;
    }
    ways[particles]
}

/// Canonical Fock-space dimension of `p`, without enumerating it.
pub fn fock_dimension(p: &ModelParams) -> usize {
    count_states(p.sites, p.n_bosons, p.n_max).saturating_mul(count_states(p.sites, p.n_fermions, 1))
}

impl FockBasis {
    /// Enumerates the basis; refuses dimensions above [`MAX_DIMENSION`].
    pub fn new(p: &ModelParams) -> Result<Self, OracleError> {
        let dimension = fock_dimension(p);
        if dimension > MAX_DIMENSION {
            return Err(OracleError::TooLarge { dimension, limit: MAX_DIMENSION });
        }
        let bosons = enumerate(p.sites, p.n_bosons, p.n_max);
        let fermions = enumerate(p.sites, p.n_fermions, 1);
        let boson_index = bosons.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let fermion_index = fermions.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(FockBasis { sites: p.sites, bosons, fermions, boson_index, fermion_index })
    }

    pub fn dimension(&self) -> usize {
        self.bosons.len() * self.fermions.len()
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Occupation strings `(bosons, fermions)` of basis state `idx`.
    pub fn state(&self, idx: usize) -> (&[u8], &[u8]) {
        let nf = self.fermions.len();
        (&self.bosons[idx / nf], &self.fermions[idx % nf])
    }

    pub fn index_of(&self, bosons: &[u8], fermions: &[u8]) -> Option<usize> {
        let b = self.boson_index.get(bosons)?;
        let f = self.fermion_index.get(fermions)?;
        Some(b * self.fermions.len() + f)
    }
}

/// Dense Hamiltonian matrix in the given basis.
pub fn build_hamiltonian(p: &ModelParams, basis: &FockBasis) -> Result<DMatrix<f64>, OracleError> {
    let dim = basis.dimension();
    if dim > MAX_DIMENSION {
        return Err(OracleError::TooLarge { dimension: dim, limit: MAX_DIMENSION });
    }
    let nf_count = basis.fermions.len();
    let mut h = DMatrix::zeros(dim, dim);
    for (bi, b) in basis.bosons.iter().enumerate() {
        for (fi, f) in basis.fermions.iter().enumerate() {
            let row = bi * nf_count + fi;
            h[(row, row)] = (0..p.sites).map(|i| p.diagonal_energy(b[i] as usize, f[i] as usize, i)).sum();

            for i in 0..p.sites - 1 {
                for (src, dst) in [(i, i + 1), (i + 1, i)] {
                    if b[src] > 0 && (b[dst] as usize) < p.n_max {
                        let mut nb = b.clone();
                        nb[src] -= 1;
                        nb[dst] += 1;
                        let col = basis.boson_index[&nb] * nf_count + fi;
                        h[(row, col)] = -p.t_b * (b[src] as f64 * (b[dst] as f64 + 1.0)).sqrt();
                    }
                    if f[src] == 1 && f[dst] == 0 {
                        let mut nf = f.clone();
                        nf[src] = 0;
                        nf[dst] = 1;
                        let col = bi * nf_count + basis.fermion_index[&nf];
                        h[(row, col)] = -p.t_f;
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Exact thermal averages.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactThermal {
    pub profile: Profile,
    /// Mean over sites of the probability that a site holds `n_max` bosons.
    pub saturation_probability: f64,
    pub dimension: usize,
    pub ground_energy: f64,
}

/// `Z⁻¹ Tr[e^{-βH} O]` for every site moment, at temperature `temperature`
/// (which may be infinite).
pub fn thermal_expectations(p: &ModelParams, temperature: f64) -> Result<ExactThermal, OracleError> {
    let basis = FockBasis::new(p)?;
    let h = build_hamiltonian(p, &basis)?;
    let dim = basis.dimension();
    let beta = 1.0 / temperature;
    let eig = SymmetricEigen::new(h);
    let e0 = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let boltzmann: Vec<f64> = eig.eigenvalues.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = boltzmann.iter().sum();

    // probability of each basis state
    let mut prob = vec![0.0; dim];
    for (n, &w) in boltzmann.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(n);
        for (s, pr) in prob.iter_mut().enumerate() {
            *pr += w * v[s] * v[s];
        }
    }
    prob.iter_mut().for_each(|x| *x /= z);

    let l = p.sites;
    let mut m = vec![[0.0f64; 6]; l];
    let mut saturation = 0.0;
    for (s, &pr) in prob.iter().enumerate() {
        let (b, f) = basis.state(s);
        for i in 0..l {
            let nb = b[i] as f64;
            let nf = f[i] as f64;
            let nt = nb + nf;
            let acc = &mut m[i];
            acc[0] += pr * nb;
            acc[1] += pr * nf;
            acc[2] += pr * nb * nb;
            acc[3] += pr * nf * nf;
            acc[4] += pr * nt * nt;
            acc[5] += pr * nb * nf;
            if b[i] as usize == p.n_max {
                saturation += pr;
            }
        }
    }
    let sites = m
        .iter()
        .map(|&[b, f, b2, f2, t2, bf]| {
            let t = b + f;
            SiteEstimates {
                n_b: Estimate::exact(b),
                n_f: Estimate::exact(f),
                n_tot: Estimate::exact(t),
                kappa_b: Estimate::exact(beta * (b2 - b * b)),
                kappa_f: Estimate::exact(beta * (f2 - f * f)),
                kappa_bf: Estimate::exact(beta * (t2 - t * t)),
                cov_bf: Estimate::exact(bf - b * f),
            }
        })
        .collect();
    Ok(ExactThermal {
        profile: Profile { beta, sites },
        saturation_probability: saturation / l as f64,
        dimension: dim,
        ground_energy: e0,
    })
}

/// Gap between the two lowest levels of one boson and one fermion on two
/// sites: the splitting of the exchange-symmetric and antisymmetric
/// combinations of `|b, f⟩` and `|f, b⟩`.
pub fn exchange_splitting(t_b: f64, t_f: f64, u_bf: f64) -> f64 {
    let p = ModelParams {
        sites: 2,
        n_bosons: 1,
        n_fermions: 1,
        t_b,
        t_f,
        u_bb: 0.0,
        u_bf,
        v_c: 0.0,
        temperature: 1.0,
        trotter: 2,
        n_max: 1,
    };
    let basis = FockBasis::new(&p).expect("small basis");
    let h = build_hamiltonian(&p, &basis).expect("four-state problem");
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e[1] - e[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(l: usize, nb: usize, nf: usize) -> ModelParams {
        ModelParams {
            sites: l,
            n_bosons: nb,
            n_fermions: nf,
            t_b: 1.0,
            t_f: 1.0,
            u_bb: 8.0,
            u_bf: 8.0,
            v_c: 0.0,
            temperature: 0.5,
            trotter: 64,
            n_max: 4,
        }
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn basis_dimension_and_maps() {
        let p = params(4, 2, 1);
        let basis = FockBasis::new(&p).unwrap();
        // two bosons on four sites: C(5, 2) = 10; one fermion: 4
        assert_eq!(basis.dimension(), 40);
        for idx in 0..basis.dimension() {
            let (b, f) = basis.state(idx);
            assert_eq!(basis.index_of(b, f), Some(idx));
        }
        // cutoff removes multiply occupied strings
        let p = ModelParams { n_max: 1, ..params(5, 3, 2) };
        assert_eq!(FockBasis::new(&p).unwrap().dimension(), binom(5, 3) * binom(5, 2));
        let p = ModelParams { n_max: 2, ..params(3, 5, 0) };
        // (2,2,1) permutations
        assert_eq!(FockBasis::new(&p).unwrap().dimension(), 3);
    }

    #[test]
    fn single_boson_hop() {
        let p = params(2, 1, 0);
        let basis = FockBasis::new(&p).unwrap();
        let h = build_hamiltonian(&p, &basis).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]));
    }

    #[test]
    fn boson_fermion_pair_matrix() {
        let p = params(2, 1, 1);
        let basis = FockBasis::new(&p).unwrap();
        let h = build_hamiltonian(&p, &basis).unwrap();
        assert_eq!(h.nrows(), 4);
        let idx = |b: [u8; 2], f: [u8; 2]| basis.index_of(&b, &f).unwrap();
        let doubly = [idx([1, 0], [1, 0]), idx([0, 1], [0, 1])];
        let apart = [idx([1, 0], [0, 1]), idx([0, 1], [1, 0])];
        for d in doubly {
            assert_eq!(h[(d, d)], 8.0);
        }
        for a in apart {
            assert_eq!(h[(a, a)], 0.0);
            // each separated state couples to both doubly occupied states
            for d in doubly {
                assert_eq!(h[(a, d)], -1.0);
            }
        }
        assert_eq!(h[(apart[0], apart[1])], 0.0);
        assert_eq!(h[(doubly[0], doubly[1])], 0.0);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn hamiltonian_symmetric_with_trap_and_cutoff() {
        let p = ModelParams { v_c: 0.3, n_max: 2, ..params(4, 3, 2) };
        let basis = FockBasis::new(&p).unwrap();
        let h = build_hamiltonian(&p, &basis).unwrap();
        assert_eq!(h, h.transpose());
        // boson enhancement factor: |2,0,..> -> |1,1,..> has element -sqrt(2)
        let from = basis.index_of(&[2, 0, 1, 0], &[1, 1, 0, 0]).unwrap();
        let to = basis.index_of(&[1, 1, 1, 0], &[1, 1, 0, 0]).unwrap();
        assert!((h[(from, to)] + 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dimension_guard() {
        let p = params(12, 4, 5);
        assert_eq!(fock_dimension(&p), binom(15, 4) * binom(12, 5));
        assert!(matches!(FockBasis::new(&p), Err(OracleError::TooLarge { .. })));
        assert!(thermal_expectations(&p, 1.0).is_err());
        // the default 80-site instance must be refused without enumerating anything
        let big = ModelParams::default();
        assert!(fock_dimension(&big) > MAX_DIMENSION);
        assert!(matches!(thermal_expectations(&big, 0.08), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn infinite_temperature_kills_kappa() {
        let p = ModelParams { v_c: 0.2, ..params(4, 2, 1) };
        let ex = thermal_expectations(&p, f64::INFINITY).unwrap();
        for s in &ex.profile.sites {
            assert_eq!(s.kappa_b.value, 0.0);
            assert_eq!(s.kappa_f.value, 0.0);
            assert_eq!(s.kappa_bf.value, 0.0);
        }
        // β = 0 weights every basis state equally: 10 boson strings, 4 fermion strings
        assert!((ex.profile.sites[0].n_f.value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn two_site_boson_symmetric() {
        for t in [0.1, 1.0, 7.0] {
            let ex = thermal_expectations(&params(2, 1, 0), t).unwrap();
            assert!((ex.profile.sites[0].n_b.value - 0.5).abs() < 1e-12);
            assert!((ex.profile.sites[1].n_b.value - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_rules_and_decomposition() {
        let p = ModelParams { v_c: 0.2, ..params(4, 2, 1) };
        let ex = thermal_expectations(&p, 0.5).unwrap();
        assert!((ex.profile.total(crate::Species::Boson) - 2.0).abs() < 1e-12);
        assert!((ex.profile.total(crate::Species::Fermion) - 1.0).abs() < 1e-12);
        let beta = 2.0;
        for s in &ex.profile.sites {
            let rhs = s.kappa_b.value + s.kappa_f.value + 2.0 * beta * s.cov_bf.value;
            assert!((s.kappa_bf.value - rhs).abs() < 1e-12);
            assert!(s.kappa_b.value >= -1e-12 && s.kappa_f.value >= -1e-12);
        }
        assert!(ex.saturation_probability < 1e-6);
    }

    #[test]
    fn exchange_limits() {
        assert_eq!(exchange_splitting(0.0, 0.0, 8.0), 0.0);
        let a = exchange_splitting(1.0, 0.3, 10.0);
        let b = exchange_splitting(0.3, 1.0, 10.0);
        assert!((a - b).abs() < 1e-12);
        // second order: 4 t_b t_f / U
        let s = exchange_splitting(1.0, 1.0, 1000.0);
        assert!((s - 4e-3).abs() < 1e-6);
    }
}
