//! Exact checkerboard transfer matrix over the Fock basis.
//!
//! Slice `k` carries `D = exp(-Δτ/2 V)`, transition `k -> k+1` carries
//! `exp(-Δτ K_{k mod 2})` where `K_p` holds the hopping on bonds of parity
//! `p`. The world-line weights sum to `Tr[(D E_0 D E_1)^L_tau]`.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use wlqmc::ed_oracle::{build_hamiltonian, FockBasis};
use wlqmc::observables::{Estimate, SiteEstimates};
use wlqmc::{ModelParams, Profile};

fn sym_exp(m: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| (scale * e).exp()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub struct Transfer {
    pub basis: FockBasis,
    /// `D E_0 D E_1`, starting at an even slice.
    even: DMatrix<f64>,
    /// `D E_1 D E_0`, starting at an odd slice.
    odd: DMatrix<f64>,
    trotter: usize,
}

/// `m^n / c` and `ln c`, with `c` chosen to keep entries near one.
fn power(m: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, f64) {
    let dim = m.nrows();
    let mut result = DMatrix::identity(dim, dim);
    let mut log_scale = 0.0;
    let mut base = m.clone();
    let mut base_log = 0.0;
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
            log_scale += base_log;
            let s = result.amax();
            result /= s;
            log_scale += s.ln();
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
            base_log *= 2.0;
            let s = base.amax();
            base /= s;
            base_log += s.ln();
        }
    }
    (result, log_scale)
}

impl Transfer {
    pub fn new(p: &ModelParams) -> Self {
        let basis = FockBasis::new(p).expect("small basis");
        let h = build_hamiltonian(p, &basis).unwrap();
        let dim = basis.dimension();
        let mut k = [DMatrix::zeros(dim, dim), DMatrix::zeros(dim, dim)];
        for r in 0..dim {
            for c in 0..dim {
                if r == c || h[(r, c)] == 0.0 {
                    continue;
                }
                let (b1, f1) = basis.state(r);
                let (b2, f2) = basis.state(c);
                let first = (0..p.sites).find(|&i| b1[i] != b2[i] || f1[i] != f2[i]).unwrap();
                k[first % 2][(r, c)] = h[(r, c)];
            }
        }
        let dtau = p.dtau();
        let d = DMatrix::from_diagonal(&h.diagonal().map(|v| (-0.5 * dtau * v).exp()));
        let e0 = sym_exp(&k[0], -dtau);
        let e1 = sym_exp(&k[1], -dtau);
        Transfer { even: &d * &e0 * &d * &e1, odd: &d * &e1 * &d * &e0, basis, trotter: p.trotter }
    }

    /// `ln Tr[(D E_0 D E_1)^L_tau]`.
    pub fn log_partition(&self) -> f64 {
        let (m, s) = power(&self.even, self.trotter);
        m.trace().ln() + s
    }

    /// Probability of each basis state on a slice, averaged over slices.
    pub fn slice_probabilities(&self) -> Vec<f64> {
        let (a, _) = power(&self.even, self.trotter);
        let (b, _) = power(&self.odd, self.trotter);
        let (ta, tb) = (a.trace(), b.trace());
        (0..self.basis.dimension()).map(|s| 0.5 * (a[(s, s)] / ta + b[(s, s)] / tb)).collect()
    }

    /// Equal-time profile of the discretized model, in the estimator
    /// conventions of the sampler.
    pub fn profile(&self, p: &ModelParams) -> Profile {
        let prob = self.slice_probabilities();
        let beta = p.beta();
        let sites = (0..p.sites)
            .map(|i| {
                let mut m = [0.0f64; 6];
                for (s, &pr) in prob.iter().enumerate() {
                    let (b, f) = self.basis.state(s);
                    let (nb, nf) = (b[i] as f64, f[i] as f64);
                    let nt = nb + nf;
                    for (acc, x) in m.iter_mut().zip([nb, nf, nb * nb, nf * nf, nt * nt, nb * nf]) {
                        *acc += pr * x;
                    }
                }
                let [b, f, b2, f2, t2, bf] = m;
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
        Profile { beta, sites }
    }
}
