//! The sampler's stationary distribution against exact enumeration of every
//! world-line configuration of tiny systems.

mod support;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::transfer::Transfer;
use wlqmc::sampler::{initialize_config, sweep, AcceptanceStats};
use wlqmc::worldline::config_weight;
use wlqmc::{ModelParams, Species, WeightModel, WorldlineConfig};

type Key = (Vec<u8>, Vec<u8>);

/// Every configuration of non-zero weight with its normalized probability.
fn enumerate(p: &ModelParams, t: &Transfer) -> HashMap<Key, f64> {
    let w = WeightModel::new(p);
    let dim = t.basis.dimension();
    let slices = p.slices();
    let mut weights = HashMap::new();
    let mut digits = vec![0usize; slices];
    loop {
        let mut b = Vec::with_capacity(p.sites * slices);
        let mut f = Vec::with_capacity(p.sites * slices);
        for &d in &digits {
            let (rb, rf) = t.basis.state(d);
            b.extend_from_slice(rb);
            f.extend_from_slice(rf);
        }
        let c = WorldlineConfig::from_occupations(p.sites, slices, b.clone(), f.clone());
        if let Ok(lw) = config_weight(&c, &w) {
            weights.insert((b, f), lw.exp());
        }
        // next slice assignment, odometer style
        let mut k = 0;
        while k < slices {
            digits[k] += 1;
            if digits[k] < dim {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
        if k == slices {
            break;
        }
    }
    let z: f64 = weights.values().sum();
    let log_z = t.log_partition();
    assert!((z.ln() - log_z).abs() < 1e-10, "sum of weights {} vs transfer matrix {}", z.ln(), log_z);
    weights.values_mut().for_each(|x| *x /= z);
    weights
}

/// Pearson statistic of sampled configuration counts against the exact
/// probabilities, lumping configurations expected fewer than 10 times.
/// Returns `(chi2, degrees of freedom)`.
fn chi_square(p: &ModelParams, exact: &HashMap<Key, f64>, sweeps: usize, interval: usize, seed: u64) -> (f64, usize) {
    let w = WeightModel::new(p);
    let mut c = initialize_config(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = AcceptanceStats::default();
    let mut counts: HashMap<Key, u64> = HashMap::new();
    let mut samples = 0u64;
    for n in 0..sweeps {
        let first = if n % 2 == 0 { Species::Boson } else { Species::Fermion };
        sweep(&mut c, &w, &mut rng, first, &mut stats).unwrap();
        if n >= 1000 && n % interval == 0 {
            let key = (c.occupations(Species::Boson).to_vec(), c.occupations(Species::Fermion).to_vec());
            assert!(exact.contains_key(&key), "sampled a zero-weight configuration\n{c}");
            *counts.entry(key).or_default() += 1;
            samples += 1;
        }
    }
    // every configuration is reachable
    if exact.len() <= 16 {
        assert_eq!(counts.len(), exact.len(), "not every configuration was visited");
    }
    let total = samples as f64;
    let (mut chi2, mut bins) = (0.0, 0);
    let (mut rest_expected, mut rest_observed) = (0.0, 0.0);
    for (key, &pr) in exact {
        let e = pr * total;
        let o = counts.get(key).copied().unwrap_or(0) as f64;
        if e >= 10.0 {
            chi2 += (o - e).powi(2) / e;
            bins += 1;
        } else {
            rest_expected += e;
            rest_observed += o;
        }
    }
    if rest_expected > 0.0 {
        chi2 += (rest_observed - rest_expected).powi(2) / rest_expected;
        bins += 1;
    }
    (chi2, bins - 1)
}

fn assert_chi_square((chi2, dof): (f64, usize)) {
    // about five standard deviations of the chi-square distribution
    let bound = dof as f64 + 5.0 * (2.0 * dof as f64).sqrt();
    assert!(chi2 < bound, "chi2 = {chi2:.1} with {dof} degrees of freedom (bound {bound:.1})");
}

#[test]
fn single_boson_on_two_sites() {
    let p = ModelParams {
        sites: 2,
        n_bosons: 1,
        n_fermions: 0,
        t_b: 1.0,
        v_c: 0.3,
        temperature: 0.5,
        trotter: 2,
        n_max: 2,
        ..ModelParams::default()
    };
    let t = Transfer::new(&p);
    let exact = enumerate(&p, &t);
    assert!(exact.len() > 2, "kinks must carry weight");
    assert_chi_square(chi_square(&p, &exact, 1_000_000, 1, 1));
}

#[test]
fn boson_pair_and_fermion_on_three_sites() {
    // exercises exchanges, column swaps, double occupancy and the boson cutoff
    let p = ModelParams {
        sites: 3,
        n_bosons: 2,
        n_fermions: 1,
        t_b: 1.0,
        t_f: 0.7,
        u_bb: 1.5,
        u_bf: 1.0,
        v_c: 0.2,
        temperature: 0.5,
        trotter: 2,
        n_max: 2,
    };
    let t = Transfer::new(&p);
    let exact = enumerate(&p, &t);
    assert_chi_square(chi_square(&p, &exact, 600_000, 3, 2));
}
