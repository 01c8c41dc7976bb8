//! Density profiles and local compressibilities.
//!
//! All moments are equal-time: `n` and `n²` are accumulated on every slice
//! and averaged over slices and measurements, so
//! `κ_i = β (⟨n_i²⟩ - ⟨n_i⟩²)` is the on-site fluctuation at fixed
//! imaginary time. Sums are kept as integers, which makes the canonical sum
//! rules exact up to the final division and keeps merges order-independent.

use serde::{Deserialize, Serialize};

use crate::model::Species;
use crate::worldline::WorldlineConfig;

/// Saturation fraction above which the boson cutoff is considered too low.
pub const SATURATION_WARNING: f64 = 1e-4;

/// Per-site integer moment sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSums {
    pub nb: u64,
    pub nf: u64,
    pub nb2: u64,
    pub nf2: u64,
    pub nt2: u64,
    pub nbnf: u64,
}

impl SiteSums {
    fn add(&mut self, o: &SiteSums) {
        self.nb += o.nb;
        self.nf += o.nf;
        self.nb2 += o.nb2;
        self.nf2 += o.nf2;
        self.nt2 += o.nt2;
        self.nbnf += o.nbnf;
    }

    fn sub(&self, o: &SiteSums) -> SiteSums {
        SiteSums {
            nb: self.nb - o.nb,
            nf: self.nf - o.nf,
            nb2: self.nb2 - o.nb2,
            nf2: self.nf2 - o.nf2,
            nt2: self.nt2 - o.nt2,
            nbnf: self.nbnf - o.nbnf,
        }
    }
}

/// Sums of squared per-measurement slice totals, used for the
/// single-measurement variance in the autocorrelation estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquareSums {
    pub nb: u64,
    pub nf: u64,
    pub nt: u64,
}

impl SquareSums {
    fn add(&mut self, o: &SquareSums) {
        self.nb += o.nb;
        self.nf += o.nf;
        self.nt += o.nt;
    }
}

/// Binned running sums of every moment entering the compressibilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableAccumulator {
    sites: usize,
    slices: usize,
    n_max: usize,
    beta: f64,
    bin_size: usize,
    current: Vec<SiteSums>,
    current_squares: Vec<SquareSums>,
    current_count: usize,
    bins: Vec<Vec<SiteSums>>,
    squares: Vec<SquareSums>,
    saturated: u64,
    cells: u64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ObservableError {
    #[error("insufficient data: {bins} completed bins, need at least 2")]
    InsufficientData { bins: usize },
    #[error("cannot merge accumulators with different shapes")]
    Incompatible,
}

impl ObservableAccumulator {
    pub fn new(sites: usize, slices: usize, n_max: usize, beta: f64, bin_size: usize) -> Self {
        assert!(bin_size >= 1);
        ObservableAccumulator {
            sites,
            slices,
            n_max,
            beta,
            bin_size,
            current: vec![SiteSums::default(); sites],
            current_squares: vec![SquareSums::default(); sites],
            current_count: 0,
            bins: Vec::new(),
            squares: vec![SquareSums::default(); sites],
            saturated: 0,
            cells: 0,
        }
    }

    pub fn for_params(p: &crate::model::ModelParams, bin_size: usize) -> Self {
        Self::new(p.sites, p.slices(), p.n_max, p.beta(), bin_size)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn bin_size(&self) -> usize {
        self.bin_size
    }

    /// Measurements contained in completed bins.
    pub fn measurements(&self) -> usize {
        self.bins.len() * self.bin_size
    }

    /// Integer moment sums of one completed bin.
    pub fn bin(&self, b: usize) -> &[SiteSums] {
        &self.bins[b]
    }

    /// Adds one configuration to the current bin.
    pub fn measure(&mut self, c: &WorldlineConfig) {
        assert_eq!(c.sites(), self.sites);
        assert_eq!(c.slices(), self.slices);
        let nmax = self.n_max as u64;
        let mut totals = vec![(0u64, 0u64); self.sites];
        for k in 0..self.slices {
            let rb = c.row(Species::Boson, k);
            let rf = c.row(Species::Fermion, k);
            for i in 0..self.sites {
                let b = rb[i] as u64;
                let f = rf[i] as u64;
                let t = b + f;
                let s = &mut self.current[i];
                s.nb += b;
                s.nf += f;
                s.nb2 += b * b;
                s.nf2 += f * f;
                s.nt2 += t * t;
                s.nbnf += b * f;
                totals[i].0 += b;
                totals[i].1 += f;
                self.saturated += u64::from(b == nmax);
            }
        }
        self.cells += (self.slices * self.sites) as u64;
        for (sq, &(b, f)) in self.current_squares.iter_mut().zip(&totals) {
            sq.nb += b * b;
            sq.nf += f * f;
            sq.nt += (b + f) * (b + f);
        }
        self.current_count += 1;
        if self.current_count == self.bin_size {
            let done = std::mem::replace(&mut self.current, vec![SiteSums::default(); self.sites]);
            self.bins.push(done);
            for (acc, cur) in self.squares.iter_mut().zip(&self.current_squares) {
                acc.add(cur);
            }
            self.current_squares.iter_mut().for_each(|s| *s = SquareSums::default());
            self.current_count = 0;
        }
    }

    /// Appends the completed bins of `other`. The partial bin of `other` is
    /// dropped.
    pub fn merge(&mut self, other: &ObservableAccumulator) -> Result<(), ObservableError> {
        if self.sites != other.sites
            || self.slices != other.slices
            || self.bin_size != other.bin_size
            || self.n_max != other.n_max
            || self.beta.to_bits() != other.beta.to_bits()
        {
            return Err(ObservableError::Incompatible);
        }
        self.bins.extend(other.bins.iter().cloned());
        for (a, b) in self.squares.iter_mut().zip(&other.squares) {
            a.add(b);
        }
        self.saturated += other.saturated;
        self.cells += other.cells;
        Ok(())
    }

    /// Fraction of sampled (slice, site) cells holding `n_max` bosons.
    pub fn cutoff_monitor(&self) -> f64 {
        if self.cells == 0 {
            0.0
        } else {
            self.saturated as f64 / self.cells as f64
        }
    }
}

/// Fraction of sampled cells at the boson cutoff.
pub fn cutoff_monitor(acc: &ObservableAccumulator) -> f64 {
    acc.cutoff_monitor()
}

/// A value with its one-sigma error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, error: 0.0 }
    }
}

/// Estimates at one site.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SiteEstimates {
    pub n_b: Estimate,
    pub n_f: Estimate,
    pub n_tot: Estimate,
    pub kappa_b: Estimate,
    pub kappa_f: Estimate,
    pub kappa_bf: Estimate,
    /// `⟨n_b n_f⟩ - ⟨n_b⟩⟨n_f⟩`.
    pub cov_bf: Estimate,
}

/// Per-site densities and compressibilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub beta: f64,
    pub sites: Vec<SiteEstimates>,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn total(&self, s: Species) -> f64 {
        self.sites
            .iter()
            .map(|e| match s {
                Species::Boson => e.n_b.value,
                Species::Fermion => e.n_f.value,
            })
            .sum()
    }
}

/// Moments `⟨n_b⟩, ⟨n_f⟩, ⟨n_b²⟩, ⟨n_f²⟩, ⟨n_t²⟩, ⟨n_b n_f⟩` to derived
/// site quantities. `n_tot` is the sum of the two densities, so
/// `n_tot = n_b + n_f` holds exactly.
fn derive(beta: f64, m: &[f64; 6]) -> [f64; 7] {
    let [b, f, b2, f2, t2, bf] = *m;
    let t = b + f;
    [b, f, t, beta * (b2 - b * b), beta * (f2 - f * f), beta * (t2 - t * t), bf - b * f]
}

fn moments(s: &SiteSums, samples: f64) -> [f64; 6] {
    [
        s.nb as f64 / samples,
        s.nf as f64 / samples,
        s.nb2 as f64 / samples,
        s.nf2 as f64 / samples,
        s.nt2 as f64 / samples,
        s.nbnf as f64 / samples,
    ]
}

/// Integrated autocorrelation times (in measurements) from the binning
/// estimate `τ = b σ²_bin / (2 σ²_single)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub n_b: Vec<f64>,
    pub n_f: Vec<f64>,
    pub n_tot: Vec<f64>,
}

impl Autocorrelation {
    pub fn max(&self) -> f64 {
        self.n_b.iter().chain(&self.n_f).chain(&self.n_tot).copied().fold(0.0, f64::max)
    }
}

/// Output of [`finalize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finalized {
    pub profile: Profile,
    pub autocorrelation: Autocorrelation,
    pub bins: usize,
    pub measurements: usize,
    pub saturation_fraction: f64,
    pub saturation_warning: bool,
}

/// Jackknife estimates over completed bins.
pub fn finalize(acc: &ObservableAccumulator) -> Result<Finalized, ObservableError> {
    let nbins = acc.bins.len();
    if nbins < 2 {
        return Err(ObservableError::InsufficientData { bins: nbins });
    }
    let per_bin = (acc.bin_size * acc.slices) as f64;
    let total_samples = per_bin * nbins as f64;
    let jk_samples = per_bin * (nbins - 1) as f64;
    let beta = acc.beta;

    let mut sites = Vec::with_capacity(acc.sites);
    let mut autocorrelation = Autocorrelation::default();
    for i in 0..acc.sites {
        let mut total = SiteSums::default();
        for bin in &acc.bins {
            total.add(&bin[i]);
        }
        let full = derive(beta, &moments(&total, total_samples));
        let leave_out: Vec<[f64; 7]> = acc
            .bins
            .iter()
            .map(|bin| derive(beta, &moments(&total.sub(&bin[i]), jk_samples)))
            .collect();
        let mut err = [0.0; 7];
        for (q, e) in err.iter_mut().enumerate() {
            let mean = leave_out.iter().map(|x| x[q]).sum::<f64>() / nbins as f64;
            let ss: f64 = leave_out.iter().map(|x| (x[q] - mean).powi(2)).sum();
            *e = (ss * (nbins - 1) as f64 / nbins as f64).sqrt();
        }
        let est = |q: usize| Estimate { value: full[q], error: err[q] };
        sites.push(SiteEstimates {
            n_b: est(0),
            n_f: est(1),
            n_tot: est(2),
            kappa_b: est(3),
            kappa_f: est(4),
            kappa_bf: est(5),
            cov_bf: est(6),
        });

        // binning autocorrelation estimate on slice-averaged densities
        let m = acc.measurements() as f64;
        let s = acc.slices as f64;
        let sq = &acc.squares[i];
        let tau = |sum: u64, sum_sq: u64, bin_value: &dyn Fn(&SiteSums) -> u64| -> f64 {
            let mean = sum as f64 / (m * s);
            let var_single = sum_sq as f64 / (m * s * s) - mean * mean;
            let bin_means: Vec<f64> = acc.bins.iter().map(|b| bin_value(&b[i]) as f64 / per_bin).collect();
            let bm = bin_means.iter().sum::<f64>() / nbins as f64;
            let var_bins = bin_means.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (nbins - 1) as f64;
            if var_single <= 1e-14 {
                0.0
            } else {
                acc.bin_size as f64 * var_bins / (2.0 * var_single)
            }
        };
        autocorrelation.n_b.push(tau(total.nb, sq.nb, &|b| b.nb));
        autocorrelation.n_f.push(tau(total.nf, sq.nf, &|b| b.nf));
        autocorrelation.n_tot.push(tau(total.nb + total.nf, sq.nt, &|b| b.nb + b.nf));
    }

    let saturation_fraction = acc.cutoff_monitor();
    Ok(Finalized {
        profile: Profile { beta, sites },
        autocorrelation,
        bins: nbins,
        measurements: acc.measurements(),
        saturation_fraction,
        saturation_warning: saturation_fraction > SATURATION_WARNING,
    })
}

/// Thresholds of the plateau detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauCriteria {
    /// Allowed deviation of `n_tot` from the plateau integer.
    pub density_tol: f64,
    /// Maximum `κ_bf` inside, as a fraction of the profile maximum.
    pub kappa_frac: f64,
    pub min_sites: usize,
}

impl Default for PlateauCriteria {
    fn default() -> Self {
        PlateauCriteria { density_tol: 0.05, kappa_frac: 0.2, min_sites: 5 }
    }
}

/// A maximal run of sites pinned to the same integer total density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub filling: u32,
    /// First and last site, inclusive.
    pub start: usize,
    pub end: usize,
    pub mean_n_b: f64,
    pub mean_n_f: f64,
    /// Neither species is commensurate on its own.
    pub mixed_mott: bool,
}

impl Plateau {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

pub fn detect_plateau(profile: &Profile, criteria: &PlateauCriteria) -> Vec<Plateau> {
    let kappa_max = profile.sites.iter().map(|s| s.kappa_bf.value).fold(0.0, f64::max);
    let kappa_cut = criteria.kappa_frac * kappa_max;
    let filling = |s: &SiteEstimates| -> Option<u32> {
        let m = s.n_tot.value.round();
        (m >= 1.0 && (s.n_tot.value - m).abs() <= criteria.density_tol && s.kappa_bf.value <= kappa_cut)
            .then_some(m as u32)
    };

    let mut out = Vec::new();
    let n = profile.sites.len();
    let mut i = 0;
    while i < n {
        let Some(m) = filling(&profile.sites[i]) else {
            i += 1;
            continue;
        };
        let start = i;
        while i + 1 < n && filling(&profile.sites[i + 1]) == Some(m) {
            i += 1;
        }
        let end = i;
        i += 1;
        if end - start + 1 < criteria.min_sites.max(1) {
            continue;
        }
        let len = (end - start + 1) as f64;
        let mean_n_b = profile.sites[start..=end].iter().map(|s| s.n_b.value).sum::<f64>() / len;
        let mean_n_f = profile.sites[start..=end].iter().map(|s| s.n_f.value).sum::<f64>() / len;
        let lo = criteria.density_tol;
        let hi = m as f64 - criteria.density_tol;
        let mixed_mott = (lo..=hi).contains(&mean_n_b) && (lo..=hi).contains(&mean_n_f);
        out.push(Plateau { filling: m, start, end, mean_n_b, mean_n_f, mixed_mott });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frozen(slices: usize) -> WorldlineConfig {
        WorldlineConfig::uniform(slices, &[1, 0, 2], &[0, 1, 1])
    }

    #[test]
    fn frozen_site_moments() {
        let mut acc = ObservableAccumulator::new(3, 4, 2, 2.0, 2);
        for _ in 0..6 {
            acc.measure(&frozen(4));
        }
        assert_eq!(acc.bin_count(), 3);
        let f = finalize(&acc).unwrap();
        let s0 = &f.profile.sites[0];
        assert_eq!(s0.n_b.value, 1.0);
        assert_eq!(s0.kappa_b.value, 0.0);
        assert_eq!(s0.kappa_bf.value, 0.0);
        assert_eq!(s0.n_b.error, 0.0);
        assert_eq!(f.profile.sites[2].n_tot.value, 3.0);
        // one of twelve cells per slice holds n_max = 2
        assert!((f.saturation_fraction - 1.0 / 3.0).abs() < 1e-15);
        assert!(f.saturation_warning);
        assert!(f.autocorrelation.max() == 0.0);
    }

    #[test]
    fn empty_lattice_moments_vanish() {
        let mut acc = ObservableAccumulator::new(3, 2, 4, 1.0, 1);
        let c = WorldlineConfig::uniform(2, &[0; 3], &[0; 3]);
        acc.measure(&c);
        acc.measure(&c);
        let f = finalize(&acc).unwrap();
        for s in &f.profile.sites {
            assert_eq!(*s, SiteEstimates::default());
        }
        assert_eq!(cutoff_monitor(&acc), 0.0);
    }

    #[test]
    fn insufficient_bins() {
        let mut acc = ObservableAccumulator::new(3, 4, 2, 2.0, 2);
        for _ in 0..3 {
            acc.measure(&frozen(4));
        }
        assert_eq!(finalize(&acc), Err(ObservableError::InsufficientData { bins: 1 }));
    }

    #[test]
    fn fluctuating_site_decomposition() {
        // site 0 alternates boson / fermion between slices
        let mut acc = ObservableAccumulator::new(2, 2, 4, 12.5, 1);
        let mut c = WorldlineConfig::uniform(2, &[1, 0], &[0, 1]);
        acc.measure(&c);
        c.set(Species::Boson, 1, 0, 0);
        c.set(Species::Fermion, 1, 0, 1);
        c.set(Species::Fermion, 1, 1, 0);
        c.set(Species::Boson, 1, 1, 1);
        acc.measure(&c);
        acc.measure(&c);
        let f = finalize(&acc).unwrap();
        let s = &f.profile.sites[0];
        assert!((s.n_b.value - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.kappa_b.value - 12.5 * (2.0 / 3.0 - 4.0 / 9.0)).abs() < 1e-12);
        // total density is pinned at 1: no total fluctuation
        assert!(s.kappa_bf.value.abs() < 1e-12);
        let identity = s.kappa_b.value + s.kappa_f.value + 2.0 * 12.5 * s.cov_bf.value;
        assert!((s.kappa_bf.value - identity).abs() < 1e-12);
        assert!(s.cov_bf.value < 0.0);
    }

    fn synthetic(n_tot: impl Fn(usize) -> f64, kappa: impl Fn(usize) -> f64) -> Profile {
        Profile {
            beta: 1.0,
            sites: (0..80)
                .map(|i| {
                    let t = n_tot(i);
                    SiteEstimates {
                        n_b: Estimate::exact(t * 0.5),
                        n_f: Estimate::exact(t * 0.5),
                        n_tot: Estimate::exact(t),
                        kappa_bf: Estimate::exact(kappa(i)),
                        ..Default::default()
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn plateau_on_constructed_profile() {
        let p = synthetic(
            |i| if (20..=60).contains(&i) { 1.0 } else { 0.3 },
            |i| if (20..=60).contains(&i) { 0.0 } else { 1.0 },
        );
        let found = detect_plateau(&p, &PlateauCriteria::default());
        assert_eq!(found.len(), 1);
        assert_eq!((found[0].filling, found[0].start, found[0].end), (1, 20, 60));
        assert!(found[0].mixed_mott);
        assert_eq!(found[0].len(), 41);
    }

    #[test]
    fn no_plateau_without_commensurate_region() {
        let p = synthetic(|i| 0.3 + 0.01 * (i as f64 * 1.7).sin() + i as f64 / 200.0, |_| 1.0);
        assert!(detect_plateau(&p, &PlateauCriteria::default()).is_empty());
    }

    #[test]
    fn plateau_rules() {
        // too short, then a compressible stretch, then a filling-2 run
        let p = synthetic(
            |i| match i {
                10..=13 => 1.0,
                20..=30 => 1.0,
                40..=49 => 2.02,
                _ => 0.4,
            },
            |i| if (20..=30).contains(&i) { 0.5 } else { 0.05 },
        );
        let found = detect_plateau(&p, &PlateauCriteria::default());
        assert_eq!(found.len(), 1);
        assert_eq!((found[0].filling, found[0].start, found[0].end), (2, 40, 49));
        let loose = PlateauCriteria { kappa_frac: 0.9, min_sites: 4, ..Default::default() };
        assert_eq!(detect_plateau(&p, &loose).len(), 2);
    }

    #[test]
    fn merge_appends_bins() {
        let mut a = ObservableAccumulator::new(3, 4, 2, 2.0, 1);
        let mut b = a.clone();
        a.measure(&frozen(4));
        b.measure(&frozen(4));
        b.measure(&frozen(4));
        a.merge(&b).unwrap();
        assert_eq!(a.bin_count(), 3);
        let other = ObservableAccumulator::new(3, 4, 2, 2.0, 2);
        assert_eq!(a.merge(&other), Err(ObservableError::Incompatible));
    }
}
