//! Site-by-site z-scores between two profiles.

use std::fmt::Write as _;

use crate::csv::{ProfileTable, OBSERVABLES};

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("profiles describe different models (physics_hash {0} vs {1})")]
    PhysicsMismatch(String, String),
    #[error("profiles have {0} and {1} sites")]
    SiteMismatch(usize, usize),
}

/// One site and observable.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub site: usize,
    pub observable: &'static str,
    pub a: f64,
    pub b: f64,
    /// `|a - b| / sqrt(err_a² + err_b²)`; infinite when both are exact and
    /// differ beyond rounding.
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub threshold: f64,
    pub entries: Vec<Entry>,
}

impl Comparison {
    pub fn max_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(|e| e.z > self.threshold)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    /// Largest `|a - b|` of one observable.
    pub fn max_abs_diff(&self, observable: &str) -> f64 {
        self.entries.iter().filter(|e| e.observable == observable).map(|e| (e.a - e.b).abs()).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let n = self.entries.len();
        let bad: Vec<&Entry> = self.failures().collect();
        writeln!(s, "compared {n} values, max |z| = {:.3}, threshold {}", self.max_z(), self.threshold).unwrap();
        for e in &bad {
            writeln!(s, "  site {:>3} {:<8} {:.6} vs {:.6}  z = {:.2}", e.site, e.observable, e.a, e.b, e.z).unwrap();
        }
        // with n independent comparisons a few |z| near the threshold are expected
        let expected = n as f64 * erfc_two_sided(self.threshold);
        writeln!(s, "note: {n} comparisons; about {expected:.2} would exceed |z| > {} by chance", self.threshold).unwrap();
        writeln!(s, "{}", if bad.is_empty() { "PASS" } else { "FAIL" }).unwrap();
        s
    }
}

/// Two-sided normal tail probability `P(|Z| > z)`.
fn erfc_two_sided(z: f64) -> f64 {
    statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

pub fn compare(a: &ProfileTable, b: &ProfileTable, threshold: f64) -> Result<Comparison, CompareError> {
    if a.physics_hash != b.physics_hash {
        return Err(CompareError::PhysicsMismatch(a.physics_hash.clone(), b.physics_hash.clone()));
    }
    if a.rows.len() != b.rows.len() {
        return Err(CompareError::SiteMismatch(a.rows.len(), b.rows.len()));
    }
    let mut entries = Vec::new();
    for (site, (ra, rb)) in a.rows.iter().zip(&b.rows).enumerate() {
        for (k, observable) in OBSERVABLES.iter().enumerate() {
            let (ea, eb) = (ra[k], rb[k]);
            let diff = (ea.value - eb.value).abs();
            let sigma = ea.error.hypot(eb.error);
            let z = if sigma > 0.0 {
                diff / sigma
            } else if diff <= 1e-12 * (1.0 + ea.value.abs()) {
                0.0
            } else {
                f64::INFINITY
            };
            entries.push(Entry { site, observable, a: ea.value, b: eb.value, z });
        }
    }
    Ok(Comparison { threshold, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use wlqmc::observables::Estimate;

    fn table(hash: &str, rows: Vec<[Estimate; 6]>) -> ProfileTable {
        ProfileTable { source: "t".into(), physics_hash: hash.into(), rows }
    }

    fn row(v: f64, err: f64) -> [Estimate; 6] {
        [Estimate { value: v, error: err }; 6]
    }

    #[test]
    fn self_comparison_passes_with_zero_z() {
        let t = table("h", vec![row(0.5, 0.0), row(0.25, 0.0)]);
        let c = compare(&t, &t, 3.0).unwrap();
        assert_eq!(c.max_z(), 0.0);
        assert!(c.passed());
        assert_eq!(c.entries.len(), 12);
    }

    #[test]
    fn z_uses_combined_errors() {
        let a = table("h", vec![row(1.0, 0.03)]);
        let b = table("h", vec![row(1.1, 0.04)]);
        let c = compare(&a, &b, 3.0).unwrap();
        assert!((c.max_z() - 2.0).abs() < 1e-12);
        assert!(c.passed());
        assert!(!compare(&a, &b, 1.5).unwrap().passed());
        let exact = table("h", vec![row(1.1, 0.0)]);
        assert!(compare(&exact, &table("h", vec![row(1.0, 0.0)]), 3.0).unwrap().max_z().is_infinite());
    }

    #[test]
    fn mismatches_are_errors() {
        let a = table("h", vec![row(1.0, 0.1)]);
        assert!(matches!(compare(&a, &table("g", vec![row(1.0, 0.1)]), 3.0), Err(CompareError::PhysicsMismatch(..))));
        assert!(matches!(compare(&a, &table("h", vec![]), 3.0), Err(CompareError::SiteMismatch(1, 0))));
    }

    #[test]
    fn tail_probability() {
        assert!((erfc_two_sided(3.0) - 0.0026998).abs() < 1e-7);
        assert!((erfc_two_sided(1.0) - 0.3173105).abs() < 1e-7);
    }
}
