//! Per-site profile CSV, shared by QMC runs and the exact oracle.

use std::fmt::Write as _;
use std::path::Path;

use wlqmc::observables::{Estimate, SiteEstimates};
use wlqmc::Profile;

pub const CSV_VERSION: u32 = 1;

pub const COLUMNS: [&str; 13] = [
    "site",
    "n_b",
    "n_b_err",
    "n_f",
    "n_f_err",
    "n_tot",
    "n_tot_err",
    "kappa_b",
    "kappa_b_err",
    "kappa_f",
    "kappa_f_err",
    "kappa_bf",
    "kappa_bf_err",
];

/// Observables carried by the CSV, in column order.
pub const OBSERVABLES: [&str; 6] = ["n_b", "n_f", "n_tot", "kappa_b", "kappa_f", "kappa_bf"];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{file}: line {line}: {message}")]
    Format { file: String, line: usize, message: String },
    #[error("site {site}: {column} is not finite; refusing to write it")]
    NotFinite { site: usize, column: &'static str },
}

/// A profile read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileTable {
    pub source: String,
    pub physics_hash: String,
    /// Per site, the six observables of [`OBSERVABLES`].
    pub rows: Vec<[Estimate; 6]>,
}

fn row_of(s: &SiteEstimates) -> [Estimate; 6] {
    [s.n_b, s.n_f, s.n_tot, s.kappa_b, s.kappa_f, s.kappa_bf]
}

pub fn render(profile: &Profile, source: &str, physics_hash: &str) -> Result<String, CsvError> {
    let mut out = format!("# wlqmc profile v{CSV_VERSION} source={source} physics_hash={physics_hash}\n");
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    for (i, s) in profile.sites.iter().enumerate() {
        write!(out, "{i}").unwrap();
        for (k, e) in row_of(s).iter().enumerate() {
            for (j, x) in [e.value, e.error].into_iter().enumerate() {
                if !x.is_finite() {
                    return Err(CsvError::NotFinite { site: i, column: COLUMNS[1 + 2 * k + j] });
                }
                write!(out, ",{x:?}").unwrap();
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write(path: &Path, profile: &Profile, source: &str, physics_hash: &str) -> Result<(), CsvError> {
    let text = render(profile, source, physics_hash)?;
    std::fs::write(path, text).map_err(|e| CsvError::Io(path.display().to_string(), e))
}

pub fn parse(file: &str, text: &str) -> Result<ProfileTable, CsvError> {
    let err = |line: usize, message: String| CsvError::Format { file: file.to_string(), line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let mut source = None;
    let mut hash = None;
    let mut version = None;
    for tok in header.strip_prefix("# wlqmc profile").ok_or_else(|| err(1, "missing `# wlqmc profile` header".into()))?.split_whitespace() {
        if let Some(v) = tok.strip_prefix('v') {
            version = v.parse::<u32>().ok();
        } else if let Some(v) = tok.strip_prefix("source=") {
            source = Some(v.to_string());
        } else if let Some(v) = tok.strip_prefix("physics_hash=") {
            hash = Some(v.to_string());
        }
    }
    if version != Some(CSV_VERSION) {
        return Err(err(1, format!("unsupported schema version (expected v{CSV_VERSION})")));
    }
    let physics_hash = hash.ok_or_else(|| err(1, "header lacks physics_hash".into()))?;
    let source = source.unwrap_or_default();
    let (_, cols) = lines.next().ok_or_else(|| err(2, "missing column row".into()))?;
    if cols.split(',').map(str::trim).ne(COLUMNS) {
        return Err(err(2, format!("columns differ from {}", COLUMNS.join(","))));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let n = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != COLUMNS.len() {
            return Err(err(n, format!("expected {} fields, found {}", COLUMNS.len(), fields.len())));
        }
        if fields[0].parse::<usize>().ok() != Some(rows.len()) {
            return Err(err(n, format!("expected site {}, found {:?}", rows.len(), fields[0])));
        }
        let mut vals = [0.0; 12];
        for (j, f) in fields[1..].iter().enumerate() {
            let x: f64 = f.parse().map_err(|_| err(n, format!("{}: not a number: {f:?}", COLUMNS[j + 1])))?;
            if !x.is_finite() {
                return Err(err(n, format!("{}: not finite", COLUMNS[j + 1])));
            }
            vals[j] = x;
        }
        rows.push(std::array::from_fn(|k| Estimate { value: vals[2 * k], error: vals[2 * k + 1] }));
    }
    Ok(ProfileTable { source, physics_hash, rows })
}

pub fn read(path: &Path) -> Result<ProfileTable, CsvError> {
    let text = std::fs::read_to_string(path).map_err(|e| CsvError::Io(path.display().to_string(), e))?;
    parse(&path.display().to_string(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> Profile {
        let e = |v: f64| Estimate { value: v, error: v / 10.0 };
        let site = |x: f64| SiteEstimates {
            n_b: e(x),
            n_f: e(0.5 - x / 3.0),
            n_tot: e(0.5 + x),
            kappa_b: e(0.1 * x),
            kappa_f: e(0.2),
            kappa_bf: e(1e-9 * x),
            cov_bf: e(-0.01),
        };
        Profile { beta: 2.0, sites: vec![site(0.1), site(1.0 / 3.0), site(0.75)] }
    }

    #[test]
    fn round_trip_is_exact() {
        let p = profile();
        let text = render(&p, "qmc", "abc123").unwrap();
        assert!(text.starts_with("# wlqmc profile v1 source=qmc physics_hash=abc123\nsite,n_b,n_b_err,"));
        let t = parse("mem", &text).unwrap();
        assert_eq!(t.physics_hash, "abc123");
        assert_eq!(t.rows.len(), 3);
        for (row, s) in t.rows.iter().zip(&p.sites) {
            assert_eq!(row, &row_of(s));
        }
    }

    #[test]
    fn nan_is_never_written() {
        let mut p = profile();
        p.sites[1].kappa_f.error = f64::NAN;
        assert!(matches!(render(&p, "qmc", "h"), Err(CsvError::NotFinite { site: 1, column: "kappa_f_err" })));
    }

    #[test]
    fn malformed_input_is_located() {
        let text = render(&profile(), "qmc", "h").unwrap();
        let broken = text.replacen("0.75", "x", 1);
        let CsvError::Format { line, .. } = parse("f", &broken).unwrap_err() else { panic!() };
        assert_eq!(line, 5);
        assert!(parse("f", "site,n_b\n").is_err());
    }
}
