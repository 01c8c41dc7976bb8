//! Checkerboard world-line configurations and their weights.
//!
//! The partition function is discretized as
//! `Tr Π_{L_tau} [e^{-Δτ V/2} e^{-Δτ K_even} e^{-Δτ V/2} e^{-Δτ K_odd}]`,
//! giving `2 * L_tau` occupation slices. Transition `t` (slice `t` to slice
//! `t + 1`, periodic) carries the two-site kinetic propagators of all bonds
//! `(i, i+1)` with `i ≡ t (mod 2)`; every slice carries the diagonal factor
//! `exp(-(Δτ/2) Σ_i E_i)`. A site that belongs to no active bond on a
//! transition (chain ends) must keep its occupancy across it.
//!
//! Nearest-neighbour fermion world lines on an open chain cannot cross, so
//! every configuration weight is non-negative.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{ModelParams, Species};

/// Kinetic two-site propagators for one species.
///
/// For every conserved bond total `m`, the block of `exp(Δτ t h)` where `h`
/// is the two-site hop operator (`b†_i b_j + b†_j b_i`) restricted to
/// states `(a, m - a)` with both occupancies at most `max_occ`.
#[derive(Clone, Debug)]
pub struct SpeciesPropagator {
    max_occ: usize,
    dim: usize,
    /// `weights[(a * dim + b) * dim + a2]` is the weight of
    /// `(a, b) -> (a2, a + b - a2)`.
    weights: Vec<f64>,
}

impl SpeciesPropagator {
    fn build(max_occ: usize, amplitude: f64) -> Self {
        let dim = max_occ + 1;
        let mut weights = vec![0.0; dim * dim * dim];
        for m in 0..=2 * max_occ {
            let states = sector_states(max_occ, m);
            let block = expm_nonnegative(&hop_block(&states), amplitude);
            let n = states.len();
            for (x, &(a, b)) in states.iter().enumerate() {
                for (y, &(a2, _)) in states.iter().enumerate() {
                    weights[(a * dim + b) * dim + a2] = block[x * n + y];
                }
            }
        }
        SpeciesPropagator { max_occ, dim, weights }
    }

    pub fn max_occupancy(&self) -> usize {
        self.max_occ
    }

    /// Weight of `(a, b) -> (a2, b2)`; zero when the bond total changes or
    /// any occupancy is out of range.
    #[inline]
    pub fn weight(&self, a: usize, b: usize, a2: usize, b2: usize) -> f64 {
        if a + b != a2 + b2 || a > self.max_occ || b > self.max_occ || a2 > self.max_occ || b2 > self.max_occ {
            return 0.0;
        }
        self.weights[(a * self.dim + b) * self.dim + a2]
    }

    /// The sector-`m` block as `(states, row-major matrix)`.
    pub fn sector(&self, m: usize) -> (Vec<(usize, usize)>, Vec<f64>) {
        let states = sector_states(self.max_occ, m);
        let mut out = Vec::with_capacity(states.len() * states.len());
        for &(a, b) in &states {
            for &(a2, b2) in &states {
                out.push(self.weight(a, b, a2, b2));
            }
        }
        (states, out)
    }
}

/// States `(a, m - a)` of a bond with total `m`, ordered by decreasing `a`.
pub fn sector_states(max_occ: usize, m: usize) -> Vec<(usize, usize)> {
    let lo = m.saturating_sub(max_occ);
    let hi = m.min(max_occ);
    (lo..=hi).rev().map(|a| (a, m - a)).collect()
}

/// Row-major hop matrix `b†_i b_j + h.c.` on the given sector states.
fn hop_block(states: &[(usize, usize)]) -> Vec<f64> {
    let n = states.len();
    let mut h = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            let (a, b) = states[x];
            let (a2, _) = states[y];
            // moving one particle from the right site to the left site
            if a2 == a + 1 {
                h[x * n + y] = ((a + 1) as f64 * b as f64).sqrt();
            } else if a == a2 + 1 {
                h[x * n + y] = (a as f64 * (b + 1) as f64).sqrt();
            }
        }
    }
    h
}

/// `exp(s * h)` for an entrywise non-negative `h` and `s >= 0` by scaling
/// and squaring a Taylor series. Every term is non-negative, so the result
/// is too, without cancellation in small entries.
fn expm_nonnegative(h: &[f64], s: f64) -> Vec<f64> {
    let n = (h.len() as f64).sqrt() as usize;
    let norm = (0..n)
        .map(|r| (0..n).map(|c| h[r * n + c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        * s;
    let mut squarings = 0;
    while norm / f64::from(1u32 << squarings.min(30)) > 0.25 {
        squarings += 1;
    }
    let scale = s / f64::from(1u32 << squarings);
    let a: Vec<f64> = h.iter().map(|x| x * scale).collect();

    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..64 {
        term = matmul(&term, &a, n);
        let inv = 1.0 / k as f64;
        term.iter_mut().for_each(|x| *x *= inv);
        let mut largest = 0.0f64;
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
            largest = largest.max(*t);
        }
        if largest < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, n);
    }
    result
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Kinetic propagators for both species at one `Δτ`.
#[derive(Clone, Debug)]
pub struct PropagatorTable {
    pub dtau: f64,
    pub t_b: f64,
    pub t_f: f64,
    boson: SpeciesPropagator,
    fermion: SpeciesPropagator,
}

impl PropagatorTable {
    pub fn species(&self, s: Species) -> &SpeciesPropagator {
        match s {
            Species::Boson => &self.boson,
            Species::Fermion => &self.fermion,
        }
    }
}

pub fn build_propagator_table(p: &ModelParams) -> PropagatorTable {
    let dtau = p.dtau();
    PropagatorTable {
        dtau,
        t_b: p.t_b,
        t_f: p.t_f,
        boson: SpeciesPropagator::build(p.n_max, dtau * p.t_b),
        fermion: SpeciesPropagator::build(1, dtau * p.t_f),
    }
}

/// Occupations of both species on the `slices x sites` space-time lattice,
/// stored slice-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorldlineConfig {
    sites: usize,
    slices: usize,
    occ: [Vec<u8>; 2],
}

#[inline]
fn sidx(s: Species) -> usize {
    match s {
        Species::Boson => 0,
        Species::Fermion => 1,
    }
}

impl WorldlineConfig {
    /// A configuration with every slice equal to the given rows.
    pub fn uniform(slices: usize, bosons: &[u8], fermions: &[u8]) -> Self {
        assert_eq!(bosons.len(), fermions.len());
        let sites = bosons.len();
        WorldlineConfig {
            sites,
            slices,
            occ: [bosons.repeat(slices), fermions.repeat(slices)],
        }
    }

    /// Builds a configuration from slice-major occupancy arrays. Shape is
    /// checked; physical validity is left to [`config_weight`].
    pub fn from_occupations(sites: usize, slices: usize, bosons: Vec<u8>, fermions: Vec<u8>) -> Self {
        assert_eq!(bosons.len(), sites * slices);
        assert_eq!(fermions.len(), sites * slices);
        WorldlineConfig { sites, slices, occ: [bosons, fermions] }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    #[inline]
    pub fn get(&self, s: Species, slice: usize, site: usize) -> usize {
        self.occ[sidx(s)][slice * self.sites + site] as usize
    }

    #[inline]
    pub fn set(&mut self, s: Species, slice: usize, site: usize, n: usize) {
        self.occ[sidx(s)][slice * self.sites + site] = n as u8;
    }

    /// Occupations of one slice.
    pub fn row(&self, s: Species, slice: usize) -> &[u8] {
        &self.occ[sidx(s)][slice * self.sites..(slice + 1) * self.sites]
    }

    pub fn occupations(&self, s: Species) -> &[u8] {
        &self.occ[sidx(s)]
    }

    /// Particle count of one species on one slice.
    pub fn count(&self, s: Species, slice: usize) -> usize {
        self.row(s, slice).iter().map(|&n| n as usize).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigRepr {
    sites: usize,
    slices: usize,
    /// One digit string per slice.
    bosons: Vec<String>,
    fermions: Vec<String>,
}

impl Serialize for WorldlineConfig {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let rows = |s: Species| -> Vec<String> {
            (0..self.slices)
                .map(|k| self.row(s, k).iter().map(|&n| char::from(b'0' + n)).collect())
                .collect()
        };
        ConfigRepr {
            sites: self.sites,
            slices: self.slices,
            bosons: rows(Species::Boson),
            fermions: rows(Species::Fermion),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for WorldlineConfig {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ConfigRepr::deserialize(de)?;
        let decode = |rows: &[String]| -> Result<Vec<u8>, D::Error> {
            if rows.len() != repr.slices {
                return Err(D::Error::custom("slice count mismatch"));
            }
            let mut out = Vec::with_capacity(repr.sites * repr.slices);
            for row in rows {
                if row.len() != repr.sites {
                    return Err(D::Error::custom("site count mismatch"));
                }
                for ch in row.bytes() {
                    if !ch.is_ascii_digit() {
                        return Err(D::Error::custom("occupancy must be a digit"));
                    }
                    out.push(ch - b'0');
                }
            }
            Ok(out)
        };
        Ok(WorldlineConfig {
            sites: repr.sites,
            slices: repr.slices,
            occ: [decode(&repr.bosons)?, decode(&repr.fermions)?],
        })
    }
}

/// Why a configuration has no valid weight.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum WeightError {
    #[error("configuration shape {sites}x{slices} does not match parameters")]
    Shape { sites: usize, slices: usize },
    #[error("{species:?} occupancy {value} at slice {slice}, site {site} is out of range")]
    Occupancy { species: Species, slice: usize, site: usize, value: usize },
    #[error("{species:?} count {found} on slice {slice}, expected {expected}")]
    CountMismatch { species: Species, slice: usize, found: usize, expected: usize },
    #[error("broken {species:?} world line at transition {transition}, site {site}")]
    Broken { species: Species, transition: usize, site: usize },
}

/// Direction of a one-site world-line shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Towards larger site index.
    Right,
    Left,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Right => Direction::Left,
            Direction::Left => Direction::Right,
        }
    }
}

/// Shift of one world-line segment across the plaquette of bond
/// `(bond, bond + 1)` that is inactive between `slice` and `slice + 1`.
/// Occupations change on those two slices only: one particle moves from
/// `bond` to `bond + 1` (`Right`) or back (`Left`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalMove {
    pub species: Species,
    pub slice: usize,
    pub bond: usize,
    pub dir: Direction,
}

impl LocalMove {
    pub fn inverse(self) -> Self {
        LocalMove { dir: self.dir.flip(), ..self }
    }
}

/// Shift of a world-line segment spanning `len` slices from `start` (even,
/// `2 <= len <= S`) across bond `(bond, bond + 1)`, which must be active on
/// the transitions entering and leaving the segment. With `len = 2` this is
/// a [`LocalMove`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentMove {
    pub species: Species,
    pub start: usize,
    pub len: usize,
    pub bond: usize,
    pub dir: Direction,
}

impl SegmentMove {
    pub fn inverse(self) -> Self {
        SegmentMove { dir: self.dir.flip(), ..self }
    }
}

/// Boson and fermion segments over the same slices crossing bond
/// `(bond, bond + 1)` in opposite directions; `dir` is the boson's
/// direction. This is the world-line picture of a boson-fermion exchange
/// without an intermediate doubly occupied site. Slice rules as for
/// [`SegmentMove`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExchangeMove {
    pub start: usize,
    pub len: usize,
    pub bond: usize,
    pub dir: Direction,
}

impl ExchangeMove {
    pub fn inverse(self) -> Self {
        ExchangeMove { dir: self.dir.flip(), ..self }
    }
}

/// Moves one particle from `site` to the neighbour in `dir` on every slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlobalShift {
    pub species: Species,
    pub site: usize,
    pub dir: Direction,
}

impl GlobalShift {
    /// The shift undoing this one, if the target is on the chain.
    pub fn inverse(self, sites: usize) -> Option<Self> {
        let site = target(self.site, self.dir, sites)?;
        Some(GlobalShift { species: self.species, site, dir: self.dir.flip() })
    }
}

/// Exchanges the occupations of both species between sites `bond` and
/// `bond + 1` on every slice. Its own inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnSwap {
    pub bond: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Local(LocalMove),
    Segment(SegmentMove),
    Exchange(ExchangeMove),
    Shift(GlobalShift),
    Swap(ColumnSwap),
}

impl Move {
    /// The move undoing this one, if it exists on a chain of `sites` sites.
    pub fn inverse(self, sites: usize) -> Option<Move> {
        match self {
            Move::Local(m) => Some(Move::Local(m.inverse())),
            Move::Segment(m) => Some(Move::Segment(m.inverse())),
            Move::Exchange(m) => Some(Move::Exchange(m.inverse())),
            Move::Shift(g) => g.inverse(sites).map(Move::Shift),
            Move::Swap(s) => Some(Move::Swap(s)),
        }
    }
}

fn target(site: usize, dir: Direction, sites: usize) -> Option<usize> {
    match dir {
        Direction::Right if site + 1 < sites => Some(site + 1),
        Direction::Left if site > 0 => Some(site - 1),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug)]
enum ChangeKind {
    /// One particle of `species` moves in `dir`.
    Shift { species: Species, dir: Direction },
    /// The boson moves in `dir`, the fermion the other way.
    Exchange { dir: Direction },
    Swap,
}

/// A move in canonical form: occupations of sites `lo` and `lo + 1` change
/// on the `len` slices from `start` (cyclically); `len = S` is every slice.
#[derive(Clone, Copy, Debug)]
struct Change {
    lo: usize,
    start: usize,
    len: usize,
    /// Particles of each species moved from `lo` to `lo + 1` (negative:
    /// the other way); unused for swaps.
    flow: [isize; 2],
    swap: bool,
}

impl Change {
    fn new(lo: usize, kind: ChangeKind, start: usize, len: usize) -> Self {
        let sign = |d: Direction| match d {
            Direction::Right => 1,
            Direction::Left => -1,
        };
        let (flow, swap) = match kind {
            ChangeKind::Shift { species: Species::Boson, dir } => ([sign(dir), 0], false),
            ChangeKind::Shift { species: Species::Fermion, dir } => ([0, sign(dir)], false),
            ChangeKind::Exchange { dir } => ([sign(dir), -sign(dir)], false),
            ChangeKind::Swap => ([0, 0], true),
        };
        Change { lo, start, len, flow, swap }
    }

    #[inline(always)]
    fn touches_slice(&self, k: usize, slices: usize) -> bool {
        let d = if k >= self.start { k - self.start } else { k + slices - self.start };
        d < self.len
    }

    #[inline]
    fn slice_iter(&self, slices: usize) -> impl Iterator<Item = usize> {
        let start = self.start;
        (0..self.len).map(move |j| {
            let k = start + j;
            if k >= slices {
                k - slices
            } else {
                k
            }
        })
    }

    #[inline]
    fn involves(&self, s: Species) -> bool {
        self.swap || self.flow[sidx(s)] != 0
    }

    /// Occupancy after the change; may be negative for impossible moves.
    #[inline(always)]
    fn new_occ(&self, c: &WorldlineConfig, s: Species, k: usize, x: usize) -> isize {
        let n = c.get(s, k, x) as isize;
        let off = x.wrapping_sub(self.lo);
        if off > 1 || !self.touches_slice(k, c.slices) {
            return n;
        }
        if self.swap {
            return c.get(s, k, self.lo + 1 - off) as isize;
        }
        let f = self.flow[sidx(s)];
        if off == 0 {
            n - f
        } else {
            n + f
        }
    }
}

/// A factor of the kinetic weight: a two-site propagator or the identity
/// constraint on an uncovered chain end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Plaquette {
    Bond { transition: usize, bond: usize },
    Edge { transition: usize, site: usize },
}

#[inline]
fn plaquette_of(x: usize, transition: usize, sites: usize) -> Plaquette {
    let b = if x % 2 == transition % 2 { Some(x) } else { x.checked_sub(1) };
    match b {
        Some(bond) if bond + 1 < sites => Plaquette::Bond { transition, bond },
        _ => Plaquette::Edge { transition, site: x },
    }
}

/// Parameters, kinetic table and trap energies needed to weigh
/// configurations.
#[derive(Clone, Debug)]
pub struct WeightModel {
    params: ModelParams,
    table: PropagatorTable,
    trap: Vec<f64>,
    half_dtau: f64,
}

impl WeightModel {
    pub fn new(p: &ModelParams) -> Self {
        WeightModel {
            params: p.clone(),
            table: build_propagator_table(p),
            trap: (0..p.sites).map(|i| p.trap_potential(i)).collect(),
            half_dtau: 0.5 * p.dtau(),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn table(&self) -> &PropagatorTable {
        &self.table
    }

    #[inline]
    fn site_energy(&self, nb: usize, nf: usize, i: usize) -> f64 {
        let p = &self.params;
        let nb = nb as f64;
        let nf = nf as f64;
        0.5 * p.u_bb * nb * (nb - 1.0) + p.u_bf * nb * nf + self.trap[i] * (nb + nf)
    }

    /// Kinetic factor of one plaquette for one species, reading occupations
    /// through `occ(slice, site)`.
    #[inline]
    fn plaquette_weight(&self, s: Species, pq: Plaquette, slices: usize, occ: impl Fn(usize, usize) -> usize) -> f64 {
        match pq {
            Plaquette::Bond { transition: t, bond: b } => {
                let t2 = if t + 1 == slices { 0 } else { t + 1 };
                self.table.species(s).weight(occ(t, b), occ(t, b + 1), occ(t2, b), occ(t2, b + 1))
            }
            Plaquette::Edge { transition: t, site } => {
                let t2 = if t + 1 == slices { 0 } else { t + 1 };
                if occ(t, site) == occ(t2, site) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Natural log of the configuration weight.
    pub fn log_weight(&self, c: &WorldlineConfig) -> Result<f64, WeightError> {
        let p = &self.params;
        let (sites, slices) = (c.sites(), c.slices());
        if sites != p.sites || slices != p.slices() {
            return Err(WeightError::Shape { sites, slices });
        }
        for s in Species::ALL {
            let max = p.max_occupancy(s);
            for k in 0..slices {
                for i in 0..sites {
                    let value = c.get(s, k, i);
                    if value > max {
                        return Err(WeightError::Occupancy { species: s, slice: k, site: i, value });
                    }
                }
                let found = c.count(s, k);
                if found != p.count(s) {
                    return Err(WeightError::CountMismatch { species: s, slice: k, found, expected: p.count(s) });
                }
            }
        }

        let mut log_w = 0.0;
        for s in Species::ALL {
            for t in 0..slices {
                let mut x = 0;
                while x < sites {
                    let pq = plaquette_of(x, t, sites);
                    let w = self.plaquette_weight(s, pq, slices, |k, i| c.get(s, k, i));
                    if w <= 0.0 {
                        return Err(WeightError::Broken { species: s, transition: t, site: x });
                    }
                    log_w += w.ln();
                    x += match pq {
                        Plaquette::Bond { .. } => 2,
                        Plaquette::Edge { .. } => 1,
                    };
                }
            }
        }
        let mut energy = 0.0;
        for k in 0..slices {
            for i in 0..sites {
                energy += self.site_energy(c.get(Species::Boson, k, i), c.get(Species::Fermion, k, i), i);
            }
        }
        Ok(log_w - self.half_dtau * energy)
    }

    fn canonical(&self, c: &WorldlineConfig, mv: &Move) -> Option<Change> {
        let (sites, slices) = (c.sites(), c.slices());
        // the bond must be active on the transitions bounding the segment,
        // i.e. inactive on the one leaving `start`
        let segment = |bond: usize, start: usize, len: usize| {
            bond + 1 < sites && bond % 2 != start % 2 && start < slices && len >= 2 && len % 2 == 0 && len <= slices
        };
        match *mv {
            Move::Local(m) => {
                let kind = ChangeKind::Shift { species: m.species, dir: m.dir };
                segment(m.bond, m.slice, 2).then_some(Change::new(m.bond, kind, m.slice, 2))
            }
            Move::Segment(m) => {
                let kind = ChangeKind::Shift { species: m.species, dir: m.dir };
                segment(m.bond, m.start, m.len).then_some(Change::new(m.bond, kind, m.start, m.len))
            }
            Move::Exchange(m) => {
                let kind = ChangeKind::Exchange { dir: m.dir };
                segment(m.bond, m.start, m.len).then_some(Change::new(m.bond, kind, m.start, m.len))
            }
            Move::Shift(g) => {
                let dst = target(g.site, g.dir, sites)?;
                let kind = ChangeKind::Shift { species: g.species, dir: g.dir };
                Some(Change::new(g.site.min(dst), kind, 0, slices))
            }
            Move::Swap(s) => (s.bond + 1 < sites).then_some(Change::new(s.bond, ChangeKind::Swap, 0, slices)),
        }
    }

    /// Ratio `W(after) / W(before)` of a proposed move, evaluated from the
    /// affected plaquettes and cells only. Proposals breaking the occupancy
    /// bounds or world-line continuity get ratio 0. An error means the
    /// current configuration itself has a zero-weight plaquette among those
    /// visited before the proposal was found impossible.
    pub fn move_ratio(&self, c: &WorldlineConfig, mv: &Move) -> Result<f64, WeightError> {
        let Some(ch) = self.canonical(c, mv) else {
            return Ok(0.0);
        };
        let slices = c.slices();
        let sites = c.sites();
        let max_b = self.params.max_occupancy(Species::Boson) as isize;
        let max_f = self.params.max_occupancy(Species::Fermion) as isize;

        // occupancy bounds first, they reject most proposals
        if !ch.swap {
            for s in Species::ALL {
                let f = ch.flow[sidx(s)];
                if f == 0 {
                    continue;
                }
                let (src, dst) = if f > 0 { (ch.lo, ch.lo + 1) } else { (ch.lo + 1, ch.lo) };
                let max = self.params.max_occupancy(s);
                if ch.slice_iter(slices).any(|k| c.get(s, k, src) == 0 || c.get(s, k, dst) >= max) {
                    return Ok(0.0);
                }
            }
        }

        // diagonal energy change
        let mut d_energy = 0.0;
        let mut check = |k: usize| -> bool {
            for x in [ch.lo, ch.lo + 1] {
                let nb = ch.new_occ(c, Species::Boson, k, x);
                let nf = ch.new_occ(c, Species::Fermion, k, x);
                if nb < 0 || nf < 0 || nb > max_b || nf > max_f {
                    return false;
                }
                d_energy += self.site_energy(nb as usize, nf as usize, x)
                    - self.site_energy(c.get(Species::Boson, k, x), c.get(Species::Fermion, k, x), x);
            }
            true
        };
        for k in ch.slice_iter(slices) {
            if !check(k) {
                return Ok(0.0);
            }
        }

        let mut old = 1.0;
        let mut new = 1.0;
        for s in Species::ALL {
            if !ch.involves(s) {
                continue;
            }
            let mut visit = |pq: Plaquette| -> Result<bool, WeightError> {
                let w_new = self.plaquette_weight(s, pq, slices, |k, i| ch.new_occ(c, s, k, i) as usize);
                if w_new == 0.0 {
                    return Ok(false);
                }
                new *= w_new;
                let w_old = self.plaquette_weight(s, pq, slices, |k, i| c.get(s, k, i));
                if w_old <= 0.0 {
                    let (transition, site) = match pq {
                        Plaquette::Bond { transition, bond } => (transition, bond),
                        Plaquette::Edge { transition, site } => (transition, site),
                    };
                    return Err(WeightError::Broken { species: s, transition, site });
                }
                old *= w_old;
                Ok(true)
            };
            // transitions from the one entering the changed slices to the
            // one leaving them, each once
            let first = ch.start + slices - 1;
            for j in 0..(ch.len + 1).min(slices) {
                let t = (first + j) % slices;
                let a = plaquette_of(ch.lo, t, sites);
                let b = plaquette_of(ch.lo + 1, t, sites);
                if !visit(a)? || (b != a && !visit(b)?) {
                    return Ok(0.0);
                }
            }
        }
        Ok(new / old * (-self.half_dtau * d_energy).exp())
    }

    /// Applies a move. The caller must have checked it has non-zero ratio.
    pub fn apply(&self, c: &mut WorldlineConfig, mv: &Move) {
        let ch = self.canonical(c, mv).expect("apply called with an impossible move");
        let slices = c.slices();
        let mut update = |k: usize| {
            for s in Species::ALL {
                if !ch.involves(s) {
                    continue;
                }
                let a = ch.new_occ(c, s, k, ch.lo);
                let b = ch.new_occ(c, s, k, ch.lo + 1);
                c.set(s, k, ch.lo, a as usize);
                c.set(s, k, ch.lo + 1, b as usize);
            }
        };
        for k in ch.slice_iter(slices) {
            update(k);
        }
    }
}

/// Natural log of the world-line weight of `c`.
pub fn config_weight(c: &WorldlineConfig, w: &WeightModel) -> Result<f64, WeightError> {
    w.log_weight(c)
}

/// Weight ratio of a local segment shift; see [`WeightModel::move_ratio`].
pub fn local_move_ratio(c: &WorldlineConfig, mv: LocalMove, w: &WeightModel) -> Result<f64, WeightError> {
    w.move_ratio(c, &Move::Local(mv))
}

impl fmt::Display for WorldlineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.slices {
            for i in 0..self.sites {
                let b = self.get(Species::Boson, k, i);
                let fe = self.get(Species::Fermion, k, i);
                let ch = match (b, fe) {
                    (0, 0) => '.',
                    (0, _) => 'f',
                    (nb, 0) => char::from(b'0' + nb as u8),
                    (nb, _) => char::from(b'A' + nb as u8 - 1),
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
