//! Markov-chain driver: initialization, Metropolis sweeps, measurement
//! scheduling and independent chains.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, Species};
use crate::observables::ObservableAccumulator;
use crate::worldline::{
    config_weight, ColumnSwap, Direction, ExchangeMove, GlobalShift, LocalMove, Move, SegmentMove, WeightError, WeightModel, WorldlineConfig,
};

/// Identity of the random number generator recorded in reports.
pub const RNG_IDENTITY: &str = "ChaCha8Rng (rand_chacha 0.3), seed_from_u64(seed), stream = chain index";

/// Sweep schedule of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub seed: u64,
    pub therm_sweeps: u64,
    pub measure_sweeps: u64,
    /// Sweeps between measurements.
    pub measure_interval: u64,
    /// Measurements per bin; a trailing partial bin is dropped.
    pub bin_size: usize,
    pub chains: usize,
}

impl Default for RunPlan {
    fn default() -> Self {
        RunPlan {
            seed: 1,
            therm_sweeps: 10_000,
            measure_sweeps: 100_000,
            measure_interval: 2,
            bin_size: 100,
            chains: 1,
        }
    }
}

impl RunPlan {
    pub fn validate(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("therm_sweeps", self.therm_sweeps),
            ("measure_sweeps", self.measure_sweeps),
            ("measure_interval", self.measure_interval),
            ("bin_size", self.bin_size as u64),
            ("chains", self.chains as u64),
        ] {
            if v < 1 {
                bad.push(format!("{name} must be at least 1"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad.join("; "))
        }
    }

    pub fn total_sweeps(&self) -> u64 {
        self.therm_sweeps + self.measure_sweeps
    }

    fn measures_after(&self, sweeps_done: u64) -> bool {
        sweeps_done > self.therm_sweeps && (sweeps_done - self.therm_sweeps) % self.measure_interval == 0
    }
}

/// Proposal and acceptance counts of one move class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveCounts {
    pub fn rejected(&self) -> u64 {
        self.proposed - self.accepted
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn add(&mut self, o: &MoveCounts) {
        self.proposed += o.proposed;
        self.accepted += o.accepted;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub local_boson: MoveCounts,
    pub local_fermion: MoveCounts,
    pub shift_boson: MoveCounts,
    pub shift_fermion: MoveCounts,
    pub segment_boson: MoveCounts,
    pub segment_fermion: MoveCounts,
    pub exchange: MoveCounts,
    pub swap: MoveCounts,
}

impl AcceptanceStats {
    fn local(&mut self, s: Species) -> &mut MoveCounts {
        match s {
            Species::Boson => &mut self.local_boson,
            Species::Fermion => &mut self.local_fermion,
        }
    }

    fn shift(&mut self, s: Species) -> &mut MoveCounts {
        match s {
            Species::Boson => &mut self.shift_boson,
            Species::Fermion => &mut self.shift_fermion,
        }
    }

    fn segment(&mut self, s: Species) -> &mut MoveCounts {
        match s {
            Species::Boson => &mut self.segment_boson,
            Species::Fermion => &mut self.segment_fermion,
        }
    }

    pub fn merge(&mut self, o: &AcceptanceStats) {
        self.local_boson.add(&o.local_boson);
        self.local_fermion.add(&o.local_fermion);
        self.shift_boson.add(&o.shift_boson);
        self.shift_fermion.add(&o.shift_fermion);
        self.segment_boson.add(&o.segment_boson);
        self.segment_fermion.add(&o.segment_fermion);
        self.exchange.add(&o.exchange);
        self.swap.add(&o.swap);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("chain {chain}: weight violation after {sweeps} sweeps: {source}\nconfiguration:\n{dump}")]
    WeightViolation {
        chain: usize,
        sweeps: u64,
        source: WeightError,
        dump: String,
    },
}

/// Time-independent starting configuration: sites sorted by distance from
/// the trap centre (ties to the lower index), bosons on the innermost sites,
/// fermions on the next ones, and any bosons left over stacked from the
/// centre outwards up to `n_max`.
pub fn initialize_config(p: &ModelParams) -> WorldlineConfig {
    let center = p.sites as f64 / 2.0;
    let mut order: Vec<usize> = (0..p.sites).collect();
    order.sort_by(|&a, &b| {
        let da = (a as f64 - center).abs();
        let db = (b as f64 - center).abs();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    let mut bosons = vec![0u8; p.sites];
    let mut fermions = vec![0u8; p.sites];
    let single = p.n_bosons.min(p.sites - p.n_fermions);
    for &i in &order[..single] {
        bosons[i] = 1;
    }
    for &i in &order[single..single + p.n_fermions] {
        fermions[i] = 1;
    }
    let mut left = p.n_bosons - single;
    'stack: for level in 0..p.n_max {
        for &i in &order {
            if left == 0 {
                break 'stack;
            }
            if bosons[i] as usize == level {
                bosons[i] += 1;
                left -= 1;
            }
        }
    }
    assert_eq!(left, 0, "bosons exceed n_max * L");
    WorldlineConfig::uniform(p.slices(), &bosons, &fermions)
}

/// One Monte Carlo sweep over both species, `first` going first.
///
/// For each species: one local segment shift per inactive plaquette in a
/// raster over (slice, bond), direction drawn uniformly; then, per particle
/// of that species, one straight-line shift at a uniformly drawn site and
/// one adaptive segment shift. With both species present, `4 L` adaptive
/// boson-fermion exchanges and one column swap per bond follow.
pub fn sweep(
    c: &mut WorldlineConfig,
    w: &WeightModel,
    rng: &mut ChaCha8Rng,
    first: Species,
    stats: &mut AcceptanceStats,
) -> Result<(), WeightError> {
    let sites = c.sites();
    let slices = c.slices();
    for s in [first, first.other()] {
        for k in 0..slices {
            let mut bond = (k + 1) % 2;
            while bond + 1 < sites {
                let dir = if rng.gen::<bool>() { Direction::Right } else { Direction::Left };
                let mv = Move::Local(LocalMove { species: s, slice: k, bond, dir });
                metropolis(c, w, rng, &mv, stats.local(s))?;
                bond += 2;
            }
        }
        for _ in 0..w.params().count(s) {
            let site = rng.gen_range(0..sites);
            let dir = if rng.gen::<bool>() { Direction::Right } else { Direction::Left };
            let mv = Move::Shift(GlobalShift { species: s, site, dir });
            metropolis(c, w, rng, &mv, stats.shift(s))?;
            segment_update(c, w, rng, Some(s), stats.segment(s))?;
        }
    }
    if w.params().n_bosons == 0 || w.params().n_fermions == 0 {
        return Ok(());
    }
    for _ in 0..4 * sites {
        segment_update(c, w, rng, None, &mut stats.exchange)?;
    }
    for bond in 0..sites - 1 {
        metropolis(c, w, rng, &Move::Swap(ColumnSwap { bond }), &mut stats.swap)?;
    }
    Ok(())
}

/// Number of consecutive slices from `start` (cyclically, at most `limit`)
/// on which `site` holds a particle of species `s`.
fn occupied_run(c: &WorldlineConfig, s: Species, site: usize, start: usize, limit: usize) -> usize {
    let slices = c.slices();
    (0..limit).take_while(|j| c.get(s, (start + j) % slices, site) > 0).count()
}

/// Segment shift (`species = Some`) or boson-fermion exchange (`None`)
/// whose length adapts to the occupied stretch at the source: bond, start
/// slice and direction are uniform, the length uniform over the even values
/// up to that stretch. The acceptance carries the Hastings factor of the
/// forward and reverse length ranges.
fn segment_update(
    c: &mut WorldlineConfig,
    w: &WeightModel,
    rng: &mut ChaCha8Rng,
    species: Option<Species>,
    counts: &mut MoveCounts,
) -> Result<(), WeightError> {
    let (sites, slices) = (c.sites(), c.slices());
    if sites < 2 {
        return Ok(());
    }
    counts.proposed += 1;
    let bond = rng.gen_range(0..sites - 1);
    let start = 2 * rng.gen_range(0..slices / 2) + (bond + 1) % 2;
    let dir = if rng.gen::<bool>() { Direction::Right } else { Direction::Left };
    let (src, dst) = match dir {
        Direction::Right => (bond, bond + 1),
        Direction::Left => (bond + 1, bond),
    };
    // (species, source site) of every moving segment
    let movers: &[(Species, usize, usize)] = match species {
        Some(s) => &[(s, src, dst)],
        None => &[(Species::Boson, src, dst), (Species::Fermion, dst, src)],
    };
    let even = |n: usize| n - n % 2;
    let m_fwd = even(movers.iter().map(|&(s, from, _)| occupied_run(c, s, from, start, slices)).min().unwrap());
    if m_fwd < 2 {
        return Ok(());
    }
    let len = 2 * rng.gen_range(1..=m_fwd / 2);
    let mv = match species {
        Some(s) => Move::Segment(SegmentMove { species: s, start, len, bond, dir }),
        None => Move::Exchange(ExchangeMove { start, len, bond, dir }),
    };
    let ratio = w.move_ratio(c, &mv)?;
    if ratio == 0.0 {
        return Ok(());
    }
    // after the move each target site is occupied on the changed slices;
    // the slices after them are untouched
    let after = (start + len) % slices;
    let m_rev = even(movers.iter().map(|&(s, _, to)| len + occupied_run(c, s, to, after, slices - len)).min().unwrap());
    let p = ratio * m_fwd as f64 / m_rev as f64;
    if p >= 1.0 || rng.gen::<f64>() < p {
        w.apply(c, &mv);
        counts.accepted += 1;
    }
    Ok(())
}

#[inline]
fn metropolis(
    c: &mut WorldlineConfig,
    w: &WeightModel,
    rng: &mut ChaCha8Rng,
    mv: &Move,
    counts: &mut MoveCounts,
) -> Result<bool, WeightError> {
    counts.proposed += 1;
    let ratio = w.move_ratio(c, mv)?;
    if ratio > 0.0 && (ratio >= 1.0 || rng.gen::<f64>() < ratio) {
        w.apply(c, mv);
        counts.accepted += 1;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Complete state of one Markov chain; everything needed to resume it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub index: usize,
    pub sweeps_done: u64,
    pub rng: ChaCha8Rng,
    pub config: WorldlineConfig,
    pub acc: ObservableAccumulator,
    pub stats: AcceptanceStats,
}

impl ChainState {
    pub fn new(p: &ModelParams, plan: &RunPlan, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(index as u64);
        ChainState {
            index,
            sweeps_done: 0,
            rng,
            config: initialize_config(p),
            acc: ObservableAccumulator::for_params(p, plan.bin_size),
            stats: AcceptanceStats::default(),
        }
    }

    pub fn is_complete(&self, plan: &RunPlan) -> bool {
        self.sweeps_done >= plan.total_sweeps()
    }

    /// Runs sweeps until `until` (capped at the plan total) or until `stop`
    /// is raised; the state is consistent after every sweep.
    pub fn advance(&mut self, w: &WeightModel, plan: &RunPlan, until: u64, stop: Option<&AtomicBool>) -> Result<(), ChainError> {
        let until = until.min(plan.total_sweeps());
        while self.sweeps_done < until {
            if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
                break;
            }
            let first = if self.sweeps_done % 2 == 0 { Species::Boson } else { Species::Fermion };
            if let Err(e) = sweep(&mut self.config, w, &mut self.rng, first, &mut self.stats) {
                return Err(self.violation(e));
            }
            self.sweeps_done += 1;
            if plan.measures_after(self.sweeps_done) {
                self.acc.measure(&self.config);
            }
        }
        if let Err(e) = config_weight(&self.config, w) {
            return Err(self.violation(e));
        }
        Ok(())
    }

    fn violation(&self, source: WeightError) -> ChainError {
        ChainError::WeightViolation {
            chain: self.index,
            sweeps: self.sweeps_done,
            source,
            dump: self.config.to_string(),
        }
    }
}

/// Accumulated output of one or more chains.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub acc: ObservableAccumulator,
    pub stats: AcceptanceStats,
}

impl ChainOutput {
    /// Merges chains in index order.
    pub fn merge(chains: &[ChainState]) -> ChainOutput {
        let mut sorted: Vec<&ChainState> = chains.iter().collect();
        sorted.sort_by_key(|c| c.index);
        let mut acc = sorted[0].acc.clone();
        let mut stats = sorted[0].stats;
        for c in &sorted[1..] {
            acc.merge(&c.acc).expect("chains of one run share accumulator shape");
            stats.merge(&c.stats);
        }
        ChainOutput { acc, stats }
    }
}

/// Runs one chain to completion. The result depends only on
/// `(p, plan, index)`.
pub fn run_chain(p: &ModelParams, plan: &RunPlan, index: usize) -> Result<ChainOutput, ChainError> {
    let w = WeightModel::new(p);
    let mut st = ChainState::new(p, plan, index);
    st.advance(&w, plan, plan.total_sweeps(), None)?;
    Ok(ChainOutput { acc: st.acc, stats: st.stats })
}

/// Runs `plan.chains` independent chains in parallel and merges them.
pub fn run_chains(p: &ModelParams, plan: &RunPlan) -> Result<ChainOutput, ChainError> {
    let w = WeightModel::new(p);
    let states: Vec<ChainState> = (0..plan.chains)
        .into_par_iter()
        .map(|i| {
            let mut st = ChainState::new(p, plan, i);
            st.advance(&w, plan, plan.total_sweeps(), None)?;
            Ok(st)
        })
        .collect::<Result<_, ChainError>>()?;
    Ok(ChainOutput::merge(&states))
}
