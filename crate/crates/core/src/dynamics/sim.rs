//! Exact event-driven simulation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::fenwick::Fenwick;
use super::rates::{compute_v, total_jump_rate};
use super::Configuration;
use crate::analysis::{ObservableSeries, SeriesMeta};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    Plus,
    Minus,
}

impl Species {
    fn sign(self) -> i32 {
        match self {
            Species::Plus => 1,
            Species::Minus => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Move,
    AnnihilateBranch,
}

/// Sites receiving the new `+` and `-` particle after an annihilation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub plus_site: u32,
    pub minus_site: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub species: Species,
    pub from: u32,
    pub to: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub t_end: f64,
    pub seed: u64,
    /// Observation times in `[0, t_end]`; `0` is always observed.
    pub sample_times: Vec<f64>,
    #[serde(default)]
    pub record_events: bool,
    /// Refuse runs whose expected event count exceeds this; abort if the
    /// realised count exceeds twice this.
    #[serde(default)]
    pub max_events: Option<u64>,
    /// Use the rate-tree particle draw even when holding times are uniform.
    #[serde(default)]
    pub general_path: bool,
}

impl SimParams {
    pub fn new(t_end: f64, seed: u64, sample_times: Vec<f64>) -> Self {
        SimParams { t_end, seed, sample_times, record_events: false, max_events: None, general_path: false }
    }

    /// Observation grid: 0, the requested times clipped to `[0, t_end]`,
    /// sorted and deduplicated.
    pub fn observation_times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = std::iter::once(0.0)
            .chain(self.sample_times.iter().copied().filter(|&t| t >= 0.0 && t <= self.t_end))
            .collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup();
        ts
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub events: u64,
    pub annihilations: u64,
    /// Events after which a species count differed from `N`; zero in a
    /// correct run.
    pub conservation_violations: u64,
    pub fast_path: bool,
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub series: ObservableSeries,
    pub config: Configuration,
    pub events: Vec<EventRecord>,
    pub stats: RunStats,
}

enum Sampler {
    /// All sites share one holding time: the jumper is a uniform particle.
    Uniform { rate: f64 },
    /// Site drawn with weight `|eta_x| / h(x)`, then a uniform occupant.
    Weighted { tree: Fenwick, inv_h: Vec<f64> },
}

/// Running simulation state with incremental conservation counters.
pub struct Simulator<'a, T: Scalar> {
    lattice: &'a Lattice<T>,
    config: Configuration,
    rng: ChaCha8Rng,
    time: f64,
    sampler: Sampler,
    stats: RunStats,
    plus_total: i64,
    minus_total: i64,
}

impl<'a, T: Scalar> Simulator<'a, T> {
    pub fn new(lattice: &'a Lattice<T>, config: Configuration, seed: u64, general_path: bool) -> Result<Self> {
        if config.sites() != lattice.len() {
            return Err(Error::InvalidArgument(format!(
                "configuration has {} sites, lattice has {}",
                config.sites(),
                lattice.len()
            )));
        }
        config.validate()?;
        let sampler = match lattice.uniform_holding_time() {
            Some(h) if !general_path => Sampler::Uniform { rate: 2.0 * config.n() as f64 / h.as_f64() },
            _ => {
                let inv_h: Vec<f64> = lattice.holding_times().iter().map(|h| h.as_f64().recip()).collect();
                let w = config.eta().iter().zip(&inv_h).map(|(&e, &r)| f64::from(e.abs()) * r).collect();
                Sampler::Weighted { tree: Fenwick::new(w), inv_h }
            }
        };
        let stats = RunStats { fast_path: matches!(sampler, Sampler::Uniform { .. }), ..RunStats::default() };
        Ok(Simulator {
            lattice,
            plus_total: config.plus_total(),
            minus_total: config.minus_total(),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            time: 0.0,
            sampler,
            stats,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn into_parts(self) -> (Configuration, RunStats) {
        (self.config, self.stats)
    }

    pub fn total_rate(&self) -> f64 {
        match &self.sampler {
            Sampler::Uniform { rate } => *rate,
            Sampler::Weighted { tree, .. } => tree.total(),
        }
    }

    /// Draws the waiting time to the next event.
    pub fn draw_wait(&mut self) -> f64 {
        let e: f64 = self.rng.sample(Exp1);
        e / self.total_rate()
    }

    /// Performs one event at absolute time `at` (which must not precede the
    /// current time).
    pub fn fire(&mut self, at: f64) -> EventRecord {
        debug_assert!(at >= self.time);
        self.time = at;
        let n = self.config.n();
        let id = match &self.sampler {
            Sampler::Uniform { .. } => self.rng.gen_range(0..2 * n) as u32,
            Sampler::Weighted { tree, .. } => {
                let x = tree.find(self.rng.gen::<f64>() * tree.total());
                let occ = self.config.occupants(x);
                occ[self.rng.gen_range(0..occ.len())]
            }
        };
        let from = self.config.positions[id as usize];
        let to = pick_neighbor(self.lattice, from as usize, self.rng.gen::<f64>());
        let species = if (id as usize) < n { Species::Plus } else { Species::Minus };
        let record = if species.sign() * self.config.eta[to as usize] < 0 {
            let plus_site = self.config.positions[self.rng.gen_range(0..n)];
            let minus_site = self.config.positions[n + self.rng.gen_range(0..n)];
            let branch = Branch { plus_site, minus_site };
            let victim = *self.config.occupants(to as usize).last().expect("opposite site is occupied");
            self.annihilate(id, victim, species, branch);
            self.stats.annihilations += 1;
            EventRecord { time: at, kind: EventKind::AnnihilateBranch, species, from, to, branch: Some(branch) }
        } else {
            self.move_particle(id, to);
            EventRecord { time: at, kind: EventKind::Move, species, from, to, branch: None }
        };
        self.stats.events += 1;
        let n = n as i64;
        if self.plus_total != n || self.minus_total != n {
            self.stats.conservation_violations += 1;
        }
        record
    }

    /// Draws and performs the next event.
    pub fn step(&mut self) -> (f64, EventRecord) {
        let dt = self.draw_wait();
        let at = self.time + dt;
        (dt, self.fire(at))
    }

    fn annihilate(&mut self, jumper: u32, victim: u32, species: Species, branch: Branch) {
        match species {
            Species::Plus => {
                self.move_particle(jumper, branch.plus_site);
                self.move_particle(victim, branch.minus_site);
            }
            Species::Minus => {
                self.move_particle(jumper, branch.minus_site);
                self.move_particle(victim, branch.plus_site);
            }
        }
    }

    fn move_particle(&mut self, id: u32, to: u32) {
        let from = self.config.positions[id as usize];
        let before = [self.config.eta[from as usize], self.config.eta[to as usize]];
        self.config.relocate(id, to);
        let after = [self.config.eta[from as usize], self.config.eta[to as usize]];
        let sites = if from == to { 1 } else { 2 };
        for k in 0..sites {
            self.plus_total += i64::from(after[k].max(0) - before[k].max(0));
            self.minus_total += i64::from((-after[k]).max(0) - (-before[k]).max(0));
        }
        if let Sampler::Weighted { tree, inv_h } = &mut self.sampler {
            for &s in &[from, to][..sites] {
                let s = s as usize;
                tree.set(s, f64::from(self.config.eta[s].abs()) * inv_h[s]);
            }
        }
    }
}

fn pick_neighbor<T: Scalar>(lattice: &Lattice<T>, x: usize, u: f64) -> u32 {
    let nb = lattice.neighbors(x);
    let mut acc = 0.0;
    for (&y, p) in nb.iter().zip(lattice.jump_probs(x)) {
        acc += p.as_f64();
        if u < acc {
            return y;
        }
    }
    // u landed in the rounding gap below 1: take the last positive entry.
    let last = lattice.jump_probs(x).iter().rposition(|&p| p > T::zero()).unwrap_or(nb.len() - 1);
    nb[last]
}

/// One event from a frozen configuration, drawn with linear scans. Returns
/// the waiting time and the event; `config` is updated in place.
pub fn step<T: Scalar, R: Rng>(
    config: &mut Configuration,
    lattice: &Lattice<T>,
    rng: &mut R,
    now: f64,
) -> (f64, EventRecord) {
    let total = total_jump_rate(config, lattice).as_f64();
    let e: f64 = rng.sample(Exp1);
    let dt = e / total;
    let mut target = rng.gen::<f64>() * total;
    let mut x = 0;
    for (s, &e) in config.eta().iter().enumerate() {
        if e == 0 {
            continue;
        }
        x = s;
        let w = f64::from(e.abs()) / lattice.holding_time(s).as_f64();
        if target < w {
            break;
        }
        target -= w;
    }
    let occ = config.occupants(x);
    let id = occ[rng.gen_range(0..occ.len())];
    let species = if (id as usize) < config.n() { Species::Plus } else { Species::Minus };
    let to = pick_neighbor(lattice, x, rng.gen::<f64>());
    let n = config.n();
    let record = if species.sign() * config.eta()[to as usize] < 0 {
        let branch = Branch {
            plus_site: config.positions[rng.gen_range(0..n)],
            minus_site: config.positions[n + rng.gen_range(0..n)],
        };
        EventRecord { time: now + dt, kind: EventKind::AnnihilateBranch, species, from: x as u32, to, branch: Some(branch) }
    } else {
        EventRecord { time: now + dt, kind: EventKind::Move, species, from: x as u32, to, branch: None }
    };
    apply_event(config, lattice, &record).expect("drawn event is valid");
    (dt, record)
}

/// Replays `event` against `config`, checking that it is allowed by the
/// generator in the current state.
pub fn apply_event<T: Scalar>(config: &mut Configuration, lattice: &Lattice<T>, event: &EventRecord) -> Result<()> {
    let (from, to) = (event.from as usize, event.to as usize);
    let bad = |msg: &str| Error::Precondition(format!("event at t = {}: {msg}", event.time));
    if from >= config.sites() || to >= config.sites() {
        return Err(bad("site out of range"));
    }
    if !lattice.neighbors(from).contains(&event.to) {
        return Err(bad("target is not a neighbour"));
    }
    let s = event.species.sign();
    if s * config.eta()[from] <= 0 {
        return Err(bad("no particle of that species at the source"));
    }
    let jumper = *config.occupants(from).last().unwrap();
    match (event.kind, event.branch) {
        (EventKind::Move, None) => {
            if s * config.eta()[to] < 0 {
                return Err(bad("move onto an opposite-sign site"));
            }
            config.relocate(jumper, event.to);
        }
        (EventKind::AnnihilateBranch, Some(b)) => {
            if s * config.eta()[to] >= 0 {
                return Err(bad("annihilation without an opposite particle at the target"));
            }
            if b.plus_site as usize >= config.sites()
                || b.minus_site as usize >= config.sites()
                || config.eta()[b.plus_site as usize] <= 0
                || config.eta()[b.minus_site as usize] >= 0
            {
                return Err(bad("branch sites must hold their species before the event"));
            }
            let victim = *config.occupants(to).last().unwrap();
            let (a, b) = match event.species {
                Species::Plus => (b.plus_site, b.minus_site),
                Species::Minus => (b.minus_site, b.plus_site),
            };
            config.relocate(jumper, a);
            config.relocate(victim, b);
        }
        _ => return Err(bad("branch sites present exactly for annihilations")),
    }
    Ok(())
}

/// Runs the dynamics to `params.t_end`, observing at the observation grid.
/// `tracked` pairs a mode label with a test function `phi`; each observation
/// records `N^-1 sum_x eta_x phi(x)` for every tracked function.
pub fn simulate<T: Scalar>(
    config: Configuration,
    lattice: &Lattice<T>,
    params: &SimParams,
    tracked: &[(usize, Vec<T>)],
) -> Result<SimOutput> {
    let record = params.record_events;
    let mut events = Vec::new();
    let mut out = simulate_with(config, lattice, params, tracked, |e| {
        if record {
            events.push(*e);
        }
    })?;
    out.events = events;
    Ok(out)
}

/// As [`simulate`], streaming every event to `on_event` instead of storing it.
pub fn simulate_with<T: Scalar, F: FnMut(&EventRecord)>(
    config: Configuration,
    lattice: &Lattice<T>,
    params: &SimParams,
    tracked: &[(usize, Vec<T>)],
    mut on_event: F,
) -> Result<SimOutput> {
    if !(params.t_end >= 0.0) || !params.t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("t_end must be finite and nonnegative, got {}", params.t_end)));
    }
    if let Some((label, _)) = tracked.iter().find(|(_, f)| f.len() != lattice.len()) {
        return Err(Error::InvalidArgument(format!("tracked function {label} has the wrong length")));
    }
    let n = config.n();
    let mut sim = Simulator::new(lattice, config, params.seed, params.general_path)?;
    let projected = (sim.total_rate() * params.t_end).ceil() as u64;
    if let Some(budget) = params.max_events {
        if projected > budget {
            return Err(Error::Budget { what: "simulation events", needed: projected, budget });
        }
    }
    let hard_cap = params.max_events.map(|b| b.saturating_mul(2));
    let phis: Vec<Vec<f64>> = tracked.iter().map(|(_, f)| f.iter().map(|v| v.as_f64()).collect()).collect();
    let mut series = ObservableSeries::new(
        SeriesMeta {
            n,
            epsilon: lattice.epsilon().as_f64(),
            dim: lattice.dim(),
            sites: lattice.len(),
            seed: params.seed,
        },
        tracked.iter().map(|(m, _)| *m).collect(),
    );
    let times = params.observation_times();
    let mut observe = |sim: &mut Simulator<T>, t: f64| {
        let cfg = sim.config();
        if cfg.plus_total() != n as i64 || cfg.minus_total() != n as i64 {
            sim.stats.conservation_violations += 1;
        }
        let cfg = sim.config();
        let inv_n = 1.0 / n as f64;
        let coeffs = phis
            .iter()
            .map(|phi| inv_n * cfg.eta().iter().zip(phi).map(|(&e, &p)| f64::from(e) * p).sum::<f64>())
            .collect();
        let v = compute_v(cfg, lattice).as_f64();
        series.push(t, cfg.eta().to_vec(), coeffs, v, sim.stats.annihilations);
    };

    let mut next = 0;
    while next < times.len() && times[next] <= 0.0 {
        observe(&mut sim, times[next]);
        next += 1;
    }
    if params.t_end > 0.0 {
        loop {
            let at = sim.time() + sim.draw_wait();
            while next < times.len() && times[next] < at {
                observe(&mut sim, times[next]);
                next += 1;
            }
            if at > params.t_end {
                break;
            }
            let ev = sim.fire(at);
            on_event(&ev);
            if let Some(cap) = hard_cap {
                if sim.stats.events > cap {
                    return Err(Error::Budget { what: "simulation events", needed: sim.stats.events, budget: cap });
                }
            }
        }
    }
    while next < times.len() {
        observe(&mut sim, times[next]);
        next += 1;
    }
    let (config, stats) = sim.into_parts();
    log::debug!("simulation: {} events, {} annihilations", stats.events, stats.annihilations);
    Ok(SimOutput { series, config, events: Vec::new(), stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::dynamics::compute_v;
    use crate::lattice::{build_lattice, TimeScale};

    fn square(sides: f64, eps: f64) -> Lattice<f64> {
        build_lattice(&DomainSpec::<f64>::rectangle(&[sides, sides]).unwrap(), eps, TimeScale::QuadraticVariation)
            .unwrap()
    }

    #[test]
    fn forced_branch_restores_state() {
        let l = square(2.0, 0.5);
        let (x, y) = (l.index_of(&[2, 2]).unwrap(), l.index_of(&[2, 3]).unwrap());
        let mut eta = vec![0; l.len()];
        eta[x] = 1;
        eta[y] = -1;
        let start = Configuration::from_eta(eta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = 0;
        for _ in 0..400 {
            let mut c = start.clone();
            let (_, ev) = step(&mut c, &l, &mut rng, 0.0);
            if ev.kind == EventKind::AnnihilateBranch {
                seen += 1;
                assert_eq!(ev.branch, Some(Branch { plus_site: x as u32, minus_site: y as u32 }));
                assert_eq!(c, start);
            } else {
                assert_eq!(c.eta()[ev.from as usize], 0);
                assert_eq!(c.eta()[ev.to as usize], ev.species.sign());
            }
        }
        // two of the eight possible jumps annihilate
        assert!(seen > 60 && seen < 140, "{seen}");
    }

    #[test]
    fn replay_reproduces_post_states() {
        let l = square(1.0, 0.125);
        let rho: Vec<f64> = (0..l.len()).map(|s| (std::f64::consts::PI * l.position(s)[0]).cos()).collect();
        let c0 = crate::dynamics::init_from_density(&l, &rho, 40).unwrap();
        let mut params = SimParams::new(0.02, 11, vec![0.01, 0.02]);
        params.record_events = true;
        let out = simulate(c0.clone(), &l, &params, &[]).unwrap();
        assert!(out.stats.annihilations > 0);
        let mut replay = c0;
        let mut last = 0.0;
        for e in &out.events {
            assert!(e.time >= last);
            last = e.time;
            apply_event(&mut replay, &l, e).unwrap();
        }
        assert_eq!(replay, out.config);
        replay.validate().unwrap();
        assert_eq!(out.stats.conservation_violations, 0);
    }

    #[test]
    fn replay_rejects_impossible_events() {
        let l = square(1.0, 0.25);
        let mut c = Configuration::from_eta({
            let mut e = vec![0; l.len()];
            e[0] = 1;
            e[1] = -1;
            e
        })
        .unwrap();
        let bogus = EventRecord { time: 0.0, kind: EventKind::Move, species: Species::Plus, from: 0, to: 1, branch: None };
        assert!(apply_event(&mut c, &l, &bogus).is_err());
        let far = EventRecord { to: 7, ..bogus };
        assert!(apply_event(&mut c, &l, &far).is_err());
    }

    #[test]
    fn zero_horizon_gives_initial_snapshot_only() {
        let l = square(1.0, 0.25);
        let rho: Vec<f64> = (0..l.len()).map(|s| l.position(s)[1] - 0.5).collect();
        let c0 = crate::dynamics::init_from_density(&l, &rho, 10).unwrap();
        let out = simulate(c0.clone(), &l, &SimParams::new(0.0, 1, vec![0.0]), &[]).unwrap();
        assert_eq!(out.series.times(), &[0.0]);
        assert_eq!(out.series.snapshot(0), c0.eta());
        assert_eq!(out.stats.events, 0);
    }

    #[test]
    fn identical_seeds_are_bit_identical_and_paths_agree_in_law() {
        let l = square(1.0, 0.125);
        let rho: Vec<f64> = (0..l.len()).map(|s| (std::f64::consts::PI * l.position(s)[0]).cos()).collect();
        let c0 = crate::dynamics::init_from_density(&l, &rho, 64).unwrap();
        let phi: Vec<f64> = rho.clone();
        let params = SimParams::new(0.05, 99, (1..=5).map(|i| i as f64 * 0.01).collect());
        let a = simulate(c0.clone(), &l, &params, &[(1, phi.clone())]).unwrap();
        let b = simulate(c0.clone(), &l, &params, &[(1, phi.clone())]).unwrap();
        assert_eq!(a.series, b.series);
        assert!(a.stats.fast_path);
        let general = SimParams { general_path: true, ..params.clone() };
        let g = simulate(c0, &l, &general, &[(1, phi)]).unwrap();
        assert!(!g.stats.fast_path);
        assert_eq!(g.stats.conservation_violations, 0);
        // same rate, so event counts agree to Poisson accuracy
        let (ea, eg) = (a.stats.events as f64, g.stats.events as f64);
        assert!((ea - eg).abs() < 6.0 * ea.sqrt(), "{ea} vs {eg}");
    }

    #[test]
    fn annihilation_fraction_matches_intensity() {
        let l = square(1.0, 0.125);
        // alternating columns so that every particle touches the other species
        let eta: Vec<i32> = (0..l.len())
            .map(|s| match l.coords(s)[0] {
                8 => 0,
                k if k % 2 == 0 => 1,
                _ => -1,
            })
            .collect();
        let c0 = Configuration::from_eta(eta).unwrap();
        let expected =
            0.5 * c0.n() as f64 * compute_v(&c0, &l) / total_jump_rate(&c0, &l);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 40_000;
        let mut hits = 0;
        for _ in 0..trials {
            let mut c = c0.clone();
            if step(&mut c, &l, &mut rng, 0.0).1.kind == EventKind::AnnihilateBranch {
                hits += 1;
            }
        }
        let frac = hits as f64 / trials as f64;
        let se = (expected * (1.0 - expected) / trials as f64).sqrt();
        assert!((frac - expected).abs() < 5.0 * se, "{frac} vs {expected}");
    }

    #[test]
    fn budget_refuses_large_runs() {
        let l = square(1.0, 0.125);
        let rho: Vec<f64> = (0..l.len()).map(|s| l.position(s)[0] - 0.5).collect();
        let c0 = crate::dynamics::init_from_density(&l, &rho, 100).unwrap();
        let params = SimParams { max_events: Some(1000), ..SimParams::new(1.0, 0, vec![]) };
        assert!(matches!(simulate(c0, &l, &params, &[]), Err(Error::Budget { .. })));
    }
}
