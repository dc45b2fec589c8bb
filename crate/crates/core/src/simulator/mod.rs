//! Kinetic Monte Carlo for the birth-death-competition process.
//!
//! The direct method is used with incremental rate bookkeeping: a birth or a
//! death only changes the death rates of particles within `r_cut` of the
//! event, found through a cell list. Deaths are selected by a two-level scan
//! over cached per-cell rate sums.

mod cells;
mod initial;
mod replicas;

use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Point, PointConfiguration, ModelParams, Region};
use crate::rng::ReplicaRng;
use cells::CellGrid;

pub use initial::{sample_initial, InitialCondition};
pub use replicas::{run_replicas, Ensemble, ReplicaPlan, ReplicaRun, ReplicaStats, DEFAULT_MAX_EVENTS};

/// Full recomputation of the rate sums every this many events.
pub const AUDIT_INTERVAL: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EventKind {
    Birth(Point),
    Death(Point),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    /// Waiting time since the previous event.
    pub dt: f64,
    /// Time after the event.
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug)]
struct Particle {
    pos: Point,
    rate: f64,
    cell: u32,
    slot: u32,
}

/// Event counts and rate-audit results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Counters {
    pub events: u64,
    pub births: u64,
    pub deaths: u64,
    pub audits: u64,
    /// Largest relative gap between the running and recomputed `D_tot`.
    pub max_audit_residual: f64,
}

/// Mutable state of one trajectory.
pub struct SimulationState {
    params: Arc<ModelParams>,
    domain: Region,
    time: f64,
    particles: Vec<Particle>,
    cells: Vec<Vec<u32>>,
    cell_rate: Vec<f64>,
    grid: CellGrid,
    d_tot: f64,
    b_tot: f64,
    b_sup: f64,
    interacting: bool,
    audit_interval: u64,
    since_audit: u64,
    counters: Counters,
    scratch: Vec<(u32, f64)>,
    rng: ReplicaRng,
}

impl SimulationState {
    pub fn new(params: Arc<ModelParams>, initial: &PointConfiguration, rng: ReplicaRng) -> Result<Self> {
        let window = &params.window;
        let domain = window.domain();
        let interacting = !params.kernel.is_zero();
        let grid = CellGrid::new(
            &domain,
            interacting.then(|| params.kernel.r_cut()),
            window.is_periodic(),
        );
        let b_tot = params.rates.b.integral(&domain);
        if !b_tot.is_finite() {
            return Err(Error::domain("immigration rate has no finite integral over the window"));
        }
        let mut state = SimulationState {
            b_sup: params.rates.b.sup(),
            domain,
            time: 0.0,
            particles: Vec::with_capacity(initial.len()),
            cells: vec![Vec::new(); grid.len()],
            cell_rate: vec![0.0; grid.len()],
            grid,
            d_tot: 0.0,
            b_tot,
            interacting,
            audit_interval: AUDIT_INTERVAL,
            since_audit: 0,
            counters: Counters::default(),
            scratch: Vec::new(),
            rng,
            params,
        };
        for x in initial.iter() {
            if !state.params.window.contains(x) {
                return Err(Error::domain(format!(
                    "initial point {:?} lies outside the window",
                    &x[..state.params.window.dim()]
                )));
            }
            let x = state.params.window.wrap(x);
            state.insert(x);
        }
        state.rebuild_rates();
        Ok(state)
    }

    /// Overrides how often the running rate sums are recomputed.
    pub fn set_audit_interval(&mut self, every: u64) {
        self.audit_interval = every.max(1);
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn birth_rate_total(&self) -> f64 {
        self.b_tot
    }

    /// Running sum of the per-particle death rates.
    pub fn death_rate_total(&self) -> f64 {
        self.d_tot
    }

    /// Positions with their cached death rates.
    pub fn configuration(&self) -> PointConfiguration {
        let pts = self.particles.iter().map(|p| p.pos).collect();
        let rates = self.particles.iter().map(|p| p.rate).collect();
        PointConfiguration::new(pts)
            .with_death_rates(rates)
            .expect("one rate per particle")
    }

    /// Checks that every particle sits in the cell containing it and that its
    /// slot bookkeeping is consistent.
    pub fn index_is_consistent(&self) -> bool {
        let mut seen = 0;
        for (c, members) in self.cells.iter().enumerate() {
            for (s, &i) in members.iter().enumerate() {
                let p = &self.particles[i as usize];
                if p.cell as usize != c || p.slot as usize != s || self.grid.cell_of(&p.pos) != c {
                    return false;
                }
                seen += 1;
            }
        }
        seen == self.particles.len()
    }

    /// Relative gap between the running `D_tot` and a from-scratch sum,
    /// without modifying the state.
    pub fn audit_residual(&self) -> f64 {
        let fresh = self.fresh_rates();
        let total: f64 = fresh.iter().sum();
        relative_gap(self.d_tot, total)
    }

    /// Recomputes every death rate and rate sum from scratch and returns the
    /// relative gap that had accumulated in `D_tot`.
    pub fn rebuild_rates(&mut self) -> f64 {
        let fresh = self.fresh_rates();
        let mut total = 0.0;
        self.cell_rate.iter_mut().for_each(|r| *r = 0.0);
        for (p, r) in self.particles.iter_mut().zip(&fresh) {
            p.rate = *r;
            self.cell_rate[p.cell as usize] += r;
            total += r;
        }
        let gap = relative_gap(self.d_tot, total);
        self.d_tot = total;
        gap
    }

    fn fresh_rates(&self) -> Vec<f64> {
        let m = &self.params.rates.m;
        self.particles
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut r = m.value(&p.pos);
                if self.interacting {
                    for &c in self.grid.neighbors(p.cell as usize) {
                        for &j in &self.cells[c as usize] {
                            if j as usize != i {
                                r += self.pair(&p.pos, &self.particles[j as usize].pos);
                            }
                        }
                    }
                }
                r
            })
            .collect()
    }

    #[inline]
    fn pair(&self, x: &Point, y: &Point) -> f64 {
        self.params.kernel.eval_r2(self.params.window.distance2(x, y))
    }

    /// Collects `(j, a(x - y_j))` for every particle `j` near `x` with a
    /// nonzero interaction.
    fn collect_neighbors(&mut self, x: &Point, cell: usize, skip: Option<u32>) {
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        for &c in self.grid.neighbors(cell) {
            for &j in &self.cells[c as usize] {
                if Some(j) == skip {
                    continue;
                }
                let w = self.pair(x, &self.particles[j as usize].pos);
                if w != 0.0 {
                    scratch.push((j, w));
                }
            }
        }
        self.scratch = scratch;
    }

    fn add_rate(&mut self, j: usize, delta: f64) {
        let p = &mut self.particles[j];
        let new = (p.rate + delta).max(0.0);
        let d = new - p.rate;
        p.rate = new;
        self.cell_rate[p.cell as usize] += d;
        self.d_tot += d;
    }

    fn insert(&mut self, x: Point) {
        let cell = self.grid.cell_of(&x);
        let mut rate = self.params.rates.m.value(&x);
        if self.interacting {
            self.collect_neighbors(&x, cell, None);
            let scratch = std::mem::take(&mut self.scratch);
            for &(j, w) in &scratch {
                rate += w;
                self.add_rate(j as usize, w);
            }
            self.scratch = scratch;
        }
        let idx = self.particles.len() as u32;
        let slot = self.cells[cell].len() as u32;
        self.cells[cell].push(idx);
        self.particles.push(Particle {
            pos: x,
            rate,
            cell: cell as u32,
            slot,
        });
        self.cell_rate[cell] += rate;
        self.d_tot += rate;
    }

    fn remove(&mut self, i: usize) -> Point {
        let p = self.particles[i];
        if self.interacting {
            self.collect_neighbors(&p.pos, p.cell as usize, Some(i as u32));
            let scratch = std::mem::take(&mut self.scratch);
            for &(j, w) in &scratch {
                self.add_rate(j as usize, -w);
            }
            self.scratch = scratch;
        }
        let cell = p.cell as usize;
        self.cell_rate[cell] -= p.rate;
        self.d_tot -= p.rate;
        if self.cells[cell].len() == 1 {
            // keep the empty-cell sum exact
            self.cell_rate[cell] = 0.0;
        }
        // unlink from the cell
        let slot = p.slot as usize;
        self.cells[cell].swap_remove(slot);
        if let Some(&moved) = self.cells[cell].get(slot) {
            self.particles[moved as usize].slot = slot as u32;
        }
        // unlink from the particle array
        let last = self.particles.len() - 1;
        self.particles.swap_remove(i);
        if i != last {
            let q = self.particles[i];
            self.cells[q.cell as usize][q.slot as usize] = i as u32;
        }
        if self.particles.is_empty() {
            self.d_tot = 0.0;
        }
        p.pos
    }

    fn birth_position(&mut self) -> Point {
        let dim = self.domain.dim;
        loop {
            let mut x = [0.0; 3];
            for (k, xk) in x.iter_mut().enumerate().take(dim) {
                let u: f64 = self.rng.random();
                *xk = self.domain.lo[k] + u * self.domain.side(k);
            }
            if self.params.rates.b.is_constant() {
                return x;
            }
            let v: f64 = self.rng.random::<f64>() * self.b_sup;
            if v < self.params.rates.b.value(&x) {
                return x;
            }
        }
    }

    fn pick_death(&self, mut target: f64) -> usize {
        let mut chosen = None;
        let mut fallback = None;
        for (c, &r) in self.cell_rate.iter().enumerate() {
            if self.cells[c].is_empty() || r <= 0.0 {
                continue;
            }
            fallback = Some(c);
            if target < r {
                chosen = Some(c);
                break;
            }
            target -= r;
        }
        let c = chosen
            .or(fallback)
            .unwrap_or_else(|| self.cells.iter().position(|v| !v.is_empty()).expect("nonempty"));
        let members = &self.cells[c];
        let mut last_positive = None;
        for &i in members {
            let r = self.particles[i as usize].rate;
            if r > 0.0 {
                last_positive = Some(i);
                if target < r {
                    return i as usize;
                }
                target -= r;
            }
        }
        last_positive.unwrap_or(members[members.len() - 1]) as usize
    }

    fn total_rate(&self) -> f64 {
        let d = if self.particles.is_empty() { 0.0 } else { self.d_tot.max(0.0) };
        self.b_tot + d
    }

    /// Draws the next waiting time without applying the event.
    fn draw_wait(&mut self, total: f64) -> f64 {
        let e: f64 = self.rng.sample(Exp1);
        e / total
    }

    fn apply_event(&mut self, total: f64) -> EventKind {
        let u: f64 = self.rng.random::<f64>() * total;
        let kind = if u < self.b_tot || self.particles.is_empty() {
            let x = self.birth_position();
            self.insert(x);
            self.counters.births += 1;
            EventKind::Birth(x)
        } else {
            let i = self.pick_death(u - self.b_tot);
            let x = self.remove(i);
            self.counters.deaths += 1;
            EventKind::Death(x)
        };
        self.counters.events += 1;
        self.since_audit += 1;
        if self.since_audit >= self.audit_interval {
            self.since_audit = 0;
            let gap = self.rebuild_rates();
            self.counters.audits += 1;
            self.counters.max_audit_residual = self.counters.max_audit_residual.max(gap);
        }
        kind
    }

    /// Performs one event of the jump process.
    pub fn step(&mut self) -> Result<Event> {
        let total = self.total_rate();
        if !(total > 0.0) {
            return Err(Error::Halted);
        }
        let dt = self.draw_wait(total);
        self.time += dt;
        let kind = self.apply_event(total);
        Ok(Event {
            dt,
            time: self.time,
            kind,
        })
    }

    /// Runs until time `t`. The event that would overshoot `t` is discarded,
    /// which is exact by memorylessness of the waiting times. A halted process
    /// simply stays frozen. Fails once the lifetime event count exceeds
    /// `max_events`.
    pub fn advance_to(&mut self, t: f64, max_events: u64) -> Result<()> {
        if t < self.time {
            return Err(Error::domain(format!("cannot advance backwards from {} to {t}", self.time)));
        }
        loop {
            let total = self.total_rate();
            if !(total > 0.0) {
                self.time = t;
                return Ok(());
            }
            let dt = self.draw_wait(total);
            if self.time + dt > t {
                self.time = t;
                return Ok(());
            }
            if self.counters.events >= max_events {
                return Err(Error::CappedRun { replica: 0, cap: max_events });
            }
            self.time += dt;
            self.apply_event(total);
        }
    }
}

fn relative_gap(running: f64, fresh: f64) -> f64 {
    let diff = (running - fresh).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / fresh.abs().max(f64::MIN_POSITIVE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{death_rate_at, CompetitionKernel, RateField, Window};
    use crate::rng::replica_rng;

    fn params(len: f64, amp: f64, range: f64, b: f64, m: f64) -> Arc<ModelParams> {
        let kernel = if amp > 0.0 {
            CompetitionKernel::gaussian(1, amp, range).unwrap()
        } else {
            CompetitionKernel::zero(1).unwrap()
        };
        Arc::new(
            ModelParams::new(
                Window::periodic(&[len]).unwrap(),
                kernel,
                RateField::constant(b, m).unwrap(),
                0.0,
            )
            .unwrap(),
        )
    }

    #[test]
    fn halted_without_immigration() {
        let p = params(10.0, 0.0, 1.0, 0.0, 1.0);
        let mut s = SimulationState::new(p, &PointConfiguration::empty(), replica_rng(1, 0)).unwrap();
        assert!(matches!(s.step(), Err(Error::Halted)));
        s.advance_to(3.0, 10).unwrap();
        assert_eq!(s.time(), 3.0);
    }

    #[test]
    fn single_particle_dies_at_unit_rate() {
        let p = params(10.0, 0.5, 0.3, 0.0, 1.0);
        let n = 20_000;
        let mut sum = 0.0;
        for r in 0..n {
            let init = PointConfiguration::new(vec![[4.0, 0.0, 0.0]]);
            let mut s = SimulationState::new(p.clone(), &init, replica_rng(2, r)).unwrap();
            let e = s.step().unwrap();
            assert_eq!(e.kind, EventKind::Death([4.0, 0.0, 0.0]));
            sum += e.dt;
            assert!(s.is_empty());
        }
        let mean = sum / n as f64;
        // Exp(1): standard error 1/sqrt(n)
        assert!((mean - 1.0).abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn incremental_rates_match_recomputation() {
        let p = params(20.0, 0.2, 0.7, 5.0, 0.3);
        let mut s = SimulationState::new(p.clone(), &PointConfiguration::empty(), replica_rng(3, 0)).unwrap();
        s.set_audit_interval(u64::MAX);
        for _ in 0..10_000 {
            s.step().unwrap();
        }
        assert!(s.index_is_consistent());
        assert!(s.audit_residual() < 1e-6, "residual {}", s.audit_residual());
        let conf = s.configuration();
        let cached = conf.death_rates().unwrap().to_vec();
        for (i, r) in cached.iter().enumerate() {
            let fresh = death_rate_at(i, &conf, &p);
            assert!((r - fresh).abs() <= 1e-9 * fresh.max(1.0), "particle {i}");
        }
    }

    #[test]
    fn audits_keep_sum_tight() {
        let p = params(8.0, 1.0, 0.4, 20.0, 0.1);
        let mut s = SimulationState::new(p, &PointConfiguration::empty(), replica_rng(4, 0)).unwrap();
        s.set_audit_interval(1000);
        for _ in 0..20_000 {
            s.step().unwrap();
        }
        let c = s.counters();
        assert_eq!(c.audits, 20);
        assert_eq!(c.births + c.deaths, c.events);
        assert!(c.max_audit_residual < 1e-9);
        assert!(s.index_is_consistent());
    }

    #[test]
    fn event_cap_is_enforced() {
        let p = params(10.0, 0.0, 1.0, 100.0, 1.0);
        let mut s = SimulationState::new(p, &PointConfiguration::empty(), replica_rng(5, 0)).unwrap();
        assert!(matches!(s.advance_to(10.0, 50), Err(Error::CappedRun { cap: 50, .. })));
    }

    #[test]
    fn initial_points_are_validated() {
        let p = params(10.0, 0.0, 1.0, 1.0, 1.0);
        let bad = PointConfiguration::new(vec![[11.0, 0.0, 0.0]]);
        assert!(SimulationState::new(p, &bad, replica_rng(6, 0)).is_err());
    }
}
