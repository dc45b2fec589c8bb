use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{sample_initial, Counters, InitialCondition, SimulationState, AUDIT_INTERVAL};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PointConfiguration};
use crate::rng::replica_rng;

pub const DEFAULT_MAX_EVENTS: u64 = 100_000_000;

/// What to simulate: how many replicas, from which seed, observed when.
#[derive(Clone, Debug)]
pub struct ReplicaPlan {
    pub replicas: usize,
    pub base_seed: u64,
    pub snapshots: Vec<f64>,
    pub initial: InitialCondition,
    pub max_events: u64,
    pub audit_interval: u64,
}

impl ReplicaPlan {
    pub fn new(replicas: usize, base_seed: u64, snapshots: Vec<f64>, initial: InitialCondition) -> Self {
        ReplicaPlan {
            replicas,
            base_seed,
            snapshots,
            initial,
            max_events: DEFAULT_MAX_EVENTS,
            audit_interval: AUDIT_INTERVAL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::domain("at least one replica is required"));
        }
        if self.snapshots.is_empty() {
            return Err(Error::domain("snapshot grid is empty"));
        }
        if self.snapshots.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::domain("snapshot times must be finite and nonnegative"));
        }
        if self.snapshots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("snapshot grid must be strictly increasing"));
        }
        Ok(())
    }
}

/// Per-replica bookkeeping reported alongside the snapshots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReplicaStats {
    pub replica: usize,
    #[serde(flatten)]
    pub counters: Counters,
    /// Relative gap between the running `D_tot` and a fresh sum at the end.
    pub final_audit_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaRun {
    pub snapshots: Vec<PointConfiguration>,
    pub stats: ReplicaStats,
}

/// Snapshots of every replica, ordered by replica index.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub runs: Vec<ReplicaRun>,
}

impl Ensemble {
    pub fn replicas(&self) -> usize {
        self.runs.len()
    }

    /// All replicas' configurations at snapshot `i`.
    pub fn at(&self, i: usize) -> Vec<&PointConfiguration> {
        self.runs.iter().map(|r| &r.snapshots[i]).collect()
    }

    pub fn max_audit_residual(&self) -> f64 {
        self.runs
            .iter()
            .map(|r| r.stats.counters.max_audit_residual.max(r.stats.final_audit_residual))
            .fold(0.0, f64::max)
    }

    pub fn total_events(&self) -> u64 {
        self.runs.iter().map(|r| r.stats.counters.events).sum()
    }
}

fn run_one(plan: &ReplicaPlan, params: &Arc<ModelParams>, replica: usize) -> Result<ReplicaRun> {
    let mut rng = replica_rng(plan.base_seed, replica as u64);
    let init = sample_initial(&plan.initial, &params.window, &mut rng)?;
    let mut state = SimulationState::new(params.clone(), &init, rng)?;
    state.set_audit_interval(plan.audit_interval);
    let mut snapshots = Vec::with_capacity(plan.snapshots.len());
    for &t in &plan.snapshots {
        state.advance_to(t, plan.max_events).map_err(|e| match e {
            Error::CappedRun { cap, .. } => Error::CappedRun { replica, cap },
            other => other,
        })?;
        snapshots.push(PointConfiguration::new(state.configuration().points().to_vec()));
    }
    Ok(ReplicaRun {
        snapshots,
        stats: ReplicaStats {
            replica,
            counters: state.counters(),
            final_audit_residual: state.audit_residual(),
        },
    })
}

/// Simulates every replica of the plan, in parallel on the current rayon pool.
/// The result does not depend on the number of threads.
pub fn run_replicas(plan: &ReplicaPlan, params: Arc<ModelParams>) -> Result<Ensemble> {
    plan.validate()?;
    let runs = (0..plan.replicas)
        .into_par_iter()
        .map(|r| run_one(plan, &params, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        times: plan.snapshots.clone(),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CompetitionKernel, Field, RateField, Window};

    fn params(amp: f64) -> Arc<ModelParams> {
        Arc::new(
            ModelParams::new(
                Window::periodic(&[10.0]).unwrap(),
                CompetitionKernel::gaussian(1, amp, 0.5).unwrap(),
                RateField::constant(1.0, 1.0).unwrap(),
                0.0,
            )
            .unwrap(),
        )
    }

    #[test]
    fn snapshot_grid_must_increase() {
        let plan = ReplicaPlan::new(1, 0, vec![1.0, 1.0], InitialCondition::Empty);
        assert!(run_replicas(&plan, params(0.1)).is_err());
        let plan = ReplicaPlan::new(1, 0, vec![], InitialCondition::Empty);
        assert!(run_replicas(&plan, params(0.1)).is_err());
    }

    #[test]
    fn time_zero_returns_initial_configuration() {
        let init = InitialCondition::Poisson(Field::constant(2.0).unwrap());
        let plan = ReplicaPlan::new(1, 17, vec![0.0], init.clone());
        let e = run_replicas(&plan, params(0.1)).unwrap();
        let mut rng = replica_rng(17, 0);
        let direct = sample_initial(&init, &Window::periodic(&[10.0]).unwrap(), &mut rng).unwrap();
        assert_eq!(e.runs[0].snapshots[0], direct);
        assert_eq!(e.runs[0].stats.counters.events, 0);
    }

    #[test]
    fn reproducible_across_pools() {
        let plan = ReplicaPlan::new(6, 5, vec![0.5, 2.0], InitialCondition::Empty);
        let a = run_replicas(&plan, params(0.3)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_replicas(&plan, params(0.3)).unwrap());
        assert_eq!(a, b);
        assert_ne!(a.runs[0].snapshots, a.runs[1].snapshots);
    }

    #[test]
    fn capped_run_names_replica() {
        let mut plan = ReplicaPlan::new(3, 1, vec![50.0], InitialCondition::Empty);
        plan.max_events = 5;
        match run_replicas(&plan, params(0.0)) {
            Err(Error::CappedRun { replica, cap }) => {
                assert!(replica < 3);
                assert_eq!(cap, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
