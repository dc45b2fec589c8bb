use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::output::{coord_names, num, prepare_dir, write_json, Manifest, Table};
use super::{with_threads, BoundsArgs, Common, HierarchyArgs, SimulateArgs, SurgailisArgs};
use crate::bounds::{
    cell_kappa, cell_rates, closed_moment_bound, continuation_schedule, existence_time, operator_norm_bound,
    schedule_to_horizon, stationary_density_bound, tau, theta_norm, MomentSystem, Schedule, DEFAULT_KAPPA,
    THETA_NORM_ORDERS,
};
use crate::combinatorics::factorial_u128;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimators::{
    density_estimate, falling_binomial, moment_series, pair_correlation_estimate, CellPartition, DensityBins,
    MomentSeries, RadialBins,
};
use crate::hierarchy::{GridMode, HierarchySolver};
use crate::model::{Field, ModelParams, PointConfiguration, Region};
use crate::simulator::{run_replicas, Ensemble, InitialCondition};
use crate::surgailis::{density_at, SurgailisFlow};

/// Estimator layout derived from a config: all bins live in the observation
/// core of the window.
pub(super) struct Observation {
    pub core: Region,
    pub bins: DensityBins,
    pub radial: Option<RadialBins>,
    pub partition: CellPartition,
    pub orders: usize,
    pub n_max: usize,
}

impl Observation {
    pub(super) fn new(config: &Config, params: &ModelParams) -> Result<Self> {
        let est = &config.file.estimators;
        let window = &params.window;
        let core = window.core();
        let shape = match &est.density_bins {
            Some(s) => s.clone(),
            None => window.sides().iter().map(|s| (s.round() as usize).max(1)).collect(),
        };
        let bins = DensityBins::new(core.clone(), &shape)?;
        let radial = if window.is_periodic() && est.radial_bins > 0 {
            Some(RadialBins {
                r_max: est.r_max.unwrap_or(0.5 * window.min_side()),
                count: est.radial_bins,
            })
        } else {
            None
        };
        let partition = match est.cell_side {
            Some(h) => CellPartition::new(&core, h)?,
            None => CellPartition::new(&core, 1.0).unwrap_or_else(|_| CellPartition::whole(core.clone())),
        };
        Ok(Observation {
            core,
            bins,
            radial,
            partition,
            // factorial orders up to n_max are needed for the raw moment identity
            orders: est.l_max.max(est.n_max),
            n_max: est.n_max,
        })
    }

    pub(super) fn moments(&self, ensemble: &Ensemble) -> Result<MomentSeries> {
        moment_series(ensemble, &self.partition, self.orders, self.n_max)
    }
}

fn start_run(subcommand: &str, common: &Common, config: &Config, params: serde_json::Value) -> Result<()> {
    prepare_dir(&common.out)?;
    Manifest::new(subcommand, &common.config, &config.hash, common.seed, &common.out, params).write(&common.out)
}

pub(super) fn simulate(common: &Common, mut args: SimulateArgs) -> Result<()> {
    let config = Config::load(&common.config)?;
    let seed = common
        .seed
        .ok_or_else(|| Error::Config("no seed given: pass --seed or set CONTPOP_SEED".into()))?;
    let mut plan = config.plan(seed)?;
    if let Some(r) = args.replicas {
        plan.replicas = r;
    }
    if let Some(s) = &args.snapshots {
        plan.snapshots = s.clone();
    }
    plan.validate()?;
    args.replicas = Some(plan.replicas);
    args.snapshots = Some(plan.snapshots.clone());
    let params = Arc::new(config.params()?);
    let obs = Observation::new(&config, &params)?;
    start_run("simulate", common, &config, serde_json::to_value(&args)?)?;

    let clock = Instant::now();
    let ensemble = with_threads(common.threads, || run_replicas(&plan, params.clone()))??;
    let wall = clock.elapsed().as_secs_f64();

    let dim = params.window.dim();
    for (i, _) in ensemble.times.iter().enumerate() {
        let mut header = vec!["replica".to_string()];
        header.extend(coord_names(dim));
        let mut table = Table::create(&common.out.join(format!("snapshot_{i}.csv")), &header)?;
        for (r, config) in ensemble.at(i).into_iter().enumerate() {
            for p in config.iter() {
                let mut row = vec![r.to_string()];
                row.extend(p[..dim].iter().map(|&x| num(x)));
                table.row(&row)?;
            }
        }
        table.finish()?;
    }
    write_estimates(&common.out, &ensemble, &params, &obs)?;

    let summary = json!({
        "subcommand": "simulate",
        "wall_time_s": wall,
        "threads": common.threads.unwrap_or_else(rayon::current_num_threads),
        "replicas": ensemble.replicas(),
        "snapshots": ensemble.times,
        "snapshot_files": (0..ensemble.times.len()).map(|i| format!("snapshot_{i}.csv")).collect::<Vec<_>>(),
        "total_events": ensemble.total_events(),
        "max_audit_residual": ensemble.max_audit_residual(),
        "per_replica": ensemble.runs.iter().map(|r| r.stats).collect::<Vec<_>>(),
    });
    write_json(&common.out.join("summary.json"), &summary)
}

fn write_estimates(out: &Path, ensemble: &Ensemble, params: &ModelParams, obs: &Observation) -> Result<()> {
    let series = obs.moments(ensemble)?;
    write_moments(&out.join("moments.csv"), &series)?;

    let dim = params.window.dim();
    let mut header = vec!["t".to_string()];
    header.extend(coord_names(dim));
    header.extend(["value", "stderr", "source"].map(String::from));
    let mut k1 = Table::create(&out.join("k1.csv"), &header)?;
    for (i, &t) in ensemble.times.iter().enumerate() {
        let grid = density_estimate(&ensemble.at(i), &obs.bins)?;
        for (j, c) in grid.centers.iter().enumerate() {
            let mut row = vec![num(t)];
            row.extend(c.iter().map(|&x| num(x)));
            row.extend([num(grid.values[j]), num(grid.stderrs[j]), "simulator".into()]);
            k1.row(&row)?;
        }
    }
    k1.finish()?;

    if let Some(radial) = obs.radial {
        let header = ["t", "r", "value", "stderr", "source"].map(String::from);
        let mut k2 = Table::create(&out.join("k2.csv"), &header)?;
        for (i, &t) in ensemble.times.iter().enumerate() {
            let grid = pair_correlation_estimate(&ensemble.at(i), &params.window, radial)?;
            for (j, c) in grid.centers.iter().enumerate() {
                k2.row(&[num(t), num(c[0]), num(grid.values[j]), num(grid.stderrs[j]), "simulator".into()])?;
            }
        }
        k2.finish()?;
    }
    Ok(())
}

pub(super) fn write_moments(path: &Path, series: &MomentSeries) -> Result<()> {
    let header = ["t", "cell_id", "l_or_n", "kind", "value", "stderr"].map(String::from);
    let mut table = Table::create(path, &header)?;
    for snap in &series.snapshots {
        for cell in &snap.cells {
            for (l, e) in cell.factorial.iter().enumerate() {
                let row = [num(snap.time), cell.cell.to_string(), (l + 1).to_string(), "factorial".into(), num(e.value), num(e.stderr)];
                table.row(&row)?;
            }
            for (n, e) in cell.raw_direct.iter().enumerate() {
                let row = [num(snap.time), cell.cell.to_string(), (n + 1).to_string(), "raw".into(), num(e.value), num(e.stderr)];
                table.row(&row)?;
            }
        }
    }
    table.finish()
}

/// The initial first correlation function; explicit point sets have none.
fn initial_density(config: &Config) -> Result<Field> {
    config
        .initial_density()?
        .ok_or_else(|| Error::Config("this command needs a Poisson or empty initial state".into()))
}

pub(super) fn hierarchy(common: &Common, mut args: HierarchyArgs) -> Result<()> {
    let config = Config::load(&common.config)?;
    let spec = &config.file.hierarchy;
    let closure = match &args.closure {
        Some(name) => name.parse()?,
        None => config.closure()?,
    };
    let n_max = args.nmax.unwrap_or(spec.n_max);
    let dt = args.dt.unwrap_or(spec.dt);
    let nodes = args.nodes.unwrap_or(spec.nodes);
    let snapshots = match (args.snapshots.clone(), args.t_end.or(spec.t_end), &spec.snapshots) {
        (Some(s), _, _) => s,
        (None, Some(end), Some(s)) => {
            let mut v: Vec<f64> = s.iter().cloned().filter(|t| *t < end).collect();
            v.push(end);
            v
        }
        (None, Some(end), None) => vec![end],
        (None, None, Some(s)) => s.clone(),
        (None, None, None) => config.file.simulation.snapshots.clone(),
    };
    args.closure = Some(closure.name().to_string());
    args.nmax = Some(n_max);
    args.dt = Some(dt);
    args.nodes = Some(nodes);
    args.t_end = snapshots.last().copied();
    args.snapshots = Some(snapshots.clone());

    let params = config.params()?;
    let rho0 = initial_density(&config)?;
    let obs = Observation::new(&config, &params)?;
    let solver = HierarchySolver::new(&params, closure, n_max, nodes)?;
    start_run("hierarchy", common, &config, serde_json::to_value(&args)?)?;

    let clock = Instant::now();
    let state0 = solver.initial_state(&rho0)?;
    let traj = solver.integrate(&state0, &snapshots, dt)?;
    let wall = clock.elapsed().as_secs_f64();

    let dim = params.window.dim();
    let mut header = vec!["t".to_string()];
    header.extend(coord_names(dim));
    header.extend(["value", "stderr", "source"].map(String::from));
    let mut k1 = Table::create(&common.out.join("k1.csv"), &header)?;
    for s in &traj.snapshots {
        match s.grid.mode {
            GridMode::Homogeneous => {
                for j in 0..obs.bins.len() {
                    let mut row = vec![num(s.time)];
                    row.extend(obs.bins.center(j).iter().map(|&x| num(x)));
                    row.extend([num(s.k1[0]), num(0.0), "hierarchy".into()]);
                    k1.row(&row)?;
                }
            }
            GridMode::Full1d => {
                for (i, v) in s.k1.iter().enumerate() {
                    k1.row(&[num(s.time), num(s.grid.node(i)), num(*v), num(0.0), "hierarchy".into()])?;
                }
            }
        }
    }
    k1.finish()?;
    let header = ["t", "r", "value", "stderr", "source"].map(String::from);
    let mut k2 = Table::create(&common.out.join("k2.csv"), &header)?;
    for s in &traj.snapshots {
        for (r, v) in s.radial_k2() {
            k2.row(&[num(s.time), num(r), num(v), num(0.0), "hierarchy".into()])?;
        }
    }
    k2.finish()?;

    let summary = json!({
        "subcommand": "hierarchy",
        "wall_time_s": wall,
        "closure": closure.name(),
        "n_max": n_max,
        "dt": dt,
        "grid": solver.grid(),
        "steps": traj.steps,
        "clip_events": traj.clip_events,
        "clipped_mass": traj.clipped_mass,
        "mean_density": traj.snapshots.iter().map(|s| json!({"t": s.time, "value": s.mean_density()})).collect::<Vec<_>>(),
    });
    write_json(&common.out.join("summary.json"), &summary)
}

pub(super) fn surgailis(common: &Common, mut args: SurgailisArgs) -> Result<()> {
    let config = Config::load(&common.config)?;
    let times = args
        .times
        .clone()
        .or_else(|| config.file.surgailis.times.clone())
        .unwrap_or_else(|| config.file.simulation.snapshots.clone());
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::Config("output times must be finite and nonnegative".into()));
    }
    let params = config.params()?;
    let rho0 = initial_density(&config)?;
    let obs = Observation::new(&config, &params)?;
    let bins = match args.nodes.or(config.file.surgailis.nodes) {
        Some(n) => DensityBins::new(obs.core.clone(), &vec![n; params.window.dim()])?,
        None => obs.bins.clone(),
    };
    args.times = Some(times.clone());
    args.nodes = Some(bins.shape[0]);
    start_run("surgailis", common, &config, serde_json::to_value(&args)?)?;

    let clock = Instant::now();
    let dim = params.window.dim();
    let mut header = vec!["t".to_string()];
    header.extend(coord_names(dim));
    header.push("value".into());
    let mut table = Table::create(&common.out.join("rho.csv"), &header)?;
    for &t in &times {
        let flow = SurgailisFlow::new(&params.rates, t)?;
        for j in 0..bins.len() {
            let c = bins.center(j);
            let mut x = [0.0; 3];
            x[..dim].copy_from_slice(&c);
            let mut row = vec![num(t)];
            row.extend(c.iter().map(|&v| num(v)));
            row.push(num(density_at(&rho0, &flow, &x)));
            table.row(&row)?;
        }
    }
    table.finish()?;
    let summary = json!({
        "subcommand": "surgailis",
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "times": times,
        "points_per_time": bins.len(),
    });
    write_json(&common.out.join("summary.json"), &summary)
}

#[derive(Serialize)]
struct CellReport {
    cell: usize,
    volume: f64,
    b_cell: f64,
    a_cell: f64,
    kappa: Option<f64>,
    q0: Vec<f64>,
    closed_bounds: Vec<f64>,
    times: Vec<f64>,
    trajectories: Vec<Vec<f64>>,
    note: Option<String>,
}

fn schedule_summary(s: &Schedule) -> serde_json::Value {
    json!({
        "kappa": s.kappa,
        "theta0": s.theta0,
        "steps": s.steps.len(),
        "total_time": s.total_time(),
        "final_theta": s.steps.last().map(|st| st.theta),
        "max_identity_residual": s.max_identity_residual(),
    })
}

fn write_schedule(path: &Path, s: &Schedule) -> Result<()> {
    let header = ["n", "t", "theta", "cumulative", "identity_residual"].map(String::from);
    let mut table = Table::create(path, &header)?;
    for st in &s.steps {
        table.row(&[st.n.to_string(), num(st.t), num(st.theta), num(st.cumulative), num(st.identity_residual)])?;
    }
    table.finish()
}

/// Factorial moments of the initial state in one cell.
fn initial_factorials(initial: &InitialCondition, cell: &Region, orders: usize) -> Vec<f64> {
    match initial {
        InitialCondition::Empty => vec![0.0; orders],
        InitialCondition::Poisson(rho) => {
            let mass = rho.integral(cell);
            (1..=orders).map(|l| mass.powi(l as i32) / factorial_u128(l) as f64).collect()
        }
        InitialCondition::Explicit(points) => {
            let n = PointConfiguration::new(points.clone()).count_in(cell) as u64;
            (1..=orders).map(|l| falling_binomial(n, l) as f64).collect()
        }
    }
}

pub(super) fn bounds(common: &Common, args: BoundsArgs) -> Result<()> {
    let config = Config::load(&common.config)?;
    let params = config.params()?;
    let norms = params.norms();
    let theta0 = params.theta0;
    let kappa = args.kappa.unwrap_or(DEFAULT_KAPPA);
    start_run("bounds", common, &config, serde_json::to_value(&args)?)?;

    let mut report = serde_json::Map::new();
    report.insert("norms".into(), serde_json::to_value(norms)?);
    report.insert("theta0".into(), json!(theta0));
    report.insert("operator_norm".into(), serde_json::to_value(operator_norm_bound(theta0, theta0 + 1.0, &norms)?)?);
    report.insert("existence_time".into(), json!(existence_time(theta0, theta0 + 1.0, &norms)?));
    report.insert("tau".into(), json!(tau(theta0, &norms)));
    let density = match (config.initial_density()?, stationary_density_bound(&params, &Field::Constant(0.0))) {
        (Some(k0), Ok(_)) => {
            let b = stationary_density_bound(&params, &k0)?;
            json!({"global": b.global(), "b_over_a0": norms.b_sup / b.a_origin})
        }
        (None, Ok(_)) => json!({"note": "explicit initial state has no bounded density"}),
        (_, Err(_)) => json!({"note": "a(0) = 0: no stationary bound"}),
    };
    report.insert("stationary_density".into(), density);

    if let Some(n) = args.schedule {
        let s = continuation_schedule(theta0, kappa, &norms, n)?;
        write_schedule(&common.out.join("schedule.csv"), &s)?;
        report.insert("schedule".into(), schedule_summary(&s));
    }
    if let Some(h) = args.horizon {
        let s = schedule_to_horizon(theta0, kappa, &norms, h)?;
        report.insert("horizon".into(), json!({"horizon": h, "schedule": schedule_summary(&s)}));
    }
    if let Some(ms) = &args.moment_system {
        let (l, t_end) = (ms[0], ms[1]);
        if !(l >= 1.0 && l.fract() == 0.0 && t_end >= 0.0) {
            return Err(Error::Config("--moment-system needs an integer order >= 1 and t_end >= 0".into()));
        }
        let l = l as usize;
        let initial = config.initial()?;
        let obs = Observation::new(&config, &params)?;
        let times: Vec<f64> = (0..=10).map(|i| t_end * i as f64 / 10.0).collect();
        let mut cells = Vec::new();
        for (id, cell) in obs.partition.cells.iter().enumerate() {
            let rates = cell_rates(&params, cell)?;
            let q0 = initial_factorials(&initial, cell, l);
            let mut entry = CellReport {
                cell: id,
                volume: rates.volume,
                b_cell: rates.b_cell,
                a_cell: rates.a_cell,
                kappa: None,
                q0: q0.clone(),
                closed_bounds: Vec::new(),
                times: times.clone(),
                trajectories: Vec::new(),
                note: None,
            };
            if rates.a_cell > 0.0 {
                let kappa = cell_kappa(rates.volume, theta0, rates.b_cell, rates.a_cell)?;
                entry.kappa = Some(kappa);
                entry.closed_bounds = (1..=l).map(|k| closed_moment_bound(kappa, k)).collect();
                entry.trajectories = MomentSystem::new(&q0, rates.b_cell, rates.a_cell)?.trajectories(&times);
            } else {
                entry.note = Some("a_cell = 0: no moment bound".into());
            }
            cells.push(entry);
        }
        report.insert("moment_system".into(), serde_json::to_value(cells)?);
    }
    if let Some(theta) = args.theta_norm {
        let rho = initial_density(&config)?;
        let sup = rho.sup();
        let orders: Vec<Vec<f64>> = (1..=THETA_NORM_ORDERS).map(|n| vec![sup.powi(n as i32)]).collect();
        let refs: Vec<&[f64]> = orders.iter().map(|v| v.as_slice()).collect();
        report.insert("theta_norm".into(), serde_json::to_value(theta_norm(&refs, theta)?)?);
    }
    write_json(&common.out.join("bounds.json"), &report)
}
