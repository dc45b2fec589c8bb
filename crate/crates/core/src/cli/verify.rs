use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::commands::Observation;
use super::output::{parse_num, read_table, write_json, Manifest};
use super::{load_checked, with_threads, SimulateArgs, VerifyArgs};
use crate::bounds::{cell_kappa, cell_rates, closed_moment_bound, stationary_density_bound, MomentSystem};
use crate::combinatorics::{factorial_u128, StirlingTable};
use crate::error::{Error, Result};
use crate::estimators::{cell_moments, two_cell_check, Estimate, MomentSeries, MomentSnapshot};
use crate::model::{point_from_slice, Field, ModelParams, PointConfiguration, Region};
use crate::simulator::InitialCondition;
use crate::surgailis::{expected_count, expected_count_field, SurgailisFlow};

const SIGMAS: f64 = 3.0;
const IDENTITY_RTOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    /// Smallest slack over everything compared; negative on failure.
    pub margin: Option<f64>,
    pub detail: String,
}

impl Check {
    fn skip(name: &'static str, why: &str) -> Self {
        Check {
            name,
            status: Status::Skip,
            margin: None,
            detail: why.to_string(),
        }
    }

    fn from_margin(name: &'static str, margin: f64, detail: String) -> Self {
        Check {
            name,
            status: if margin >= 0.0 { Status::Pass } else { Status::Fail },
            margin: Some(margin),
            detail,
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    run: &'a Path,
    config_hash: &'a str,
    passed: bool,
    checks: &'a [Check],
}

/// Treats an undefined error bar as zero width.
fn sigma(e: &Estimate) -> f64 {
    if e.stderr.is_finite() {
        SIGMAS * e.stderr
    } else {
        0.0
    }
}

pub(super) fn verify(args: &VerifyArgs) -> Result<i32> {
    let manifest = Manifest::read(&args.run.join("manifest.json"))?;
    if manifest.subcommand != "simulate" {
        return Err(Error::Config(format!(
            "verify needs a simulate run, {} holds a {} run",
            args.run.display(),
            manifest.subcommand
        )));
    }
    let config_path = args.config.clone().unwrap_or_else(|| manifest.config.clone());
    let config = load_checked(&config_path, &manifest.config_hash)
        .map_err(|e| Error::Config(format!("verification refused: {e}")))?;
    let sim: SimulateArgs = serde_json::from_value(manifest.params.clone())
        .map_err(|_| Error::Config("manifest parameters for simulate are malformed".into()))?;
    let (replicas, times) = match (sim.replicas, sim.snapshots) {
        (Some(r), Some(t)) => (r, t),
        _ => return Err(Error::Config("manifest lacks resolved replicas and snapshots".into())),
    };
    let params = config.params()?;
    let initial = config.initial()?;
    let obs = Observation::new(&config, &params)?;
    let snapshots = load_snapshots(&args.run, &params, replicas, times.len())?;

    let checks = with_threads(args.threads, || -> Result<Vec<Check>> {
        let refs: Vec<Vec<&PointConfiguration>> = snapshots.iter().map(|s| s.iter().collect()).collect();
        let series = series_from(&refs, &times, &obs)?;
        Ok(vec![
            oracle_check(&params, &initial, &obs.core, &times, &refs)?,
            domination_check(&params, &initial, &obs.core, &times, &refs)?,
            density_bound_check(&params, &config.initial_density()?, &obs.core, &times, &refs)?,
            moment_envelope_check(&params, &series, &obs, config.file.estimators.l_max)?,
            two_cell(&obs, &times, &refs),
            identity_check(&args.run.join("moments.csv"))?,
            consistency_check(&args.run.join("moments.csv"), &series)?,
        ])
    })??;

    let passed = checks.iter().all(|c| c.status != Status::Fail);
    for c in &checks {
        let status = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        match c.margin {
            Some(m) => println!("{status} {:<24} margin {m:.6e}  {}", c.name, c.detail),
            None => println!("{status} {:<24} {}", c.name, c.detail),
        }
    }
    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    std::fs::create_dir_all(&out)?;
    let report = Report {
        run: &args.run,
        config_hash: &config.hash,
        passed,
        checks: &checks,
    };
    write_json(&out.join("verify.json"), &report)?;
    Ok(if passed { 0 } else { 1 })
}

fn load_snapshots(run: &Path, params: &ModelParams, replicas: usize, count: usize) -> Result<Vec<Vec<PointConfiguration>>> {
    let dim = params.window.dim();
    let mut all = Vec::with_capacity(count);
    for i in 0..count {
        let path = run.join(format!("snapshot_{i}.csv"));
        let (header, rows) = read_table(&path)?;
        if header.len() != dim + 1 {
            return Err(Error::Config(format!("{}: expected {} columns", path.display(), dim + 1)));
        }
        let mut configs = vec![PointConfiguration::empty(); replicas];
        for row in rows {
            let r = parse_num(&row[0], &path)? as usize;
            if r >= replicas {
                return Err(Error::Config(format!("{}: replica {r} out of range", path.display())));
            }
            let xs = row[1..].iter().map(|s| parse_num(s, &path)).collect::<Result<Vec<_>>>()?;
            configs[r].push(point_from_slice(dim, &xs)?);
        }
        all.push(configs);
    }
    Ok(all)
}

fn series_from(refs: &[Vec<&PointConfiguration>], times: &[f64], obs: &Observation) -> Result<MomentSeries> {
    let mut snapshots = Vec::with_capacity(times.len());
    for (configs, &t) in refs.iter().zip(times) {
        snapshots.push(MomentSnapshot {
            time: t,
            cells: cell_moments(configs, &obs.partition, obs.orders, obs.n_max)?,
        });
    }
    Ok(MomentSeries {
        l_max: obs.orders,
        n_max: obs.n_max,
        snapshots,
    })
}

fn mean_density(configs: &[&PointConfiguration], core: &Region) -> Estimate {
    let v = core.volume();
    let samples: Vec<f64> = configs.iter().map(|c| c.count_in(core) as f64 / v).collect();
    Estimate::from_samples(&samples)
}

/// Expected density over `core` at time `t` without competition.
pub fn oracle_density(params: &ModelParams, initial: &InitialCondition, core: &Region, t: f64) -> Result<f64> {
    let flow = SurgailisFlow::new(&params.rates, t)?;
    let m_constant = params.rates.m.is_constant();
    let from_field = |rho: &Field| -> Result<f64> {
        if m_constant {
            expected_count(core, &flow, rho.integral(core))
        } else {
            Ok(expected_count_field(core, &flow, rho))
        }
    };
    let count = match initial {
        InitialCondition::Poisson(rho) => from_field(rho)?,
        InitialCondition::Empty => from_field(&Field::Constant(0.0))?,
        InitialCondition::Explicit(points) => {
            let survivors: f64 = points
                .iter()
                .map(|x| params.window.wrap(x))
                .filter(|x| core.contains(x))
                .map(|x| flow.psi(&x))
                .sum();
            survivors + from_field(&Field::Constant(0.0))?
        }
    };
    Ok(count / core.volume())
}

fn oracle_check(
    params: &ModelParams,
    initial: &InitialCondition,
    core: &Region,
    times: &[f64],
    refs: &[Vec<&PointConfiguration>],
) -> Result<Check> {
    const NAME: &str = "oracle-equivalence";
    if !params.kernel.is_zero() {
        return Ok(Check::skip(NAME, "competition present"));
    }
    let mut margin = f64::INFINITY;
    let mut worst = String::new();
    for (configs, &t) in refs.iter().zip(times) {
        let est = mean_density(configs, core);
        let target = oracle_density(params, initial, core, t)?;
        let m = sigma(&est) + 1e-12 * target.max(1.0) - (est.value - target).abs();
        if m < margin {
            margin = m;
            worst = format!("t = {t}: density {:.6} ± {:.2e} vs {target:.6}", est.value, est.stderr);
        }
    }
    Ok(Check::from_margin(NAME, margin, worst))
}

fn domination_check(
    params: &ModelParams,
    initial: &InitialCondition,
    core: &Region,
    times: &[f64],
    refs: &[Vec<&PointConfiguration>],
) -> Result<Check> {
    let mut margin = f64::INFINITY;
    let mut worst = String::new();
    for (configs, &t) in refs.iter().zip(times) {
        let est = mean_density(configs, core);
        let bound = oracle_density(params, initial, core, t)?;
        let m = bound + sigma(&est) + 1e-12 * bound.max(1.0) - est.value;
        if m < margin {
            margin = m;
            worst = format!("t = {t}: density {:.6} vs competition-free {bound:.6}", est.value);
        }
    }
    Ok(Check::from_margin("domination", margin, worst))
}

fn density_bound_check(
    params: &ModelParams,
    k0: &Option<Field>,
    core: &Region,
    times: &[f64],
    refs: &[Vec<&PointConfiguration>],
) -> Result<Check> {
    const NAME: &str = "density-bound";
    let Some(k0) = k0 else {
        return Ok(Check::skip(NAME, "explicit initial state has no bounded density"));
    };
    let Ok(bound) = stationary_density_bound(params, k0) else {
        return Ok(Check::skip(NAME, "a(0) = 0"));
    };
    let level = bound.global();
    let mut margin = f64::INFINITY;
    let mut worst = String::new();
    for (configs, &t) in refs.iter().zip(times) {
        let est = mean_density(configs, core);
        let m = level + sigma(&est) - est.value;
        if m < margin {
            margin = m;
            worst = format!("t = {t}: density {:.6} vs bound {level:.6}", est.value);
        }
    }
    Ok(Check::from_margin(NAME, margin, worst))
}

/// Sub-Poissonian parameter implied by measured factorial moments:
/// the smallest θ with `q_l <= (V e^θ)^l / l!` for every order.
fn measured_theta(q: &[f64], volume: f64) -> f64 {
    q.iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| {
            let l = (i + 1) as f64;
            ((factorial_u128(i + 1) as f64 * v).powf(1.0 / l) / volume).ln()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn moment_envelope_check(params: &ModelParams, series: &MomentSeries, obs: &Observation, l_max: usize) -> Result<Check> {
    const NAME: &str = "moment-envelope";
    let Some(first) = series.snapshots.first() else {
        return Ok(Check::skip(NAME, "no snapshots"));
    };
    let t0 = first.time;
    let mut margin = f64::INFINITY;
    let mut worst = String::new();
    let mut checked = 0usize;
    for (id, cell) in obs.partition.cells.iter().enumerate() {
        let rates = cell_rates(params, cell)?;
        if !(rates.a_cell > 0.0) {
            continue;
        }
        let q0: Vec<f64> = (1..=l_max).map(|l| first.cells[id].q(l)).collect();
        let theta = params.theta0.max(measured_theta(&q0, rates.volume));
        let kappa = cell_kappa(rates.volume, theta, rates.b_cell, rates.a_cell)?;
        let system = MomentSystem::new(&q0, rates.b_cell, rates.a_cell)?;
        for snap in &series.snapshots {
            for l in 1..=l_max {
                let est = snap.cells[id].factorial[l - 1];
                let closed = closed_moment_bound(kappa, l);
                let ode = system.value(l, snap.time - t0);
                let m = closed.min(ode) * (1.0 + 1e-9) + sigma(&est) - est.value;
                checked += 1;
                if m < margin {
                    margin = m;
                    worst = format!(
                        "cell {id}, t = {}, l = {l}: q = {:.4e}, closed {closed:.4e}, ode {ode:.4e}",
                        snap.time, est.value
                    );
                }
            }
        }
    }
    if checked == 0 {
        return Ok(Check::skip(NAME, "no cell with positive competition infimum"));
    }
    Ok(Check::from_margin(NAME, margin, worst))
}

fn two_cell(obs: &Observation, times: &[f64], refs: &[Vec<&PointConfiguration>]) -> Check {
    const NAME: &str = "two-cell";
    let cells = &obs.partition.cells;
    if cells.len() < 2 {
        return Check::skip(NAME, "single cell");
    }
    let mut margin = f64::INFINITY;
    let mut worst = String::new();
    for (configs, &t) in refs.iter().zip(times) {
        for pair in cells.windows(2).enumerate() {
            let (i, w) = pair;
            let c = two_cell_check(configs, &w[0], &w[1]);
            let m = c.bound - c.cross.value;
            if m < margin {
                margin = m;
                worst = format!("t = {t}, cells {i},{}: cross {:.4e} vs {:.4e}", i + 1, c.cross.value, c.bound);
            }
        }
    }
    Check::from_margin(NAME, margin, worst)
}

type MomentRows = BTreeMap<(String, usize), (BTreeMap<usize, f64>, BTreeMap<usize, f64>)>;

fn read_moments(path: &Path) -> Result<MomentRows> {
    let (header, rows) = read_table(path)?;
    let expected = ["t", "cell_id", "l_or_n", "kind", "value", "stderr"];
    if header != expected {
        return Err(Error::Config(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut out: MomentRows = BTreeMap::new();
    for row in rows {
        let cell = parse_num(&row[1], path)? as usize;
        let order = parse_num(&row[2], path)? as usize;
        let value = parse_num(&row[4], path)?;
        let entry = out.entry((row[0].clone(), cell)).or_default();
        match row[3].as_str() {
            "factorial" => entry.0.insert(order, value),
            "raw" => entry.1.insert(order, value),
            other => return Err(Error::Config(format!("{}: unknown kind {other:?}", path.display()))),
        };
    }
    Ok(out)
}

/// Raw moments in the file against the Stirling sum of the factorial rows.
fn identity_check(path: &Path) -> Result<Check> {
    const NAME: &str = "moment-identity";
    let rows = read_moments(path)?;
    let table = StirlingTable::shared();
    let mut margin = f64::INFINITY;
    let mut worst = String::new();
    for ((t, cell), (fact, raw)) in &rows {
        for (&n, &direct) in raw {
            let mut sum = 0.0;
            for l in 1..=n {
                let Some(f) = fact.get(&l) else {
                    return Ok(Check {
                        name: NAME,
                        status: Status::Fail,
                        margin: None,
                        detail: format!("t = {t}, cell {cell}: factorial order {l} missing"),
                    });
                };
                sum += factorial_u128(l) as f64 * table.get_u128(n, l)? as f64 * f;
            }
            let m = IDENTITY_RTOL * direct.abs().max(1e-300) - (sum - direct).abs();
            if m < margin {
                margin = m;
                worst = format!("t = {t}, cell {cell}, n = {n}: direct {direct:.12e}, Stirling sum {sum:.12e}");
            }
        }
    }
    if !margin.is_finite() {
        return Ok(Check::skip(NAME, "no raw moments"));
    }
    Ok(Check::from_margin(NAME, margin, worst))
}

/// File values against moments recomputed from the snapshot files.
fn consistency_check(path: &Path, series: &MomentSeries) -> Result<Check> {
    const NAME: &str = "moments-match-snapshots";
    let rows = read_moments(path)?;
    let mut margin = f64::INFINITY;
    let mut worst = String::from("all rows agree");
    let mut seen = 0usize;
    for snap in &series.snapshots {
        for cell in &snap.cells {
            let key = (super::output::num(snap.time), cell.cell);
            let Some((fact, raw)) = rows.get(&key) else {
                return Ok(Check {
                    name: NAME,
                    status: Status::Fail,
                    margin: None,
                    detail: format!("t = {}, cell {} missing from moments.csv", snap.time, cell.cell),
                });
            };
            let pairs = cell
                .factorial
                .iter()
                .enumerate()
                .map(|(i, e)| (fact.get(&(i + 1)), e.value))
                .chain(cell.raw_direct.iter().enumerate().map(|(i, e)| (raw.get(&(i + 1)), e.value)));
            for (file, fresh) in pairs {
                seen += 1;
                let m = match file {
                    Some(v) => 1e-12 * fresh.abs().max(1e-300) - (v - fresh).abs(),
                    None => -1.0,
                };
                if m < margin {
                    margin = m;
                    worst = format!("t = {}, cell {}: file {file:?} vs recomputed {fresh}", snap.time, cell.cell);
                }
            }
        }
    }
    let expected_rows: usize = rows.values().map(|(f, r)| f.len() + r.len()).sum();
    if expected_rows != seen {
        return Ok(Check {
            name: NAME,
            status: Status::Fail,
            margin: None,
            detail: format!("moments.csv has {expected_rows} rows, recomputation has {seen}"),
        });
    }
    Ok(Check::from_margin(NAME, margin, worst))
}
