//! Acceptance battery. Runs without the libtest harness so that every
//! criterion prints its own PASS/FAIL line; exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use contpop::bounds::{cell_kappa, cell_rates, closed_moment_bound, continuation_schedule, schedule_to_horizon, MomentSystem};
use contpop::combinatorics::{factorial_u128, StirlingTable};
use contpop::estimators::{factorial_moment, moment_series, two_cell_check, CellPartition, Estimate};
use contpop::hierarchy::{Closure, HierarchySolver};
use contpop::model::{
    CompetitionKernel, Field, KernelShape, ModelNorms, ModelParams, PointConfiguration, RateField, Region, Window,
};
use contpop::simulator::{run_replicas, Ensemble, InitialCondition, ReplicaPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SEED: u64 = 20_261_017;

fn constant(v: f64) -> Field {
    Field::constant(v).unwrap()
}

fn line_params(kernel: CompetitionKernel, b: Field, m: Field) -> ModelParams {
    ModelParams::new(Window::periodic(&[10.0]).unwrap(), kernel, RateField::new(b, m), 0.0).unwrap()
}

fn free_params() -> ModelParams {
    line_params(CompetitionKernel::zero(1).unwrap(), constant(1.0), constant(1.0))
}

/// ⟨a⟩ = 1 and a(0) = 1 in one dimension.
fn competition_params() -> ModelParams {
    let s = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let kernel = CompetitionKernel::gaussian(1, 1.0, s).unwrap();
    let p = ModelParams::new(
        Window::periodic(&[10.0]).unwrap(),
        kernel,
        RateField::new(constant(1.0), constant(0.0)),
        0.5f64.ln(),
    )
    .unwrap();
    let n = p.norms();
    assert!((n.a_mass - 1.0).abs() < 1e-8 && (n.a_origin - 1.0).abs() < 1e-15);
    p
}

fn density(configs: &[&PointConfiguration], region: &Region) -> Estimate {
    let v = region.volume();
    let xs: Vec<f64> = configs.iter().map(|c| c.count_in(region) as f64 / v).collect();
    Estimate::from_samples(&xs)
}

fn three_sigma(e: &Estimate) -> f64 {
    3.0 * e.stderr
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let params = Arc::new(free_params());
    let plan = ReplicaPlan::new(200, SEED, vec![0.5, 1.0, 2.0, 5.0], InitialCondition::Empty);
    let clock = Instant::now();
    let ens = run_replicas(&plan, params.clone()).map_err(|e| e.to_string())?;
    let wall = clock.elapsed().as_secs_f64();
    let core = params.window.core();
    let mut worst = 0.0f64;
    let mut ok = wall < 60.0;
    for (i, &t) in ens.times.iter().enumerate() {
        let est = density(&ens.at(i), &core);
        let target = 1.0 - (-t).exp();
        let z = (est.value - target).abs() / est.stderr;
        worst = worst.max(z);
        ok &= est.within(target, 3.0);
    }
    check(ok, format!("max |z| = {worst:.2} over 4 snapshots, wall {wall:.2} s"))
}

fn criterion_2() -> Outcome {
    let params = free_params();
    let solver = HierarchySolver::new(&params, Closure::ZeroThirdCumulant, 2, 64).map_err(|e| e.to_string())?;
    let state0 = solver.initial_state(&constant(0.0)).map_err(|e| e.to_string())?;
    let traj = solver.integrate(&state0, &[2.0], 1e-3).map_err(|e| e.to_string())?;
    let s = &traj.snapshots[0];
    let exact = 1.0 - (-2.0f64).exp();
    let e1 = (s.k1[0] - exact).abs();
    let rho = s.k1[0];
    let e2 = s.radial_k2().iter().map(|(_, v)| (v - rho * rho).abs()).fold(0.0, f64::max);
    check(e1 <= 1e-6 && e2 <= 1e-6, format!("|rho - (1 - e^-2)| = {e1:.2e}, max_r |k2 - rho^2| = {e2:.2e}"))
}

struct CompetitionRun {
    params: Arc<ModelParams>,
    ens: Ensemble,
}

fn competition_run() -> CompetitionRun {
    let params = Arc::new(competition_params());
    let mut times = vec![0.0, 1.0, 2.0];
    times.extend((1..=10).map(|k| 5.0 * k as f64));
    let plan = ReplicaPlan::new(200, SEED + 3, times, InitialCondition::Poisson(constant(0.5)));
    let ens = run_replicas(&plan, params.clone()).expect("competition run");
    CompetitionRun { params, ens }
}

fn criterion_3(run: &CompetitionRun) -> Outcome {
    let core = run.params.window.core();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &t) in run.ens.times.iter().enumerate() {
        if ![1.0, 2.0, 5.0].contains(&t) {
            continue;
        }
        let est = density(&run.ens.at(i), &core);
        let oracle = 0.5 + t;
        ok &= est.value <= oracle + three_sigma(&est);
        parts.push(format!("t={t}: {:.3} <= {oracle}", est.value));
    }
    check(ok, parts.join(", "))
}

fn criterion_4(run: &CompetitionRun) -> Outcome {
    let core = run.params.window.core();
    let n = run.params.norms();
    let level = 0.5f64.max(n.b_sup / n.a_origin);
    let partition = CellPartition::new(&core, 1.0).unwrap();
    let mut density_ok = true;
    let mut two_cell_ok = true;
    let mut worst = (0.0, f64::NEG_INFINITY, 0.0);
    for (i, &t) in run.ens.times.iter().enumerate() {
        if t != 0.0 && t % 5.0 != 0.0 {
            continue;
        }
        let configs = run.ens.at(i);
        let est = density(&configs, &core);
        let excess = (est.value - level) / est.stderr;
        if excess > worst.1 {
            worst = (t, excess, est.value);
        }
        density_ok &= est.value <= level + three_sigma(&est);
        for w in partition.cells.windows(2) {
            two_cell_ok &= two_cell_check(&configs, &w[0], &w[1]).holds;
        }
    }
    check(
        density_ok && two_cell_ok,
        format!(
            "density bound {level}: worst t={} density {:.4} ({:+.1} sigma); two-cell bound {}",
            worst.0,
            worst.2,
            worst.1,
            if two_cell_ok { "holds" } else { "violated" }
        ),
    )
}

fn criterion_5(run: &CompetitionRun) -> Outcome {
    let core = run.params.window.core();
    let partition = CellPartition::new(&core, 1.0).unwrap();
    let series = moment_series(&run.ens, &partition, 4, 4).map_err(|e| e.to_string())?;
    let first = &series.snapshots[0];
    let mut closed_margin = f64::INFINITY;
    let mut ode_margin = f64::INFINITY;
    for (id, cell) in partition.cells.iter().enumerate() {
        let rates = cell_rates(&run.params, cell).map_err(|e| e.to_string())?;
        let q0: Vec<f64> = (1..=4).map(|l| first.cells[id].q(l)).collect();
        let measured = q0
            .iter()
            .enumerate()
            .filter(|(_, q)| **q > 0.0)
            .map(|(i, q)| ((factorial_u128(i + 1) as f64 * q).powf(1.0 / (i + 1) as f64) / rates.volume).ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let theta = run.params.theta0.max(measured);
        let kappa = cell_kappa(rates.volume, theta, rates.b_cell, rates.a_cell).map_err(|e| e.to_string())?;
        let system = MomentSystem::new(&q0, rates.b_cell, rates.a_cell).map_err(|e| e.to_string())?;
        for snap in &series.snapshots {
            for l in 1..=4 {
                let est = snap.cells[id].factorial[l - 1];
                let slack = three_sigma(&est);
                closed_margin = closed_margin.min(closed_moment_bound(kappa, l) + slack - est.value);
                ode_margin = ode_margin.min(system.value(l, snap.time) * (1.0 + 1e-9) + slack - est.value);
            }
        }
    }
    check(
        closed_margin >= 0.0 && ode_margin >= 0.0,
        format!("min slack: closed bound {closed_margin:.3e}, moment system {ode_margin:.3e}"),
    )
}

/// Number of set partitions of `n` labelled items into `l` blocks, by
/// enumerating restricted growth strings.
fn partitions_brute(n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n + 1];
    if n == 0 {
        counts[0] = 1;
        return counts;
    }
    let mut a = vec![0usize; n];
    loop {
        let blocks = a.iter().max().unwrap() + 1;
        counts[blocks] += 1;
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return counts;
            }
            let max_prefix = *a[..i].iter().max().unwrap();
            if a[i] <= max_prefix {
                a[i] += 1;
                a[i + 1..].iter_mut().for_each(|v| *v = 0);
                break;
            }
            i -= 1;
        }
    }
}

fn criterion_6() -> Outcome {
    let table = StirlingTable::shared();
    for n in 1..=10 {
        let brute = partitions_brute(n);
        for (l, &c) in brute.iter().enumerate().skip(1) {
            let s = table.get_u128(n, l).map_err(|e| e.to_string())?;
            if s != c as u128 {
                return Err(format!("S({n},{l}) = {s}, enumeration gives {c}"));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let cell = Region::new(1, &[0.0], &[1.0]).unwrap();
    let mut largest = 0;
    for _ in 0..1000 {
        let total = rng.random_range(0..=24);
        let config = PointConfiguration::new((0..total).map(|_| [rng.random_range(0.0..2.0), 0.0, 0.0]).collect());
        let inside = config.count_in(&cell);
        if inside > 12 {
            continue;
        }
        largest = largest.max(inside);
        let f: Vec<u128> = (1..=8).map(|l| factorial_moment(&config, &cell, l)).collect();
        for n in 1..=8 {
            let direct = (inside as u128).pow(n as u32);
            let sum: u128 = (1..=n)
                .map(|l| factorial_u128(l) * table.get_u128(n, l).unwrap() * f[l - 1])
                .sum();
            if direct != sum {
                return Err(format!("N = {inside}, n = {n}: N^n = {direct}, Stirling sum = {sum}"));
            }
        }
    }
    Ok(format!("S(n,l) exact for n <= 10; identity exact on 1000 configurations (N up to {largest})"))
}

/// Transition law at time `t` of the birth-death chain on `0..=k_max`
/// started empty (birth rate `birth`, death rate `n (m + a (n - 1))`), by
/// uniformization over slices short enough that `e^{-λh}` stays representable.
fn chain_law(birth: f64, m: f64, a: f64, k_max: usize, t: f64) -> Vec<f64> {
    let death = |n: usize| n as f64 * (m + a * (n as f64 - 1.0));
    let up = |n: usize| if n < k_max { birth } else { 0.0 };
    let lambda = (0..=k_max).map(|n| up(n) + death(n)).fold(0.0, f64::max);
    let slices = (lambda * t / 20.0).ceil().max(1.0) as usize;
    let h = t / slices as f64;
    let jump = |p: &[f64]| {
        let mut next = vec![0.0; k_max + 1];
        for n in 0..=k_max {
            let (u, d) = (up(n), death(n));
            next[n] += p[n] * (1.0 - (u + d) / lambda);
            if n < k_max {
                next[n + 1] += p[n] * u / lambda;
            }
            if n > 0 {
                next[n - 1] += p[n] * d / lambda;
            }
        }
        next
    };
    let mut law = vec![0.0; k_max + 1];
    law[0] = 1.0;
    for _ in 0..slices {
        let mut p = law.clone();
        let mut out = vec![0.0; k_max + 1];
        let mut weight = (-lambda * h).exp();
        let mut acc = 0.0;
        let mut k = 0u32;
        while 1.0 - acc > 1e-16 && k < 1000 {
            for (o, v) in out.iter_mut().zip(&p) {
                *o += weight * v;
            }
            acc += weight;
            p = jump(&p);
            k += 1;
            weight *= lambda * h / k as f64;
        }
        law = out;
    }
    law
}

fn criterion_7() -> Outcome {
    // all births fall in [0, 0.1) at total rate 1; every pair there competes at rate 5
    let window = Window::periodic(&[10.0]).unwrap();
    let mut values = vec![0.0; 100];
    values[0] = 10.0;
    let b = Field::tabulated(window.core(), &[100], values).unwrap();
    let kernel = CompetitionKernel::new(KernelShape::TopHat, 1, 5.0, 1.0, None).unwrap();
    let params = Arc::new(ModelParams::new(window, kernel, RateField::new(b, constant(2.0)), 0.0).unwrap());
    let plan = ReplicaPlan::new(10_000, SEED + 7, vec![0.5, 2.0], InitialCondition::Empty);
    let ens = run_replicas(&plan, params).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut tail_max = 0.0f64;
    for (i, &t) in ens.times.iter().enumerate() {
        let law = chain_law(1.0, 2.0, 5.0, 12, t);
        tail_max = tail_max.max(law[4..].iter().sum());
        let counts: Vec<usize> = ens.at(i).iter().map(|c| c.len()).collect();
        for k in 0..=4 {
            let p = if k < 4 { law[k] } else { law[4..].iter().sum() };
            let hits: Vec<f64> = counts.iter().map(|&n| if k < 4 { (n == k) as u8 } else { (n >= 4) as u8 } as f64).collect();
            let est = Estimate::from_samples(&hits);
            let sd = (p * (1.0 - p) / hits.len() as f64).sqrt();
            let z = if sd > 0.0 { (est.value - p).abs() / sd } else if est.value == p { 0.0 } else { f64::INFINITY };
            if k < 4 {
                worst = worst.max(z);
                ok &= z <= 3.0;
            } else {
                ok &= est.value <= p + 3.0 * sd.max(1.0 / hits.len() as f64);
            }
        }
    }
    check(ok, format!("max |z| over states 0..3 at t = 0.5, 2: {worst:.2}; P(N >= 4) <= {tail_max:.1e}"))
}

fn criterion_8() -> Outcome {
    let norms = ModelNorms {
        a_mass: 1.0,
        a_sup: 1.0,
        a_origin: 1.0,
        b_sup: 1.0,
        m_sup: 0.0,
    };
    let s = schedule_to_horizon(0.0, 0.4, &norms, 10.0).map_err(|e| e.to_string())?;
    let full = continuation_schedule(0.0, 0.4, &norms, s.steps.len()).map_err(|e| e.to_string())?;
    // T_n = κ τ(θ_{n-1}) with τ(θ) = 1 / (e^{-θ} + e e^{θ}), seeded by T_0 = κ τ(θ0)
    let t_of = |theta: f64| 0.4 / ((-theta).exp() + std::f64::consts::E * theta.exp());
    let mut prev_theta = 0.0f64;
    let mut prev_t = t_of(0.0);
    let mut worst = 0.0f64;
    let mut positive = true;
    for st in &full.steps {
        let identity = (st.theta.exp() - prev_theta.exp()) / norms.b_sup;
        worst = worst.max((identity - prev_t).abs() / prev_t);
        positive &= st.theta > prev_theta && st.t > 0.0;
        prev_t = t_of(prev_theta);
        prev_theta = st.theta;
    }
    check(
        positive && s.total_time() > 10.0 && s.steps.len() <= 1_000_000 && worst <= 1e-12,
        format!("sum T_n = {:.4} after {} steps; max relative identity residual {worst:.1e}", s.total_time(), s.steps.len()),
    )
}

fn criterion_9() -> Outcome {
    // pure decay: rho(t) = e^{-10 t}, k2 = rho^2 for Poisson data
    let params = line_params(CompetitionKernel::zero(1).unwrap(), constant(0.0), constant(10.0));
    let solver = HierarchySolver::new(&params, Closure::ZeroThirdCumulant, 2, 16).map_err(|e| e.to_string())?;
    let state0 = solver.initial_state(&constant(1.0)).map_err(|e| e.to_string())?;
    let exact1 = (-20.0f64).exp();
    let mut errors = Vec::new();
    for dt in [4e-3, 2e-3, 1e-3] {
        let s = &solver.integrate(&state0, &[2.0], dt).map_err(|e| e.to_string())?.snapshots[0];
        let e1 = (s.k1[0] - exact1).abs() / exact1;
        let e2 = s.k2.iter().map(|v| (v - exact1 * exact1).abs()).fold(0.0, f64::max) / (exact1 * exact1);
        errors.push(e1.max(e2));
    }
    let r1 = errors[0] / errors[1];
    let r2 = errors[1] / errors[2];
    let inside = |r: f64| (12.0..=20.0).contains(&r);
    check(inside(r1) && inside(r2), format!("error ratios {r1:.2}, {r2:.2} (relative errors {:.2e}, {:.2e}, {:.2e})", errors[0], errors[1], errors[2]))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_contpop"))
        .args(args)
        .env_remove("CONTPOP_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

fn same_csvs(a: &Path, b: &Path) -> Result<usize, String> {
    let names = csv_files(a);
    if names.is_empty() || names != csv_files(b) {
        return Err(format!("csv sets differ between {} and {}", a.display(), b.display()));
    }
    for n in &names {
        if std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).unwrap() {
            return Err(format!("{n} differs"));
        }
    }
    Ok(names.len())
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{
  "dimension": 2,
  "sides": [6.0, 6.0],
  "kernel": {"kind": "gaussian", "amplitude": 0.5, "range": 0.4},
  "b": {"kind": "constant", "value": 1.0},
  "m": {"kind": "constant", "value": 0.2},
  "initial": {"kind": "poisson", "density": {"kind": "constant", "value": 0.5}},
  "simulation": {"replicas": 24, "snapshots": [0.5, 1.0, 2.0]},
  "estimators": {"density_bins": [3, 3], "radial_bins": 10, "cell_side": 2.0},
  "hierarchy": {"nodes": 16, "dt": 0.01, "t_end": 1.0}
}"#,
    )
    .map_err(|e| e.to_string())?;
    let cfg = config.to_str().unwrap();
    let d = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let mut compared = 0;
    for (sub, extra) in [("simulate", vec!["--seed", "99"]), ("hierarchy", vec![]), ("surgailis", vec![])] {
        let first = d(&format!("{sub}-t1"));
        let mut args = vec![sub, "--config", cfg, "--out", &first, "--threads", "1"];
        args.extend(extra.iter().copied());
        run_cli(&args)?;
        let manifest = format!("{first}/manifest.json");
        let replayed = d(&format!("{sub}-replay-t8"));
        run_cli(&["replay", "--manifest", &manifest, "--out", &replayed, "--threads", "8"])?;
        compared += same_csvs(Path::new(&first), Path::new(&replayed))?;
        let again = d(&format!("{sub}-replay-t1"));
        run_cli(&["replay", "--manifest", &manifest, "--out", &again, "--threads", "1"])?;
        compared += same_csvs(Path::new(&first), Path::new(&again))?;
    }
    Ok(format!("{compared} CSV files byte-identical across reruns with --threads 1 and 8"))
}

fn main() {
    let names = [
        "oracle equivalence (simulator)",
        "oracle equivalence (hierarchy)",
        "competition-free domination",
        "density bound and two-cell bound",
        "moment envelopes",
        "Stirling identity",
        "small state space law",
        "schedule divergence",
        "RK4 order",
        "determinism",
    ];
    let mut run: Option<CompetitionRun> = None;
    let mut failures = 0;
    for (i, name) in names.iter().enumerate() {
        let n = i + 1;
        let clock = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            match n {
                1 => criterion_1(),
                2 => criterion_2(),
                3..=5 => {
                    let r = run.get_or_insert_with(competition_run);
                    match n {
                        3 => criterion_3(r),
                        4 => criterion_4(r),
                        _ => criterion_5(r),
                    }
                }
                6 => criterion_6(),
                7 => criterion_7(),
                8 => criterion_8(),
                9 => criterion_9(),
                _ => criterion_10(),
            }
        }))
        .unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", names.len() - failures, names.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
