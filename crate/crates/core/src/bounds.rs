//! Closed-form bounds: θ-norms, operator-norm estimates, existence times and
//! their continuation schedule, comparison-ODE envelopes and the cell moment
//! system.

use std::f64::consts::E;

use serde::Serialize;

use crate::combinatorics::factorial_u128;
use crate::error::{Error, Result};
use crate::model::{Field, ModelNorms, ModelParams, Point, Region};

pub const DEFAULT_KAPPA: f64 = 0.4;
pub const SCHEDULE_CAP: usize = 1_000_000;
/// Highest correlation order accepted by [`theta_norm`].
pub const THETA_NORM_ORDERS: usize = 8;

/// Finite-order surrogate of the θ-norm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaNormReport {
    pub theta: f64,
    /// `sup |k^(n)| e^{-θ n}` for `n = 1..`.
    pub per_order: Vec<f64>,
    pub norm: f64,
}

/// `max_n sup|k^(n)| e^{-θ n}` over the given orders; `orders[0]` is `k^(1)`.
pub fn theta_norm(orders: &[&[f64]], theta: f64) -> Result<ThetaNormReport> {
    if orders.is_empty() {
        return Err(Error::domain("at least the first-order correlation is required"));
    }
    if orders.len() > THETA_NORM_ORDERS {
        return Err(Error::Capacity {
            what: "theta-norm orders",
            size: orders.len(),
            cap: THETA_NORM_ORDERS,
        });
    }
    let per_order: Vec<f64> = orders
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let sup = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if sup == 0.0 {
                0.0
            } else {
                sup * (-theta * (i + 1) as f64).exp()
            }
        })
        .collect();
    let norm = per_order.iter().cloned().fold(0.0, f64::max);
    Ok(ThetaNormReport { theta, per_order, norm })
}

/// Operator-norm estimate of the generator between θ-scales, with its split
/// into the `θ`-independent part `A` and the part `B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorNormBound {
    pub theta: f64,
    pub theta_prime: f64,
    pub total: f64,
    /// `4‖a‖/(e²Δθ²) + ‖m‖/(eΔθ)`
    pub a_part: f64,
    /// `(‖b‖e^{-θ} + ⟨a⟩e^{θ'})/(eΔθ)`
    pub b_part: f64,
}

fn check_gap(theta: f64, theta_prime: f64) -> Result<f64> {
    let gap = theta_prime - theta;
    if !(gap > 0.0) {
        return Err(Error::domain(format!("need theta' > theta, got {theta_prime} <= {theta}")));
    }
    Ok(gap)
}

pub fn operator_norm_bound(theta: f64, theta_prime: f64, norms: &ModelNorms) -> Result<OperatorNormBound> {
    let gap = check_gap(theta, theta_prime)?;
    let a_part = 4.0 * norms.a_sup / (E * E * gap * gap) + norms.m_sup / (E * gap);
    let b_part = (norms.b_sup * (-theta).exp() + norms.a_mass * theta_prime.exp()) / (E * gap);
    Ok(OperatorNormBound {
        theta,
        theta_prime,
        total: a_part + b_part,
        a_part,
        b_part,
    })
}

/// `T(θ', θ) = (θ' - θ) / (‖b‖e^{-θ} + ⟨a⟩e^{θ'})`; infinite when both rates vanish.
pub fn existence_time(theta: f64, theta_prime: f64, norms: &ModelNorms) -> Result<f64> {
    let gap = check_gap(theta, theta_prime)?;
    let rate = norms.b_sup * (-theta).exp() + norms.a_mass * theta_prime.exp();
    Ok(if rate > 0.0 { gap / rate } else { f64::INFINITY })
}

/// `τ(θ) = 1 / (‖b‖e^{-θ} + e⟨a⟩e^{θ})`.
pub fn tau(theta: f64, norms: &ModelNorms) -> f64 {
    let rate = norms.b_sup * (-theta).exp() + E * norms.a_mass * theta.exp();
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// `θ_T = θ0 + log(1 + T‖b‖e^{-θ0})`.
pub fn surgailis_theta_growth(theta0: f64, t: f64, b_sup: f64) -> f64 {
    theta0 + (t * b_sup * (-theta0).exp()).ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleStep {
    pub n: usize,
    pub t: f64,
    pub theta: f64,
    pub cumulative: f64,
    /// `|T_{n-1} - (e^{θ_n} - e^{θ_{n-1}})/‖b‖| / T_{n-1}`; zero when `‖b‖ = 0`.
    pub identity_residual: f64,
}

/// Continuation steps `(T_n, θ_{T_n})`, `n = 1..=N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub kappa: f64,
    pub theta0: f64,
    pub steps: Vec<ScheduleStep>,
}

impl Schedule {
    pub fn total_time(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative)
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.identity_residual).fold(0.0, f64::max)
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(Error::domain(format!("kappa must lie in (0, 1/2), got {kappa}")));
    }
    Ok(())
}

/// Iterator over the continuation recursion, seeded with `T_0 = κτ(θ0)` and
/// `θ_{T_0} = θ0`.
struct ScheduleIter<'a> {
    norms: &'a ModelNorms,
    kappa: f64,
    n: usize,
    t_prev: f64,
    theta_prev: f64,
    cumulative: f64,
}

impl Iterator for ScheduleIter<'_> {
    type Item = ScheduleStep;

    fn next(&mut self) -> Option<ScheduleStep> {
        let b = self.norms.b_sup;
        let theta = self.theta_prev + (self.t_prev * b * (-self.theta_prev).exp()).ln_1p();
        let t = self.kappa * tau(self.theta_prev, self.norms);
        let residual = if b > 0.0 && self.t_prev.is_finite() {
            let lhs = self.theta_prev.exp() * (theta - self.theta_prev).exp_m1() / b;
            (self.t_prev - lhs).abs() / self.t_prev
        } else {
            0.0
        };
        self.n += 1;
        self.cumulative += t;
        self.t_prev = t;
        self.theta_prev = theta;
        Some(ScheduleStep {
            n: self.n,
            t,
            theta,
            cumulative: self.cumulative,
            identity_residual: residual,
        })
    }
}

fn schedule_iter(theta0: f64, kappa: f64, norms: &ModelNorms) -> ScheduleIter<'_> {
    ScheduleIter {
        norms,
        kappa,
        n: 0,
        t_prev: kappa * tau(theta0, norms),
        theta_prev: theta0,
        cumulative: 0.0,
    }
}

/// The first `n` steps of the continuation schedule.
pub fn continuation_schedule(theta0: f64, kappa: f64, norms: &ModelNorms, n: usize) -> Result<Schedule> {
    check_kappa(kappa)?;
    if n > SCHEDULE_CAP {
        return Err(Error::Capacity {
            what: "schedule length",
            size: n,
            cap: SCHEDULE_CAP,
        });
    }
    Ok(Schedule {
        kappa,
        theta0,
        steps: schedule_iter(theta0, kappa, norms).take(n).collect(),
    })
}

/// Runs the schedule until its cumulative time exceeds `horizon`. Fails if
/// that takes more than [`SCHEDULE_CAP`] steps.
pub fn schedule_to_horizon(theta0: f64, kappa: f64, norms: &ModelNorms, horizon: f64) -> Result<Schedule> {
    check_kappa(kappa)?;
    let mut steps = Vec::new();
    for step in schedule_iter(theta0, kappa, norms) {
        let done = step.cumulative > horizon;
        steps.push(step);
        if done {
            return Ok(Schedule { kappa, theta0, steps });
        }
        if steps.len() >= SCHEDULE_CAP {
            break;
        }
    }
    Err(Error::Capacity {
        what: "schedule search",
        size: SCHEDULE_CAP + 1,
        cap: SCHEDULE_CAP,
    })
}

/// Explicit solution of `u' = b - a u` and the quantities derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonOde {
    pub u0: f64,
    pub a: f64,
    pub b: f64,
}

impl ComparisonOde {
    pub fn new(u0: f64, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::domain(format!("comparison rate must be positive, got {a}")));
        }
        if !(b >= 0.0) || !(u0 >= 0.0) {
            return Err(Error::domain("comparison data must be nonnegative"));
        }
        Ok(ComparisonOde { u0, a, b })
    }

    /// `u0 e^{-at} + (b/a)(1 - e^{-at})`.
    pub fn value(&self, t: f64) -> f64 {
        let decay = (-self.a * t).exp();
        self.u0 * decay - self.b / self.a * (-self.a * t).exp_m1()
    }

    /// `max{u0, b/a}`.
    pub fn uniform_bound(&self) -> f64 {
        self.u0.max(self.b / self.a)
    }

    /// First time after which `u(t) <= b/a + ε`.
    pub fn relaxation_time(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::domain("epsilon must be positive"));
        }
        let excess = self.u0 - self.b / self.a;
        Ok(if excess > eps { (excess / eps).ln() / self.a } else { 0.0 })
    }
}

pub fn comparison_ode_bound(u0: f64, a: f64, b: f64, t: f64) -> Result<f64> {
    Ok(ComparisonOde::new(u0, a, b)?.value(t))
}

/// Exact solution of `q_l' = b q_{l-1} - l a q_l`, `q_0 = 1`, as sums of
/// exponentials `q_l(t) = Σ_{j<=l} c_{l,j} e^{-j a t}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentSystem {
    pub b: f64,
    pub a: f64,
    pub q0: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

impl MomentSystem {
    pub fn new(q0: &[f64], b: f64, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::domain(format!("cell competition rate must be positive, got {a}")));
        }
        if !(b >= 0.0) || q0.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::domain("moment system data must be nonnegative"));
        }
        let mut coeffs: Vec<Vec<f64>> = vec![vec![1.0]];
        for l in 1..=q0.len() {
            let prev = &coeffs[l - 1];
            let mut row = vec![0.0; l + 1];
            for j in 0..l {
                row[j] = b * prev[j] / ((l - j) as f64 * a);
            }
            row[l] = q0[l - 1] - row[..l].iter().sum::<f64>();
            coeffs.push(row);
        }
        Ok(MomentSystem {
            b,
            a,
            q0: q0.to_vec(),
            coeffs,
        })
    }

    pub fn orders(&self) -> usize {
        self.q0.len()
    }

    /// `q_l(t)`, `l = 0..=L`.
    pub fn value(&self, l: usize, t: f64) -> f64 {
        let row = &self.coeffs[l];
        row.iter()
            .enumerate()
            .map(|(j, c)| c * (-(j as f64) * self.a * t).exp())
            .sum()
    }

    /// `[q_1(t), .., q_L(t)]` at each time.
    pub fn trajectories(&self, times: &[f64]) -> Vec<Vec<f64>> {
        times
            .iter()
            .map(|&t| (1..=self.orders()).map(|l| self.value(l, t)).collect())
            .collect()
    }
}

/// Trajectories of the moment system on a time grid.
pub fn moment_bound_system(q0: &[f64], b_cell: f64, a_cell: f64, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(MomentSystem::new(q0, b_cell, a_cell)?.trajectories(times))
}

/// `κ_Δ = max{V(Δ)e^θ, b_Δ/a_Δ}`.
pub fn cell_kappa(volume: f64, theta: f64, b_cell: f64, a_cell: f64) -> Result<f64> {
    if !(a_cell > 0.0) {
        return Err(Error::domain("cell competition rate must be positive"));
    }
    Ok((volume * theta.exp()).max(b_cell / a_cell))
}

/// `κ^l / l!`.
pub fn closed_moment_bound(kappa: f64, l: usize) -> f64 {
    kappa.powi(l as i32) / factorial_u128(l) as f64
}

/// Rates of the moment system for one cell: immigration mass and the
/// smallest competition between two points of the cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellRates {
    pub volume: f64,
    pub b_cell: f64,
    pub a_cell: f64,
}

pub fn cell_rates(params: &ModelParams, cell: &Region) -> Result<CellRates> {
    let side = (0..cell.dim).map(|k| cell.side(k)).fold(0.0, f64::max);
    Ok(CellRates {
        volume: cell.volume(),
        b_cell: params.rates.b.integral(cell),
        a_cell: crate::model::pair_infimum(cell.dim, side, &params.kernel)?,
    })
}

/// Bound on the density uniform in time, `max{k0(x), b(x)/a(0)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityBound {
    pub a_origin: f64,
    k0: Field,
    b: Field,
}

impl DensityBound {
    pub fn at(&self, x: &Point) -> f64 {
        self.k0.value(x).max(self.b.value(x) / self.a_origin)
    }

    pub fn global(&self) -> f64 {
        self.k0.sup().max(self.b.sup() / self.a_origin)
    }

    /// Level approached for large times, `b(x)/a(0) + ε`.
    pub fn asymptotic(&self, x: &Point, eps: f64) -> f64 {
        self.b.value(x) / self.a_origin + eps
    }
}

/// Fails when `a(0) = 0`; without self-competition use
/// [`surgailis_theta_growth`] instead.
pub fn stationary_density_bound(params: &ModelParams, k0: &Field) -> Result<DensityBound> {
    let a_origin = params.kernel.radial(0.0);
    if !(a_origin > 0.0) {
        return Err(Error::domain("density bound needs a(0) > 0"));
    }
    Ok(DensityBound {
        a_origin,
        k0: k0.clone(),
        b: params.rates.b.clone(),
    })
}
