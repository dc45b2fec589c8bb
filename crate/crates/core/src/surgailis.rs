//! Exact solution of the competition-free model (`a ≡ 0`).
//!
//! With constant-in-time rates the correlation functions evolve by the explicit
//! propagator
//!
//! ```text
//! k_t(η) = Σ_{ξ ⊂ η} e(ξ; φ_t) e(η∖ξ; ψ_t) k_0(η∖ξ),
//! ψ_t(x) = exp(-m(x) t),
//! φ_t(x) = (1 - exp(-m(x) t)) b(x) / m(x)    (b(x) t where m(x) = 0),
//! ```
//!
//! and a Poisson initial state with density `ϱ_0` stays Poisson with density
//! `ψ_t ϱ_0 + φ_t`. The same propagator bounds the correlation functions of the
//! model with competition from above.

use crate::combinatorics::check_subset_cap;
use crate::error::{Error, Result};
use crate::model::{Field, Point, RateField, Region};
use crate::quadrature::{default_nodes, trapezoid};

/// Below this mortality the `m = 0` branch is used.
pub const M_ZERO: f64 = 1e-12;
/// Below this value of `m t` the series form of `(1 - e^{-mt})/m` is used.
pub const MT_SERIES: f64 = 1e-6;

/// `φ_t` for scalar rates.
#[inline]
pub fn phi_value(b: f64, m: f64, t: f64) -> f64 {
    if m < M_ZERO {
        return b * t;
    }
    let mt = m * t;
    if mt < MT_SERIES {
        b * t * (1.0 - mt / 2.0 + mt * mt / 6.0)
    } else {
        -(-mt).exp_m1() * b / m
    }
}

/// `ψ_t` for a scalar mortality.
#[inline]
pub fn psi_value(m: f64, t: f64) -> f64 {
    (-m * t).exp()
}

/// Snapshot of the competition-free flow at time `t`.
#[derive(Clone, Debug)]
pub struct SurgailisFlow {
    b: Field,
    m: Field,
    t: f64,
}

impl SurgailisFlow {
    pub fn new(rates: &RateField, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("flow time must be >= 0, got {t}")));
        }
        Ok(SurgailisFlow {
            b: rates.b.clone(),
            m: rates.m.clone(),
            t,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn at_time(&self, t: f64) -> Result<Self> {
        SurgailisFlow::new(&RateField::new(self.b.clone(), self.m.clone()), t)
    }

    pub fn psi(&self, x: &Point) -> f64 {
        psi_value(self.m.value(x), self.t)
    }

    pub fn phi(&self, x: &Point) -> f64 {
        phi_value(self.b.value(x), self.m.value(x), self.t)
    }

    pub fn rates(&self) -> RateField {
        RateField::new(self.b.clone(), self.m.clone())
    }
}

/// `k_t(η)` by exhaustive subset splits. `k0` is evaluated on sub-lists of `eta`
/// and must be symmetric in its arguments.
pub fn propagate_correlation<K>(eta: &[Point], k0: K, flow: &SurgailisFlow) -> Result<f64>
where
    K: Fn(&[Point]) -> f64,
{
    check_subset_cap(eta.len())?;
    let phi: Vec<f64> = eta.iter().map(|x| flow.phi(x)).collect();
    let psi: Vec<f64> = eta.iter().map(|x| flow.psi(x)).collect();
    let mut rest = Vec::with_capacity(eta.len());
    let mut total = 0.0;
    for mask in 0u64..(1u64 << eta.len()) {
        rest.clear();
        let mut weight = 1.0;
        for (i, x) in eta.iter().enumerate() {
            if mask >> i & 1 == 1 {
                weight *= phi[i];
            } else {
                weight *= psi[i];
                rest.push(*x);
            }
        }
        if weight != 0.0 {
            total += weight * k0(&rest);
        }
    }
    Ok(total)
}

/// The competition-free propagator used as the upper comparison function:
/// for any competition kernel, `0 <= k_t(η) <= domination_bound(η)`.
pub fn domination_bound<K>(eta: &[Point], k0: K, flow: &SurgailisFlow) -> Result<f64>
where
    K: Fn(&[Point]) -> f64,
{
    propagate_correlation(eta, k0, flow)
}

/// Poisson density at time `t` for a Poisson initial state.
pub fn density_at(rho0: &Field, flow: &SurgailisFlow, x: &Point) -> f64 {
    flow.psi(x) * rho0.value(x) + flow.phi(x)
}

/// `ψ_t ϱ_0 + φ_t` on the requested points.
pub fn poisson_density_flow(rho0: &Field, flow: &SurgailisFlow, points: &[Point]) -> Result<Vec<f64>> {
    if !(rho0.sup() >= 0.0) {
        return Err(Error::domain("initial density must be nonnegative"));
    }
    Ok(points.iter().map(|x| density_at(rho0, flow, x)).collect())
}

/// Expected number of particles in `region` at time `t` given the initial mean
/// count; requires `m` constant on the region (`m ≡ 0` gives linear growth).
pub fn expected_count(region: &Region, flow: &SurgailisFlow, mu0_mean: f64) -> Result<f64> {
    let m_const = match &flow.m {
        Field::Constant(v) => Some(*v),
        f if f.is_constant() => Some(f.sup()),
        _ => None,
    };
    let m = m_const.ok_or_else(|| {
        Error::domain("expected_count from a mean count needs m constant on the region")
    })?;
    let psi = psi_value(m, flow.t);
    let phi_integral = match &flow.b {
        Field::Constant(b) => phi_value(*b, m, flow.t) * region.volume(),
        b => phi_value(1.0, m, flow.t) * b.integral(region),
    };
    Ok(psi * mu0_mean + phi_integral)
}

/// `∫_region k_t^{(1)}` for a general initial first correlation function.
pub fn expected_count_field(region: &Region, flow: &SurgailisFlow, k0: &Field) -> f64 {
    trapezoid(|x| density_at(k0, flow, x), region, default_nodes(region.dim))
}

/// A test function for the Bogoliubov functional, supported in a box.
pub struct TestFunction<'a> {
    pub support: Region,
    pub f: &'a dyn Fn(&Point) -> f64,
}

impl TestFunction<'_> {
    pub fn integral_against<G: Fn(&Point) -> f64>(&self, g: G) -> f64 {
        trapezoid(|x| (self.f)(x) * g(x), &self.support, default_nodes(self.support.dim))
    }
}

/// `B_{μ_t}(θ) = exp(∫ θ φ_t) B_{μ_0}(θ ψ_t)`.
pub fn bogoliubov_functional(
    theta: &TestFunction<'_>,
    flow: &SurgailisFlow,
    b0: &dyn Fn(&TestFunction<'_>) -> f64,
) -> Result<f64> {
    let nodes = default_nodes(theta.support.dim);
    let mut bad = None;
    trapezoid(
        |x| {
            let v = (theta.f)(x);
            if !(v > -1.0 && v <= 0.0) && bad.is_none() {
                bad = Some(v);
            }
            0.0
        },
        &theta.support,
        nodes,
    );
    if let Some(v) = bad {
        return Err(Error::domain(format!("test function value {v} outside (-1, 0]")));
    }
    let drift = theta.integral_against(|x| flow.phi(x));
    let damped = |x: &Point| (theta.f)(x) * flow.psi(x);
    let thinned = TestFunction {
        support: theta.support.clone(),
        f: &damped,
    };
    Ok(drift.exp() * b0(&thinned))
}

/// Bogoliubov functional of a Poisson state: `exp(∫ θ ϱ)`.
pub fn poisson_functional(density: &Field, theta: &TestFunction<'_>) -> f64 {
    theta.integral_against(|x| density.value(x)).exp()
}

/// Radius of the invariant sub-Poissonian ball when `m >= m_min > 0`.
pub fn theta_star(theta0: f64, b_sup: f64, m_min: f64) -> Option<f64> {
    if m_min > 0.0 {
        Some(theta0.max((b_sup / m_min).ln()))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Region;

    fn flow(b: f64, m: f64, t: f64) -> SurgailisFlow {
        SurgailisFlow::new(&RateField::constant(b, m).unwrap(), t).unwrap()
    }

    fn p(x: f64) -> Point {
        [x, 0.0, 0.0]
    }

    #[test]
    fn phi_branches_are_continuous() {
        let t = 3.0;
        for m in [1e-13, 1e-12, 5e-12, 1e-9, 1e-7] {
            let expected = 2.0 * t * (1.0 - m * t / 2.0);
            assert!((phi_value(2.0, m, t) - expected).abs() <= 1e-12, "m = {m}");
        }
        assert_eq!(phi_value(2.0, 0.0, t), 6.0);
        assert!((phi_value(2.0, 1.0, 1.0) - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let f = flow(1.0, 1.0, 0.0);
        assert_eq!(f.psi(&p(0.0)), 1.0);
        assert_eq!(f.phi(&p(0.0)), 0.0);
    }

    #[test]
    fn identity_at_time_zero() {
        let k0 = |eta: &[Point]| eta.iter().map(|x| 1.0 + x[0]).product::<f64>() * (1.0 + eta.len() as f64);
        let eta = [p(0.1), p(0.5), p(0.9)];
        let got = propagate_correlation(&eta, k0, &flow(2.0, 1.0, 0.0)).unwrap();
        assert_eq!(got, k0(&eta));
    }

    #[test]
    fn singleton_expansion() {
        let f = flow(1.5, 0.7, 2.0);
        let k0 = |eta: &[Point]| if eta.is_empty() { 1.0 } else { 0.3 };
        let got = propagate_correlation(&[p(1.0)], k0, &f).unwrap();
        let expect = f.psi(&p(1.0)) * 0.3 + f.phi(&p(1.0));
        assert!((got - expect).abs() < 1e-15);
    }

    #[test]
    fn poisson_stays_poisson() {
        let (rho0, b, m, t) = (0.8, 2.0, 0.5, 1.7);
        let f = flow(b, m, t);
        let rho_t = psi_value(m, t) * rho0 + phi_value(b, m, t);
        let k0 = |eta: &[Point]| rho0.powi(eta.len() as i32);
        for n in 0..6 {
            let eta: Vec<Point> = (0..n).map(|i| p(i as f64)).collect();
            let got = propagate_correlation(&eta, k0, &f).unwrap();
            assert!((got - rho_t.powi(n as i32)).abs() < 1e-12 * rho_t.powi(n as i32).max(1.0));
        }
    }

    #[test]
    fn density_flow_examples() {
        let zero = Field::constant(0.0).unwrap();
        let late = flow(2.0, 1.0, 60.0);
        assert!((poisson_density_flow(&zero, &late, &[p(0.0)]).unwrap()[0] - 2.0).abs() < 1e-12);
        let rho0 = Field::constant(3.0).unwrap();
        let decay = flow(0.0, 0.4, 2.0);
        assert_eq!(density_at(&rho0, &decay, &p(0.0)), 3.0 * (-0.8f64).exp());
        let growth = flow(1.25, 0.0, 4.0);
        assert_eq!(density_at(&rho0, &growth, &p(0.0)), 3.0 + 5.0);
    }

    #[test]
    fn expected_count_examples() {
        let lambda = Region::new(1, &[0.0], &[2.0]).unwrap();
        assert_eq!(expected_count(&lambda, &flow(1.0, 0.0, 5.0), 3.0).unwrap(), 13.0);
        assert_eq!(expected_count(&lambda, &flow(1.0, 0.0, 0.0), 3.0).unwrap(), 3.0);
        let unit = Region::new(1, &[0.0], &[1.0]).unwrap();
        let v = expected_count(&unit, &flow(1.0, 1.0, 1.0), 0.0).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let quad = expected_count_field(&unit, &flow(1.0, 1.0, 1.0), &Field::constant(0.0).unwrap());
        assert!((quad - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let varying = SurgailisFlow::new(
            &RateField::new(Field::constant(1.0).unwrap(), Field::cosine(1.0, 0.5, 0, 1.0).unwrap()),
            1.0,
        )
        .unwrap();
        assert!(expected_count(&unit, &varying, 0.0).is_err());
    }

    #[test]
    fn bogoliubov_examples() {
        let support = Region::new(1, &[0.0], &[2.0]).unwrap();
        let kappa = Field::constant(0.7).unwrap();
        let f = flow(1.0, 0.5, 1.3);
        let b0 = |th: &TestFunction<'_>| poisson_functional(&kappa, th);

        let zero = |_: &Point| 0.0;
        let th0 = TestFunction { support: support.clone(), f: &zero };
        assert!((bogoliubov_functional(&th0, &f, &b0).unwrap() - 1.0).abs() < 1e-15);

        let bump = |x: &Point| -0.5 * (std::f64::consts::PI * x[0] / 2.0).sin().powi(2);
        let th = TestFunction { support: support.clone(), f: &bump };
        let got = bogoliubov_functional(&th, &f, &b0).unwrap();
        let rho_t = f.psi(&p(0.0)) * 0.7 + f.phi(&p(0.0));
        // ∫ θ = -0.5 over the support
        let expect = (-0.5 * rho_t).exp();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");

        let at0 = flow(1.0, 0.5, 0.0);
        let v = bogoliubov_functional(&th, &at0, &b0).unwrap();
        assert!((v - b0(&th)).abs() < 1e-15);

        let bad = |_: &Point| -1.5;
        let thb = TestFunction { support, f: &bad };
        assert!(bogoliubov_functional(&thb, &f, &b0).is_err());
    }

    #[test]
    fn semigroup_property() {
        let rates = RateField::new(
            Field::cosine(1.0, 0.6, 0, 3.0).unwrap(),
            Field::bump(0.2, 0.9, [1.0, 0.0, 0.0], 0.7).unwrap(),
        );
        let k0 = |eta: &[Point]| {
            eta.iter().map(|x| 0.4 + 0.1 * x[0]).product::<f64>() * (1.0 + 0.25 * eta.len() as f64)
        };
        let (s, t) = (0.6, 1.1);
        let fs = SurgailisFlow::new(&rates, s).unwrap();
        let ft = SurgailisFlow::new(&rates, t).unwrap();
        let fst = SurgailisFlow::new(&rates, s + t).unwrap();
        for n in 0..=3 {
            let eta: Vec<Point> = (0..n).map(|i| p(0.3 + 0.8 * i as f64)).collect();
            let ks = |sub: &[Point]| propagate_correlation(sub, k0, &fs).unwrap();
            let two_step = propagate_correlation(&eta, ks, &ft).unwrap();
            let direct = propagate_correlation(&eta, k0, &fst).unwrap();
            assert!((two_step - direct).abs() < 1e-10, "n={n}: {two_step} vs {direct}");
        }
    }

    #[test]
    fn monotone_and_positive() {
        let f = flow(0.7, 0.3, 2.0);
        let eta = [p(0.0), p(1.0), p(2.0)];
        let small = |e: &[Point]| 0.5f64.powi(e.len() as i32);
        let large = |e: &[Point]| 0.5f64.powi(e.len() as i32) + 0.1 * e.len() as f64;
        let a = propagate_correlation(&eta, small, &f).unwrap();
        let b = propagate_correlation(&eta, large, &f).unwrap();
        assert!(a >= 0.0 && b >= a);
    }

    #[test]
    fn theta_growth_bounds_the_propagator() {
        // k0 = ϱ0^n has θ0 = log ϱ0 and unit norm
        let rho0: f64 = 0.6;
        let theta0 = rho0.ln();
        let b = 1.3;
        for t in [0.5, 2.0, 10.0] {
            let f = flow(b, 0.0, t);
            let theta_t = theta0 + (1.0 + t * b * (-theta0).exp()).ln();
            for n in 1..6 {
                let eta: Vec<Point> = (0..n).map(|i| p(i as f64)).collect();
                let v = propagate_correlation(&eta, |e| rho0.powi(e.len() as i32), &f).unwrap();
                assert!(v * (-theta_t * n as f64).exp() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn invariant_ball_with_positive_mortality() {
        let (rho0, b, m): (f64, f64, f64) = (0.2, 3.0, 1.5);
        let star = theta_star(rho0.ln(), b, m).unwrap();
        for t in [0.1, 1.0, 10.0, 100.0] {
            let f = flow(b, m, t);
            for n in 1..6 {
                let eta: Vec<Point> = (0..n).map(|i| p(i as f64)).collect();
                let v = propagate_correlation(&eta, |e| rho0.powi(e.len() as i32), &f).unwrap();
                assert!(v * (-star * n as f64).exp() <= 1.0 + 1e-12);
            }
        }
        assert!(theta_star(0.0, 1.0, 0.0).is_none());
    }
}
