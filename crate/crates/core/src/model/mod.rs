//! Model data: window geometry, rate fields, competition kernel and point
//! configurations, plus the elementary death-rate computations.

mod field;
mod kernel;
mod window;

pub use field::Field;
pub use kernel::{
    cell_infimum, pair_infimum, CompetitionKernel, KernelShape, EXPONENTIAL_CUT, GAUSSIAN_CUT,
};
pub use window::{norm, point_from_slice, Boundary, Point, Region, Window, MAX_DIM};

use crate::error::{Error, Result};

/// Immigration rate `b` (per time per volume) and mortality `m` (per time).
#[derive(Clone, Debug, PartialEq)]
pub struct RateField {
    pub b: Field,
    pub m: Field,
}

impl RateField {
    pub fn new(b: Field, m: Field) -> Self {
        RateField { b, m }
    }

    pub fn constant(b: f64, m: f64) -> Result<Self> {
        Ok(RateField {
            b: Field::constant(b)?,
            m: Field::constant(m)?,
        })
    }

    pub fn b_sup(&self) -> f64 {
        self.b.sup()
    }

    pub fn m_sup(&self) -> f64 {
        self.m.sup()
    }
}

/// The sup/integral norms the bounds are expressed in.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ModelNorms {
    /// `⟨a⟩`
    pub a_mass: f64,
    /// `‖a‖`
    pub a_sup: f64,
    /// `a(0)`, the effective self-competition scale.
    pub a_origin: f64,
    /// `‖b‖`
    pub b_sup: f64,
    /// `‖m‖`
    pub m_sup: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub window: Window,
    pub kernel: CompetitionKernel,
    pub rates: RateField,
    /// Sub-Poissonian parameter of the initial state.
    pub theta0: f64,
}

impl ModelParams {
    pub fn new(window: Window, kernel: CompetitionKernel, rates: RateField, theta0: f64) -> Result<Self> {
        if kernel.dim() != window.dim() {
            return Err(Error::domain(format!(
                "kernel dimension {} differs from window dimension {}",
                kernel.dim(),
                window.dim()
            )));
        }
        if !theta0.is_finite() {
            return Err(Error::domain("theta0 must be finite"));
        }
        if !kernel.is_zero() {
            match window.boundary() {
                Boundary::Periodic => {
                    if kernel.r_cut() > 0.5 * window.min_side() {
                        return Err(Error::domain(format!(
                            "r_cut {} exceeds half the smallest side {}",
                            kernel.r_cut(),
                            window.min_side()
                        )));
                    }
                }
                Boundary::Absorbing { buffer } => {
                    if buffer < kernel.r_cut() {
                        return Err(Error::domain(format!(
                            "buffer {buffer} is narrower than r_cut {}",
                            kernel.r_cut()
                        )));
                    }
                }
            }
        }
        Ok(ModelParams {
            window,
            kernel,
            rates,
            theta0,
        })
    }

    pub fn norms(&self) -> ModelNorms {
        ModelNorms {
            a_mass: self.kernel.mass(),
            a_sup: self.kernel.sup(),
            a_origin: self.kernel.radial(0.0),
            b_sup: self.rates.b_sup(),
            m_sup: self.rates.m_sup(),
        }
    }

    /// Homogeneous setting: constant rates on a periodic window.
    pub fn is_homogeneous(&self) -> bool {
        self.window.is_periodic() && self.rates.b.is_constant() && self.rates.m.is_constant()
    }

    /// Competition felt at `x` from the particles `others` (no self-exclusion).
    pub fn competition_at(&self, x: &Point, others: impl IntoIterator<Item = Point>) -> f64 {
        others
            .into_iter()
            .map(|y| self.kernel.eval_r2(self.window.distance2(x, &y)))
            .sum()
    }
}

/// Finite particle configuration inside a window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointConfiguration {
    points: Vec<Point>,
    death_rates: Option<Vec<f64>>,
}

impl PointConfiguration {
    pub fn new(points: Vec<Point>) -> Self {
        PointConfiguration {
            points,
            death_rates: None,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a configuration after checking every point lies in the window.
    pub fn in_window(points: Vec<Point>, window: &Window) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !window.contains(p)) {
            return Err(Error::domain(format!("point {:?} lies outside the window", &p[..window.dim()])));
        }
        Ok(Self::new(points))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn death_rates(&self) -> Option<&[f64]> {
        self.death_rates.as_deref()
    }

    /// Attaches a cached death rate per particle.
    pub fn with_death_rates(mut self, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != self.points.len() {
            return Err(Error::domain("one cached rate per particle required"));
        }
        self.death_rates = Some(rates);
        Ok(self)
    }

    /// Recomputes every death rate from scratch and caches it.
    pub fn cache_death_rates(mut self, params: &ModelParams) -> Self {
        let rates = (0..self.len()).map(|i| death_rate_at(i, &self, params)).collect();
        self.death_rates = Some(rates);
        self
    }

    pub fn position_index(&self, x: &Point, dim: usize) -> Option<usize> {
        self.points.iter().position(|p| p[..dim] == x[..dim])
    }

    /// Number of points in a half-open region.
    pub fn count_in(&self, region: &Region) -> usize {
        self.points.iter().filter(|p| region.contains(p)).count()
    }

    pub fn push(&mut self, x: Point) {
        self.points.push(x);
        self.death_rates = None;
    }
}

impl FromIterator<Point> for PointConfiguration {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        PointConfiguration::new(iter.into_iter().collect())
    }
}

/// Death rate of the `i`-th particle: `m(x) + Σ_{y ≠ x} a(x - y)`.
pub fn death_rate_at(i: usize, config: &PointConfiguration, params: &ModelParams) -> f64 {
    let x = config.points[i];
    let others = config
        .points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, y)| *y);
    params.rates.m.value(&x) + params.competition_at(&x, others)
}

/// Death rate of the particle at `x`, which must be a member of `config`.
pub fn death_rate(x: &Point, config: &PointConfiguration, params: &ModelParams) -> Result<f64> {
    let dim = params.window.dim();
    let i = config
        .position_index(x, dim)
        .ok_or_else(|| Error::Membership(x[..dim].to_vec()))?;
    Ok(death_rate_at(i, config, params))
}

/// `E(η) = Σ_x m(x) + Σ_x Σ_{y ≠ x} a(x - y)`.
pub fn interaction_energy(eta: &PointConfiguration, params: &ModelParams) -> f64 {
    let mortality: f64 = eta.iter().map(|x| params.rates.m.value(x)).sum();
    let mut pairs = 0.0;
    for (i, x) in eta.iter().enumerate() {
        for (j, y) in eta.iter().enumerate() {
            if i != j {
                pairs += params.kernel.eval_r2(params.window.distance2(x, y));
            }
        }
    }
    mortality + pairs
}
