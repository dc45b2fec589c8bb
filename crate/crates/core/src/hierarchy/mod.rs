//! Truncated correlation-function hierarchy.
//!
//! Evolves `k^(1)` (and `k^(2)` when `n_max = 2`) under the generator of the
//! correlation functions, with the unresolved next order supplied by a
//! closure. Translation-invariant problems use a scalar density and a
//! separation grid with FFT convolutions; inhomogeneous problems use a full
//! product grid in one dimension.

mod fft;

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Field, ModelParams, Point};
use fft::Torus;

/// Floor on the Kirkwood denominator.
pub const KIRKWOOD_FLOOR: f64 = 1e-12;
/// Largest admissible `dt * (‖m‖ + 2‖a‖ + ⟨a⟩ sup k1)`.
pub const STEP_GUARD: f64 = 0.5;
/// Largest admissible clipped fraction of the total mass in one step.
pub const CLIP_LIMIT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    ZeroThirdCumulant,
    Kirkwood,
    MeanField,
}

impl Closure {
    pub const ALL: [Closure; 3] = [Closure::ZeroThirdCumulant, Closure::Kirkwood, Closure::MeanField];

    pub fn name(&self) -> &'static str {
        match self {
            Closure::ZeroThirdCumulant => "zero-third-cumulant",
            Closure::Kirkwood => "kirkwood",
            Closure::MeanField => "mean-field",
        }
    }

    /// `k̂^(3)(x1, x2, y)` from pair values `k12, k1y, k2y` and densities.
    #[inline]
    pub fn third(&self, k12: f64, k1y: f64, k2y: f64, r1: f64, r2: f64, ry: f64) -> f64 {
        match self {
            Closure::ZeroThirdCumulant => k12 * ry + k1y * r2 + k2y * r1 - 2.0 * r1 * r2 * ry,
            Closure::Kirkwood => k12 * k1y * k2y / (r1 * r2 * ry).max(KIRKWOOD_FLOOR),
            Closure::MeanField => k12 * ry,
        }
    }
}

impl Default for Closure {
    fn default() -> Self {
        Closure::ZeroThirdCumulant
    }
}

impl fmt::Display for Closure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Closure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-third-cumulant" | "ztc" | "cumulant" => Ok(Closure::ZeroThirdCumulant),
            "kirkwood" => Ok(Closure::Kirkwood),
            "mean-field" | "meanfield" => Ok(Closure::MeanField),
            other => Err(Error::Config(format!("unknown closure {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    /// Scalar `k^(1)`, `k^(2)` on the separation torus.
    Homogeneous,
    /// `k^(1)` on `M` nodes, `k^(2)` on `M × M` nodes; one dimension only.
    Full1d,
}

/// Uniform periodic nodes `i h`, `h = L / M`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierarchyGrid {
    pub mode: GridMode,
    pub dim: usize,
    pub nodes: usize,
    pub spacing: f64,
    pub side: f64,
}

impl HierarchyGrid {
    /// Node coordinate along one axis.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    /// Signed minimum-image offset of node index `i`.
    pub fn offset(&self, i: usize) -> f64 {
        let i = i as f64;
        let m = self.nodes as f64;
        if i <= m / 2.0 {
            i * self.spacing
        } else {
            (i - m) * self.spacing
        }
    }

    /// Separation vector of flat torus index `u`.
    pub fn separation(&self, u: usize) -> Point {
        let mut p = [0.0; 3];
        let mut rest = u;
        for k in (0..self.dim).rev() {
            p[k] = self.offset(rest % self.nodes);
            rest /= self.nodes;
        }
        p
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn k1_len(&self) -> usize {
        match self.mode {
            GridMode::Homogeneous => 1,
            GridMode::Full1d => self.nodes,
        }
    }

    pub fn k2_len(&self) -> usize {
        match self.mode {
            GridMode::Homogeneous => self.nodes.pow(self.dim as u32),
            GridMode::Full1d => self.nodes * self.nodes,
        }
    }
}

/// Correlation functions at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyState {
    pub time: f64,
    pub n_max: usize,
    pub grid: HierarchyGrid,
    pub k1: Vec<f64>,
    /// Empty when `n_max = 1`.
    pub k2: Vec<f64>,
}

impl HierarchyState {
    /// Poisson initial data: `k^(1) = ϱ0`, `k^(2) = ϱ0 ⊗ ϱ0`.
    pub fn poisson(grid: HierarchyGrid, rho0: &Field, n_max: usize) -> Result<Self> {
        check_order(n_max)?;
        let k1: Vec<f64> = match grid.mode {
            GridMode::Homogeneous => {
                if !rho0.is_constant() {
                    return Err(Error::GridMismatch("homogeneous grid needs a constant initial density".into()));
                }
                vec![rho0.value(&[0.0; 3])]
            }
            GridMode::Full1d => (0..grid.nodes).map(|i| rho0.value(&[grid.node(i), 0.0, 0.0])).collect(),
        };
        let k2 = if n_max == 2 {
            match grid.mode {
                GridMode::Homogeneous => vec![k1[0] * k1[0]; grid.k2_len()],
                GridMode::Full1d => {
                    let mut v = Vec::with_capacity(grid.k2_len());
                    for a in &k1 {
                        for b in &k1 {
                            v.push(a * b);
                        }
                    }
                    v
                }
            }
        } else {
            Vec::new()
        };
        Ok(HierarchyState {
            time: 0.0,
            n_max,
            grid,
            k1,
            k2,
        })
    }

    /// Mean density over the window.
    pub fn mean_density(&self) -> f64 {
        self.k1.iter().sum::<f64>() / self.k1.len() as f64
    }

    pub fn sup_k1(&self) -> f64 {
        self.k1.iter().cloned().fold(0.0, f64::max)
    }

    /// `k^(2)` as a function of separation, averaged over positions and over
    /// separations of equal length. Returns `(r, value)` pairs for
    /// `0 <= r <= L/2`. With `n_max = 1` the product of densities is used.
    pub fn radial_k2(&self) -> Vec<(f64, f64)> {
        let g = &self.grid;
        let mut acc: std::collections::BTreeMap<u64, (f64, f64, usize)> = Default::default();
        let mut push = |r: f64, v: f64| {
            let key = (r / g.spacing * 1e6).round() as u64;
            let e = acc.entry(key).or_insert((r, 0.0, 0));
            e.1 += v;
            e.2 += 1;
        };
        match g.mode {
            GridMode::Homogeneous => {
                for u in 0..g.k2_len() {
                    let s = g.separation(u);
                    let r = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
                    let v = if self.n_max == 2 { self.k2[u] } else { self.k1[0] * self.k1[0] };
                    push(r, v);
                }
            }
            GridMode::Full1d => {
                let m = g.nodes;
                for i in 0..m {
                    for j in 0..m {
                        let r = g.offset((j + m - i) % m).abs();
                        let v = if self.n_max == 2 { self.k2[i * m + j] } else { self.k1[i] * self.k1[j] };
                        push(r, v);
                    }
                }
            }
        }
        acc.into_values()
            .filter(|(r, _, _)| *r <= 0.5 * g.side + 1e-12)
            .map(|(r, s, n)| (r, s / n as f64))
            .collect()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut y = self.k1.clone();
        y.extend_from_slice(&self.k2);
        y
    }

    fn unflatten(&mut self, y: &[f64]) {
        let n1 = self.k1.len();
        self.k1.copy_from_slice(&y[..n1]);
        self.k2.copy_from_slice(&y[n1..]);
    }
}

fn check_order(n_max: usize) -> Result<()> {
    if n_max == 1 || n_max == 2 {
        Ok(())
    } else {
        Err(Error::domain(format!("truncation order must be 1 or 2, got {n_max}")))
    }
}

/// Snapshots of an integration plus clipping diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<HierarchyState>,
    pub steps: u64,
    pub clip_events: u64,
    pub clipped_mass: f64,
}

/// Right-hand side of the truncated hierarchy for one model and closure.
pub struct HierarchySolver {
    closure: Closure,
    n_max: usize,
    grid: HierarchyGrid,
    b: Vec<f64>,
    m: Vec<f64>,
    /// Kernel on the separation torus (homogeneous) or as an `M × M` matrix.
    a: Vec<f64>,
    a_hat: Vec<Complex64>,
    a_mass: f64,
    guard_rate: f64,
    torus: Option<Torus>,
}

impl HierarchySolver {
    /// Picks the homogeneous reduction when the rates are constant, else the
    /// one-dimensional full grid.
    pub fn new(params: &ModelParams, closure: Closure, n_max: usize, nodes: usize) -> Result<Self> {
        let mode = if params.is_homogeneous() { GridMode::Homogeneous } else { GridMode::Full1d };
        Self::with_mode(params, closure, n_max, nodes, mode)
    }

    pub fn with_mode(params: &ModelParams, closure: Closure, n_max: usize, nodes: usize, mode: GridMode) -> Result<Self> {
        check_order(n_max)?;
        let window = &params.window;
        if !window.is_periodic() {
            return Err(Error::domain("the hierarchy solver needs a periodic window"));
        }
        let sides = window.sides();
        if sides.iter().any(|&s| (s - sides[0]).abs() > 1e-12 * s) {
            return Err(Error::domain("the hierarchy solver needs a cubic window"));
        }
        if nodes < 2 {
            return Err(Error::domain("at least two grid nodes per axis required"));
        }
        let dim = window.dim();
        match mode {
            GridMode::Homogeneous if !params.is_homogeneous() => {
                return Err(Error::domain("homogeneous mode needs constant rates"));
            }
            GridMode::Full1d if dim != 1 => {
                return Err(Error::domain("full-grid mode is one-dimensional only"));
            }
            _ => {}
        }
        let side = sides[0];
        let grid = HierarchyGrid {
            mode,
            dim,
            nodes,
            spacing: side / nodes as f64,
            side,
        };
        let kernel = &params.kernel;
        let (b, m, a, torus) = match mode {
            GridMode::Homogeneous => {
                let torus = Torus::new(dim, nodes);
                let a: Vec<f64> = (0..torus.len())
                    .map(|u| {
                        let s = grid.separation(u);
                        kernel.eval_r2(s[0] * s[0] + s[1] * s[1] + s[2] * s[2])
                    })
                    .collect();
                let b = vec![params.rates.b.value(&[0.0; 3])];
                let m = vec![params.rates.m.value(&[0.0; 3])];
                (b, m, a, Some(torus))
            }
            GridMode::Full1d => {
                let xs: Vec<Point> = (0..nodes).map(|i| [grid.node(i), 0.0, 0.0]).collect();
                let b = xs.iter().map(|x| params.rates.b.value(x)).collect();
                let m = xs.iter().map(|x| params.rates.m.value(x)).collect();
                let mut a = Vec::with_capacity(nodes * nodes);
                for i in 0..nodes {
                    for j in 0..nodes {
                        let s = grid.offset((j + nodes - i) % nodes);
                        a.push(kernel.eval_r2(s * s));
                    }
                }
                (b, m, a, None)
            }
        };
        let a_hat = torus.as_ref().map(|t| t.spectrum(&a)).unwrap_or_default();
        let a_mass = match mode {
            GridMode::Homogeneous => a.iter().sum::<f64>() * grid.cell_volume(),
            GridMode::Full1d => a[..nodes].iter().sum::<f64>() * grid.spacing,
        };
        let norms = params.norms();
        Ok(HierarchySolver {
            closure,
            n_max,
            grid,
            b,
            m,
            a,
            a_hat,
            a_mass,
            guard_rate: norms.m_sup + 2.0 * norms.a_sup,
            torus,
        })
    }

    pub fn grid(&self) -> &HierarchyGrid {
        &self.grid
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Kernel mass as seen by the grid quadrature.
    pub fn grid_kernel_mass(&self) -> f64 {
        self.a_mass
    }

    /// Kernel value between two grid nodes (full mode) or at a separation
    /// index (homogeneous mode, `j` ignored).
    pub fn kernel_at(&self, i: usize, j: usize) -> f64 {
        match self.grid.mode {
            GridMode::Homogeneous => self.a[i],
            GridMode::Full1d => self.a[i * self.grid.nodes + j],
        }
    }

    pub fn birth_at(&self, i: usize) -> f64 {
        self.b[i.min(self.b.len() - 1)]
    }

    pub fn mortality_at(&self, i: usize) -> f64 {
        self.m[i.min(self.m.len() - 1)]
    }

    /// Poisson initial state on this solver's grid.
    pub fn initial_state(&self, rho0: &Field) -> Result<HierarchyState> {
        HierarchyState::poisson(self.grid.clone(), rho0, self.n_max)
    }

    fn check_state(&self, state: &HierarchyState) -> Result<()> {
        if state.grid != self.grid {
            return Err(Error::GridMismatch("state grid differs from solver grid".into()));
        }
        if state.n_max != self.n_max {
            return Err(Error::GridMismatch(format!(
                "state has order {}, solver has order {}",
                state.n_max, self.n_max
            )));
        }
        if state.k1.len() != self.grid.k1_len() || state.k2.len() != if self.n_max == 2 { self.grid.k2_len() } else { 0 } {
            return Err(Error::GridMismatch("field lengths do not match the grid".into()));
        }
        Ok(())
    }

    /// `d k^(1) / dt`.
    pub fn rhs_order1(&self, state: &HierarchyState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        Ok(self.order1(&state.k1, &state.k2))
    }

    /// `d k^(2) / dt`, with `k̂^(3)` from the closure.
    pub fn rhs_order2(&self, state: &HierarchyState) -> Result<Vec<f64>> {
        if self.n_max != 2 {
            return Err(Error::domain("second-order right-hand side needs n_max = 2"));
        }
        self.check_state(state)?;
        Ok(self.order2(&state.k1, &state.k2))
    }

    fn order1(&self, k1: &[f64], k2: &[f64]) -> Vec<f64> {
        let hv = self.grid.cell_volume();
        match self.grid.mode {
            GridMode::Homogeneous => {
                let rho = k1[0];
                let coupling = if self.n_max == 2 {
                    self.a.iter().zip(k2).map(|(a, g)| a * g).sum::<f64>() * hv
                } else {
                    self.a_mass * rho * rho
                };
                vec![self.b[0] - self.m[0] * rho - coupling]
            }
            GridMode::Full1d => {
                let n = self.grid.nodes;
                (0..n)
                    .map(|i| {
                        let row = &self.a[i * n..(i + 1) * n];
                        let coupling = if self.n_max == 2 {
                            row.iter().zip(&k2[i * n..(i + 1) * n]).map(|(a, g)| a * g).sum::<f64>()
                        } else {
                            k1[i] * row.iter().zip(k1).map(|(a, r)| a * r).sum::<f64>()
                        };
                        self.b[i] - self.m[i] * k1[i] - coupling * hv
                    })
                    .collect()
            }
        }
    }

    fn order2(&self, k1: &[f64], k2: &[f64]) -> Vec<f64> {
        match self.grid.mode {
            GridMode::Homogeneous => self.order2_homogeneous(k1[0], k2),
            GridMode::Full1d => self.order2_full(k1, k2),
        }
    }

    fn order2_homogeneous(&self, rho: f64, g: &[f64]) -> Vec<f64> {
        let torus = self.torus.as_ref().expect("torus in homogeneous mode");
        let hv = self.grid.cell_volume();
        let (b, m) = (self.b[0], self.m[0]);
        let c0: f64 = self.a.iter().zip(g).map(|(a, g)| a * g).sum::<f64>() * hv;
        let integral: Vec<f64> = match self.closure {
            Closure::ZeroThirdCumulant => {
                let ag = torus.convolve(&self.a_hat, g);
                (0..g.len())
                    .map(|u| {
                        let nu = torus.negate(u);
                        rho * (2.0 * self.a_mass * g[u] + 2.0 * c0 + (ag[u] + ag[nu]) * hv)
                            - 4.0 * rho.powi(3) * self.a_mass
                    })
                    .collect()
            }
            Closure::Kirkwood => {
                let h: Vec<f64> = self.a.iter().zip(g).map(|(a, g)| a * g).collect();
                let hg = torus.convolve(&torus.spectrum(&h), g);
                let den = rho.powi(3).max(KIRKWOOD_FLOOR);
                (0..g.len())
                    .map(|u| g[u] * (hg[u] + hg[torus.negate(u)]) * hv / den)
                    .collect()
            }
            Closure::MeanField => g.iter().map(|gu| 2.0 * rho * self.a_mass * gu).collect(),
        };
        let raw: Vec<f64> = (0..g.len())
            .map(|u| -(2.0 * m + 2.0 * self.a[u]) * g[u] - integral[u] + 2.0 * b * rho)
            .collect();
        // enforce k2(u) = k2(-u) against rounding
        (0..raw.len())
            .map(|u| 0.5 * (raw[u] + raw[torus.negate(u)]))
            .collect()
    }

    fn order2_full(&self, k1: &[f64], k2: &[f64]) -> Vec<f64> {
        let n = self.grid.nodes;
        let h = self.grid.spacing;
        let a = &self.a;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k12 = k2[i * n + j];
                let mut integral = 0.0;
                for l in 0..n {
                    let w = a[l * n + i] + a[l * n + j];
                    if w == 0.0 {
                        continue;
                    }
                    let k3 = self
                        .closure
                        .third(k12, k2[i * n + l], k2[j * n + l], k1[i], k1[j], k1[l]);
                    integral += w * k3;
                }
                let v = -(self.m[i] + self.m[j] + 2.0 * a[i * n + j]) * k12 - integral * h
                    + self.b[i] * k1[j]
                    + self.b[j] * k1[i];
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    fn rhs_flat(&self, y: &[f64]) -> Vec<f64> {
        let n1 = self.grid.k1_len();
        let (k1, k2) = y.split_at(n1);
        let mut out = self.order1(k1, k2);
        if self.n_max == 2 {
            out.extend(self.order2(k1, k2));
        }
        out
    }

    /// Product of `dt` and the rate bound that must stay below [`STEP_GUARD`].
    pub fn step_product(&self, dt: f64, sup_k1: f64) -> f64 {
        dt * (self.guard_rate + self.a_mass * sup_k1)
    }

    /// Total and clipped-negative mass of a flat state.
    fn masses(&self, y: &[f64]) -> (f64, f64) {
        let n1 = self.grid.k1_len();
        let (w1, w2) = match self.grid.mode {
            GridMode::Homogeneous => {
                let v = self.grid.side.powi(self.grid.dim as i32);
                (v, v * self.grid.cell_volume())
            }
            GridMode::Full1d => (self.grid.spacing, self.grid.spacing * self.grid.spacing),
        };
        let mut total = 0.0;
        let mut neg = 0.0;
        for (idx, v) in y.iter().enumerate() {
            let w = if idx < n1 { w1 } else { w2 };
            total += w * v.abs();
            if *v < 0.0 {
                neg -= w * v;
            }
        }
        (total, neg)
    }

    /// Fixed-step RK4 from `state0`, recording the state at every requested
    /// time. Intervals between snapshots are split into equal steps no longer
    /// than `dt`.
    pub fn integrate(&self, state0: &HierarchyState, snapshots: &[f64], dt: f64) -> Result<Trajectory> {
        self.check_state(state0)?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::domain("dt must be positive"));
        }
        if snapshots.iter().any(|t| !t.is_finite() || *t < state0.time)
            || snapshots.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::domain("snapshot times must increase from the initial time"));
        }
        let mut state = state0.clone();
        let mut y = state.flatten();
        let mut traj = Trajectory {
            snapshots: Vec::with_capacity(snapshots.len()),
            steps: 0,
            clip_events: 0,
            clipped_mass: 0.0,
        };
        let n1 = self.grid.k1_len();
        for &target in snapshots {
            let span = target - state.time;
            let steps = if span > 0.0 { (span / dt - 1e-9).ceil().max(1.0) as u64 } else { 0 };
            let start = state.time;
            for s in 0..steps {
                let h = span / steps as f64;
                let sup = y[..n1].iter().cloned().fold(0.0, f64::max);
                let product = self.step_product(h, sup);
                if product > STEP_GUARD {
                    return Err(Error::StepSize {
                        product,
                        limit: STEP_GUARD,
                    });
                }
                let k1 = self.rhs_flat(&y);
                let k2 = self.rhs_flat(&axpy(&y, 0.5 * h, &k1));
                let k3 = self.rhs_flat(&axpy(&y, 0.5 * h, &k2));
                let k4 = self.rhs_flat(&axpy(&y, h, &k3));
                for i in 0..y.len() {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                let time = start + (s + 1) as f64 * h;
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { time });
                }
                let (total, neg) = self.masses(&y);
                if neg > 0.0 {
                    traj.clip_events += 1;
                    traj.clipped_mass += neg;
                    if neg > CLIP_LIMIT * total {
                        return Err(Error::ClipMass {
                            clipped: neg,
                            total,
                            limit: CLIP_LIMIT,
                            time,
                        });
                    }
                    y.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                traj.steps += 1;
            }
            state.time = target;
            state.unflatten(&y);
            traj.snapshots.push(state.clone());
        }
        Ok(traj)
    }
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}
