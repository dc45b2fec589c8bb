//! Ensemble statistics: cell counts, factorial and raw moments, binned
//! correlation functions. Error bars are replica-level standard errors.

use serde::Serialize;

use crate::combinatorics::{factorial_u128, StirlingTable};
use crate::error::{Error, Result};
use crate::model::{Point, PointConfiguration, Region, Window};
use crate::simulator::Ensemble;

/// Highest moment order accepted by [`moment_series`].
pub const MOMENT_CAP: usize = 8;

/// `C(n, l)` exactly; zero when `n < l`.
pub fn falling_binomial(n: u64, l: usize) -> u128 {
    if (l as u64) > n {
        return 0;
    }
    let n = n as u128;
    (0..l as u128).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// `F^(l)_Δ(γ) = C(N, l)` with `N = |γ ∩ Δ|`.
pub fn factorial_moment(config: &PointConfiguration, cell: &Region, l: usize) -> u128 {
    falling_binomial(config.count_in(cell) as u64, l)
}

/// `Σ_{l=1}^{n} l! S(n, l) F^(l)` with `factorials[l - 1] = F^(l)`.
pub fn raw_moment_from_factorials(factorials: &[f64], n: usize) -> Result<f64> {
    check_orders(factorials.len(), n)?;
    let t = StirlingTable::shared();
    let mut sum = 0.0;
    for l in 1..=n {
        let w = factorial_u128(l) as f64 * t.get_u128(n, l)? as f64;
        sum += w * factorials[l - 1];
    }
    Ok(sum)
}

/// Integer version of [`raw_moment_from_factorials`].
pub fn raw_moment_from_factorials_exact(factorials: &[u128], n: usize) -> Result<u128> {
    check_orders(factorials.len(), n)?;
    let t = StirlingTable::shared();
    let mut sum = 0u128;
    for l in 1..=n {
        let w = factorial_u128(l) * t.get_u128(n, l)?;
        sum = w
            .checked_mul(factorials[l - 1])
            .and_then(|v| sum.checked_add(v))
            .ok_or_else(|| Error::domain("raw moment overflows u128"))?;
    }
    Ok(sum)
}

fn check_orders(have: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("moment order must be at least 1"));
    }
    if have < n {
        return Err(Error::domain(format!("factorial moments given through order {have}, need {n}")));
    }
    Ok(())
}

/// Mean and replica-level standard error. The error is NaN with fewer than
/// two samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { value: 0.0, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Estimate { value: mean, stderr: f64::NAN };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Estimate {
            value: mean,
            stderr: (var / n as f64).sqrt(),
        }
    }

    /// `|value - target| <= k * stderr`, with a small absolute floor for
    /// exactly deterministic samples.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr + 1e-12 * target.abs().max(1.0)
    }
}

/// Binned estimate of a correlation function of order 1 or 2.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationGrid {
    pub order: u8,
    /// Bin centres: positions for order 1, `[r]` for radial order 2.
    pub centers: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub samples: usize,
    /// For radial order 2: `k2 / ρ̄²` with `ρ̄` the measured mean density.
    pub normalized: Option<Vec<f64>>,
}

impl CorrelationGrid {
    pub fn estimate(&self, i: usize) -> Estimate {
        Estimate {
            value: self.values[i],
            stderr: self.stderrs[i],
        }
    }
}

/// Uniform rectangular bins over a region.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityBins {
    pub region: Region,
    pub shape: [usize; 3],
}

impl DensityBins {
    pub fn new(region: Region, shape: &[usize]) -> Result<Self> {
        if shape.len() != region.dim || shape.iter().any(|&n| n == 0) {
            return Err(Error::domain("one positive bin count per axis required"));
        }
        let mut s = [1; 3];
        s[..shape.len()].copy_from_slice(shape);
        let bins = DensityBins { region, shape: s };
        if !(bins.bin_volume() > 0.0) {
            return Err(Error::domain("density bins have zero volume"));
        }
        Ok(bins)
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin_volume(&self) -> f64 {
        (0..self.region.dim)
            .map(|k| self.region.side(k) / self.shape[k] as f64)
            .product()
    }

    pub fn index_of(&self, x: &Point) -> Option<usize> {
        if !self.region.contains(x) {
            return None;
        }
        let mut flat = 0;
        for k in 0..3 {
            let i = if k < self.region.dim {
                let w = self.region.side(k) / self.shape[k] as f64;
                (((x[k] - self.region.lo[k]) / w) as usize).min(self.shape[k] - 1)
            } else {
                0
            };
            flat = flat * self.shape[k] + i;
        }
        Some(flat)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut idx = [0; 3];
        let mut rest = flat;
        for k in (0..3).rev() {
            idx[k] = rest % self.shape[k];
            rest /= self.shape[k];
        }
        (0..self.region.dim)
            .map(|k| {
                let w = self.region.side(k) / self.shape[k] as f64;
                self.region.lo[k] + (idx[k] as f64 + 0.5) * w
            })
            .collect()
    }
}

/// `k^(1)` per bin: mean count over replicas divided by the bin volume.
pub fn density_estimate(configs: &[&PointConfiguration], bins: &DensityBins) -> Result<CorrelationGrid> {
    let vol = bins.bin_volume();
    if !(vol > 0.0) {
        return Err(Error::domain("density bins have zero volume"));
    }
    let nb = bins.len();
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::with_capacity(configs.len()); nb];
    let mut counts = vec![0usize; nb];
    for c in configs {
        counts.iter_mut().for_each(|n| *n = 0);
        for x in c.iter() {
            if let Some(i) = bins.index_of(x) {
                counts[i] += 1;
            }
        }
        for (acc, &n) in per_bin.iter_mut().zip(&counts) {
            acc.push(n as f64 / vol);
        }
    }
    let est: Vec<Estimate> = per_bin.iter().map(|v| Estimate::from_samples(v)).collect();
    Ok(CorrelationGrid {
        order: 1,
        centers: (0..nb).map(|i| bins.center(i)).collect(),
        values: est.iter().map(|e| e.value).collect(),
        stderrs: est.iter().map(|e| e.stderr).collect(),
        samples: configs.len(),
        normalized: None,
    })
}

/// Radial bins `[i Δr, (i + 1) Δr)` up to `r_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialBins {
    pub r_max: f64,
    pub count: usize,
}

impl RadialBins {
    pub fn width(&self) -> f64 {
        self.r_max / self.count as f64
    }

    /// Volume of the shell `{r_lo <= |x| < r_hi}` in dimension `dim`.
    pub fn shell_volume(&self, dim: usize, i: usize) -> f64 {
        let w = self.width();
        let (r0, r1) = (i as f64 * w, (i + 1) as f64 * w);
        unit_ball_volume(dim) * (r1.powi(dim as i32) - r0.powi(dim as i32))
    }
}

pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => 4.0 / 3.0 * std::f64::consts::PI,
    }
}

/// Radial `k^(2)(r)` on a periodic window: ordered pairs at minimum-image
/// separation in each shell, divided by window volume times shell volume.
pub fn pair_correlation_estimate(
    configs: &[&PointConfiguration],
    window: &Window,
    bins: RadialBins,
) -> Result<CorrelationGrid> {
    if !window.is_periodic() {
        return Err(Error::domain("radial pair correlation needs a periodic window"));
    }
    if bins.count == 0 || !(bins.r_max > 0.0) {
        return Err(Error::domain("radial bins need r_max > 0 and at least one bin"));
    }
    if bins.r_max > 0.5 * window.min_side() * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "r_max = {} exceeds half the window side {}",
            bins.r_max,
            0.5 * window.min_side()
        )));
    }
    let dim = window.dim();
    let vol = window.volume();
    let w = bins.width();
    let r2max = bins.r_max * bins.r_max;
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::with_capacity(configs.len()); bins.count];
    let mut pairs = vec![0u64; bins.count];
    let mut total_count = 0usize;
    for c in configs {
        pairs.iter_mut().for_each(|p| *p = 0);
        let pts = c.points();
        total_count += pts.len();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let r2 = window.distance2(&pts[i], &pts[j]);
                if r2 < r2max {
                    let b = ((r2.sqrt() / w) as usize).min(bins.count - 1);
                    pairs[b] += 2;
                }
            }
        }
        for (b, acc) in per_bin.iter_mut().enumerate() {
            acc.push(pairs[b] as f64 / (vol * bins.shell_volume(dim, b)));
        }
    }
    let est: Vec<Estimate> = per_bin.iter().map(|v| Estimate::from_samples(v)).collect();
    let rho_bar = if configs.is_empty() { 0.0 } else { total_count as f64 / (configs.len() as f64 * vol) };
    let normalized = est
        .iter()
        .map(|e| if rho_bar > 0.0 { e.value / (rho_bar * rho_bar) } else { 0.0 })
        .collect();
    Ok(CorrelationGrid {
        order: 2,
        centers: (0..bins.count).map(|b| vec![(b as f64 + 0.5) * w]).collect(),
        values: est.iter().map(|e| e.value).collect(),
        stderrs: est.iter().map(|e| e.stderr).collect(),
        samples: configs.len(),
        normalized: Some(normalized),
    })
}

/// `k^(2)(x, y)` on a full `M × M` grid in one dimension (ordered pairs of
/// distinct points, per unit area). Values are row-major in `(x, y)`.
pub fn pair_density_grid(configs: &[&PointConfiguration], bins: &DensityBins) -> Result<CorrelationGrid> {
    if bins.region.dim != 1 {
        return Err(Error::domain("full pair grids are one-dimensional only"));
    }
    let m = bins.shape[0];
    let area = bins.bin_volume().powi(2);
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::with_capacity(configs.len()); m * m];
    let mut counts = vec![0u64; m];
    for c in configs {
        counts.iter_mut().for_each(|n| *n = 0);
        for x in c.iter() {
            if let Some(i) = bins.index_of(x) {
                counts[i] += 1;
            }
        }
        for i in 0..m {
            for j in 0..m {
                let p = if i == j { counts[i] * counts[i].saturating_sub(1) } else { counts[i] * counts[j] };
                per_bin[i * m + j].push(p as f64 / area);
            }
        }
    }
    let est: Vec<Estimate> = per_bin.iter().map(|v| Estimate::from_samples(v)).collect();
    let mut centers = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            centers.push(vec![bins.center(i)[0], bins.center(j)[0]]);
        }
    }
    Ok(CorrelationGrid {
        order: 2,
        centers,
        values: est.iter().map(|e| e.value).collect(),
        stderrs: est.iter().map(|e| e.stderr).collect(),
        samples: configs.len(),
        normalized: None,
    })
}

/// Cubic cells of side `h` tiling a region.
#[derive(Clone, Debug, PartialEq)]
pub struct CellPartition {
    pub side: f64,
    pub cells: Vec<Region>,
}

impl CellPartition {
    pub fn new(region: &Region, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::domain("cell side must be positive"));
        }
        let mut counts = [1usize; 3];
        for k in 0..region.dim {
            let ratio = region.side(k) / h;
            let n = ratio.round();
            if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
                return Err(Error::domain(format!(
                    "cell side {h} does not divide window side {}",
                    region.side(k)
                )));
            }
            counts[k] = n as usize;
        }
        let mut cells = Vec::with_capacity(counts.iter().product());
        for i in 0..counts[0] {
            for j in 0..counts[1] {
                for l in 0..counts[2] {
                    let idx = [i, j, l];
                    let mut lo = [0.0; 3];
                    let mut hi = [0.0; 3];
                    for k in 0..region.dim {
                        lo[k] = region.lo[k] + idx[k] as f64 * h;
                        hi[k] = if idx[k] + 1 == counts[k] { region.hi[k] } else { lo[k] + h };
                    }
                    cells.push(Region { dim: region.dim, lo, hi });
                }
            }
        }
        Ok(CellPartition { side: h, cells })
    }

    /// A single (not necessarily cubic) cell.
    pub fn whole(region: Region) -> Self {
        CellPartition {
            side: region.side(0),
            cells: vec![region],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Moment estimates for one cell at one time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellMoments {
    pub cell: usize,
    /// `q^(l)` for `l = 1..=l_max`.
    pub factorial: Vec<Estimate>,
    /// `μ(N^n)` for `n = 1..=n_max` through the Stirling sum of averaged factorials.
    pub raw: Vec<Estimate>,
    /// `μ(N^n)` averaged directly.
    pub raw_direct: Vec<Estimate>,
}

impl CellMoments {
    /// `q^(l)`, with `q^(0) = 1`.
    pub fn q(&self, l: usize) -> f64 {
        if l == 0 {
            1.0
        } else {
            self.factorial[l - 1].value
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentSnapshot {
    pub time: f64,
    pub cells: Vec<CellMoments>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentSeries {
    pub l_max: usize,
    pub n_max: usize,
    pub snapshots: Vec<MomentSnapshot>,
}

/// Cell moments of one snapshot.
pub fn cell_moments(
    configs: &[&PointConfiguration],
    partition: &CellPartition,
    l_max: usize,
    n_max: usize,
) -> Result<Vec<CellMoments>> {
    if l_max > MOMENT_CAP || n_max > MOMENT_CAP {
        return Err(Error::Capacity {
            what: "moment order",
            size: l_max.max(n_max),
            cap: MOMENT_CAP,
        });
    }
    let orders = l_max.max(n_max);
    let table = StirlingTable::shared();
    let mut out = Vec::with_capacity(partition.len());
    for (id, cell) in partition.cells.iter().enumerate() {
        let counts: Vec<u64> = configs.iter().map(|c| c.count_in(cell) as u64).collect();
        let fact_samples: Vec<Vec<f64>> = (1..=orders)
            .map(|l| counts.iter().map(|&n| falling_binomial(n, l) as f64).collect())
            .collect();
        let factorial: Vec<Estimate> = fact_samples.iter().map(|s| Estimate::from_samples(s)).collect();
        let means: Vec<f64> = factorial.iter().map(|e| e.value).collect();
        let mut raw = Vec::with_capacity(n_max);
        let mut raw_direct = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let value = raw_moment_from_factorials(&means, n)?;
            // per-replica Stirling sums give the error bar
            let mut per = vec![0.0; counts.len()];
            for l in 1..=n {
                let w = factorial_u128(l) as f64 * table.get_u128(n, l)? as f64;
                for (p, f) in per.iter_mut().zip(&fact_samples[l - 1]) {
                    *p += w * f;
                }
            }
            raw.push(Estimate {
                value,
                stderr: Estimate::from_samples(&per).stderr,
            });
            let direct: Vec<f64> = counts.iter().map(|&c| (c as f64).powi(n as i32)).collect();
            raw_direct.push(Estimate::from_samples(&direct));
        }
        out.push(CellMoments {
            cell: id,
            factorial: factorial.into_iter().take(l_max).collect(),
            raw,
            raw_direct,
        });
    }
    Ok(out)
}

/// Cell moments at every snapshot of an ensemble.
pub fn moment_series(ensemble: &Ensemble, partition: &CellPartition, l_max: usize, n_max: usize) -> Result<MomentSeries> {
    let mut snapshots = Vec::with_capacity(ensemble.times.len());
    for (i, &t) in ensemble.times.iter().enumerate() {
        snapshots.push(MomentSnapshot {
            time: t,
            cells: cell_moments(&ensemble.at(i), partition, l_max, n_max)?,
        });
    }
    Ok(MomentSeries { l_max, n_max, snapshots })
}

/// Second-moment comparison of two disjoint cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoCellCheck {
    /// `μ(N_x N_y)`, the integral of `k^(2)` over `Δx × Δy`.
    pub cross: Estimate,
    /// `μ((N_x - N_y)^2)`; nonnegative by construction.
    pub square_gap: f64,
    /// `q2_x + q2_y + (q1_x + q1_y) / 2`.
    pub bound: f64,
    pub holds: bool,
}

/// Rearranges `μ((N_x - N_y)^2) >= 0` into a bound on the cross moment in
/// terms of the factorial moments of each cell.
pub fn two_cell_check(configs: &[&PointConfiguration], x: &Region, y: &Region) -> TwoCellCheck {
    let nx: Vec<f64> = configs.iter().map(|c| c.count_in(x) as f64).collect();
    let ny: Vec<f64> = configs.iter().map(|c| c.count_in(y) as f64).collect();
    let r = configs.len().max(1) as f64;
    let cross: Vec<f64> = nx.iter().zip(&ny).map(|(a, b)| a * b).collect();
    let square_gap = nx.iter().zip(&ny).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / r;
    let q1 = |v: &[f64]| v.iter().sum::<f64>() / r;
    let q2 = |v: &[f64]| v.iter().map(|n| n * (n - 1.0) / 2.0).sum::<f64>() / r;
    let bound = q2(&nx) + q2(&ny) + 0.5 * (q1(&nx) + q1(&ny));
    let cross = Estimate::from_samples(&cross);
    TwoCellCheck {
        cross,
        square_gap,
        bound,
        holds: cross.value <= bound * (1.0 + 1e-12) + 1e-12,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use crate::simulator::{sample_initial, InitialCondition};
    use crate::model::Field;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> PointConfiguration {
        xs.iter().map(|&x| [x, 0.0, 0.0]).collect()
    }

    fn unit() -> Region {
        Region::new(1, &[0.0], &[1.0]).unwrap()
    }

    #[test]
    fn factorial_moment_examples() {
        let c = line(&[0.1, 0.2, 0.3, 1.5]);
        assert_eq!(factorial_moment(&c, &unit(), 2), 3);
        assert_eq!(factorial_moment(&c, &unit(), 4), 0);
        assert_eq!(factorial_moment(&c, &unit(), 1), 3);
        assert_eq!(falling_binomial(10, 0), 1);
    }

    #[test]
    fn raw_moment_examples() {
        assert_eq!(raw_moment_from_factorials(&[2.0, 1.0], 2).unwrap(), 4.0);
        assert_eq!(raw_moment_from_factorials(&[5.0], 1).unwrap(), 5.0);
        assert_eq!(raw_moment_from_factorials(&[3.0, 3.0, 1.0], 3).unwrap(), 27.0);
        assert!(raw_moment_from_factorials(&[3.0], 2).is_err());
        assert!(raw_moment_from_factorials(&[3.0], 0).is_err());
    }

    #[test]
    fn empty_ensemble_density_is_zero() {
        let bins = DensityBins::new(Region::new(1, &[0.0], &[4.0]).unwrap(), &[4]).unwrap();
        let e = PointConfiguration::empty();
        let g = density_estimate(&[&e, &e], &bins).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
        let g = density_estimate(&[], &bins).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
        assert!(DensityBins::new(Region::new(1, &[0.0], &[4.0]).unwrap(), &[0]).is_err());
    }

    #[test]
    fn poisson_density_and_pairs() {
        let w = Window::periodic(&[6.0, 6.0]).unwrap();
        let kind = InitialCondition::Poisson(Field::constant(2.0).unwrap());
        let configs: Vec<_> = (0..400)
            .map(|r| sample_initial(&kind, &w, &mut replica_rng(21, r)).unwrap())
            .collect();
        let refs: Vec<_> = configs.iter().collect();
        let bins = DensityBins::new(w.core(), &[3, 3]).unwrap();
        let k1 = density_estimate(&refs, &bins).unwrap();
        for i in 0..k1.values.len() {
            assert!(k1.estimate(i).within(2.0, 4.0), "bin {i}: {:?}", k1.estimate(i));
        }
        let k2 = pair_correlation_estimate(&refs, &w, RadialBins { r_max: 3.0, count: 6 }).unwrap();
        for i in 0..6 {
            assert!(k2.estimate(i).within(4.0, 4.0), "shell {i}: {:?}", k2.estimate(i));
        }
        let g = k2.normalized.unwrap();
        assert!(g.iter().all(|v| (v - 1.0).abs() < 0.25));
    }

    #[test]
    fn pair_estimate_guards() {
        let w = Window::periodic(&[4.0]).unwrap();
        let one = line(&[1.0]);
        let g = pair_correlation_estimate(&[&one, &one], &w, RadialBins { r_max: 2.0, count: 4 }).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
        assert!(pair_correlation_estimate(&[&one], &w, RadialBins { r_max: 2.5, count: 4 }).is_err());
    }

    #[test]
    fn partition_tiles_the_window() {
        let r = Region::new(2, &[0.0, 0.0], &[4.0, 2.0]).unwrap();
        let p = CellPartition::new(&r, 0.5).unwrap();
        assert_eq!(p.len(), 32);
        let total: f64 = p.cells.iter().map(|c| c.volume()).sum();
        assert!((total - 8.0).abs() < 1e-12);
        assert!(CellPartition::new(&r, 0.3).is_err());
        let x = [3.99, 1.99, 0.0];
        assert_eq!(p.cells.iter().filter(|c| c.contains(&x)).count(), 1);
    }

    #[test]
    fn deterministic_moments_are_exact() {
        let c = line(&[0.1, 0.4, 0.7, 0.9, 3.0]);
        let p = CellPartition::whole(unit());
        let m = cell_moments(&[&c], &p, 4, 4).unwrap();
        assert_eq!(m[0].q(0), 1.0);
        let expect = [4.0, 6.0, 4.0, 1.0];
        for l in 1..=4 {
            assert_eq!(m[0].q(l), expect[l - 1]);
            assert_eq!(m[0].raw[l - 1].value, 4f64.powi(l as i32));
            assert_eq!(m[0].raw_direct[l - 1].value, 4f64.powi(l as i32));
        }
        assert!(cell_moments(&[&c], &p, 9, 2).is_err());
    }

    #[test]
    fn poisson_factorial_moments() {
        let w = Window::periodic(&[5.0]).unwrap();
        let kind = InitialCondition::Poisson(Field::constant(1.5).unwrap());
        let configs: Vec<_> = (0..4000)
            .map(|r| sample_initial(&kind, &w, &mut replica_rng(22, r)).unwrap())
            .collect();
        let refs: Vec<_> = configs.iter().collect();
        let p = CellPartition::whole(Region::new(1, &[1.0], &[2.0]).unwrap());
        let m = cell_moments(&refs, &p, 4, 4).unwrap();
        for l in 1..=4usize {
            let target = 1.5f64.powi(l as i32) / factorial_u128(l) as f64;
            assert!(m[0].factorial[l - 1].within(target, 4.0), "l = {l}: {:?}", m[0].factorial[l - 1]);
            let rel = (m[0].raw[l - 1].value - m[0].raw_direct[l - 1].value).abs() / m[0].raw_direct[l - 1].value;
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn two_cell_bound_holds() {
        let c1 = line(&[0.1, 0.2, 1.5]);
        let c2 = line(&[0.3, 1.1, 1.2, 1.9]);
        let c3 = line(&[]);
        let a = unit();
        let b = Region::new(1, &[1.0], &[2.0]).unwrap();
        let chk = two_cell_check(&[&c1, &c2, &c3], &a, &b);
        assert!(chk.holds);
        assert!(chk.square_gap >= 0.0);
        assert!((chk.cross.value - (2.0 + 3.0) / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn stirling_sum_equals_power(n in 0u64..200, order in 1usize..=8) {
            let f: Vec<u128> = (1..=order).map(|l| falling_binomial(n, l)).collect();
            prop_assert_eq!(raw_moment_from_factorials_exact(&f, order).unwrap(), (n as u128).pow(order as u32));
        }

        #[test]
        fn powers_are_monotone_and_subadditive(xs in proptest::collection::vec(0.0..4.0f64, 1..40), s in 0u32..3) {
            let c = line(&xs);
            let whole = Region::new(1, &[0.0], &[4.0]).unwrap();
            let part = CellPartition::new(&whole, 1.0).unwrap();
            let n = c.count_in(&whole) as u128;
            for k in 1..8u32 {
                prop_assert!(n.pow(k) <= n.pow(k + 1));
            }
            let p = 1u32 << s;
            let m = part.len() as u128;
            let rhs: u128 = part.cells.iter().map(|cell| (c.count_in(cell) as u128).pow(p)).sum::<u128>() * m.pow(p - 1);
            prop_assert!(n.pow(p) <= rhs);
        }
    }
}
