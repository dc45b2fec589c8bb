use super::window::{check_dim, norm, Point};
use super::Region;
use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Default truncation radius in units of the range for Gaussian kernels.
/// The neglected tail carries less than 1e-8 of the mass for d <= 3.
pub const GAUSSIAN_CUT: f64 = 7.0;
/// Same for exponential kernels.
pub const EXPONENTIAL_CUT: f64 = 26.0;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelShape {
    /// `A exp(-r^2 / (2 s^2))`
    Gaussian,
    /// `A exp(-r / s)`
    Exponential,
    /// `A` for `r <= s`, zero beyond. Discontinuous.
    TopHat,
    /// Radial profile sampled at equally spaced radii on `[0, r_cut]`,
    /// linearly interpolated and scaled by the amplitude.
    Tabulated(Vec<f64>),
}

/// Radially symmetric competition kernel truncated at `r_cut`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompetitionKernel {
    shape: KernelShape,
    dim: usize,
    amplitude: f64,
    range: f64,
    r_cut: f64,
    mass: f64,
    sup: f64,
}

impl CompetitionKernel {
    /// Builds a kernel; `r_cut = None` picks the preset default.
    pub fn new(
        shape: KernelShape,
        dim: usize,
        amplitude: f64,
        range: f64,
        r_cut: Option<f64>,
    ) -> Result<Self> {
        check_dim(dim)?;
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::domain(format!("kernel amplitude must be >= 0, got {amplitude}")));
        }
        if !(range >= 0.0 && range.is_finite()) {
            return Err(Error::domain(format!("kernel range must be >= 0, got {range}")));
        }
        let r_cut = match (&shape, r_cut) {
            (_, Some(r)) => r,
            (KernelShape::Gaussian, None) => GAUSSIAN_CUT * range,
            (KernelShape::Exponential, None) => EXPONENTIAL_CUT * range,
            (KernelShape::TopHat, None) => range,
            (KernelShape::Tabulated(_), None) => {
                return Err(Error::domain("tabulated kernel requires r_cut"))
            }
        };
        if !(r_cut >= 0.0 && r_cut.is_finite()) {
            return Err(Error::domain(format!("r_cut must be >= 0, got {r_cut}")));
        }
        if let KernelShape::Tabulated(values) = &shape {
            if values.len() < 2 {
                return Err(Error::domain("tabulated kernel needs at least two samples"));
            }
            if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::domain("tabulated kernel values must be finite and >= 0"));
            }
        }
        if matches!(shape, KernelShape::Gaussian | KernelShape::Exponential)
            && range == 0.0
            && amplitude > 0.0
        {
            return Err(Error::domain("kernel range must be positive"));
        }
        let mut k = CompetitionKernel {
            shape,
            dim,
            amplitude,
            range,
            r_cut,
            mass: 0.0,
            sup: 0.0,
        };
        k.mass = k.compute_mass();
        k.sup = k.compute_sup();
        Ok(k)
    }

    /// The competition-free kernel `a ≡ 0`.
    pub fn zero(dim: usize) -> Result<Self> {
        CompetitionKernel::new(KernelShape::TopHat, dim, 0.0, 0.0, Some(0.0))
    }

    pub fn gaussian(dim: usize, amplitude: f64, range: f64) -> Result<Self> {
        CompetitionKernel::new(KernelShape::Gaussian, dim, amplitude, range, None)
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn r_cut(&self) -> f64 {
        self.r_cut
    }

    /// `⟨a⟩`, the integral of the truncated kernel.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `‖a‖`, the supremum of the kernel.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// True when the kernel vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.sup == 0.0
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.shape, KernelShape::TopHat) || self.is_zero()
    }

    /// Radial profile `a(r)`, zero beyond `r_cut`.
    #[inline]
    pub fn radial(&self, r: f64) -> f64 {
        if r > self.r_cut || self.amplitude == 0.0 {
            return 0.0;
        }
        self.profile(r)
    }

    #[inline]
    fn profile(&self, r: f64) -> f64 {
        match &self.shape {
            KernelShape::Gaussian => {
                let z = r / self.range;
                self.amplitude * (-0.5 * z * z).exp()
            }
            KernelShape::Exponential => self.amplitude * (-r / self.range).exp(),
            KernelShape::TopHat => {
                if r <= self.range {
                    self.amplitude
                } else {
                    0.0
                }
            }
            KernelShape::Tabulated(v) => {
                if self.r_cut == 0.0 {
                    return self.amplitude * v[0];
                }
                let pos = r / self.r_cut * (v.len() - 1) as f64;
                let i = (pos.floor() as usize).min(v.len() - 2);
                let frac = pos - i as f64;
                self.amplitude * (v[i] * (1.0 - frac) + v[i + 1] * frac)
            }
        }
    }

    /// `a(x)` for a displacement vector.
    #[inline]
    pub fn eval(&self, x: &Point) -> f64 {
        self.radial(norm(x))
    }

    /// `a` from a squared distance; avoids the square root where possible.
    #[inline]
    pub fn eval_r2(&self, r2: f64) -> f64 {
        if r2 > self.r_cut * self.r_cut || self.amplitude == 0.0 {
            return 0.0;
        }
        match self.shape {
            KernelShape::Gaussian => self.amplitude * (-0.5 * r2 / (self.range * self.range)).exp(),
            _ => self.profile(r2.sqrt()),
        }
    }

    fn surface_factor(&self) -> f64 {
        match self.dim {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        }
    }

    fn compute_mass(&self) -> f64 {
        if self.amplitude == 0.0 || self.r_cut == 0.0 {
            return 0.0;
        }
        let s = self.surface_factor();
        let d = self.dim as i32;
        let integrand = |r: f64| s * r.powi(d - 1) * self.profile(r);
        match &self.shape {
            KernelShape::Tabulated(v) => {
                let n = v.len() - 1;
                let h = self.r_cut / n as f64;
                (0..=n)
                    .map(|i| {
                        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                        w * integrand(i as f64 * h)
                    })
                    .sum::<f64>()
                    * h
            }
            KernelShape::TopHat => {
                let r = self.r_cut.min(self.range);
                let ball = match self.dim {
                    1 => 2.0 * r,
                    2 => std::f64::consts::PI * r * r,
                    _ => 4.0 / 3.0 * std::f64::consts::PI * r * r * r,
                };
                self.amplitude * ball
            }
            _ => {
                // split at a few ranges so the adaptive rule sees the bulk
                let mut edges = vec![0.0];
                let mut e = self.range;
                while e < self.r_cut {
                    edges.push(e);
                    e *= 2.0;
                }
                edges.push(self.r_cut);
                let tol = 1e-13 * self.amplitude * self.range.powi(d).max(1e-300);
                edges
                    .windows(2)
                    .map(|w| adaptive_simpson(&integrand, w[0], w[1], tol))
                    .sum()
            }
        }
    }

    fn compute_sup(&self) -> f64 {
        match &self.shape {
            KernelShape::Tabulated(v) => self.amplitude * v.iter().copied().fold(0.0, f64::max),
            _ => self.amplitude,
        }
    }
}

/// `inf_{x ∈ cell} a(x)` by dense grid minimisation with pitch at most side/64.
/// Returns 0 when the infimum is not positive.
pub fn cell_infimum(cell: &Region, kernel: &CompetitionKernel) -> f64 {
    const PER_AXIS: usize = 64;
    let dim = cell.dim;
    let counts: Vec<usize> = (0..3)
        .map(|k| {
            if k < dim && cell.side(k) > 0.0 {
                PER_AXIS + 1
            } else {
                1
            }
        })
        .collect();
    let mut inf = f64::INFINITY;
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for l in 0..counts[2] {
                let idx = [i, j, l];
                let mut x = [0.0; 3];
                for k in 0..dim {
                    let step = if counts[k] > 1 {
                        cell.side(k) / PER_AXIS as f64
                    } else {
                        0.0
                    };
                    x[k] = cell.lo[k] + idx[k] as f64 * step;
                }
                inf = inf.min(kernel.eval(&x));
            }
        }
    }
    if inf <= 1e-300 {
        0.0
    } else {
        inf
    }
}

/// `inf a` over all differences `x - y` with `x, y` in a cube of the given side,
/// i.e. over the cube `[-side, side]^d`. This is the constant that bounds the
/// competition felt inside one cell from below.
pub fn pair_infimum(dim: usize, side: f64, kernel: &CompetitionKernel) -> Result<f64> {
    let lo = [-side; 3];
    let cube = Region::cube(dim, &lo[..dim], 2.0 * side)?;
    Ok(cell_infimum(&cube, kernel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::midpoints;
    use std::f64::consts::PI;

    fn brute_mass(k: &CompetitionKernel, n: usize) -> f64 {
        let r = k.r_cut();
        let lo = [-r; 3];
        let hi = [r; 3];
        let region = Region::new(k.dim(), &lo[..k.dim()], &hi[..k.dim()]).unwrap();
        let (pts, dv) = midpoints(&region, n);
        pts.iter().map(|x| k.eval(x)).sum::<f64>() * dv
    }

    #[test]
    fn gaussian_mass_matches_brute_force_grid() {
        for (dim, n) in [(1, 200_000), (2, 2000)] {
            let k = CompetitionKernel::gaussian(dim, 1.3, 0.7).unwrap();
            let exact = 1.3 * (2.0 * PI * 0.49f64).powf(dim as f64 / 2.0);
            assert!((k.mass() - exact).abs() / exact < 1e-6, "dim {dim}");
            let brute = brute_mass(&k, n);
            assert!((k.mass() - brute).abs() / brute < 1e-6, "dim {dim}: {} vs {brute}", k.mass());
        }
    }

    #[test]
    fn exponential_and_tophat_masses() {
        let k = CompetitionKernel::new(KernelShape::Exponential, 1, 2.0, 0.5, None).unwrap();
        assert!((k.mass() - 2.0).abs() < 1e-6 * 2.0);
        let k = CompetitionKernel::new(KernelShape::Exponential, 3, 1.0, 1.0, None).unwrap();
        assert!((k.mass() - 8.0 * PI).abs() < 1e-6 * 8.0 * PI);
        let k = CompetitionKernel::new(KernelShape::TopHat, 2, 3.0, 1.5, None).unwrap();
        assert!((k.mass() - 3.0 * PI * 2.25).abs() < 1e-12);
        assert!(!k.is_continuous());
    }

    #[test]
    fn truncation_and_symmetry() {
        let k = CompetitionKernel::gaussian(2, 1.0, 1.0).unwrap();
        assert_eq!(k.r_cut(), 7.0);
        assert_eq!(k.eval(&[7.01, 0.0, 0.0]), 0.0);
        assert!(k.eval(&[6.99, 0.0, 0.0]) > 0.0);
        let x = [0.3, -1.2, 0.0];
        assert_eq!(k.eval(&x), k.eval(&[-0.3, 1.2, 0.0]));
        assert_eq!(k.sup(), 1.0);
    }

    #[test]
    fn tabulated_kernel_interpolates() {
        let k = CompetitionKernel::new(
            KernelShape::Tabulated(vec![2.0, 1.0, 0.0]),
            1,
            1.0,
            0.0,
            Some(2.0),
        )
        .unwrap();
        assert_eq!(k.radial(0.5), 1.5);
        assert_eq!(k.sup(), 2.0);
        // trapezoid of 2 * a(r) on nodes 0,1,2
        assert!((k.mass() - 2.0 * (1.0 + 1.0)).abs() < 1e-12);
        assert!(CompetitionKernel::new(KernelShape::Tabulated(vec![1.0, 2.0]), 1, 1.0, 0.0, None).is_err());
    }

    #[test]
    fn cell_infimum_examples() {
        let g = CompetitionKernel::gaussian(1, 2.5, 1.0).unwrap();
        let point = Region::cube(1, &[0.0], 0.0).unwrap();
        assert_eq!(cell_infimum(&point, &g), 2.5);

        let top = CompetitionKernel::new(KernelShape::TopHat, 2, 4.0, 1.0, None).unwrap();
        let inside = Region::cube(2, &[0.1, 0.1], 0.5).unwrap();
        assert_eq!(cell_infimum(&inside, &top), 4.0);

        let g1 = CompetitionKernel::gaussian(1, 1.0, 1.0).unwrap();
        let c = Region::cube(1, &[0.0], 0.5).unwrap();
        assert!((cell_infimum(&c, &g1) - (-0.125f64).exp()).abs() < 1e-15);

        let far = Region::cube(1, &[8.0], 1.0).unwrap();
        assert_eq!(cell_infimum(&far, &g1), 0.0);
    }

    #[test]
    fn pair_infimum_uses_the_cell_diagonal() {
        let g = CompetitionKernel::gaussian(2, 1.0, 1.0).unwrap();
        let v = pair_infimum(2, 0.5, &g).unwrap();
        // farthest difference is the diagonal of length 0.5 * sqrt(2)
        assert!((v - (-0.25f64).exp()).abs() < 1e-12);
    }
}
