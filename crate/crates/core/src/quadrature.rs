//! Small quadrature helpers shared by the model and the oracle.

use crate::model::{Point, Region};

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let c = 0.5 * (a + b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
        + simpson_step(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}

/// Default number of trapezoid nodes per axis for a given dimension.
pub fn default_nodes(dim: usize) -> usize {
    match dim {
        1 => 1 << 10,
        2 => 1 << 8,
        _ => 1 << 6,
    }
}

/// Tensor-product trapezoid rule over a region with `n` intervals per axis.
pub fn trapezoid<F: FnMut(&Point) -> f64>(mut f: F, region: &Region, n: usize) -> f64 {
    let n = n.max(1);
    let dim = region.dim;
    let mut h = [0.0; 3];
    for (k, hk) in h.iter_mut().enumerate().take(dim) {
        *hk = region.side(k) / n as f64;
    }
    let counts: Vec<usize> = (0..3).map(|k| if k < dim { n + 1 } else { 1 }).collect();
    let mut sum = 0.0;
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for l in 0..counts[2] {
                let idx = [i, j, l];
                let mut x = [0.0; 3];
                let mut w = 1.0;
                for k in 0..dim {
                    x[k] = region.lo[k] + idx[k] as f64 * h[k];
                    if idx[k] == 0 || idx[k] == n {
                        w *= 0.5;
                    }
                }
                sum += w * f(&x);
            }
        }
    }
    sum * h[..dim].iter().product::<f64>()
}

/// Midpoint nodes of a uniform grid of `n` cells per axis, with the cell volume.
pub fn midpoints(region: &Region, n: usize) -> (Vec<Point>, f64) {
    let dim = region.dim;
    let n = n.max(1);
    let mut h = [0.0; 3];
    for (k, hk) in h.iter_mut().enumerate().take(dim) {
        *hk = region.side(k) / n as f64;
    }
    let counts: Vec<usize> = (0..3).map(|k| if k < dim { n } else { 1 }).collect();
    let mut pts = Vec::with_capacity(counts.iter().product());
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for l in 0..counts[2] {
                let idx = [i, j, l];
                let mut x = [0.0; 3];
                for k in 0..dim {
                    x[k] = region.lo[k] + (idx[k] as f64 + 0.5) * h[k];
                }
                pts.push(x);
            }
        }
    }
    (pts, h[..dim].iter().product())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(&|x: f64| (-x * x).exp(), -6.0, 6.0, 1e-12);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_exact_for_bilinear() {
        let r = Region::new(2, &[0.0, 1.0], &[2.0, 3.0]).unwrap();
        let v = trapezoid(|x| x[0] * x[1], &r, 8);
        // ∫0^2 x dx * ∫1^3 y dy = 2 * 4
        assert!((v - 8.0).abs() < 1e-12);
    }
}
