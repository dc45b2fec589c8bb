use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Circular convolution on an `M^d` torus grid via FFT along each axis.
pub(crate) struct Torus {
    dim: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Torus {
    pub(crate) fn new(dim: usize, m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Torus {
            dim,
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let fft = if inverse { &self.inverse } else { &self.forward };
        let m = self.m;
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        let n = self.len();
        for axis in 0..self.dim {
            let stride = m.pow((self.dim - 1 - axis) as u32);
            for start in 0..n {
                // first element of each line along this axis
                if (start / stride) % m != 0 {
                    continue;
                }
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[start + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[start + i * stride] = *v;
                }
            }
        }
        if inverse {
            let scale = 1.0 / n as f64;
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }

    pub(crate) fn spectrum(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    /// `(f * g)[u] = Σ_v f[v] g[u - v]`, given the spectrum of `f`.
    pub(crate) fn convolve(&self, f_hat: &[Complex64], g: &[f64]) -> Vec<f64> {
        let mut buf = self.spectrum(g);
        for (b, f) in buf.iter_mut().zip(f_hat) {
            *b *= f;
        }
        self.transform(&mut buf, true);
        buf.iter().map(|c| c.re).collect()
    }

    /// Flat index of `-u`.
    pub(crate) fn negate(&self, flat: usize) -> usize {
        let m = self.m;
        let mut rest = flat;
        let mut out = 0;
        let mut scale = 1;
        for _ in 0..self.dim {
            let i = rest % m;
            rest /= m;
            out += ((m - i) % m) * scale;
            scale *= m;
        }
        out
    }
}
