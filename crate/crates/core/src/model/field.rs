use super::window::{Point, Region};
use crate::error::{Error, Result};
use crate::quadrature::{default_nodes, trapezoid};

/// A nonnegative bounded scalar field on the simulation domain.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Constant(f64),
    /// Piecewise constant on a uniform grid covering `region`,
    /// values stored row-major (last axis fastest).
    Tabulated {
        region: Region,
        shape: [usize; 3],
        values: Vec<f64>,
    },
    /// `base + amplitude * exp(-|x - center|^2 / (2 width^2))`
    Bump {
        base: f64,
        amplitude: f64,
        center: Point,
        width: f64,
    },
    /// `base + amplitude * cos(2π x_axis / wavelength)`
    Cosine {
        base: f64,
        amplitude: f64,
        axis: usize,
        wavelength: f64,
    },
}

impl Field {
    pub fn constant(v: f64) -> Result<Self> {
        let f = Field::Constant(v);
        f.validate()?;
        Ok(f)
    }

    pub fn tabulated(region: Region, shape: &[usize], values: Vec<f64>) -> Result<Self> {
        if shape.len() != region.dim {
            return Err(Error::domain(format!(
                "grid shape has {} axes, window has {}",
                shape.len(),
                region.dim
            )));
        }
        let mut s = [1usize; 3];
        for (k, &n) in shape.iter().enumerate() {
            if n == 0 {
                return Err(Error::domain("grid shape entries must be positive"));
            }
            s[k] = n;
        }
        let expected: usize = s.iter().product();
        if values.len() != expected {
            return Err(Error::domain(format!(
                "grid has {} values, shape requires {expected}",
                values.len()
            )));
        }
        let f = Field::Tabulated {
            region,
            shape: s,
            values,
        };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Field::Constant(v) => *v >= 0.0 && v.is_finite(),
            Field::Tabulated { values, .. } => values.iter().all(|v| *v >= 0.0 && v.is_finite()),
            Field::Bump {
                base,
                amplitude,
                width,
                ..
            } => {
                base.is_finite()
                    && amplitude.is_finite()
                    && *base >= 0.0
                    && base + amplitude.min(0.0) >= 0.0
                    && *width > 0.0
            }
            Field::Cosine {
                base,
                amplitude,
                wavelength,
                axis,
            } => {
                base.is_finite()
                    && amplitude.is_finite()
                    && *base >= amplitude.abs()
                    && *wavelength > 0.0
                    && *axis < 3
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "field must be finite and nonnegative everywhere: {self:?}"
            )))
        }
    }

    pub fn bump(base: f64, amplitude: f64, center: Point, width: f64) -> Result<Self> {
        let f = Field::Bump {
            base,
            amplitude,
            center,
            width,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn cosine(base: f64, amplitude: f64, axis: usize, wavelength: f64) -> Result<Self> {
        let f = Field::Cosine {
            base,
            amplitude,
            axis,
            wavelength,
        };
        f.validate()?;
        Ok(f)
    }

    #[inline]
    pub fn value(&self, x: &Point) -> f64 {
        match self {
            Field::Constant(v) => *v,
            Field::Tabulated {
                region,
                shape,
                values,
            } => values[Self::flat_index(region, shape, x)],
            Field::Bump {
                base,
                amplitude,
                center,
                width,
            } => {
                let r2: f64 = (0..3).map(|k| (x[k] - center[k]).powi(2)).sum();
                base + amplitude * (-0.5 * r2 / (width * width)).exp()
            }
            Field::Cosine {
                base,
                amplitude,
                axis,
                wavelength,
            } => base + amplitude * (2.0 * std::f64::consts::PI * x[*axis] / wavelength).cos(),
        }
    }

    fn flat_index(region: &Region, shape: &[usize; 3], x: &Point) -> usize {
        let mut idx = 0;
        for k in 0..3 {
            let i = if k < region.dim {
                let h = region.side(k) / shape[k] as f64;
                let raw = ((x[k] - region.lo[k]) / h).floor();
                (raw.max(0.0) as usize).min(shape[k] - 1)
            } else {
                0
            };
            idx = idx * shape[k] + i;
        }
        idx
    }

    /// Supremum over the whole space.
    pub fn sup(&self) -> f64 {
        match self {
            Field::Constant(v) => *v,
            Field::Tabulated { values, .. } => values.iter().copied().fold(0.0, f64::max),
            Field::Bump {
                base, amplitude, ..
            } => base + amplitude.max(0.0),
            Field::Cosine {
                base, amplitude, ..
            } => base + amplitude.abs(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Field::Constant(_) => true,
            Field::Tabulated { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
            Field::Bump { amplitude, .. } | Field::Cosine { amplitude, .. } => *amplitude == 0.0,
        }
    }

    /// True when the field vanishes identically on the region.
    pub fn vanishes_on(&self, region: &Region) -> bool {
        match self {
            Field::Constant(v) => *v == 0.0,
            Field::Tabulated { .. } => self.integral(region) == 0.0,
            Field::Bump {
                base, amplitude, ..
            } => *base == 0.0 && *amplitude == 0.0,
            Field::Cosine { base, .. } => *base == 0.0,
        }
    }

    /// `∫_region f`; exact for constant and tabulated fields, trapezoid otherwise.
    pub fn integral(&self, region: &Region) -> f64 {
        match self {
            Field::Constant(v) => v * region.volume(),
            Field::Tabulated {
                region: grid,
                shape,
                values,
            } => {
                let dim = grid.dim;
                let overlaps: Vec<Vec<(usize, f64)>> = (0..3)
                    .map(|k| {
                        if k >= dim {
                            return vec![(0, 1.0)];
                        }
                        let h = grid.side(k) / shape[k] as f64;
                        (0..shape[k])
                            .filter_map(|i| {
                                let lo = grid.lo[k] + i as f64 * h;
                                let hi = lo + h;
                                let len = hi.min(region.hi[k]) - lo.max(region.lo[k]);
                                (len > 0.0).then_some((i, len))
                            })
                            .collect()
                    })
                    .collect();
                let mut sum = 0.0;
                for &(i, li) in &overlaps[0] {
                    for &(j, lj) in &overlaps[1] {
                        for &(l, ll) in &overlaps[2] {
                            let idx = (i * shape[1] + j) * shape[2] + l;
                            sum += values[idx] * li * lj * ll;
                        }
                    }
                }
                sum
            }
            _ => trapezoid(|x| self.value(x), region, default_nodes(region.dim)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_lookup_and_integral() {
        let r = Region::new(2, &[0.0, 0.0], &[2.0, 1.0]).unwrap();
        let f = Field::tabulated(r.clone(), &[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.value(&[0.2, 0.7, 0.0]), 2.0);
        assert_eq!(f.value(&[1.5, 0.2, 0.0]), 3.0);
        assert_eq!(f.integral(&r), 0.5 * 10.0);
        let half = Region::new(2, &[0.5, 0.0], &[1.5, 1.0]).unwrap();
        assert!((f.integral(&half) - (0.5 * 0.5 * (1.0 + 2.0 + 3.0 + 4.0))).abs() < 1e-12);
        assert_eq!(f.sup(), 4.0);
    }

    #[test]
    fn rejects_negative_fields() {
        assert!(Field::constant(-1.0).is_err());
        assert!(Field::cosine(1.0, 2.0, 0, 1.0).is_err());
        let r = Region::new(1, &[0.0], &[1.0]).unwrap();
        assert!(Field::tabulated(r.clone(), &[2], vec![1.0, -0.1]).is_err());
        assert!(Field::tabulated(r, &[3], vec![1.0, 0.1]).is_err());
    }

    #[test]
    fn cosine_integral_over_period() {
        let f = Field::cosine(2.0, 1.0, 0, 4.0).unwrap();
        let r = Region::new(1, &[0.0], &[4.0]).unwrap();
        assert!((f.integral(&r) - 8.0).abs() < 1e-9);
        assert_eq!(f.sup(), 3.0);
    }
}
