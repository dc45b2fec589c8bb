use crate::error::{Error, Result};

/// A position in up to three dimensions. Unused trailing axes are zero.
pub type Point = [f64; 3];

pub const MAX_DIM: usize = 3;

/// Half-open axis-aligned box `[lo, hi)` in the first `dim` axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl Region {
    pub fn new(dim: usize, lo: &[f64], hi: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        if lo.len() < dim || hi.len() < dim {
            return Err(Error::domain("region corners shorter than dimension"));
        }
        let mut r = Region {
            dim,
            lo: [0.0; 3],
            hi: [0.0; 3],
        };
        for k in 0..dim {
            if !(hi[k] >= lo[k]) || !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(Error::domain(format!(
                    "region axis {k}: [{}, {}) is not a finite interval",
                    lo[k], hi[k]
                )));
            }
            r.lo[k] = lo[k];
            r.hi[k] = hi[k];
        }
        Ok(r)
    }

    /// Cube `[origin, origin + side)`.
    pub fn cube(dim: usize, origin: &[f64], side: f64) -> Result<Self> {
        let hi: Vec<f64> = origin.iter().take(dim).map(|o| o + side).collect();
        Region::new(dim, origin, &hi)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|k| self.hi[k] - self.lo[k]).product()
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|k| x[k] >= self.lo[k] && x[k] < self.hi[k])
    }

    /// Closed containment, used for validating stored positions.
    pub fn contains_closed(&self, x: &Point) -> bool {
        (0..self.dim).all(|k| x[k] >= self.lo[k] && x[k] <= self.hi[k])
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0; 3];
        for k in 0..self.dim {
            c[k] = 0.5 * (self.lo[k] + self.hi[k]);
        }
        c
    }
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::domain(format!("dimension {dim} not in 1..=3")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    Periodic,
    /// Particles live in the window padded by `buffer` on every side;
    /// distances are Euclidean and statistics are taken in the unpadded core.
    Absorbing { buffer: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    dim: usize,
    sides: Point,
    boundary: Boundary,
}

impl Window {
    pub fn new(sides: &[f64], boundary: Boundary) -> Result<Self> {
        let dim = sides.len();
        check_dim(dim)?;
        let mut s = [0.0; 3];
        for (k, &l) in sides.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::domain(format!("side {k} must be positive, got {l}")));
            }
            s[k] = l;
        }
        if let Boundary::Absorbing { buffer } = boundary {
            if !(buffer >= 0.0 && buffer.is_finite()) {
                return Err(Error::domain(format!("buffer width must be >= 0, got {buffer}")));
            }
        }
        Ok(Window {
            dim,
            sides: s,
            boundary,
        })
    }

    pub fn periodic(sides: &[f64]) -> Result<Self> {
        Window::new(sides, Boundary::Periodic)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sides(&self) -> &[f64] {
        &self.sides[..self.dim]
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic)
    }

    pub fn min_side(&self) -> f64 {
        self.sides().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Volume of the observation core.
    pub fn volume(&self) -> f64 {
        self.sides().iter().product()
    }

    fn buffer(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => 0.0,
            Boundary::Absorbing { buffer } => buffer,
        }
    }

    /// The observation core `[0, L)`.
    pub fn core(&self) -> Region {
        Region {
            dim: self.dim,
            lo: [0.0; 3],
            hi: self.sides,
        }
    }

    /// The region particles may occupy (core plus buffer).
    pub fn domain(&self) -> Region {
        let w = self.buffer();
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..self.dim {
            lo[k] = -w;
            hi[k] = self.sides[k] + w;
        }
        Region {
            dim: self.dim,
            lo,
            hi,
        }
    }

    pub fn domain_volume(&self) -> f64 {
        self.domain().volume()
    }

    /// `x - y` under the boundary convention (minimum image when periodic).
    #[inline]
    pub fn displacement(&self, x: &Point, y: &Point) -> Point {
        let mut d = [0.0; 3];
        for k in 0..self.dim {
            let mut v = x[k] - y[k];
            if let Boundary::Periodic = self.boundary {
                let l = self.sides[k];
                v -= l * (v / l).round();
            }
            d[k] = v;
        }
        d
    }

    #[inline]
    pub fn distance2(&self, x: &Point, y: &Point) -> f64 {
        let d = self.displacement(x, y);
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    }

    /// Maps a position into the canonical cell `[0, L)` when periodic.
    pub fn wrap(&self, x: &Point) -> Point {
        let mut w = *x;
        if self.is_periodic() {
            for k in 0..self.dim {
                w[k] = x[k].rem_euclid(self.sides[k]);
                if w[k] >= self.sides[k] {
                    w[k] = 0.0;
                }
            }
        }
        w
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.domain().contains_closed(x)
    }
}

pub fn norm(x: &Point) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

pub fn point_from_slice(dim: usize, xs: &[f64]) -> Result<Point> {
    if xs.len() != dim {
        return Err(Error::domain(format!(
            "point has {} coordinates, expected {dim}",
            xs.len()
        )));
    }
    let mut p = [0.0; 3];
    p[..dim].copy_from_slice(xs);
    Ok(p)
}
