use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{Field, Point, PointConfiguration, Window};

/// How replicas start.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// Poisson point process with the given intensity.
    Poisson(Field),
    Empty,
    Explicit(Vec<Point>),
}

/// Draws an initial configuration over the window's domain.
pub fn sample_initial<R: Rng + ?Sized>(
    kind: &InitialCondition,
    window: &Window,
    rng: &mut R,
) -> Result<PointConfiguration> {
    match kind {
        InitialCondition::Empty => Ok(PointConfiguration::empty()),
        InitialCondition::Explicit(points) => {
            let checked = PointConfiguration::in_window(points.clone(), window)?;
            Ok(checked.iter().map(|x| window.wrap(x)).collect())
        }
        InitialCondition::Poisson(rho) => sample_poisson(rho, window, rng),
    }
}

fn sample_poisson<R: Rng + ?Sized>(rho: &Field, window: &Window, rng: &mut R) -> Result<PointConfiguration> {
    let domain = window.domain();
    let sup = rho.sup();
    if !sup.is_finite() || sup < 0.0 {
        return Err(Error::domain(format!("initial density must be bounded and nonnegative, sup = {sup}")));
    }
    let mass = rho.integral(&domain);
    if !(mass > 0.0) {
        return Ok(PointConfiguration::empty());
    }
    let n = Poisson::new(mass)
        .map_err(|e| Error::domain(format!("poisson mean {mass}: {e}")))?
        .sample(rng) as usize;
    let mut points = Vec::with_capacity(n);
    let dim = window.dim();
    while points.len() < n {
        let mut x = [0.0; 3];
        for (k, xk) in x.iter_mut().enumerate().take(dim) {
            let u: f64 = rng.random();
            *xk = domain.lo[k] + u * domain.side(k);
        }
        if rho.is_constant() || rng.random::<f64>() * sup < rho.value(&x) {
            points.push(x);
        }
    }
    Ok(PointConfiguration::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Region;
    use crate::rng::replica_rng;

    #[test]
    fn zero_density_is_empty() {
        let w = Window::periodic(&[5.0]).unwrap();
        let mut rng = replica_rng(1, 0);
        let c = sample_initial(&InitialCondition::Poisson(Field::constant(0.0).unwrap()), &w, &mut rng).unwrap();
        assert!(c.is_empty());
        assert!(sample_initial(&InitialCondition::Empty, &w, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn explicit_points_are_checked() {
        let w = Window::periodic(&[5.0]).unwrap();
        let mut rng = replica_rng(1, 0);
        let ok = InitialCondition::Explicit(vec![[1.0, 0.0, 0.0], [5.0, 0.0, 0.0]]);
        let c = sample_initial(&ok, &w, &mut rng).unwrap();
        assert_eq!(c.points()[1][0], 0.0);
        let bad = InitialCondition::Explicit(vec![[6.0, 0.0, 0.0]]);
        assert!(sample_initial(&bad, &w, &mut rng).is_err());
    }

    #[test]
    fn constant_density_mean_and_variance() {
        let w = Window::periodic(&[2.0, 2.5]).unwrap();
        let kind = InitialCondition::Poisson(Field::constant(3.0).unwrap());
        let reps = 4000;
        let counts: Vec<f64> = (0..reps)
            .map(|r| sample_initial(&kind, &w, &mut replica_rng(9, r)).unwrap().len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        // mean 15, variance 15
        assert!((mean - 15.0).abs() < 4.0 * (15.0 / reps as f64).sqrt(), "mean {mean}");
        assert!((var - 15.0).abs() < 4.0 * 15.0 * (2.0 / reps as f64).sqrt(), "var {var}");
    }

    #[test]
    fn bump_density_counts_in_subregion() {
        let w = Window::periodic(&[4.0]).unwrap();
        let rho = Field::bump(0.5, 4.0, [1.0, 0.0, 0.0], 0.3).unwrap();
        let sub = Region::new(1, &[0.5], &[1.5]).unwrap();
        let expected = rho.integral(&sub);
        let kind = InitialCondition::Poisson(rho);
        let reps = 4000;
        let total: usize = (0..reps)
            .map(|r| sample_initial(&kind, &w, &mut replica_rng(11, r)).unwrap().count_in(&sub))
            .sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - expected).abs() < 4.0 * (expected / reps as f64).sqrt(), "{mean} vs {expected}");
    }
}
