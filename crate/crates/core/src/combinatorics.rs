//! Exact combinatorics behind the moment expansions: Stirling numbers of the
//! second kind, Touchard polynomials, subset splits and product functionals.

use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: usize = 64;
pub const SUBSET_CAP: usize = 20;

/// Triangular table of `S(n, l)` for `0 <= l <= n <= n_max`.
#[derive(Clone, Debug)]
pub struct StirlingTable {
    n_max: usize,
    rows: Vec<Vec<BigUint>>,
}

impl StirlingTable {
    pub fn new(n_max: usize) -> Self {
        let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n_max + 1);
        rows.push(vec![BigUint::one()]);
        for n in 1..=n_max {
            let prev = &rows[n - 1];
            let mut row = vec![BigUint::zero(); n + 1];
            for l in 1..=n {
                let keep = if l < n { &prev[l] * l } else { BigUint::zero() };
                row[l] = keep + &prev[l - 1];
            }
            rows.push(row);
        }
        StirlingTable { n_max, rows }
    }

    /// Process-wide table with `n_max = 64`.
    pub fn shared() -> &'static StirlingTable {
        static TABLE: OnceLock<StirlingTable> = OnceLock::new();
        TABLE.get_or_init(|| StirlingTable::new(DEFAULT_N_MAX))
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    fn check(&self, n: usize, l: usize) -> Result<()> {
        if n > self.n_max {
            return Err(Error::domain(format!("n = {n} exceeds table order {}", self.n_max)));
        }
        if l < 1 || l > n {
            return Err(Error::domain(format!("S({n}, {l}) requires 1 <= l <= n")));
        }
        Ok(())
    }

    pub fn get(&self, n: usize, l: usize) -> Result<&BigUint> {
        self.check(n, l)?;
        Ok(&self.rows[n][l])
    }

    pub fn get_u128(&self, n: usize, l: usize) -> Result<u128> {
        self.get(n, l)?
            .to_u128()
            .ok_or_else(|| Error::domain(format!("S({n}, {l}) overflows u128")))
    }

    /// `T_n(κ) = Σ_l S(n, l) κ^l`.
    pub fn touchard(&self, n: usize, kappa: f64) -> Result<f64> {
        self.check(n, 1)?;
        if !(kappa >= 0.0) {
            return Err(Error::domain(format!("touchard needs kappa >= 0, got {kappa}")));
        }
        // Horner in κ, converting the exact coefficients once.
        let mut acc = 0.0;
        for l in (1..=n).rev() {
            let s = self.rows[n][l].to_f64().unwrap_or(f64::INFINITY);
            acc = acc * kappa + s;
        }
        Ok(acc * kappa)
    }
}

/// `S(n, l)` from the shared table.
pub fn stirling(n: usize, l: usize) -> Result<BigUint> {
    StirlingTable::shared().get(n, l).cloned()
}

/// `S(n, l) = (1/l!) Σ_{s=0}^{l} (-1)^{l-s} C(l, s) s^n` in exact integer arithmetic.
pub fn stirling_alternating_sum(n: usize, l: usize) -> Result<BigUint> {
    if l < 1 || l > n {
        return Err(Error::domain(format!("S({n}, {l}) requires 1 <= l <= n")));
    }
    let mut sum = BigInt::zero();
    let mut binom = BigInt::one();
    for s in 0..=l {
        if s > 0 {
            binom = binom * BigInt::from(l - s + 1) / BigInt::from(s);
        }
        let term = &binom * BigInt::from(s).pow(n as u32);
        if (l - s) % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    let fact: BigInt = (1..=l).map(BigInt::from).product();
    let q = sum / fact;
    debug_assert!(!q.is_negative());
    Ok(q.to_biguint().expect("nonnegative"))
}

/// Touchard polynomial from the shared table.
pub fn touchard(n: usize, kappa: f64) -> Result<f64> {
    StirlingTable::shared().touchard(n, kappa)
}

/// `l!` as `u128`; valid for `l <= 34`.
pub fn factorial_u128(l: usize) -> u128 {
    (1..=l as u128).product()
}

/// Iterator over the `2^n` ordered splits `(ξ, η \ ξ)` of a list.
pub struct SubsetSplits<'a, T> {
    items: &'a [T],
    mask: u64,
    end: u64,
}

impl<'a, T: Clone> Iterator for SubsetSplits<'a, T> {
    type Item = (Vec<T>, Vec<T>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.mask >= self.end {
            return None;
        }
        let mask = self.mask;
        self.mask += 1;
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for (i, x) in self.items.iter().enumerate() {
            if mask >> i & 1 == 1 {
                inside.push(x.clone());
            } else {
                outside.push(x.clone());
            }
        }
        Some((inside, outside))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.mask) as usize;
        (left, Some(left))
    }
}

/// All splits of `eta` into a subset and its complement, each exactly once.
pub fn subsets<T: Clone>(eta: &[T]) -> Result<SubsetSplits<'_, T>> {
    check_subset_cap(eta.len())?;
    Ok(SubsetSplits {
        items: eta,
        mask: 0,
        end: 1u64 << eta.len(),
    })
}

pub(crate) fn check_subset_cap(n: usize) -> Result<()> {
    if n > SUBSET_CAP {
        return Err(Error::Capacity {
            what: "subset enumeration",
            size: n,
            cap: SUBSET_CAP,
        });
    }
    Ok(())
}

/// `e(ξ; φ) = Π_{x ∈ ξ} φ(x)`; the empty product is 1.
pub fn product_functional<T, F: Fn(&T) -> f64>(xi: &[T], phi: F) -> f64 {
    xi.iter().map(phi).product()
}
