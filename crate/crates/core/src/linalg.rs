//! Thomas algorithm for the tridiagonal systems of the implicit time steppers.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tridiagonal matrix; `lower[0]` and `upper[m-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

/// LU factors from the forward sweep, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct Factored<T> {
    lower: Vec<T>,
    upper_mod: Vec<T>,
    pivots: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn factor(&self) -> Result<Factored<T>> {
        let m = self.len();
        let mut upper_mod = vec![T::zero(); m];
        let mut pivots = vec![T::zero(); m];
        for i in 0..m {
            let pivot = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.lower[i] * upper_mod[i - 1]
            };
            if pivot == T::zero() || !pivot.is_finite() {
                return Err(Error::Singular { row: i });
            }
            pivots[i] = pivot;
            if i + 1 < m {
                upper_mod[i] = self.upper[i] / pivot;
            }
        }
        Ok(Factored {
            lower: self.lower.clone(),
            upper_mod,
            pivots,
        })
    }

    /// `A x` for a vector of matching length.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let m = self.len();
        (0..m)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.lower[i] * x[i - 1];
                }
                if i + 1 < m {
                    v += self.upper[i] * x[i + 1];
                }
                v
            })
            .collect()
    }
}

impl<T: Real> Factored<T> {
    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [T]) {
        let m = self.pivots.len();
        debug_assert_eq!(rhs.len(), m);
        rhs[0] /= self.pivots[0];
        for i in 1..m {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / self.pivots[i];
        }
        for i in (0..m.saturating_sub(1)).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.upper_mod[i] * next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn singular_is_reported() {
        let a = Tridiagonal {
            lower: vec![0.0, 1.0],
            diag: vec![0.0, 1.0],
            upper: vec![1.0, 0.0],
        };
        assert!(matches!(a.factor(), Err(Error::Singular { row: 0 })));
    }

    proptest! {
        #[test]
        fn solves_diagonally_dominant_systems(
            m in 1usize..40,
            seed in proptest::collection::vec(-1.0f64..1.0, 160),
        ) {
            let lower: Vec<f64> = (0..m).map(|i| seed[i]).collect();
            let upper: Vec<f64> = (0..m).map(|i| seed[40 + i]).collect();
            let diag: Vec<f64> = (0..m).map(|i| 2.5 + seed[80 + i]).collect();
            let x: Vec<f64> = (0..m).map(|i| seed[120 + i]).collect();
            let a = Tridiagonal { lower, diag, upper };
            let mut b = a.apply(&x);
            a.factor().unwrap().solve_in_place(&mut b);
            for (u, v) in b.iter().zip(&x) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
