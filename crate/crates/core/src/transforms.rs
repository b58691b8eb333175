//! Volterra transformations and boundary control laws on sampled profiles.
//!
//! Every integral uses the trapezoid rule on the shared uniform grid, so the
//! forward transform evaluated at `x = 1` is exactly `u(1) - U`.

use crate::error::{Error, Result};
use crate::kernels::TriGrid;
use crate::quadrature::trapezoid_dot;
use crate::scalar::{node, sup_norm, Real};

/// One spatial profile on the uniform grid `x_i = i / (n - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField<T> {
    pub time: T,
    pub values: Vec<T>,
}

impl<T: Real> StateField<T> {
    pub fn new(time: T, values: Vec<T>) -> Self {
        Self { time, values }
    }

    pub fn zeros(n: usize, time: T) -> Self {
        Self {
            time,
            values: vec![T::zero(); n],
        }
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(n: usize, time: T, f: impl Fn(T) -> T) -> Self {
        Self {
            time,
            values: (0..n).map(|i| f(node(i, n))).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn linf(&self) -> T {
        sup_norm(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn check_dims<T: Real>(field: &StateField<T>, kernel: &TriGrid<T>) -> Result<()> {
    if field.n() != kernel.n() {
        return Err(Error::Dimension {
            expected: kernel.n(),
            found: field.n(),
        });
    }
    Ok(())
}

/// `∫_0^{x_i} kernel(x_i, z) v(z) dz` on the samples `z_0..=z_i`.
#[inline]
pub(crate) fn row_integral<T: Real>(kernel: &TriGrid<T>, i: usize, v: &[T]) -> T {
    if i == 0 {
        return T::zero();
    }
    trapezoid_dot(kernel.row(i), &v[..=i]) * kernel.step()
}

/// `v_i + sign · ∫_0^{x_i} kernel(x_i, z) v(z) dz` for every node.
pub(crate) fn volterra_apply<T: Real>(kernel: &TriGrid<T>, v: &[T], sign: T) -> Vec<T> {
    (0..v.len()).map(|i| v[i] + sign * row_integral(kernel, i, v)).collect()
}

/// `w(x) = u(x) - ∫_0^x k(x, z) u(z) dz`.
pub fn forward_transform<T: Real>(field: &StateField<T>, kernel: &TriGrid<T>) -> Result<StateField<T>> {
    check_dims(field, kernel)?;
    Ok(StateField::new(
        field.time,
        volterra_apply(kernel, &field.values, -T::one()),
    ))
}

/// `u(x) = w(x) + ∫_0^x l(x, z) w(z) dz`.
pub fn inverse_transform<T: Real>(field: &StateField<T>, inverse_kernel: &TriGrid<T>) -> Result<StateField<T>> {
    check_dims(field, inverse_kernel)?;
    Ok(StateField::new(
        field.time,
        volterra_apply(inverse_kernel, &field.values, T::one()),
    ))
}

/// State-feedback law `U = ∫_0^1 k(1, z) u(z) dz`.
pub fn control_state_feedback<T: Real>(u: &StateField<T>, k: &TriGrid<T>) -> Result<T> {
    check_dims(u, k)?;
    Ok(row_integral(k, k.n() - 1, &u.values))
}

/// Output-feedback law: the state-feedback law applied to the observer state.
pub fn control_output_feedback<T: Real>(u_hat: &StateField<T>, k: &TriGrid<T>) -> Result<T> {
    control_state_feedback(u_hat, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;

    fn ramp_kernel(n: usize) -> TriGrid<f64> {
        TriGrid::from_fn(KernelKind::K, n, 1.0, 1.0, |x, z| x - 2.0 * z + 0.5)
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let k = ramp_kernel(11);
        let u = StateField::zeros(11, 0.0);
        assert_eq!(forward_transform(&u, &k).unwrap().values, vec![0.0; 11]);
        assert_eq!(inverse_transform(&u, &k).unwrap().values, vec![0.0; 11]);
        assert_eq!(control_state_feedback(&u, &k).unwrap(), 0.0);
    }

    #[test]
    fn zero_kernel_is_identity() {
        let k = TriGrid::zeros(KernelKind::K, 9, 1.0, 1.0);
        let u = StateField::from_fn(9, 0.3, |x: f64| (3.0 * x).sin());
        assert_eq!(forward_transform(&u, &k).unwrap(), u);
        assert_eq!(inverse_transform(&u, &k).unwrap(), u);
        assert_eq!(control_output_feedback(&u, &k).unwrap(), 0.0);
    }

    #[test]
    fn boundary_identity_is_exact() {
        let k = ramp_kernel(21);
        let u = StateField::from_fn(21, 0.0, |x: f64| x.cos() + x * x);
        let w = forward_transform(&u, &k).unwrap();
        let cu = control_state_feedback(&u, &k).unwrap();
        assert_eq!(w.values[20], u.values[20] - cu);
    }

    #[test]
    fn dimension_mismatch() {
        let k = ramp_kernel(11);
        let u = StateField::zeros(12, 0.0);
        assert!(matches!(forward_transform(&u, &k), Err(Error::Dimension { .. })));
        assert!(control_state_feedback(&u, &k).is_err());
    }

    #[test]
    fn constant_field_against_exact_integral() {
        // k = x - 2z + 1/2 is linear in z so the rule is exact
        let k = ramp_kernel(11);
        let u = StateField::from_fn(11, 0.0, |_| 1.0);
        let w = forward_transform(&u, &k).unwrap();
        for (i, wi) in w.values.iter().enumerate() {
            let x = i as f64 / 10.0;
            let exact = 1.0 - (x * x - x * x + 0.5 * x);
            assert!((wi - exact).abs() < 1e-14);
        }
    }
}
