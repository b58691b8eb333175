//! Observer gains: the scalar output-injection gain `p0`, the distributed gain
//! `p(x)` from its Volterra equation, and the derived quantities `b` and
//! `K_p(x)` used by the error and observer target systems.

use crate::error::{Error, Result};
use crate::kernels::{m_z_at_zero_unchecked, KernelKind, TriGrid, PICARD_MAX_ITER, PICARD_TOL};
use crate::scalar::{node, sup_norm, Real};
use crate::transforms::row_integral;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P0Check<T> {
    pub valid: bool,
    /// `p0 - (c0/2 - q)`; strictly positive when valid.
    pub margin: T,
}

/// `p0` is admissible iff `p0 > m(0,0) - q = c0/2 - q`.
pub fn validate_p0<T: Real>(p0: T, c0: T, q: T) -> P0Check<T> {
    let margin = p0 - (c0 / T::lit(2.0) - q);
    P0Check {
        valid: margin > T::zero(),
        margin,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainProfile<T> {
    pub p0: T,
    pub q: T,
    pub c0: T,
    /// `p(x_i)` at every grid node.
    pub p: Vec<T>,
    /// Robin coefficient of the error target system, `q + p0 - c0/2`.
    pub b: T,
    /// Filled by [`compute_kp`]; empty until then.
    pub kp: Vec<T>,
    /// Sup-norm defect of the integral equation at the returned profile.
    pub residual: T,
    pub iterations: usize,
}

/// `-m_z(x,0) + (q + p0) m(x,0)`; the derivative is analytic in `c0`, so a
/// zero grid (`c0 = 0`) yields a zero source.
fn source_term<T: Real>(m: &TriGrid<T>, p0: T, q: T) -> Vec<T> {
    let n = m.n();
    (0..n)
        .map(|i| -m_z_at_zero_unchecked(node::<T>(i, n), m.c0()) + (q + p0) * m.get(i, 0))
        .collect()
}

fn picard_image<T: Real>(m: &TriGrid<T>, source: &[T], p: &[T]) -> Vec<T> {
    // ∫_0^{x_i} m(x_i, z) p(z) dz only reads p_0..=p_i
    (0..p.len()).map(|i| source[i] + row_integral(m, i, p)).collect()
}

/// Solves `p(x) = -m_z(x,0) + (q + p0) m(x,0) + ∫_0^x m(x,z) p(z) dz`.
pub fn solve_p<T: Real>(m: &TriGrid<T>, p0: T, q: T) -> Result<GainProfile<T>> {
    let source = source_term(m, p0, q);
    solve_p_from(m, p0, q, source.clone(), &source)
}

/// Same as [`solve_p`] but starting the iteration from `seed`.
pub fn solve_p_seeded<T: Real>(m: &TriGrid<T>, p0: T, q: T, seed: &[T]) -> Result<GainProfile<T>> {
    if seed.len() != m.n() {
        return Err(Error::Dimension {
            expected: m.n(),
            found: seed.len(),
        });
    }
    let source = source_term(m, p0, q);
    solve_p_from(m, p0, q, seed.to_vec(), &source)
}

fn solve_p_from<T: Real>(m: &TriGrid<T>, p0: T, q: T, seed: Vec<T>, source: &[T]) -> Result<GainProfile<T>> {
    if m.kind() != KernelKind::M {
        return Err(Error::domain("solve_p needs the observer kernel m"));
    }
    let c0 = m.c0();
    let check = validate_p0(p0, c0, q);
    if !check.valid {
        return Err(Error::domain(format!(
            "p0 = {p0} violates p0 > c0/2 - q (margin {})",
            check.margin
        )));
    }
    let tol = T::lit(PICARD_TOL);
    let mut p = seed;
    let mut last = T::infinity();
    for it in 1..=PICARD_MAX_ITER {
        let next = picard_image(m, source, &p);
        last = next
            .iter()
            .zip(&p)
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
        p = next;
        if !last.is_finite() {
            break;
        }
        if last < tol * T::one().max(sup_norm(&p)) {
            let residual = integral_equation_defect(m, source, &p);
            return Ok(GainProfile {
                p0,
                q,
                c0,
                p,
                b: check.margin,
                kp: Vec::new(),
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::IterationFailure {
        what: "observer gain Picard iteration",
        iterations: PICARD_MAX_ITER,
        residual: last.to_f64_lossy(),
    })
}

fn integral_equation_defect<T: Real>(m: &TriGrid<T>, source: &[T], p: &[T]) -> T {
    picard_image(m, source, p)
        .iter()
        .zip(p)
        .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
}

/// `K_p(x) = p(x) - p0 k(x, 0) - ∫_0^x k(x, z) p(z) dz`.
pub fn compute_kp<T: Real>(gains: &GainProfile<T>, k: &TriGrid<T>) -> Result<Vec<T>> {
    if gains.p.len() != k.n() {
        return Err(Error::Dimension {
            expected: k.n(),
            found: gains.p.len(),
        });
    }
    Ok((0..k.n())
        .map(|i| gains.p[i] - gains.p0 * k.get(i, 0) - row_integral(k, i, &gains.p))
        .collect())
}

impl<T: Real> GainProfile<T> {
    /// Fills `kp` from the controller kernel.
    pub fn with_kp(mut self, k: &TriGrid<T>) -> Result<Self> {
        self.kp = compute_kp(&self, k)?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_grid;
    use std::f64::consts::PI;

    const C0: f64 = 13.0 * PI * PI / 5.0;
    const P0: f64 = 6.0 * PI * PI / 5.0;

    #[test]
    fn p0_validation() {
        let v = validate_p0(P0, C0, 1.0);
        assert!(v.valid);
        assert!((v.margin - (1.0 - PI * PI / 10.0)).abs() < 1e-12);

        let edge = validate_p0(0.0, 2.0, 1.0);
        assert!(!edge.valid);
        assert_eq!(edge.margin, 0.0);

        let big = validate_p0(100.0, 1.0, 1.0);
        assert!(big.valid);
        assert_eq!(big.margin, 100.5);
    }

    #[test]
    fn zero_kernel_gives_zero_gain() {
        let m = TriGrid::<f64>::zeros(KernelKind::M, 21, 0.0, 1.0);
        let g = solve_p(&m, P0, 1.0).unwrap();
        assert!(g.p.iter().all(|v| *v == 0.0));
        assert_eq!(g.residual, 0.0);
    }

    #[test]
    fn invalid_p0_is_rejected() {
        let m = build_grid(KernelKind::M, 21, C0, 1.0).unwrap();
        assert!(solve_p(&m, 0.0, 1.0).is_err());
    }

    #[test]
    fn last_node_is_minus_boundary_derivative() {
        let m = build_grid(KernelKind::M, 51, C0, 1.0).unwrap();
        let g = solve_p(&m, P0, 1.0).unwrap();
        let expected = -crate::kernels::eval_m_z_at_zero(1.0, C0).unwrap();
        assert!((g.p[50] - expected).abs() < 1e-12);
        assert_eq!(g.b, validate_p0(P0, C0, 1.0).margin);
    }

    #[test]
    fn seed_independence() {
        let m = build_grid(KernelKind::M, 41, C0, 1.0).unwrap();
        let a = solve_p(&m, P0, 1.0).unwrap();
        let b = solve_p_seeded(&m, P0, 1.0, &[0.0; 41]).unwrap();
        let d = a.p.iter().zip(&b.p).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(d < 1e-10);
    }

    #[test]
    fn kp_at_origin_and_zero_gain() {
        let k = build_grid(KernelKind::K, 31, C0, 1.0).unwrap();
        let m = build_grid(KernelKind::M, 31, C0, 1.0).unwrap();
        let g = solve_p(&m, P0, 1.0).unwrap().with_kp(&k).unwrap();
        assert_eq!(g.kp[0], g.p[0]);

        let zero = GainProfile {
            p: vec![0.0; 31],
            ..g.clone()
        };
        let kp = compute_kp(&zero, &k).unwrap();
        for (i, v) in kp.iter().enumerate() {
            assert_eq!(*v, -P0 * k.get(i, 0));
        }
        let short = GainProfile { p: vec![0.0; 30], ..g };
        assert!(compute_kp(&short, &k).is_err());
    }
}
