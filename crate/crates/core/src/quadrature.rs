//! Quadrature rules: composite Gauss–Legendre for the smooth integral inside
//! the closed-form controller kernel, and the uniform trapezoid rule that every
//! grid-level operator (transforms, control laws, Volterra solves) shares.

use crate::scalar::Real;

/// Nodes and weights of an `order`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Newton iteration on `P_order` from the Chebyshev initial guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let nf = order as f64;
        let mut nodes = vec![T::zero(); order];
        let mut weights = vec![T::zero(); order];
        // roots are symmetric; compute the positive half in f64 and convert
        for i in 0..order.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = T::lit(-x);
            nodes[order - 1 - i] = T::lit(x);
            weights[i] = T::lit(w);
            weights[order - 1 - i] = T::lit(w);
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Composite rule on `[a, b]` with `panels` equal subintervals.
    pub fn integrate(&self, a: T, b: T, panels: usize, f: impl Fn(T) -> T) -> T {
        let panels = panels.max(1);
        let width = (b - a) / T::from_usize_lossy(panels);
        let half = width / T::lit(2.0);
        let mut total = T::zero();
        for p in 0..panels {
            let mid = a + width * (T::from_usize_lossy(p) + T::lit(0.5));
            let mut acc = T::zero();
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc += *w * f(mid + half * *x);
            }
            total += acc * half;
        }
        total
    }
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Trapezoid rule over consecutive samples spaced `h` apart.
/// Zero for fewer than two samples.
#[inline]
pub fn trapezoid<T: Real>(h: T, values: impl ExactSizeIterator<Item = T>) -> T {
    let len = values.len();
    if len < 2 {
        return T::zero();
    }
    let mut sum = T::zero();
    for (idx, v) in values.enumerate() {
        if idx == 0 || idx == len - 1 {
            sum += v / T::lit(2.0);
        } else {
            sum += v;
        }
    }
    sum * h
}

/// `Σ w_k a_k b_k` with trapezoid weights (`1/2` at both ends) for `a.len()`
/// samples; `b` must be at least as long as `a`.
#[inline]
pub fn trapezoid_dot<T: Real>(a: &[T], b: &[T]) -> T {
    let len = a.len();
    if len < 2 {
        return T::zero();
    }
    let mut acc = T::lit(0.5) * (a[0] * b[0] + a[len - 1] * b[len - 1]);
    for k in 1..len - 1 {
        acc += a[k] * b[k];
    }
    acc
}

/// Trapezoid weights for unit spacing on `len` samples.
pub fn trapezoid_weights<T: Real>(len: usize) -> Vec<T> {
    let mut w = vec![T::one(); len];
    if len >= 2 {
        w[0] = T::lit(0.5);
        w[len - 1] = T::lit(0.5);
    } else {
        w.fill(T::zero());
    }
    w
}
