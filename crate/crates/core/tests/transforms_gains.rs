//! Volterra transforms, control laws and observer gains against
//! high-resolution quadrature oracles and algebraic identities.

use std::f64::consts::PI;

use proptest::prelude::*;

use isslab::kernels::{eval_k, eval_m, eval_m_z_at_zero};
use isslab::{
    build_grid, control_state_feedback, forward_transform, solve_p, validate_p0, KernelKind, StateField64, TriGrid,
};

const C0: f64 = 13.0 * PI * PI / 5.0;
const P0: f64 = 6.0 * PI * PI / 5.0;
const Q: f64 = 1.0;

/// Composite Simpson on `[0, x]` with `panels` (even) subintervals.
fn simpson(x: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = x / panels as f64;
    let mut s = f(0.0) + f(x);
    for j in 1..panels {
        s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j as f64 * h);
    }
    s * h / 3.0
}

fn transform_oracle(x: f64, u: impl Fn(f64) -> f64) -> f64 {
    if x == 0.0 {
        return u(0.0);
    }
    u(x) - simpson(x, 800, |z| eval_k(x, z, C0, Q).unwrap() * u(z))
}

#[test]
fn forward_transform_converges_to_quadrature_oracle() {
    let u = |x: f64| (PI * x).sin();
    let probes = [0.25, 0.5, 0.75, 1.0];
    let exact: Vec<f64> = probes.iter().map(|&x| transform_oracle(x, u)).collect();
    let error = |n: usize| {
        let k = build_grid(KernelKind::K, n, C0, Q).unwrap();
        let w = forward_transform(&StateField64::from_fn(n, 0.0, u), &k).unwrap();
        probes
            .iter()
            .zip(&exact)
            .map(|(&x, e)| (w.values[(x * (n - 1) as f64).round() as usize] - e).abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (error(101), error(201));
    let order = (coarse / fine).log2();
    assert!((1.8..=2.2).contains(&order), "errors {coarse:e} {fine:e}");
    assert!(fine < 1e-3, "error at n=201: {fine:e}");
}

#[test]
fn state_feedback_of_unit_field_converges() {
    let exact = simpson(1.0, 800, |z| eval_k(1.0, z, C0, Q).unwrap());
    let error = |n: usize| {
        let k = build_grid(KernelKind::K, n, C0, Q).unwrap();
        (control_state_feedback(&StateField64::from_fn(n, 0.0, |_| 1.0), &k).unwrap() - exact).abs()
    };
    let (coarse, fine) = (error(101), error(201));
    let order = (coarse / fine).log2();
    assert!((1.8..=2.2).contains(&order), "errors {coarse:e} {fine:e}");
    assert!(fine < 1e-3);
}

#[test]
fn boundary_value_of_target_is_plant_minus_control() {
    let k = build_grid(KernelKind::K, 201, C0, Q).unwrap();
    let u = StateField64::from_fn(201, 0.0, |x: f64| (3.0 * x).cos() + x);
    let w = forward_transform(&u, &k).unwrap();
    let control = control_state_feedback(&u, &k).unwrap();
    assert_eq!(w.values[200], u.values[200] - control);
}

fn grid_strategy() -> impl Strategy<Value = (TriGrid<f64>, Vec<f64>, Vec<f64>)> {
    (5usize..40, 1.0f64..30.0).prop_flat_map(|(n, c0)| {
        let grid = build_grid(KernelKind::K, n, c0, Q).unwrap();
        (
            Just(grid),
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_is_linear((k, u, v) in grid_strategy(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let field = |vals: Vec<f64>| StateField64::new(0.0, vals);
        let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = forward_transform(&field(combo), &k).unwrap();
        let tu = forward_transform(&field(u), &k).unwrap();
        let tv = forward_transform(&field(v), &k).unwrap();
        let scale = 1.0 + k.max_abs() * 100.0;
        for i in 0..lhs.n() {
            let rhs = a * tu.values[i] + b * tv.values[i];
            prop_assert!((lhs.values[i] - rhs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn margin_formula_is_exact(p0 in -50.0f64..50.0, c0 in 0.1f64..80.0, q in 0.01f64..10.0) {
        let v = validate_p0(p0, c0, q);
        prop_assert_eq!(v.margin, p0 - (c0 / 2.0 - q));
        prop_assert_eq!(v.valid, v.margin > 0.0);
    }

    #[test]
    fn gains_converge_for_admissible_designs(c0 in 1.0f64..30.0, q in 0.2f64..3.0, extra in 0.01f64..20.0, n in 21usize..81) {
        let p0 = c0 / 2.0 - q + extra;
        let m = build_grid(KernelKind::M, n, c0, q).unwrap();
        let g = solve_p(&m, p0, q).unwrap();
        // relative: the stopping rule scales with sup|p|, which reaches 1e3 here
        let scale = g.p.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(g.residual < 1e-10 * scale, "residual {} scale {}", g.residual, scale);
        prop_assert_eq!(g.b, validate_p0(p0, c0, q).margin);
        // the last row of m vanishes, so p(1) reduces to -m_z(1, 0)
        prop_assert!((g.p[n - 1] + eval_m_z_at_zero(1.0, c0).unwrap()).abs() < 1e-10 * (1.0 + g.p[n - 1].abs()));
    }
}

#[test]
fn reference_margin_and_boundary_cases() {
    let v = validate_p0(P0, C0, Q);
    assert!(v.valid);
    assert!((v.margin - (1.0 - PI * PI / 10.0)).abs() < 1e-12);
    assert!(!validate_p0(0.0, 2.0, 1.0).valid);
    assert_eq!(validate_p0(100.0, 1.0, 1.0).margin, 100.5);
}

/// Second-kind Volterra oracle for `p`: trapezoid solves at increasing
/// resolution must agree at second order.
#[test]
fn gain_profile_refines_at_second_order() {
    let solve = |n: usize| {
        let m = build_grid(KernelKind::M, n, C0, Q).unwrap();
        let k = build_grid(KernelKind::K, n, C0, Q).unwrap();
        solve_p(&m, P0, Q).unwrap().with_kp(&k).unwrap()
    };
    let (a, b, c) = (solve(101), solve(201), solve(401));
    let diff = |coarse: &[f64], fine: &[f64]| {
        coarse
            .iter()
            .zip(fine.iter().step_by(2))
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    let ratio_p = diff(&a.p, &b.p) / diff(&b.p, &c.p);
    let ratio_kp = diff(&a.kp, &b.kp) / diff(&b.kp, &c.kp);
    assert!((3.5..=4.5).contains(&ratio_p), "p ratio {ratio_p}");
    assert!((3.5..=4.5).contains(&ratio_kp), "kp ratio {ratio_kp}");
    // K_p(0) = p(0) because k(0, 0) = 0
    assert_eq!(a.kp[0], a.p[0]);
}

#[test]
fn gain_source_term_matches_closed_form() {
    // the integral term is empty at x = 0, leaving -m_z(0,0) + (q + p0) m(0,0)
    let m = build_grid(KernelKind::M, 201, C0, Q).unwrap();
    let g = solve_p(&m, P0, Q).unwrap();
    let source = -eval_m_z_at_zero(0.0, C0).unwrap() + (Q + P0) * eval_m(0.0, 0.0, C0).unwrap();
    assert!((g.p[0] - source).abs() < 1e-10 * source.abs());
}
