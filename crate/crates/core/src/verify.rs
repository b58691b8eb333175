//! Deterministic property suite on the reference constants, run by the
//! `verify` command. Each check records its measured values so two runs can be
//! compared byte for byte.

use std::fmt::Write as _;

use crate::analysis::{
    d_check_bound, error_consistency, fit_decay_rate, iss_sweep, linf_series, lyapunov_monitor, transform_consistency,
    Series,
};
use crate::error::{Error, Result};
use crate::gains::{solve_p, validate_p0};
use crate::kernels::{build_grid, invert_kernel, pde_residual, KernelKind, TriGrid};
use crate::scenario::{Amplitudes, Mode, Scenario};
use crate::sim::{simulate_with, Design};
use crate::transforms::{forward_transform, inverse_transform, StateField};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Acceptance criterion the check belongs to.
    pub group: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(group: u8, name: &str, passed: bool, detail: String) -> Check {
    Check {
        group,
        name: name.to_string(),
        passed,
        detail,
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Round-trip error of `inverse(forward(sin πx))`.
pub fn round_trip_error(direct: &TriGrid<f64>, inverse: &TriGrid<f64>) -> Result<f64> {
    let n = direct.n();
    let u = StateField::from_fn(n, 0.0, |x: f64| (std::f64::consts::PI * x).sin());
    let back = inverse_transform(&forward_transform(&u, direct)?, inverse)?;
    Ok(sup_diff(&back.values, &u.values))
}

fn kernel_checks(out: &mut Vec<Check>) -> Result<()> {
    let s = Scenario::<f64>::reference();
    for kind in [KernelKind::K, KernelKind::M] {
        let coarse = build_grid(kind, 101, s.c0, s.q)?;
        let fine = build_grid(kind, 201, s.c0, s.q)?;
        let rc = pde_residual(&coarse)?;
        let rf = pde_residual(&fine)?;
        let bound = 0.05 * coarse.max_abs();
        out.push(check(
            1,
            &format!("kernel_{}_residual_n101", kind.name()),
            rc.interior_max < bound,
            format!("interior_max {:.6e} bound {:.6e}", rc.interior_max, bound),
        ));
        let ratio = rc.interior_max / rf.interior_max;
        out.push(check(
            1,
            &format!("kernel_{}_residual_order", kind.name()),
            (3.0..=5.0).contains(&ratio),
            format!("ratio {ratio:.6e}"),
        ));
        let diag = coarse.diagonal_defect().max(fine.diagonal_defect());
        out.push(check(
            1,
            &format!("kernel_{}_diagonal", kind.name()),
            diag < 1e-10,
            format!("defect {diag:.6e}"),
        ));

        let ic = invert_kernel(&coarse)?;
        let inv = invert_kernel(&fine)?;
        let inv_name = kind.inverse().map_or("?", KernelKind::name);
        let ec = round_trip_error(&coarse, &ic)?;
        let ef = round_trip_error(&fine, &inv)?;
        out.push(check(
            2,
            &format!("inverse_{inv_name}_round_trip_n201"),
            ef < 1e-6,
            format!("error {ef:.6e}"),
        ));
        let order = (ec / ef).log2();
        out.push(check(
            2,
            &format!("inverse_{inv_name}_round_trip_order"),
            order >= 1.8,
            format!("order {order:.6e}"),
        ));
        let ratio = pde_residual(&ic)?.interior_max / pde_residual(&inv)?.interior_max;
        out.push(check(
            2,
            &format!("inverse_{inv_name}_residual_order"),
            (3.0..=5.0).contains(&ratio),
            format!("ratio {ratio:.6e}"),
        ));
    }
    Ok(())
}

fn gain_checks(out: &mut Vec<Check>) -> Result<()> {
    let s = Scenario::<f64>::reference();
    let v = validate_p0(s.p0, s.c0, s.q);
    let expected = 1.0 - std::f64::consts::PI.powi(2) / 10.0;
    out.push(check(
        3,
        "gain_margin",
        v.valid && (v.margin - expected).abs() < 1e-12,
        format!("margin {:.16e}", v.margin),
    ));
    let m = build_grid(KernelKind::M, 201, s.c0, s.q)?;
    let g = solve_p(&m, s.p0, s.q)?;
    out.push(check(
        3,
        "gain_residual",
        g.residual < 1e-10,
        format!("residual {:.6e} iterations {}", g.residual, g.iterations),
    ));
    let m2 = build_grid(KernelKind::M, 401, s.c0, s.q)?;
    let g2 = solve_p(&m2, s.p0, s.q)?;
    let sub: Vec<f64> = g2.p.iter().step_by(2).copied().collect();
    let d = sup_diff(&g.p, &sub);
    out.push(check(3, "gain_refinement", d < 1e-5, format!("difference {d:.6e}")));
    Ok(())
}

fn at_time(times: &[f64], t: f64) -> usize {
    (0..times.len())
        .min_by(|&a, &b| (times[a] - t).abs().total_cmp(&(times[b] - t).abs()))
        .unwrap_or(0)
}

fn simulation_checks(out: &mut Vec<Check>) -> Result<()> {
    // open loop
    let s = Scenario::<f64>::preset("paper_fig1")?;
    let tr = simulate_with(&s, &Design::for_scenario(&s)?)?;
    let (t, v) = linf_series(&tr, Series::Primary)?;
    let monotone = (1..t.len()).all(|i| !(t[i - 1] >= 0.2 - 1e-12 && t[i] <= 1.0 + 1e-12) || v[i] > v[i - 1]);
    out.push(check(
        4,
        "open_loop_increasing",
        monotone,
        format!("samples {}", t.len()),
    ));
    let growth = v[at_time(&t, 1.0)] / v[0];
    out.push(check(
        4,
        "open_loop_growth",
        growth > 10.0,
        format!("growth {growth:.6e}"),
    ));

    // state feedback
    let s = Scenario::<f64>::preset("paper_fig2a")?;
    let design = Design::for_scenario(&s)?;
    let tr = simulate_with(&s, &design)?;
    let (t, v) = linf_series(&tr, Series::Primary)?;
    let ratio = v[at_time(&t, 3.0)] / v[0];
    out.push(check(
        5,
        "state_feedback_decay",
        ratio < 1e-3,
        format!("ratio {ratio:.6e}"),
    ));
    let rate = fit_decay_rate(&t, &v, (0.5, 2.0))?;
    out.push(check(5, "state_feedback_rate", rate >= 1.0, format!("rate {rate:.6e}")));

    // observer
    let s = Scenario::<f64>::preset("paper_fig4a")?;
    let design = Design::for_scenario(&s)?;
    let tr = simulate_with(&s, &design)?;
    let (t, e) = linf_series(&tr, Series::Error)?;
    let ratio = e[at_time(&t, 3.0)] / e[0];
    out.push(check(6, "observer_decay", ratio < 1e-3, format!("ratio {ratio:.6e}")));
    let mut same = s.clone();
    same.u_hat0 = same.u0;
    let tr = simulate_with(&same, &design)?;
    let (_, e) = linf_series(&tr, Series::Error)?;
    let worst = e.iter().fold(0.0f64, |m, v| m.max(*v));
    out.push(check(
        6,
        "observer_exact_copy",
        worst < 1e-12,
        format!("max error {worst:.6e}"),
    ));

    // sweeps
    for preset in ["paper_fig2d", "paper_fig3d", "paper_fig5d"] {
        let s = Scenario::<f64>::preset(preset)?;
        let design = Design::for_scenario(&s)?;
        let r = iss_sweep(&s, &design, &[0.0, 1.0, 3.0], (1.0, 4.0), None)?;
        let ok = r.sup_norms.iter().all(|v| v.is_finite()) && r.sup_norms.windows(2).all(|w| w[1] > w[0]);
        let values: Vec<String> = r.sup_norms.iter().map(|v| format!("{v:.6e}")).collect();
        out.push(check(
            7,
            &format!("sweep_{}", s.mode),
            ok,
            format!("sup_norms [{}]", values.join(", ")),
        ));
    }
    Ok(())
}

/// Consistency errors `(target, error path)` at one resolution.
pub fn consistency_pair(n: usize, dt: f64) -> Result<(f64, f64)> {
    let mut s = Scenario::<f64>::reference();
    s.n = n;
    s.dt = dt;
    s.store_every = ((2.5e-3 / dt).round() as usize).max(1);
    s.mode = Mode::OutputFeedback;
    let design = Design::for_scenario(&s)?;
    let run = |mode: Mode| {
        let mut m = s.clone();
        m.mode = mode;
        simulate_with(&m, &design)
    };
    let k = design.k.as_ref().expect("controller kernel");
    let target = transform_consistency(&run(Mode::StateFeedback)?, &run(Mode::TargetDirect)?, k)?;
    let error = error_consistency(&run(Mode::OutputFeedback)?, &run(Mode::ErrorDirect)?)?;
    Ok((target, error))
}

/// Rounding floor below which two consistency errors count as equal.
pub const ROUNDOFF_FLOOR: f64 = 1e-10;

/// `fine < 1e-3` and either a refinement ratio `≥ 3` or both at rounding level.
pub fn refinement_ok(coarse: f64, fine: f64) -> bool {
    fine < 1e-3 && (coarse >= 3.0 * fine || coarse.max(fine) < ROUNDOFF_FLOOR)
}

fn consistency_checks(out: &mut Vec<Check>) -> Result<()> {
    let (tc, ec) = consistency_pair(201, 2.5e-4)?;
    let (tf, ef) = consistency_pair(401, 1.25e-4)?;
    out.push(check(
        8,
        "target_consistency",
        refinement_ok(tc, tf),
        format!("n201 {tc:.6e} n401 {tf:.6e}"),
    ));
    out.push(check(
        8,
        "error_consistency",
        refinement_ok(ec, ef),
        format!("n201 {ec:.6e} n401 {ef:.6e}"),
    ));
    Ok(())
}

fn lyapunov_checks(out: &mut Vec<Check>) -> Result<()> {
    for scale in [0.0, 1.0] {
        let mut s = Scenario::<f64>::reference();
        s.mode = Mode::TargetDirect;
        s.amplitudes = Amplitudes::scaled(2.0, scale);
        let design = Design::for_scenario(&s)?;
        let tr = simulate_with(&s, &design)?;
        let sigma = 0.5 * s.underline_c();
        let k = design.k.as_ref().expect("controller kernel");
        let d = d_check_bound(&s, k, sigma, 0.01)?;
        let v = lyapunov_monitor(&tr, &s, sigma, 3.0, d)?;
        let rise = v.max_increase();
        out.push(check(
            9,
            &format!("lyapunov_scale_{scale}"),
            rise <= 1e-8,
            format!("D {d:.6e} max_increase {rise:.6e}"),
        ));
    }
    Ok(())
}

/// Checks of one acceptance group (1 to 9). Groups produced by a shared
/// computation rerun it and keep only their own entries.
pub fn run_group(group: u8) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    match group {
        1 | 2 => kernel_checks(&mut out)?,
        3 => gain_checks(&mut out)?,
        4..=7 => simulation_checks(&mut out)?,
        8 => consistency_checks(&mut out)?,
        9 => lyapunov_checks(&mut out)?,
        _ => return Err(Error::config(format!("no check group {group}"))),
    }
    out.retain(|c| c.group == group);
    Ok(out)
}

/// Runs every check in a fixed order.
pub fn run_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    kernel_checks(&mut out)?;
    gain_checks(&mut out)?;
    simulation_checks(&mut out)?;
    consistency_checks(&mut out)?;
    lyapunov_checks(&mut out)?;
    out.sort_by_key(|c| c.group);
    Ok(out)
}

/// One `PASS`/`FAIL` line per check plus a summary line.
pub fn render_report(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(
            s,
            "{} [{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.group,
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(s, "{} checks, {} failed", checks.len(), failed);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refinement_rule() {
        assert!(refinement_ok(4e-5 * 4.0, 4e-5));
        assert!(!refinement_ok(4e-5 * 2.0, 4e-5));
        assert!(!refinement_ok(4e-3, 2e-3));
        assert!(refinement_ok(1e-15, 2e-15));
    }

    #[test]
    fn report_format() {
        let r = render_report(&[check(2, "a", true, "x 1".into()), check(3, "b", false, "y".into())]);
        assert_eq!(r, "PASS [2] a: x 1\nFAIL [3] b: y\n2 checks, 1 failed\n");
    }
}
