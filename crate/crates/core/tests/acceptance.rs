//! Acceptance suite: one test per criterion, each printing a `PASS`/`FAIL`
//! line per check. Run with `cargo test -p isslab --test acceptance -- --nocapture`.

use std::time::{Duration, Instant};

use isslab::verify::{render_report, run_group, run_suite, Check};

fn criterion(group: u8, budget: Duration) {
    let start = Instant::now();
    let checks = run_group(group).expect("checks run");
    let elapsed = start.elapsed();
    let mut failed: Vec<&Check> = Vec::new();
    for c in &checks {
        println!(
            "{} [{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            group,
            c.name,
            c.detail
        );
        if !c.passed {
            failed.push(c);
        }
    }
    let in_time = elapsed <= budget;
    println!(
        "{} criterion {group}: {} checks in {:.2} s (budget {} s)",
        if failed.is_empty() && in_time { "PASS" } else { "FAIL" },
        checks.len(),
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    assert!(!checks.is_empty(), "criterion {group} produced no checks");
    assert!(in_time, "criterion {group} took {elapsed:?}, budget {budget:?}");
    assert!(failed.is_empty(), "criterion {group} failed: {failed:#?}");
}

#[test]
fn criterion_01_kernel_correctness() {
    criterion(1, Duration::from_secs(10));
}

#[test]
fn criterion_02_inverse_kernels() {
    criterion(2, Duration::from_secs(30));
}

#[test]
fn criterion_03_gain_solver() {
    criterion(3, Duration::from_secs(10));
}

#[test]
fn criterion_04_open_loop_instability() {
    criterion(4, Duration::from_secs(20));
}

#[test]
fn criterion_05_state_feedback_decay() {
    criterion(5, Duration::from_secs(30));
}

#[test]
fn criterion_06_observer_convergence() {
    criterion(6, Duration::from_secs(60));
}

#[test]
fn criterion_07_iss_monotonicity() {
    criterion(7, Duration::from_secs(300));
}

#[test]
fn criterion_08_equivalence_oracles() {
    criterion(8, Duration::from_secs(120));
}

#[test]
fn criterion_09_lyapunov_monitor() {
    criterion(9, Duration::from_secs(30));
}

#[test]
fn criterion_10_determinism() {
    let first = render_report(&run_suite().expect("suite runs"));
    let second = render_report(&run_suite().expect("suite runs"));
    let same = first.as_bytes() == second.as_bytes();
    println!(
        "{} criterion 10: two verify reports of {} bytes are {}",
        if same { "PASS" } else { "FAIL" },
        first.len(),
        if same { "byte-identical" } else { "different" }
    );
    assert!(same, "reports differ:\n{first}\n---\n{second}");
}
