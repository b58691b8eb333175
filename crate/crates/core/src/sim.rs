//! Time stepping for the plant, observer, coupled closed loop, error and
//! target systems.
//!
//! Every system is a reaction-diffusion equation on the uniform grid with a
//! Robin condition at `x = 0` (ghost node) and a Dirichlet value at `x = 1`,
//! advanced by the θ-scheme (Crank–Nicolson for θ = 1/2). The unknown
//! boundary quantities of the new time level (the control input and the
//! output-injection signal) enter the step linearly, so each step solves the
//! same tridiagonal matrix for a base response plus one unit response per
//! unknown and then closes the loop with a scalar equation. The control law
//! is therefore evaluated on the new state, which keeps `w(1) = u(1) - U`
//! exact at every step.

use crate::error::{Error, Result};
use crate::gains::{solve_p, GainProfile};
use crate::kernels::{build_grid, KernelKind, TriGrid};
use crate::linalg::Tridiagonal;
use crate::quadrature::trapezoid_weights;
use crate::scalar::{node, sup_norm, Real};
use crate::scenario::{Mode, Scenario};
use crate::transforms::{forward_transform, row_integral, StateField};

/// Kernels and gains a scenario needs; independent of the disturbance
/// amplitudes, so sweeps build it once.
#[derive(Debug, Clone)]
pub struct Design<T> {
    pub k: Option<TriGrid<T>>,
    pub m: Option<TriGrid<T>>,
    /// Observer gains with `kp` filled when `k` is present.
    pub gains: Option<GainProfile<T>>,
}

impl<T: Real> Design<T> {
    pub fn for_scenario(s: &Scenario<T>) -> Result<Self> {
        let needs_k = s.mode.needs_controller();
        let needs_m = s.mode.needs_observer();
        let k = if needs_k {
            Some(build_grid(KernelKind::K, s.n, s.c0, s.q)?)
        } else {
            None
        };
        let (m, gains) = if needs_m {
            let m = build_grid(KernelKind::M, s.n, s.c0, s.q)?;
            let mut g = solve_p(&m, s.p0, s.q)?;
            if let Some(k) = &k {
                g = g.with_kp(k)?;
            }
            (Some(m), Some(g))
        } else {
            (None, None)
        };
        Ok(Self { k, m, gains })
    }

    fn controller(&self) -> Result<&TriGrid<T>> {
        self.k
            .as_ref()
            .ok_or_else(|| Error::config("design has no controller kernel"))
    }

    fn observer_gains(&self) -> Result<&GainProfile<T>> {
        self.gains
            .as_ref()
            .ok_or_else(|| Error::config("design has no observer gains"))
    }
}

/// Stored history of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace<T> {
    pub mode: Mode,
    pub times: Vec<T>,
    /// Plant `u` for plant modes, otherwise the integrated system's state.
    pub fields: Vec<StateField<T>>,
    /// Observer `û` in output-feedback runs.
    pub fields_secondary: Option<Vec<StateField<T>>>,
    /// `U(t)`; zero for modes without actuation.
    pub control: Vec<T>,
    /// `y(t) = state(0, t) + dm(t)`.
    pub boundary_output: Vec<T>,
    pub linf: Vec<T>,
}

impl<T: Real> SimTrace<T> {
    fn new(mode: Mode, with_secondary: bool) -> Self {
        Self {
            mode,
            times: Vec::new(),
            fields: Vec::new(),
            fields_secondary: with_secondary.then(Vec::new),
            control: Vec::new(),
            boundary_output: Vec::new(),
            linf: Vec::new(),
        }
    }

    fn push(&mut self, time: T, field: &[T], secondary: Option<&[T]>, control: T, output: T) {
        self.times.push(time);
        self.linf.push(sup_norm(field));
        self.fields.push(StateField::new(time, field.to_vec()));
        if let (Some(store), Some(s)) = (self.fields_secondary.as_mut(), secondary) {
            store.push(StateField::new(time, s.to_vec()));
        }
        self.control.push(control);
        self.boundary_output.push(output);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n(&self) -> usize {
        self.fields.first().map_or(0, StateField::n)
    }

    /// `ũ = u - û` for output-feedback traces.
    pub fn error_fields(&self) -> Option<Vec<StateField<T>>> {
        let obs = self.fields_secondary.as_ref()?;
        Some(
            self.fields
                .iter()
                .zip(obs)
                .map(|(u, o)| StateField::new(u.time, u.values.iter().zip(&o.values).map(|(a, b)| *a - *b).collect()))
                .collect(),
        )
    }

    /// Primary state at the stored index closest to `t`.
    pub fn nearest(&self, t: T) -> Option<usize> {
        (0..self.len()).min_by(|&a, &b| {
            let da = (self.times[a] - t).abs();
            let db = (self.times[b] - t).abs();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
    }
}

/// One θ-scheme step description. Robin data `δ` and the injection signal `Θ`
/// are averaged between the two time levels with weight θ on the new one.
struct StepInput<'a, T> {
    dt: T,
    theta: T,
    reaction: T,
    beta: T,
    /// `δ` at the old level, including its `Θ` part.
    robin_old: T,
    /// Known part of `δ` at the new level.
    robin_new: T,
    /// `δ_new = robin_new + robin_gain · Θ_new`.
    robin_gain: T,
    /// Midpoint source, length `n`.
    source: &'a [T],
    /// Injection profile `g`; the equation carries `g(x) Θ(t)`.
    inject: Option<&'a [T]>,
    inject_old: T,
}

/// New-level state as `base + D · dirichlet + Θ · inject`, all length `n`.
struct Responses<T> {
    base: Vec<T>,
    dirichlet: Vec<T>,
    inject: Option<Vec<T>>,
}

impl<T: Real> Responses<T> {
    fn combine(&self, d: T, theta: T) -> Vec<T> {
        let mut out: Vec<T> = self
            .base
            .iter()
            .zip(&self.dirichlet)
            .map(|(b, r)| *b + d * *r)
            .collect();
        if let Some(ri) = &self.inject {
            for (o, r) in out.iter_mut().zip(ri) {
                *o += theta * *r;
            }
        }
        out
    }
}

fn affine_step<T: Real>(prev: &[T], inp: &StepInput<'_, T>) -> Result<Responses<T>> {
    let n = prev.len();
    let m = n - 1;
    let h = T::one() / T::from_usize_lossy(n - 1);
    let h2 = h * h;
    let two = T::lit(2.0);
    let dt = inp.dt;
    let imp = dt * inp.theta;
    let exp = dt * (T::one() - inp.theta);
    let a = inp.reaction;

    let mut diag = vec![T::one() + imp * (two / h2 - a); m];
    diag[0] = T::one() + imp * ((two + two * h * inp.beta) / h2 - a);
    let mut upper = vec![-imp / h2; m];
    upper[0] = -two * imp / h2;
    let lower = vec![-imp / h2; m];
    let factored = Tridiagonal { lower, diag, upper }.factor()?;

    let mut base = vec![T::zero(); n];
    {
        let lap0 = (two * prev[1] - (two + two * h * inp.beta) * prev[0]) / h2 - two * inp.robin_old / h;
        base[0] = prev[0] + exp * (lap0 + a * prev[0]);
        for i in 1..m {
            let lap = (prev[i - 1] - two * prev[i] + prev[i + 1]) / h2;
            base[i] = prev[i] + exp * (lap + a * prev[i]);
        }
        for i in 0..m {
            base[i] += dt * inp.source[i];
        }
        base[0] -= two * imp * inp.robin_new / h;
        if let Some(g) = inp.inject {
            for i in 0..m {
                base[i] += exp * g[i] * inp.inject_old;
            }
        }
    }
    factored.solve_in_place(&mut base[..m]);

    let mut dirichlet = vec![T::zero(); n];
    dirichlet[m - 1] = imp / h2;
    factored.solve_in_place(&mut dirichlet[..m]);
    dirichlet[m] = T::one();

    let inject = if inp.inject.is_some() || inp.robin_gain != T::zero() {
        let mut r = vec![T::zero(); n];
        if let Some(g) = inp.inject {
            for i in 0..m {
                r[i] = imp * g[i];
            }
        }
        r[0] -= two * imp * inp.robin_gain / h;
        factored.solve_in_place(&mut r[..m]);
        Some(r)
    } else {
        None
    };
    Ok(Responses {
        base,
        dirichlet,
        inject,
    })
}

/// One Crank–Nicolson step of the plant from `t` to `t + dt` with the
/// boundary input `U` held at the supplied value: `u(1) = U + d1(t + dt)`.
pub fn step_plant<T: Real>(u: &StateField<T>, t: T, scenario: &Scenario<T>, control: T) -> Result<StateField<T>> {
    let n = u.n();
    if n != scenario.n {
        return Err(Error::Dimension {
            expected: scenario.n,
            found: n,
        });
    }
    let dt = scenario.dt;
    let half = T::lit(0.5);
    let amps = &scenario.amplitudes;
    let mid = t + half * dt;
    let source: Vec<T> = (0..n).map(|i| amps.f(node(i, n), mid)).collect();
    let inp = StepInput {
        dt,
        theta: half,
        reaction: scenario.lambda(mid),
        beta: scenario.q,
        robin_old: amps.d0(t),
        robin_new: amps.d0(t + dt),
        robin_gain: T::zero(),
        source: &source,
        inject: None,
        inject_old: T::zero(),
    };
    let r = affine_step(&u.values, &inp)?;
    let values = r.combine(control + amps.d1(t + dt), T::zero());
    Ok(StateField::new(t + dt, values))
}

/// Quadrature weights of `∫_0^1 k(1, z) v(z) dz`, i.e. the control functional.
fn control_weights<T: Real>(k: &TriGrid<T>) -> Vec<T> {
    let n = k.n();
    let h = k.step();
    trapezoid_weights::<T>(n)
        .iter()
        .zip(k.row(n - 1))
        .map(|(w, r)| *w * h * *r)
        .collect()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Sub-step schedule: the first `startup_steps` steps are each replaced by two
/// backward-Euler half steps, which damps the stiff modes excited by
/// initial data that does not match the boundary conditions.
fn substeps<T: Real>(scenario: &Scenario<T>, step: usize) -> ([(T, T); 2], usize) {
    let dt = scenario.dt;
    let t = scenario.time_at(step);
    if step < scenario.startup_steps {
        let hd = dt / T::lit(2.0);
        ([(t, hd), (t + hd, hd)], 2)
    } else {
        ([(t, dt), (t, dt)], 1)
    }
}

fn theta_for<T: Real>(scenario: &Scenario<T>, step: usize) -> T {
    if step < scenario.startup_steps {
        T::one()
    } else {
        T::lit(0.5)
    }
}

/// Integrates `scenario` (any mode except `OutputFeedback`, which needs
/// [`simulate_coupled`]) building its kernels and gains on the way.
pub fn simulate<T: Real>(scenario: &Scenario<T>) -> Result<SimTrace<T>> {
    scenario.validate()?;
    let design = Design::for_scenario(scenario)?;
    simulate_with(scenario, &design)
}

/// Like [`simulate`] with a prebuilt design; dispatches every mode.
pub fn simulate_with<T: Real>(scenario: &Scenario<T>, design: &Design<T>) -> Result<SimTrace<T>> {
    scenario.validate()?;
    match scenario.mode {
        Mode::OpenLoop | Mode::StateFeedback => run_plant(scenario, design),
        Mode::TargetDirect => run_target(scenario, design),
        Mode::ErrorDirect => run_error(scenario, design),
        Mode::ObserverTargetDirect => run_observer_target(scenario, design),
        Mode::OutputFeedback => run_coupled(scenario, design),
    }
}

/// Plant and observer advanced in lockstep under the output-feedback law.
pub fn simulate_coupled<T: Real>(scenario: &Scenario<T>) -> Result<SimTrace<T>> {
    if scenario.mode != Mode::OutputFeedback {
        return Err(Error::config(format!(
            "simulate_coupled needs mode output_feedback, got {}",
            scenario.mode
        )));
    }
    simulate(scenario)
}

fn sample<T: Real>(n: usize, f: impl Fn(T) -> T) -> Vec<T> {
    (0..n).map(|i| f(node(i, n))).collect()
}

fn check_finite<T: Real>(v: &[T], time: T) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            time: time.to_f64_lossy(),
        })
    }
}

struct Recorder {
    steps: usize,
    every: usize,
}

impl Recorder {
    fn keep(&self, step: usize) -> bool {
        step.is_multiple_of(self.every) || step == self.steps
    }
}

fn run_plant<T: Real>(s: &Scenario<T>, design: &Design<T>) -> Result<SimTrace<T>> {
    let n = s.n;
    let amps = s.amplitudes;
    let feedback = s.mode == Mode::StateFeedback;
    let weights = if feedback {
        Some(control_weights(design.controller()?))
    } else {
        None
    };
    let mut u = sample(n, |x| s.u0.at(x));
    let steps = s.steps();
    let rec = Recorder {
        steps,
        every: s.store_every,
    };
    let mut trace = SimTrace::new(s.mode, false);
    let u_init = weights.as_ref().map_or(T::zero(), |w| dot(w, &u));
    trace.push(T::zero(), &u, None, u_init, u[0] + amps.dm(T::zero()));
    let mut source = vec![T::zero(); n];
    let half = T::lit(0.5);
    for step in 0..steps {
        let theta = theta_for(s, step);
        let (subs, count) = substeps(s, step);
        let mut control = T::zero();
        for &(t, dt) in &subs[..count] {
            let mid = t + half * dt;
            for (i, v) in source.iter_mut().enumerate() {
                *v = amps.f(node(i, n), mid);
            }
            let inp = StepInput {
                dt,
                theta,
                reaction: s.lambda(mid),
                beta: s.q,
                robin_old: amps.d0(t),
                robin_new: amps.d0(t + dt),
                robin_gain: T::zero(),
                source: &source,
                inject: None,
                inject_old: T::zero(),
            };
            let r = affine_step(&u, &inp)?;
            let d1 = amps.d1(t + dt);
            let d = match &weights {
                // D = U + d1 with U = w·(base + D r_D)
                Some(w) => (dot(w, &r.base) + d1) / (T::one() - dot(w, &r.dirichlet)),
                None => d1,
            };
            control = d - d1;
            u = r.combine(d, T::zero());
        }
        let t_new = s.time_at(step + 1);
        check_finite(&u, t_new)?;
        if rec.keep(step + 1) {
            trace.push(t_new, &u, None, control, u[0] + amps.dm(t_new));
        }
    }
    Ok(trace)
}

/// `k(x_i, 0)`, `∫k(x_i,z)cos z dz` and `∫k(x_i,z)sin z dz`, the pieces of the
/// target-system source for the in-domain disturbance `α cos x + β sin x`.
pub(crate) struct TargetSource<T> {
    k_edge: Vec<T>,
    k_cos: Vec<T>,
    k_sin: Vec<T>,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Real> TargetSource<T> {
    pub(crate) fn new(k: &TriGrid<T>) -> Self {
        let n = k.n();
        let cos = sample(n, |x: T| x.cos());
        let sin = sample(n, |x: T| x.sin());
        Self {
            k_edge: (0..n).map(|i| k.get(i, 0)).collect(),
            k_cos: (0..n).map(|i| row_integral(k, i, &cos)).collect(),
            k_sin: (0..n).map(|i| row_integral(k, i, &sin)).collect(),
            cos,
            sin,
        }
    }

    /// `ψ = f - ∫k f + k(x,0) d0` at one instant.
    pub(crate) fn fill(&self, out: &mut [T], f_modes: (T, T), d0: T) {
        let (alpha, beta) = f_modes;
        for i in 0..out.len() {
            let f = alpha * self.cos[i] + beta * self.sin[i];
            let kf = alpha * self.k_cos[i] + beta * self.k_sin[i];
            out[i] = f - kf + self.k_edge[i] * d0;
        }
    }
}

fn run_target<T: Real>(s: &Scenario<T>, design: &Design<T>) -> Result<SimTrace<T>> {
    let n = s.n;
    let amps = s.amplitudes;
    let k = design.controller()?;
    let u0 = StateField::from_fn(n, T::zero(), |x| s.u0.at(x));
    let mut w = forward_transform(&u0, k)?.values;
    let src = TargetSource::new(k);
    let steps = s.steps();
    let rec = Recorder {
        steps,
        every: s.store_every,
    };
    let mut trace = SimTrace::new(s.mode, false);
    trace.push(T::zero(), &w, None, T::zero(), w[0] + amps.dm(T::zero()));
    let mut source = vec![T::zero(); n];
    let half = T::lit(0.5);
    for step in 0..steps {
        let theta = theta_for(s, step);
        let (subs, count) = substeps(s, step);
        for &(t, dt) in &subs[..count] {
            let mid = t + half * dt;
            src.fill(&mut source, amps.f_modes(mid), amps.d0(mid));
            let inp = StepInput {
                dt,
                theta,
                reaction: -s.damping(mid),
                beta: s.q,
                robin_old: amps.d0(t),
                robin_new: amps.d0(t + dt),
                robin_gain: T::zero(),
                source: &source,
                inject: None,
                inject_old: T::zero(),
            };
            let r = affine_step(&w, &inp)?;
            w = r.combine(amps.d1(t + dt), T::zero());
        }
        let t_new = s.time_at(step + 1);
        check_finite(&w, t_new)?;
        if rec.keep(step + 1) {
            trace.push(t_new, &w, None, T::zero(), w[0] + amps.dm(t_new));
        }
    }
    Ok(trace)
}

/// Error system state plus the injection signal `Θ = ũ(0) + dm` at its level.
struct ErrorState<T> {
    e: Vec<T>,
    theta: T,
}

/// One sub-step of `ũ_t = ũ_xx + λũ + f - pΘ`, `ũ_x(0) = qũ(0) + d0 + p0Θ`,
/// `ũ(1) = d1`, with `Θ` implicit at the new level.
fn error_substep<T: Real>(
    s: &Scenario<T>,
    neg_p: &[T],
    source: &mut [T],
    st: &ErrorState<T>,
    t: T,
    dt: T,
    theta: T,
) -> Result<ErrorState<T>> {
    let n = s.n;
    let amps = s.amplitudes;
    let mid = t + T::lit(0.5) * dt;
    for (i, v) in source.iter_mut().enumerate() {
        *v = amps.f(node(i, n), mid);
    }
    let inp = StepInput {
        dt,
        theta,
        reaction: s.lambda(mid),
        beta: s.q,
        robin_old: amps.d0(t) + s.p0 * st.theta,
        robin_new: amps.d0(t + dt),
        robin_gain: s.p0,
        source,
        inject: Some(neg_p),
        inject_old: st.theta,
    };
    let r = affine_step(&st.e, &inp)?;
    let d1 = amps.d1(t + dt);
    let ri = r.inject.as_ref().expect("injection response");
    let th = (r.base[0] + d1 * r.dirichlet[0] + amps.dm(t + dt)) / (T::one() - ri[0]);
    Ok(ErrorState {
        e: r.combine(d1, th),
        theta: th,
    })
}

fn run_error<T: Real>(s: &Scenario<T>, design: &Design<T>) -> Result<SimTrace<T>> {
    let n = s.n;
    let amps = s.amplitudes;
    let gains = design.observer_gains()?;
    let neg_p: Vec<T> = gains.p.iter().map(|v| -*v).collect();
    let e0 = sample(n, |x| s.u0.at(x) - s.u_hat0.at(x));
    let mut st = ErrorState {
        theta: e0[0] + amps.dm(T::zero()),
        e: e0,
    };
    let steps = s.steps();
    let rec = Recorder {
        steps,
        every: s.store_every,
    };
    let mut trace = SimTrace::new(s.mode, false);
    trace.push(T::zero(), &st.e, None, T::zero(), st.theta);
    let mut source = vec![T::zero(); n];
    for step in 0..steps {
        let theta = theta_for(s, step);
        let (subs, count) = substeps(s, step);
        for &(t, dt) in &subs[..count] {
            st = error_substep(s, &neg_p, &mut source, &st, t, dt, theta)?;
        }
        let t_new = s.time_at(step + 1);
        check_finite(&st.e, t_new)?;
        if rec.keep(step + 1) {
            trace.push(t_new, &st.e, None, T::zero(), st.theta);
        }
    }
    Ok(trace)
}

fn run_observer_target<T: Real>(s: &Scenario<T>, design: &Design<T>) -> Result<SimTrace<T>> {
    let n = s.n;
    let amps = s.amplitudes;
    let k = design.controller()?;
    let gains = design.observer_gains()?;
    if gains.kp.len() != n {
        return Err(Error::config("observer gains lack K_p"));
    }
    let neg_p: Vec<T> = gains.p.iter().map(|v| -*v).collect();
    let e0 = sample(n, |x| s.u0.at(x) - s.u_hat0.at(x));
    let mut err = ErrorState {
        theta: e0[0] + amps.dm(T::zero()),
        e: e0,
    };
    let uh0 = StateField::from_fn(n, T::zero(), |x| s.u_hat0.at(x));
    let mut w = forward_transform(&uh0, k)?.values;
    let zero_source = vec![T::zero(); n];
    let mut err_source = vec![T::zero(); n];
    let steps = s.steps();
    let rec = Recorder {
        steps,
        every: s.store_every,
    };
    let mut trace = SimTrace::new(s.mode, false);
    trace.push(T::zero(), &w, None, T::zero(), err.theta);
    let half = T::lit(0.5);
    for step in 0..steps {
        let theta = theta_for(s, step);
        let (subs, count) = substeps(s, step);
        for &(t, dt) in &subs[..count] {
            let next = error_substep(s, &neg_p, &mut err_source, &err, t, dt, theta)?;
            let mid = t + half * dt;
            let inp = StepInput {
                dt,
                theta,
                reaction: -s.damping(mid),
                beta: s.q,
                robin_old: -s.p0 * err.theta,
                robin_new: T::zero(),
                robin_gain: -s.p0,
                source: &zero_source,
                inject: Some(&gains.kp),
                inject_old: err.theta,
            };
            let r = affine_step(&w, &inp)?;
            w = r.combine(T::zero(), next.theta);
            err = next;
        }
        let t_new = s.time_at(step + 1);
        check_finite(&w, t_new)?;
        if rec.keep(step + 1) {
            trace.push(t_new, &w, None, T::zero(), err.theta);
        }
    }
    Ok(trace)
}

fn run_coupled<T: Real>(s: &Scenario<T>, design: &Design<T>) -> Result<SimTrace<T>> {
    let n = s.n;
    let amps = s.amplitudes;
    let weights = control_weights(design.controller()?);
    let gains = design.observer_gains()?;
    let mut u = sample(n, |x| s.u0.at(x));
    let mut uh = sample(n, |x| s.u_hat0.at(x));
    let mut inj = u[0] + amps.dm(T::zero()) - uh[0];
    let steps = s.steps();
    let rec = Recorder {
        steps,
        every: s.store_every,
    };
    let mut trace = SimTrace::new(s.mode, true);
    trace.push(T::zero(), &u, Some(&uh), dot(&weights, &uh), u[0] + amps.dm(T::zero()));
    let mut source = vec![T::zero(); n];
    let zero_source = vec![T::zero(); n];
    let half = T::lit(0.5);
    for step in 0..steps {
        let theta = theta_for(s, step);
        let (subs, count) = substeps(s, step);
        let mut control = T::zero();
        for &(t, dt) in &subs[..count] {
            let mid = t + half * dt;
            for (i, v) in source.iter_mut().enumerate() {
                *v = amps.f(node(i, n), mid);
            }
            let lam = s.lambda(mid);
            let plant = affine_step(
                &u,
                &StepInput {
                    dt,
                    theta,
                    reaction: lam,
                    beta: s.q,
                    robin_old: amps.d0(t),
                    robin_new: amps.d0(t + dt),
                    robin_gain: T::zero(),
                    source: &source,
                    inject: None,
                    inject_old: T::zero(),
                },
            )?;
            let obs = affine_step(
                &uh,
                &StepInput {
                    dt,
                    theta,
                    reaction: lam,
                    beta: s.q,
                    robin_old: -s.p0 * inj,
                    robin_new: T::zero(),
                    robin_gain: -s.p0,
                    source: &zero_source,
                    inject: Some(&gains.p),
                    inject_old: inj,
                },
            )?;
            let d1 = amps.d1(t + dt);
            let dm = amps.dm(t + dt);
            let ri = obs.inject.as_ref().expect("injection response");
            // both systems share the matrix, so the unit Dirichlet responses
            // coincide and U drops out of Θ = u(0) + dm - û(0)
            let th = (plant.base[0] + d1 * plant.dirichlet[0] + dm - obs.base[0]) / (T::one() + ri[0]);
            let uc = (dot(&weights, &obs.base) + th * dot(&weights, ri)) / (T::one() - dot(&weights, &obs.dirichlet));
            u = plant.combine(uc + d1, T::zero());
            uh = obs.combine(uc, th);
            inj = th;
            control = uc;
        }
        let t_new = s.time_at(step + 1);
        check_finite(&u, t_new)?;
        check_finite(&uh, t_new)?;
        if rec.keep(step + 1) {
            trace.push(t_new, &u, Some(&uh), control, u[0] + amps.dm(t_new));
        }
    }
    Ok(trace)
}

/// Mismatches between the initial data and the boundary conditions at
/// `t = 0` larger than `1e-8`. Informational: such data is still simulated.
pub fn compatibility_warnings<T: Real>(s: &Scenario<T>, design: &Design<T>) -> Vec<String> {
    let tol = T::lit(1e-8);
    let amps = s.amplitudes;
    let mut out = Vec::new();
    let zero = T::zero();
    let robin = s.u0.slope(zero) - s.q * s.u0.at(zero) - amps.d0(zero);
    if robin.abs() > tol {
        out.push(format!("u0 violates the Robin condition at x=0 by {robin:.3e}"));
    }
    let control = match (&design.k, s.mode) {
        (Some(k), Mode::StateFeedback) => {
            let u0 = sample(s.n, |x| s.u0.at(x));
            dot(&control_weights(k), &u0)
        }
        (Some(k), Mode::OutputFeedback) => {
            let uh = sample(s.n, |x| s.u_hat0.at(x));
            dot(&control_weights(k), &uh)
        }
        _ => zero,
    };
    let dirichlet = s.u0.at(T::one()) - control - amps.d1(zero);
    if dirichlet.abs() > tol {
        out.push(format!("u0 violates the Dirichlet condition at x=1 by {dirichlet:.3e}"));
    }
    if s.mode.needs_observer() {
        let y0 = s.u0.at(zero) + amps.dm(zero);
        let obs = s.u_hat0.slope(zero) - s.q * s.u_hat0.at(zero) + s.p0 * (y0 - s.u_hat0.at(zero));
        if obs.abs() > tol {
            out.push(format!(
                "u_hat0 violates the observer Robin condition at x=0 by {obs:.3e}"
            ));
        }
        if s.mode == Mode::OutputFeedback {
            let dh = s.u_hat0.at(T::one()) - control;
            if dh.abs() > tol {
                out.push(format!(
                    "u_hat0 violates the observer Dirichlet condition at x=1 by {dh:.3e}"
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Amplitudes, Profile, Reaction};

    fn small(mode: Mode) -> Scenario<f64> {
        let mut s = Scenario::reference();
        s.mode = mode;
        s.n = 41;
        s.dt = 1e-3;
        s.t_end = 0.2;
        s
    }

    #[test]
    fn zero_data_gives_zero_trace_in_every_mode() {
        for mode in Mode::ALL {
            let mut s = small(mode);
            s.u0 = Profile::Zero;
            s.u_hat0 = Profile::Zero;
            let tr = simulate(&s).unwrap();
            assert!(tr.linf.iter().all(|v| *v == 0.0), "{mode}");
            assert!(tr.control.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn step_plant_keeps_zero() {
        let s = small(Mode::OpenLoop);
        let u = StateField::zeros(41, 0.0);
        let next = step_plant(&u, 0.0, &s, 0.0).unwrap();
        assert!(next.values.iter().all(|v| *v == 0.0));
        assert!((next.time - 1e-3).abs() < 1e-15);
        assert!(step_plant(&StateField::zeros(40, 0.0), 0.0, &s, 0.0).is_err());
    }

    #[test]
    fn dirichlet_value_is_imposed() {
        let mut s = small(Mode::OpenLoop);
        s.amplitudes = Amplitudes {
            a: 2.0,
            a0: 1.0,
            a1: 1.0,
            a2: 1.0,
        };
        let u = StateField::from_fn(41, 0.0, |x: f64| x.cos());
        let next = step_plant(&u, 0.1, &s, 0.25).unwrap();
        assert_eq!(next.values[40], 0.25 + s.amplitudes.d1(0.1 + s.dt));
    }

    #[test]
    fn trace_is_strided_and_keeps_final_step() {
        let mut s = small(Mode::OpenLoop);
        s.store_every = 7;
        let tr = simulate(&s).unwrap();
        assert_eq!(tr.len(), 200 / 7 + 2);
        assert!((tr.times.last().unwrap() - 0.2).abs() < 1e-12);
        for (f, l) in tr.fields.iter().zip(&tr.linf) {
            assert_eq!(f.linf(), *l);
        }
    }

    #[test]
    fn state_feedback_closes_the_loop_exactly() {
        let mut s = small(Mode::StateFeedback);
        s.amplitudes = Amplitudes {
            a: 2.0,
            a0: 1.0,
            a1: 1.0,
            a2: 0.0,
        };
        let design = Design::for_scenario(&s).unwrap();
        let tr = simulate_with(&s, &design).unwrap();
        let w = control_weights(design.k.as_ref().unwrap());
        for (idx, f) in tr.fields.iter().enumerate().skip(1) {
            let u_ctrl = dot(&w, &f.values);
            assert!((u_ctrl - tr.control[idx]).abs() < 1e-9);
            let d1 = s.amplitudes.d1(f.time);
            assert!((f.values[40] - u_ctrl - d1).abs() < 1e-9);
        }
    }

    #[test]
    fn divergence_reports_time() {
        let mut s = small(Mode::OpenLoop);
        s.reaction = Reaction::Constant(1000.0);
        s.u0 = Profile::Constant(1e300);
        s.startup_steps = 0;
        match simulate(&s) {
            Err(Error::Divergence { time }) => assert!(time > 0.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn coupled_requires_output_feedback() {
        assert!(simulate_coupled(&small(Mode::StateFeedback)).is_err());
    }

    #[test]
    fn reference_data_is_flagged_incompatible() {
        let s = small(Mode::StateFeedback);
        let d = Design::for_scenario(&s).unwrap();
        let w = compatibility_warnings(&s, &d);
        assert!(w.len() >= 2);
        let mut ok = small(Mode::OpenLoop);
        ok.u0 = Profile::Zero;
        assert!(compatibility_warnings(
            &ok,
            &Design {
                k: None,
                m: None,
                gains: None
            }
        )
        .is_empty());
    }
}
