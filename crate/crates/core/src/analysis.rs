//! Post-processing of traces: norm series, exponential decay fits, amplitude
//! sweeps, the truncated-power Lyapunov monitor and equivalence checks between
//! a closed-loop run and its target system.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::TriGrid;
use crate::scalar::{sup_norm, Real};
use crate::scenario::{Amplitudes, Mode, Scenario};
use crate::sim::{simulate_with, Design, SimTrace, TargetSource};
use crate::transforms::{forward_transform, StateField};

/// Which stored state a norm series is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    /// `fields`: the plant, or the integrated system in direct modes.
    Primary,
    /// Observer `û` of an output-feedback trace.
    Observer,
    /// `ũ = u - û` of an output-feedback trace.
    Error,
    /// `‖u‖∞ + ‖ũ‖∞` of an output-feedback trace.
    PlantPlusError,
}

/// Per-stored-step sup norms.
pub fn linf_series<T: Real>(trace: &SimTrace<T>, which: Series) -> Result<(Vec<T>, Vec<T>)> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let need_obs = || {
        trace
            .fields_secondary
            .as_ref()
            .ok_or_else(|| Error::domain("trace has no observer state"))
    };
    let norms = match which {
        Series::Primary => trace.fields.iter().map(StateField::linf).collect(),
        Series::Observer => need_obs()?.iter().map(StateField::linf).collect(),
        Series::Error => {
            need_obs()?;
            trace
                .error_fields()
                .unwrap_or_default()
                .iter()
                .map(StateField::linf)
                .collect()
        }
        Series::PlantPlusError => {
            need_obs()?;
            let err = trace.error_fields().unwrap_or_default();
            trace
                .fields
                .iter()
                .zip(&err)
                .map(|(u, e)| u.linf() + e.linf())
                .collect()
        }
    };
    Ok((trace.times.clone(), norms))
}

/// Least-squares fit of `-log(norm) ≈ rate · t + offset` on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit<T> {
    pub rate: T,
    pub offset: T,
    /// Root-mean-square residual of the log fit.
    pub residual: T,
    pub samples: usize,
    pub window: (T, T),
}

pub fn fit_decay<T: Real>(times: &[T], norms: &[T], window: (T, T)) -> Result<DecayFit<T>> {
    if times.len() != norms.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            found: norms.len(),
        });
    }
    let (lo, hi) = window;
    let mut pts = Vec::new();
    for (t, v) in times.iter().zip(norms) {
        if *t >= lo && *t <= hi {
            if !(*v > T::zero()) {
                return Err(Error::domain(format!(
                    "norm {v} at t = {t} is not positive; shrink the window"
                )));
            }
            pts.push((*t, -v.ln()));
        }
    }
    if pts.len() < 2 {
        return Err(Error::domain("fewer than two samples in the fit window"));
    }
    let count = T::from_usize_lossy(pts.len());
    let mt = pts.iter().map(|p| p.0).sum::<T>() / count;
    let my = pts.iter().map(|p| p.1).sum::<T>() / count;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (t, y) in &pts {
        sxy += (*t - mt) * (*y - my);
        sxx += (*t - mt) * (*t - mt);
    }
    if sxx == T::zero() {
        return Err(Error::domain("fit window holds a single instant"));
    }
    let rate = sxy / sxx;
    let offset = my - rate * mt;
    let sq = pts.iter().map(|(t, y)| (*y - rate * *t - offset).powi(2)).sum::<T>();
    Ok(DecayFit {
        rate,
        offset,
        residual: (sq / count).sqrt(),
        samples: pts.len(),
        window,
    })
}

/// Slope of `-log(norm)` against time on `window`.
pub fn fit_decay_rate<T: Real>(times: &[T], norms: &[T], window: (T, T)) -> Result<T> {
    fit_decay(times, norms, window).map(|f| f.rate)
}

/// Plain-text decay report: window, slope, residual.
pub fn decay_report<T: Real>(fit: &DecayFit<T>) -> String {
    format!(
        "window = [{:.6}, {:.6}]\nsamples = {}\nrate = {:.16e}\noffset = {:.16e}\nresidual = {:.16e}\n",
        fit.window.0.to_f64_lossy(),
        fit.window.1.to_f64_lossy(),
        fit.samples,
        fit.rate.to_f64_lossy(),
        fit.offset.to_f64_lossy(),
        fit.residual.to_f64_lossy()
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T> {
    /// Common scale applied to `A0`, `A1`, `A2`.
    pub amplitudes: Vec<T>,
    pub sup_norms: Vec<T>,
    pub window: (T, T),
}

/// The norm a sweep tracks for a closed-loop configuration.
pub fn sweep_metric(mode: Mode) -> Series {
    match mode {
        Mode::OutputFeedback => Series::PlantPlusError,
        _ => Series::Primary,
    }
}

/// One run per scale with `A0 = A1 = A2 = scale` and the in-domain amplitude
/// `A` of `base` (zero for the zero scale); reports the sup over `window` of
/// the mode's metric. Runs fan out over `threads` workers, or the global
/// pool when `None`.
pub fn iss_sweep<T: Real>(
    base: &Scenario<T>,
    design: &Design<T>,
    scales: &[T],
    window: (T, T),
    threads: Option<usize>,
) -> Result<SweepResult<T>> {
    if scales.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("sweep scales must be sorted ascending"));
    }
    if window.0 > window.1 || window.0 < T::zero() || window.1 > base.t_end + base.dt {
        return Err(Error::config("sweep window must lie inside [0, t_end]"));
    }
    let metric = sweep_metric(base.mode);
    let run = |scale: &T| -> Result<T> {
        let mut s = base.clone();
        s.amplitudes = Amplitudes::scaled(base.amplitudes.a, *scale);
        let trace = simulate_with(&s, design)?;
        let (times, norms) = linf_series(&trace, metric)?;
        Ok(times
            .iter()
            .zip(&norms)
            .filter(|(t, _)| **t >= window.0 && **t <= window.1)
            .fold(T::zero(), |acc, (_, v)| acc.max(*v)))
    };
    let sup_norms: Result<Vec<T>> = match threads {
        Some(count) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(count.max(1))
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            pool.install(|| scales.par_iter().map(run).collect())
        }
        None => scales.par_iter().map(run).collect(),
    };
    Ok(SweepResult {
        amplitudes: scales.to_vec(),
        sup_norms: sup_norms?,
        window,
    })
}

/// `V(t)` for the upper functional (state `w`) and the mirrored one (`-w`).
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries<T> {
    pub times: Vec<T>,
    pub upper: Vec<T>,
    pub lower: Vec<T>,
}

impl<T: Real> LyapunovSeries<T> {
    /// Largest single-step increase over both functionals.
    pub fn max_increase(&self) -> T {
        let rise = |v: &[T]| v.windows(2).fold(T::zero(), |acc, w| acc.max(w[1] - w[0]));
        rise(&self.upper).max(rise(&self.lower))
    }
}

/// Antiderivative of the truncated power `max(θ, 0)^r`.
fn truncated_power_integral<T: Real>(theta: T, r: T) -> T {
    if theta > T::zero() {
        theta.powf(r + T::one()) / (r + T::one())
    } else {
        T::zero()
    }
}

fn trapezoid_unit<T: Real>(values: impl ExactSizeIterator<Item = T>) -> T {
    let len = values.len();
    crate::quadrature::trapezoid(T::one() / T::from_usize_lossy(len.saturating_sub(1).max(1)), values)
}

/// `V(t) = ∫_0^1 G(e^{σt} w(x,t) - D) dx` with `G(θ) = max(θ,0)^{r+1}/(r+1)`,
/// and the same with `-w`. Requires `0 < σ < underline_c` of the scenario.
pub fn lyapunov_monitor<T: Real>(
    w_trace: &SimTrace<T>,
    scenario: &Scenario<T>,
    sigma: T,
    r: T,
    d_check: T,
) -> Result<LyapunovSeries<T>> {
    if w_trace.mode != Mode::TargetDirect {
        return Err(Error::domain("lyapunov_monitor needs a target-system trace"));
    }
    if w_trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let cu = scenario.underline_c();
    if !(sigma > T::zero() && sigma < cu) {
        return Err(Error::domain(format!("sigma = {sigma} outside (0, {cu})")));
    }
    if !(r > T::one()) {
        return Err(Error::domain(format!("r = {r} must exceed 1")));
    }
    let mut upper = Vec::with_capacity(w_trace.len());
    let mut lower = Vec::with_capacity(w_trace.len());
    for f in &w_trace.fields {
        let weight = (sigma * f.time).exp();
        upper.push(trapezoid_unit(
            f.values
                .iter()
                .map(|w| truncated_power_integral(weight * *w - d_check, r)),
        ));
        lower.push(trapezoid_unit(
            f.values
                .iter()
                .map(|w| truncated_power_integral(-weight * *w - d_check, r)),
        ));
    }
    Ok(LyapunovSeries {
        times: w_trace.times.clone(),
        upper,
        lower,
    })
}

/// The level `D` under which both functionals start at zero and stay
/// non-increasing: the largest of `‖w0‖∞`, `sup e^{σt}|d0|/q`,
/// `sup e^{σt}|d1|` and `sup e^{σt}‖ψ‖∞/(underline_c - σ)`, sampled at every
/// step of the horizon, times `1 + headroom`.
pub fn d_check_bound<T: Real>(scenario: &Scenario<T>, k: &TriGrid<T>, sigma: T, headroom: T) -> Result<T> {
    let cu = scenario.underline_c();
    if !(sigma > T::zero() && sigma < cu) {
        return Err(Error::domain(format!("sigma = {sigma} outside (0, {cu})")));
    }
    let n = scenario.n;
    let u0 = StateField::from_fn(n, T::zero(), |x| scenario.u0.at(x));
    let w0 = forward_transform(&u0, k)?;
    let amps = scenario.amplitudes;
    let src = TargetSource::new(k);
    let mut psi = vec![T::zero(); n];
    let (mut d0, mut d1, mut ps) = (T::zero(), T::zero(), T::zero());
    for step in 0..=scenario.steps() {
        let t = scenario.time_at(step);
        let weight = (sigma * t).exp();
        d0 = d0.max(weight * amps.d0(t).abs());
        d1 = d1.max(weight * amps.d1(t).abs());
        src.fill(&mut psi, amps.f_modes(t), amps.d0(t));
        ps = ps.max(weight * sup_norm(&psi));
    }
    let bound = w0.linf().max(d0 / scenario.q).max(d1).max(ps / (cu - sigma));
    Ok(bound * (T::one() + headroom))
}

fn same_grid<T: Real>(a: &[StateField<T>], b: &[StateField<T>]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    for (x, y) in a.iter().zip(b) {
        if x.n() != y.n() {
            return Err(Error::Dimension {
                expected: x.n(),
                found: y.n(),
            });
        }
        let scale = T::one().max(x.time.abs());
        if (x.time - y.time).abs() > T::lit(1e-9) * scale {
            return Err(Error::domain(format!("trace times differ: {} vs {}", x.time, y.time)));
        }
    }
    Ok(())
}

/// `max_t ‖a[t] - b[t]‖∞` over stored profiles sharing times and grid.
pub fn field_distance<T: Real>(a: &[StateField<T>], b: &[StateField<T>]) -> Result<T> {
    same_grid(a, b)?;
    Ok(a.iter().zip(b).fold(T::zero(), |acc, (x, y)| {
        x.values
            .iter()
            .zip(&y.values)
            .fold(acc, |m, (p, q)| m.max((*p - *q).abs()))
    }))
}

/// `max_t ‖T_k u[t] - w[t]‖∞`.
pub fn transform_consistency<T: Real>(u_trace: &SimTrace<T>, w_trace: &SimTrace<T>, k: &TriGrid<T>) -> Result<T> {
    same_grid(&u_trace.fields, &w_trace.fields)?;
    let mapped: Result<Vec<StateField<T>>> = u_trace.fields.iter().map(|u| forward_transform(u, k)).collect();
    field_distance(&mapped?, &w_trace.fields)
}

/// `max_t ‖(u - û)[t] - ũ[t]‖∞` between an output-feedback trace and an
/// error-system trace.
pub fn error_consistency<T: Real>(coupled: &SimTrace<T>, error_trace: &SimTrace<T>) -> Result<T> {
    let err = coupled
        .error_fields()
        .ok_or_else(|| Error::domain("first trace has no observer state"))?;
    field_distance(&err, &error_trace.fields)
}
