//! CSV and key=value text output. Every number is written with `{:.16e}` so
//! files round-trip `f64` and identical runs produce identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analysis::{DecayFit, LyapunovSeries, SweepResult};
use crate::error::Result;
use crate::gains::GainProfile;
use crate::kernels::{ResidualReport, TriGrid};
use crate::scalar::{node, Real};
use crate::scenario::Scenario;
use crate::sim::SimTrace;

fn num<T: Real>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

/// Buffered file writer that flushes on success.
pub fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// `x,z,value` for every node of the triangle, row by row.
pub fn write_kernel_csv<T: Real>(w: &mut dyn Write, grid: &TriGrid<T>) -> Result<()> {
    writeln!(w, "x,z,value")?;
    let n = grid.n();
    for i in 0..n {
        let x = node::<T>(i, n);
        for (j, v) in grid.row(i).iter().enumerate() {
            writeln!(w, "{},{},{}", num(x), num(node::<T>(j, n)), num(*v))?;
        }
    }
    Ok(())
}

/// `x,p,kp` per node; the `kp` column is omitted when it was not computed.
pub fn write_gains_csv<T: Real>(w: &mut dyn Write, gains: &GainProfile<T>) -> Result<()> {
    let n = gains.p.len();
    let with_kp = gains.kp.len() == n;
    writeln!(w, "{}", if with_kp { "x,p,kp" } else { "x,p" })?;
    for i in 0..n {
        write!(w, "{},{}", num(node::<T>(i, n)), num(gains.p[i]))?;
        if with_kp {
            write!(w, ",{}", num(gains.kp[i]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_gains_meta<T: Real>(w: &mut dyn Write, gains: &GainProfile<T>) -> Result<()> {
    writeln!(w, "p0={}", num(gains.p0))?;
    writeln!(w, "q={}", num(gains.q))?;
    writeln!(w, "c0={}", num(gains.c0))?;
    writeln!(w, "b={}", num(gains.b))?;
    writeln!(w, "residual={}", num(gains.residual))?;
    writeln!(w, "iterations={}", gains.iterations)?;
    writeln!(w, "nodes={}", gains.p.len())?;
    Ok(())
}

pub fn write_residual_report<T: Real>(
    w: &mut dyn Write,
    entries: &[(&str, &TriGrid<T>, ResidualReport<T>)],
) -> Result<()> {
    writeln!(w, "kernel,n,max_abs,interior_max,bc_max,diagonal_defect")?;
    for (name, grid, rep) in entries {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            name,
            grid.n(),
            num(grid.max_abs()),
            num(rep.interior_max),
            num(rep.bc_max),
            num(grid.diagonal_defect())
        )?;
    }
    Ok(())
}

/// Long format `t,x,u[,u_hat,u_tilde],U,y`. The `u` column holds the state
/// of whichever system the trace integrated.
pub fn write_trace_csv<T: Real>(w: &mut dyn Write, trace: &SimTrace<T>) -> Result<()> {
    let observer = trace.fields_secondary.as_ref();
    if observer.is_some() {
        writeln!(w, "t,x,u,u_hat,u_tilde,U,y")?;
    } else {
        writeln!(w, "t,x,u,U,y")?;
    }
    for (idx, f) in trace.fields.iter().enumerate() {
        let n = f.n();
        let t = num(f.time);
        let tail = format!("{},{}", num(trace.control[idx]), num(trace.boundary_output[idx]));
        for (i, v) in f.values.iter().enumerate() {
            let x = num(node::<T>(i, n));
            match observer {
                Some(obs) => {
                    let o = obs[idx].values[i];
                    writeln!(w, "{t},{x},{},{},{},{tail}", num(*v), num(o), num(*v - o))?;
                }
                None => writeln!(w, "{t},{x},{},{tail}", num(*v))?,
            }
        }
    }
    Ok(())
}

/// `t,linf_u[,linf_utilde]`.
pub fn write_norms_csv<T: Real>(w: &mut dyn Write, trace: &SimTrace<T>) -> Result<()> {
    let err = trace.error_fields();
    match &err {
        Some(_) => writeln!(w, "t,linf_u,linf_utilde")?,
        None => writeln!(w, "t,linf_u")?,
    }
    for (idx, t) in trace.times.iter().enumerate() {
        write!(w, "{},{}", num(*t), num(trace.linf[idx]))?;
        if let Some(e) = &err {
            write!(w, ",{}", num(e[idx].linf()))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `scale,sup_norm`.
pub fn write_sweep_csv<T: Real>(w: &mut dyn Write, sweep: &SweepResult<T>) -> Result<()> {
    writeln!(w, "scale,sup_norm")?;
    for (s, v) in sweep.amplitudes.iter().zip(&sweep.sup_norms) {
        writeln!(w, "{},{}", num(*s), num(*v))?;
    }
    Ok(())
}

/// `t,V_upper,V_lower`.
pub fn write_lyapunov_csv<T: Real>(w: &mut dyn Write, series: &LyapunovSeries<T>) -> Result<()> {
    writeln!(w, "t,V_upper,V_lower")?;
    for i in 0..series.times.len() {
        writeln!(
            w,
            "{},{},{}",
            num(series.times[i]),
            num(series.upper[i]),
            num(series.lower[i])
        )?;
    }
    Ok(())
}

pub fn write_decay_report<T: Real>(w: &mut dyn Write, fit: &DecayFit<T>) -> Result<()> {
    w.write_all(crate::analysis::decay_report(fit).as_bytes())?;
    Ok(())
}

/// Every resolved scenario parameter as `key=value`, followed by derived
/// quantities as comments so the file reloads as a config.
pub fn write_scenario_meta<T: Real>(w: &mut dyn Write, scenario: &Scenario<T>) -> Result<()> {
    w.write_all(scenario.to_config_string().as_bytes())?;
    writeln!(w, "# underline_c={}", num(scenario.underline_c()))?;
    writeln!(w, "# steps={}", scenario.steps())?;
    Ok(())
}
