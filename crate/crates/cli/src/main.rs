use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isslab::analysis::{sweep_metric, Series};
use isslab::io;
use isslab::kernels::reciprocity_residual;
use isslab::scenario::PRESETS;
use isslab::sim::compatibility_warnings;
use isslab::verify;
use isslab::{
    build_grid, d_check_bound, fit_decay, invert_kernel, iss_sweep, linf_series, lyapunov_monitor, pde_residual,
    simulate_with, solve_p, validate_p0, Amplitudes, Design, Error, KernelKind, Mode, Scenario,
};

type Scenario64 = Scenario<f64>;

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  verification checks failed, or an I/O error
  2  configuration error (unknown preset, unparsable config or override, bad flag value)
  3  solver failure (an iteration did not converge, singular system)
  4  simulation diverged (non-finite state)

Environment:
  ISSLAB_THREADS  caps the number of worker threads used by `sweep` and `reproduce-figs`";

#[derive(Debug, Parser)]
#[command(name = "isslab", version, about = "Boundary control and observer laboratory for a 1-D reaction-diffusion equation", after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the k, l, m, n kernel grids and their PDE residual report.
    Kernels(CommonArgs),
    /// Solve the observer gain equation and write p(x) and K_p(x).
    Gains(CommonArgs),
    /// Run one scenario and write its trace, norms and metadata.
    Simulate(SimulateArgs),
    /// Sup-norm of the closed loop over a window for a family of disturbance scales.
    Sweep(SweepArgs),
    /// Run the full property suite and print one line per check.
    Verify(VerifyArgs),
    /// Write the traces and norm files of every built-in figure preset.
    ReproduceFigs(ReproduceArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Built-in scenario name (see `--preset list`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Config file of `key = value` lines; may start with `preset = name`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid nodes on [0, 1].
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// open_loop, state_feedback, output_feedback, target_direct, error_direct, observer_target_direct.
    #[arg(long)]
    mode: Option<String>,
    /// Disturbance amplitudes `A,A0,A1,A2`.
    #[arg(long)]
    amplitudes: Option<String>,
    /// Any scenario key, applied last. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Exponential weight of the Lyapunov monitor; defaults to half of c0 - sup λ.
    #[arg(long)]
    sigma: Option<f64>,
    /// Power of the Lyapunov monitor.
    #[arg(long, default_value_t = 3.0)]
    r: f64,
    /// Decay-fit window `t0,t1`.
    #[arg(long, default_value = "0.5,2")]
    window: String,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Ascending disturbance scales.
    #[arg(long, default_value = "0,1,3")]
    scales: String,
    /// Window `t0,t1` of the sup-norm.
    #[arg(long, default_value = "1,4")]
    window: String,
    #[arg(long, env = "ISSLAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Also write the report to `<dir>/verify.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Keep every k-th time step in the written traces.
    #[arg(long, default_value_t = 40)]
    store_every: usize,
    /// Override any scenario key in every preset. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, env = "ISSLAB_THREADS")]
    threads: Option<usize>,
}

/// Failure of a command, carrying its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::IterationFailure { .. } | Error::Singular { .. } | Error::Dimension { .. } => 3,
            Error::Divergence { .. } => 4,
            Error::Io(_) | Error::EmptyTrace => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: msg.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Kernels(a) => cmd_kernels(&a),
        Command::Gains(a) => cmd_gains(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::ReproduceFigs(a) => cmd_reproduce(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn apply_overrides(s: &mut Scenario64, pairs: &[String]) -> Result<(), Failure> {
    for pair in pairs {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| config_error(format!("--set expects KEY=VALUE, got `{pair}`")))?;
        s.set(k, v)?;
    }
    Ok(())
}

fn resolve(args: &ScenarioArgs) -> Result<Scenario64, Failure> {
    let mut s = match (&args.preset, &args.config) {
        (Some(name), _) if name == "list" => {
            return Err(config_error(format!("available presets: {}", PRESETS.join(", "))));
        }
        (Some(name), _) => Scenario64::preset(name)?,
        (None, Some(path)) => {
            let text =
                fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
            Scenario64::from_config_str(&text)?
        }
        (None, None) => Scenario64::reference(),
    };
    if let Some(n) = args.n {
        s.n = n;
    }
    if let Some(dt) = args.dt {
        s.dt = dt;
    }
    if let Some(t) = args.t_end {
        s.t_end = t;
    }
    if let Some(m) = &args.mode {
        s.mode = m.parse()?;
    }
    if let Some(a) = &args.amplitudes {
        s.set("amplitudes", a)?;
    }
    apply_overrides(&mut s, &args.set)?;
    s.validate()?;
    Ok(s)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| config_error(format!("{what}: cannot parse `{v}`")))
        })
        .collect()
}

fn parse_window(text: &str) -> Result<(f64, f64), Failure> {
    match parse_list(text, "window")?.as_slice() {
        [a, b] if a < b => Ok((*a, *b)),
        _ => Err(config_error(format!("window expects t0,t1 with t0 < t1, got `{text}`"))),
    }
}

fn out_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure {
        code: 1,
        message: format!("cannot create {}: {e}", path.display()),
    })
}

fn cmd_kernels(a: &CommonArgs) -> CmdResult {
    let s = resolve(&a.scenario)?;
    out_dir(&a.out)?;
    let k = build_grid(KernelKind::K, s.n, s.c0, s.q)?;
    let m = build_grid(KernelKind::M, s.n, s.c0, s.q)?;
    let l = invert_kernel(&k)?;
    let nk = invert_kernel(&m)?;
    let grids = [("k", &k), ("l", &l), ("m", &m), ("n", &nk)];
    let mut entries = Vec::new();
    for (name, grid) in grids {
        io::write_file(&a.out.join(format!("kernel_{name}.csv")), |w| {
            io::write_kernel_csv(w, grid)
        })?;
        entries.push((name, grid, pde_residual(grid)?));
    }
    io::write_file(&a.out.join("residuals.csv"), |w| io::write_residual_report(w, &entries))?;
    for (name, grid, rep) in &entries {
        println!(
            "{name}: n={} max|kernel|={:.6e} interior_max={:.6e} bc_max={:.6e}",
            grid.n(),
            grid.max_abs(),
            rep.interior_max,
            rep.bc_max
        );
    }
    println!(
        "reciprocity: k/l {:.6e}  m/n {:.6e}",
        reciprocity_residual(&k, &l)?,
        reciprocity_residual(&m, &nk)?
    );
    Ok(())
}

fn cmd_gains(a: &CommonArgs) -> CmdResult {
    let s = resolve(&a.scenario)?;
    let check = validate_p0(s.p0, s.c0, s.q);
    if !check.valid {
        return Err(config_error(format!(
            "p0 = {} is inadmissible (margin {:.6e})",
            s.p0, check.margin
        )));
    }
    out_dir(&a.out)?;
    let m = build_grid(KernelKind::M, s.n, s.c0, s.q)?;
    let k = build_grid(KernelKind::K, s.n, s.c0, s.q)?;
    let gains = solve_p(&m, s.p0, s.q)?.with_kp(&k)?;
    io::write_file(&a.out.join("gains.csv"), |w| io::write_gains_csv(w, &gains))?;
    io::write_file(&a.out.join("gains_meta.txt"), |w| {
        io::write_gains_meta(w, &gains)?;
        writeln!(w, "p0_margin={:.16e}", check.margin)?;
        Ok(())
    })?;
    println!(
        "p0 margin {:.6e}, residual {:.3e} after {} iterations",
        check.margin, gains.residual, gains.iterations
    );
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let s = resolve(&a.common.scenario)?;
    let window = parse_window(&a.window)?;
    let out = &a.common.out;
    out_dir(out)?;
    let design = Design::for_scenario(&s)?;
    for w in compatibility_warnings(&s, &design) {
        eprintln!("warning: {w}");
    }
    let trace = simulate_with(&s, &design)?;
    io::write_file(&out.join("trace.csv"), |w| io::write_trace_csv(w, &trace))?;
    io::write_file(&out.join("norms.csv"), |w| io::write_norms_csv(w, &trace))?;
    io::write_file(&out.join("scenario.txt"), |w| io::write_scenario_meta(w, &s))?;

    let (times, norms) = linf_series(&trace, Series::Primary)?;
    match fit_decay(&times, &norms, window) {
        Ok(fit) => {
            io::write_file(&out.join("decay.txt"), |w| io::write_decay_report(w, &fit))?;
            println!("decay rate on [{}, {}]: {:.6e}", window.0, window.1, fit.rate);
        }
        Err(e) => eprintln!("note: no decay fit ({e})"),
    }

    if s.mode == Mode::TargetDirect {
        let k = design
            .k
            .as_ref()
            .ok_or_else(|| config_error("target run without kernel"))?;
        let sigma = a.sigma.unwrap_or(0.5 * s.underline_c());
        let d = d_check_bound(&s, k, sigma, 0.01)?;
        let series = lyapunov_monitor(&trace, &s, sigma, a.r, d)?;
        io::write_file(&out.join("lyapunov.csv"), |w| io::write_lyapunov_csv(w, &series))?;
        println!("lyapunov: D={d:.6e} max_increase={:.6e}", series.max_increase());
    }
    let last = trace.linf.last().copied().unwrap_or(f64::NAN);
    println!("{}: {} samples, final sup-norm {last:.6e}", s.mode, trace.len());
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let s = resolve(&a.common.scenario)?;
    let scales = parse_list(&a.scales, "scales")?;
    let window = parse_window(&a.window)?;
    out_dir(&a.common.out)?;
    let design = Design::for_scenario(&s)?;
    let result = iss_sweep(&s, &design, &scales, window, a.threads)?;
    io::write_file(&a.common.out.join("sweep.csv"), |w| io::write_sweep_csv(w, &result))?;
    for (scale, sup) in result.amplitudes.iter().zip(&result.sup_norms) {
        println!("scale {scale}: sup-norm {sup:.6e}");
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let checks = verify::run_suite()?;
    let report = verify::render_report(&checks);
    print!("{report}");
    if let Some(dir) = &a.out {
        out_dir(dir)?;
        fs::write(dir.join("verify.txt"), &report).map_err(Error::from)?;
    }
    if checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: String::new(),
        })
    }
}

/// `fig2d` from `paper_fig2d`.
fn short_name(preset: &str) -> &str {
    preset.strip_prefix("paper_").unwrap_or(preset)
}

fn scale_label(scale: f64) -> String {
    format!("{scale}").replace('.', "p")
}

fn cmd_reproduce(a: &ReproduceArgs) -> CmdResult {
    if a.store_every == 0 {
        return Err(config_error("--store-every must be at least 1"));
    }
    out_dir(&a.out)?;
    let scales = [0.0, 1.0, 3.0];
    let window = (1.0, 4.0);
    for preset in PRESETS {
        let name = short_name(preset);
        let mut s = Scenario64::preset(preset)?;
        s.store_every = a.store_every;
        apply_overrides(&mut s, &a.set)?;
        s.validate()?;
        let design = Design::for_scenario(&s)?;
        if name.ends_with('d') {
            let metric = sweep_metric(s.mode);
            for &scale in &scales {
                let mut run = s.clone();
                run.amplitudes = Amplitudes::scaled(s.amplitudes.a, scale);
                let trace = simulate_with(&run, &design)?;
                let (times, norms) = linf_series(&trace, metric)?;
                let path = a.out.join(format!("{name}_scale{}_norms.csv", scale_label(scale)));
                io::write_file(&path, |w| {
                    writeln!(w, "t,sup_norm")?;
                    for (t, v) in times.iter().zip(&norms) {
                        writeln!(w, "{t:.16e},{v:.16e}")?;
                    }
                    Ok(())
                })?;
            }
            let sweep = iss_sweep(&s, &design, &scales, window, a.threads)?;
            io::write_file(&a.out.join(format!("{name}_sweep.csv")), |w| {
                io::write_sweep_csv(w, &sweep)
            })?;
            println!("{name}: sweep {:?}", sweep.sup_norms);
        } else {
            let trace = simulate_with(&s, &design)?;
            io::write_file(&a.out.join(format!("{name}_trace.csv")), |w| {
                io::write_trace_csv(w, &trace)
            })?;
            io::write_file(&a.out.join(format!("{name}_norms.csv")), |w| {
                io::write_norms_csv(w, &trace)
            })?;
            println!("{name}: {} samples", trace.len());
        }
        io::write_file(&a.out.join(format!("{name}_scenario.txt")), |w| {
            io::write_scenario_meta(w, &s)
        })?;
    }
    Ok(())
}
