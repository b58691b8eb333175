//! Experiment description: plant coefficients, design constants, disturbance
//! signals, initial data, discretization and which system to integrate.
//!
//! Scenarios come from the built-in preset catalog or from a plain-text file
//! of `key = value` lines (`#` starts a comment). A file may start from a
//! preset with `preset = <name>` and override individual keys.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Plant with `U ≡ 0`.
    OpenLoop,
    /// Plant under the state-feedback law.
    StateFeedback,
    /// Plant and observer coupled through the output-feedback law.
    OutputFeedback,
    /// Controller target system integrated directly.
    TargetDirect,
    /// Estimation-error system integrated directly.
    ErrorDirect,
    /// Observer target system, driven by a companion error-system run.
    ObserverTargetDirect,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::OpenLoop,
        Mode::StateFeedback,
        Mode::OutputFeedback,
        Mode::TargetDirect,
        Mode::ErrorDirect,
        Mode::ObserverTargetDirect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::OpenLoop => "open_loop",
            Mode::StateFeedback => "state_feedback",
            Mode::OutputFeedback => "output_feedback",
            Mode::TargetDirect => "target",
            Mode::ErrorDirect => "error",
            Mode::ObserverTargetDirect => "observer_target",
        }
    }

    pub fn needs_controller(self) -> bool {
        matches!(
            self,
            Mode::StateFeedback | Mode::OutputFeedback | Mode::TargetDirect | Mode::ObserverTargetDirect
        )
    }

    pub fn needs_observer(self) -> bool {
        matches!(
            self,
            Mode::OutputFeedback | Mode::ErrorDirect | Mode::ObserverTargetDirect
        )
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .collect::<String>()
            .to_lowercase();
        match key.as_str() {
            "openloop" => Ok(Mode::OpenLoop),
            "statefeedback" => Ok(Mode::StateFeedback),
            "outputfeedback" => Ok(Mode::OutputFeedback),
            "target" | "targetdirect" => Ok(Mode::TargetDirect),
            "error" | "errordirect" => Ok(Mode::ErrorDirect),
            "observertarget" | "observertargetdirect" => Ok(Mode::ObserverTargetDirect),
            _ => Err(Error::config(format!("unknown mode `{s}`"))),
        }
    }
}

/// Time-varying reaction coefficient `λ(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reaction<T> {
    Constant(T),
    /// `1.2π²(sin²5t + 1)` on `[0, 1]`, `1.2π²(sin²5t + e^{-t} - e^{-1} + 1)` after.
    Reference,
}

impl<T: Real> Reaction<T> {
    pub fn at(&self, t: T) -> T {
        match *self {
            Reaction::Constant(v) => v,
            Reaction::Reference => {
                let s = (T::lit(5.0) * t).sin();
                let base = s * s + T::one();
                let tail = if t <= T::one() {
                    T::zero()
                } else {
                    (-t).exp() - (-T::one()).exp()
                };
                T::lit(1.2) * T::PI() * T::PI() * (base + tail)
            }
        }
    }
}

/// Initial profile on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile<T> {
    Zero,
    Constant(T),
    /// `amplitude · sin(πx)`.
    Sine(T),
    /// `-(5x - 1/4)(2 - x)(3x² - 1)/6`.
    Reference,
}

impl<T: Real> Profile<T> {
    pub fn at(&self, x: T) -> T {
        match *self {
            Profile::Zero => T::zero(),
            Profile::Constant(c) => c,
            Profile::Sine(a) => a * (T::PI() * x).sin(),
            Profile::Reference => {
                let (a, b, c) = reference_factors(x);
                -a * b * c / T::lit(6.0)
            }
        }
    }

    /// Exact derivative, used for the compatibility checks.
    pub fn slope(&self, x: T) -> T {
        match *self {
            Profile::Zero | Profile::Constant(_) => T::zero(),
            Profile::Sine(a) => a * T::PI() * (T::PI() * x).cos(),
            Profile::Reference => {
                let (a, b, c) = reference_factors(x);
                let da = T::lit(5.0);
                let db = -T::one();
                let dc = T::lit(6.0) * x;
                -(da * b * c + a * db * c + a * b * dc) / T::lit(6.0)
            }
        }
    }
}

fn reference_factors<T: Real>(x: T) -> (T, T, T) {
    (
        T::lit(5.0) * x - T::lit(0.25),
        T::lit(2.0) - x,
        T::lit(3.0) * x * x - T::one(),
    )
}

/// Amplitude factors of the four disturbance channels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Amplitudes<T> {
    /// In-domain `f`.
    pub a: T,
    /// Robin boundary `d0`.
    pub a0: T,
    /// Dirichlet boundary `d1`.
    pub a1: T,
    /// Measurement `dm`.
    pub a2: T,
}

impl<T: Real> Amplitudes<T> {
    pub fn zero() -> Self {
        Self {
            a: T::zero(),
            a0: T::zero(),
            a1: T::zero(),
            a2: T::zero(),
        }
    }

    /// Reference sweep convention: the three boundary/measurement channels
    /// take `scale`, the in-domain channel takes `a` for nonzero scales.
    pub fn scaled(a: T, scale: T) -> Self {
        let a = if scale == T::zero() { T::zero() } else { a };
        Self {
            a,
            a0: scale,
            a1: scale,
            a2: scale,
        }
    }

    /// `f(x, t) = (A/6) sin(60t + x)`.
    pub fn f(&self, x: T, t: T) -> T {
        self.a / T::lit(6.0) * (T::lit(60.0) * t + x).sin()
    }

    /// Coefficients `(α, β)` with `f(x, t) = α cos x + β sin x`.
    pub fn f_modes(&self, t: T) -> (T, T) {
        let amp = self.a / T::lit(6.0);
        let phase = T::lit(60.0) * t;
        (amp * phase.sin(), amp * phase.cos())
    }

    /// `d0(t) = (A0/5)(√t e^{-t} + 2 sin 25t)`.
    pub fn d0(&self, t: T) -> T {
        let t0 = t.max(T::zero());
        self.a0 / T::lit(5.0) * (t0.sqrt() * (-t0).exp() + T::lit(2.0) * (T::lit(25.0) * t).sin())
    }

    /// `d1(t) = (2A1/5) sin 25t`.
    pub fn d1(&self, t: T) -> T {
        T::lit(2.0) * self.a1 / T::lit(5.0) * (T::lit(25.0) * t).sin()
    }

    /// `dm(t) = (A2/44) sin 40t`.
    pub fn dm(&self, t: T) -> T {
        self.a2 / T::lit(44.0) * (T::lit(40.0) * t).sin()
    }

    pub fn is_zero(&self) -> bool {
        [self.a, self.a0, self.a1, self.a2].iter().all(|v| *v == T::zero())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub mode: Mode,
    /// Robin coefficient at `x = 0`.
    pub q: T,
    pub reaction: Reaction<T>,
    /// Kernel design constant, must exceed `sup λ`.
    pub c0: T,
    /// Scalar observer gain.
    pub p0: T,
    /// Grid nodes on `[0, 1]`.
    pub n: usize,
    pub dt: T,
    pub t_end: T,
    pub u0: Profile<T>,
    pub u_hat0: Profile<T>,
    pub amplitudes: Amplitudes<T>,
    /// Keep every k-th step in the trace.
    pub store_every: usize,
    /// Number of leading steps replaced by two backward-Euler half steps each.
    pub startup_steps: usize,
}

/// Names accepted by [`Scenario::preset`].
pub const PRESETS: [&str; 16] = [
    "paper_fig1",
    "paper_fig2a",
    "paper_fig2b",
    "paper_fig2c",
    "paper_fig2d",
    "paper_fig3a",
    "paper_fig3b",
    "paper_fig3c",
    "paper_fig3d",
    "paper_fig4a",
    "paper_fig4b",
    "paper_fig4c",
    "paper_fig5a",
    "paper_fig5b",
    "paper_fig5c",
    "paper_fig5d",
];

impl<T: Real> Scenario<T> {
    /// Reference constants with zero disturbances, state feedback,
    /// `n = 201`, `dt = 2.5e-4`, `t_end = 4`.
    pub fn reference() -> Self {
        let pi2 = T::PI() * T::PI();
        Self {
            mode: Mode::StateFeedback,
            q: T::one(),
            reaction: Reaction::Reference,
            c0: T::lit(13.0) / T::lit(5.0) * pi2,
            p0: T::lit(6.0) / T::lit(5.0) * pi2,
            n: 201,
            dt: T::lit(2.5e-4),
            t_end: T::lit(4.0),
            u0: Profile::Reference,
            u_hat0: Profile::Zero,
            amplitudes: Amplitudes::zero(),
            store_every: 10,
            startup_steps: 2,
        }
    }

    /// Built-in catalog. The `d` entries are the base scenario of a
    /// norm-overlay family (amplitude scale 1); sweeps vary the scale.
    pub fn preset(name: &str) -> Result<Self> {
        let mut s = Self::reference();
        let two = T::lit(2.0);
        let (mode, amps) = match name {
            "paper_fig1" => {
                s.t_end = T::one();
                (Mode::OpenLoop, Amplitudes::zero())
            }
            "paper_fig2a" => (Mode::StateFeedback, Amplitudes::zero()),
            "paper_fig2b" | "paper_fig2d" => (Mode::StateFeedback, Amplitudes::scaled(two, T::one())),
            "paper_fig2c" => (Mode::StateFeedback, Amplitudes::scaled(two, T::lit(3.0))),
            "paper_fig3a" => (Mode::ErrorDirect, Amplitudes::zero()),
            "paper_fig3b" | "paper_fig3d" => (Mode::ErrorDirect, Amplitudes::scaled(two, T::one())),
            "paper_fig3c" => (Mode::ErrorDirect, Amplitudes::scaled(two, T::lit(3.0))),
            "paper_fig4a" | "paper_fig5a" => (Mode::OutputFeedback, Amplitudes::zero()),
            "paper_fig4b" | "paper_fig5b" | "paper_fig5d" => (Mode::OutputFeedback, Amplitudes::scaled(two, T::one())),
            "paper_fig4c" | "paper_fig5c" => (Mode::OutputFeedback, Amplitudes::scaled(two, T::lit(3.0))),
            _ => return Err(Error::config(format!("unknown preset `{name}`"))),
        };
        s.mode = mode;
        s.amplitudes = amps;
        Ok(s)
    }

    pub fn lambda(&self, t: T) -> T {
        self.reaction.at(t)
    }

    /// `c(t) = c0 - λ(t)`.
    pub fn damping(&self, t: T) -> T {
        self.c0 - self.lambda(t)
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().to_usize().unwrap_or(0)
    }

    pub fn time_at(&self, step: usize) -> T {
        T::from_usize_lossy(step) * self.dt
    }

    /// `sup λ` sampled on `[0, t_end]` with step `dt`.
    pub fn sup_lambda(&self) -> T {
        (0..=self.steps())
            .map(|i| self.lambda(self.time_at(i)))
            .fold(T::neg_infinity(), T::max)
    }

    /// `c0 - sup λ`; positive for an admissible design.
    pub fn underline_c(&self) -> T {
        self.c0 - self.sup_lambda()
    }

    /// Structural checks; errors make the scenario unusable.
    pub fn validate(&self) -> Result<()> {
        if self.n < 5 {
            return Err(Error::config(format!("n must be at least 5, got {}", self.n)));
        }
        let positive = |name: &str, v: T| {
            if v.is_finite() && v > T::zero() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("q", self.q)?;
        positive("c0", self.c0)?;
        positive("dt", self.dt)?;
        positive("t_end", self.t_end)?;
        if self.store_every == 0 {
            return Err(Error::config("store_every must be at least 1"));
        }
        if self.mode.needs_controller() || self.mode.needs_observer() {
            let margin = self.underline_c();
            if margin <= T::zero() {
                return Err(Error::config(format!(
                    "c0 = {} must exceed sup lambda = {}",
                    self.c0,
                    self.sup_lambda()
                )));
            }
        }
        if self.mode.needs_observer() {
            let margin = self.p0 - (self.c0 / T::lit(2.0) - self.q);
            if margin <= T::zero() {
                return Err(Error::config(format!("p0 = {} must exceed c0/2 - q", self.p0)));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<T> {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("`{key}`: cannot parse number `{v}`")))?;
            Ok(T::lit(x))
        };
        let count = |v: &str| -> Result<usize> {
            v.trim()
                .parse()
                .map_err(|_| Error::config(format!("`{key}`: cannot parse integer `{v}`")))
        };
        match key.trim() {
            "mode" => self.mode = value.trim().parse()?,
            "q" => self.q = num(value)?,
            "c0" => self.c0 = num(value)?,
            "p0" => self.p0 = num(value)?,
            "n" => self.n = count(value)?,
            "dt" => self.dt = num(value)?,
            "t_end" | "t-end" => self.t_end = num(value)?,
            "lambda" => self.reaction = parse_reaction(value)?,
            "u0" => self.u0 = parse_profile(value)?,
            "u_hat0" => self.u_hat0 = parse_profile(value)?,
            "A" | "a" => self.amplitudes.a = num(value)?,
            "A0" | "a0" => self.amplitudes.a0 = num(value)?,
            "A1" | "a1" => self.amplitudes.a1 = num(value)?,
            "A2" | "a2" => self.amplitudes.a2 = num(value)?,
            "amplitudes" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 4 {
                    return Err(Error::config("amplitudes expects A,A0,A1,A2"));
                }
                self.amplitudes = Amplitudes {
                    a: num(parts[0])?,
                    a0: num(parts[1])?,
                    a1: num(parts[2])?,
                    a2: num(parts[3])?,
                };
            }
            "store_every" => self.store_every = count(value)?,
            "startup_steps" => self.startup_steps = count(value)?,
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a config file body. `preset = name` (if present) must come first.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut scenario: Option<Self> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "preset" {
                if scenario.is_some() {
                    return Err(Error::config(format!("line {}: preset must come first", lineno + 1)));
                }
                scenario = Some(Self::preset(value)?);
                continue;
            }
            let s = scenario.get_or_insert_with(Self::reference);
            s.set(key, value)
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(scenario.unwrap_or_else(Self::reference))
    }

    /// Every resolved parameter as `key=value` lines, readable by
    /// [`Scenario::from_config_str`].
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("mode", self.mode.name().to_string());
        kv("q", fmt_num(self.q));
        kv("lambda", format_reaction(&self.reaction));
        kv("c0", fmt_num(self.c0));
        kv("p0", fmt_num(self.p0));
        kv("n", self.n.to_string());
        kv("dt", fmt_num(self.dt));
        kv("t_end", fmt_num(self.t_end));
        kv("u0", format_profile(&self.u0));
        kv("u_hat0", format_profile(&self.u_hat0));
        kv("A", fmt_num(self.amplitudes.a));
        kv("A0", fmt_num(self.amplitudes.a0));
        kv("A1", fmt_num(self.amplitudes.a1));
        kv("A2", fmt_num(self.amplitudes.a2));
        kv("store_every", self.store_every.to_string());
        kv("startup_steps", self.startup_steps.to_string());
        out
    }
}

/// 17 significant digits, round-trips `f64`.
pub fn fmt_num<T: Real>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

fn parse_reaction<T: Real>(v: &str) -> Result<Reaction<T>> {
    let v = v.trim();
    if v == "reference" {
        return Ok(Reaction::Reference);
    }
    let c = v.strip_prefix("constant:").unwrap_or(v);
    c.trim()
        .parse::<f64>()
        .map(|x| Reaction::Constant(T::lit(x)))
        .map_err(|_| Error::config(format!("cannot parse lambda `{v}`")))
}

fn format_reaction<T: Real>(r: &Reaction<T>) -> String {
    match r {
        Reaction::Reference => "reference".into(),
        Reaction::Constant(c) => format!("constant:{}", fmt_num(*c)),
    }
}

fn parse_profile<T: Real>(v: &str) -> Result<Profile<T>> {
    let v = v.trim();
    let number = |s: &str| -> Result<T> {
        s.trim()
            .parse::<f64>()
            .map(T::lit)
            .map_err(|_| Error::config(format!("cannot parse profile `{v}`")))
    };
    match v {
        "zero" => Ok(Profile::Zero),
        "reference" => Ok(Profile::Reference),
        _ => {
            if let Some(a) = v.strip_prefix("sine:") {
                Ok(Profile::Sine(number(a)?))
            } else if let Some(c) = v.strip_prefix("constant:") {
                Ok(Profile::Constant(number(c)?))
            } else {
                Err(Error::config(format!("unknown profile `{v}`")))
            }
        }
    }
}

fn format_profile<T: Real>(p: &Profile<T>) -> String {
    match p {
        Profile::Zero => "zero".into(),
        Profile::Reference => "reference".into(),
        Profile::Sine(a) => format!("sine:{}", fmt_num(*a)),
        Profile::Constant(c) => format!("constant:{}", fmt_num(*c)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn reference_reaction_is_continuous_with_known_sup() {
        let r = Reaction::<f64>::Reference;
        let left = r.at(1.0);
        let right = r.at(1.0 + 1e-12);
        assert!((left - right).abs() < 1e-9);
        let s = Scenario::<f64>::reference();
        assert!((s.sup_lambda() - 2.4 * PI * PI).abs() < 1e-5);
        assert!((s.underline_c() - 0.2 * PI * PI).abs() < 1e-5);
    }

    #[test]
    fn reference_profile_values() {
        let p = Profile::<f64>::Reference;
        assert!((p.at(0.0) + 1.0 / 12.0).abs() < 1e-15);
        assert!((p.slope(0.0) - 41.0 / 24.0).abs() < 1e-14);
        let h = 1e-6;
        for &x in &[0.2, 0.5, 0.9] {
            let fd = (p.at(x + h) - p.at(x - h)) / (2.0 * h);
            assert!((fd - p.slope(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn disturbance_signals() {
        let a = Amplitudes {
            a: 2.0,
            a0: 1.0,
            a1: 1.0,
            a2: 1.0,
        };
        assert_eq!(a.d0(0.0), 0.0);
        assert!((a.d1(0.1) - 0.4 * (2.5f64).sin()).abs() < 1e-15);
        assert!((a.dm(0.1) - (4.0f64).sin() / 44.0).abs() < 1e-15);
        let (al, be) = a.f_modes(0.3);
        let x: f64 = 0.7;
        assert!((al * x.cos() + be * x.sin() - a.f(x, 0.3)).abs() < 1e-14);
        assert!(Amplitudes::<f64>::scaled(2.0, 0.0).is_zero());
        assert_eq!(Amplitudes::<f64>::scaled(2.0, 3.0).a, 2.0);
    }

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            let s = Scenario::<f64>::preset(name).unwrap();
            s.validate().unwrap();
        }
        assert!(Scenario::<f64>::preset("paper_fig9").is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = "preset = paper_fig2b\n# comment\nn = 101\ndt = 5e-4 # inline\nu0 = sine:2\n";
        let s = Scenario::<f64>::from_config_str(text).unwrap();
        assert_eq!(s.n, 101);
        assert_eq!(s.u0, Profile::Sine(2.0));
        assert_eq!(s.mode, Mode::StateFeedback);
        let again = Scenario::<f64>::from_config_str(&s.to_config_string()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn config_errors() {
        assert!(Scenario::<f64>::from_config_str("n = abc").is_err());
        assert!(Scenario::<f64>::from_config_str("bogus = 1").is_err());
        assert!(Scenario::<f64>::from_config_str("n = 5\npreset = paper_fig1").is_err());
        assert!(Scenario::<f64>::from_config_str("just text").is_err());
        assert!(Scenario::<f64>::from_config_str("mode = sideways").is_err());
    }

    #[test]
    fn validation_rejects_bad_designs() {
        let mut s = Scenario::<f64>::reference();
        s.c0 = 2.0 * PI * PI;
        assert!(s.validate().is_err());
        let mut s = Scenario::<f64>::reference();
        s.mode = Mode::OutputFeedback;
        s.p0 = 0.0;
        assert!(s.validate().is_err());
        s.mode = Mode::OpenLoop;
        s.validate().unwrap();
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("OutputFeedback".parse::<Mode>().unwrap(), Mode::OutputFeedback);
    }
}
