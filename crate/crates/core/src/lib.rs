//! Backstepping boundary control of a reaction-diffusion equation with a
//! time-varying reaction coefficient and mixed disturbances: kernel and gain
//! synthesis, closed-loop and observer simulation, and ISS diagnostics.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod analysis;
pub mod error;
pub mod gains;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod quadrature;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod specfun;
pub mod transforms;
pub mod verify;

pub use analysis::{
    d_check_bound, error_consistency, fit_decay, fit_decay_rate, iss_sweep, linf_series, lyapunov_monitor,
    transform_consistency, DecayFit, LyapunovSeries, Series, SweepResult,
};
pub use error::{Error, Result};
pub use gains::{compute_kp, solve_p, validate_p0, GainProfile, P0Check};
pub use kernels::{build_grid, invert_kernel, pde_residual, KernelKind, ResidualReport, TriGrid};
pub use scalar::Real;
pub use scenario::{Amplitudes, Mode, Profile, Reaction, Scenario, PRESETS};
pub use sim::{simulate, simulate_coupled, simulate_with, step_plant, Design, SimTrace};
pub use transforms::{
    control_output_feedback, control_state_feedback, forward_transform, inverse_transform, StateField,
};

pub type TriGrid64 = TriGrid<f64>;
pub type StateField64 = StateField<f64>;
pub type Scenario64 = Scenario<f64>;
pub type SimTrace64 = SimTrace<f64>;
pub type GainProfile64 = GainProfile<f64>;
pub type Design64 = Design<f64>;
pub type SweepResult64 = SweepResult<f64>;
