//! Truncated Euler–Maruyama simulation of time-changed SDEs
//!
//! ```text
//! dY(t) = f(t, Y(t)) dE(t) + g(t, Y(t)) dB(E(t)),
//! ```
//!
//! where `E` is the inverse of a subordinator `D` and `B` is a Brownian
//! motion independent of `D`. The scheme runs on the random grid
//! `ρ_n = D(nΔ)` and applies the coefficients to the radially projected
//! state `π_Δ(x)`, which keeps them bounded by `κ(Δ) = Δ^{-ε}`.
//!
//! * [`subordinator`] samples `D` on a fixed grid.
//! * [`time_change`] builds `ρ_n` and the discretized inverse `E_Δ`.
//! * [`truncation`] holds the projection `π_Δ` and the growth envelope.
//! * [`models`] provides the benchmark coefficients and assumption probes.
//! * [`solver`] is the scheme itself.
//! * [`harness`] runs coupled Monte Carlo error and moment experiments.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod models;
pub mod rng;
pub mod solver;
pub mod subordinator;
pub mod time_change;
pub mod truncation;

pub use error::{Error, Result};
pub use harness::{
    moment_boundedness_experiment, regress_loglog, run_experiment, simulate_path, ErrorReport,
    ErrorRow, Experiment, ExperimentConfig, MomentRow, MomentTable, PathRecord, Regression,
};
pub use models::{by_name, AssumptionReport, ModelInfo, SdeModel, MODEL_NAMES};
pub use solver::{run_path, Scheme, Trajectory};
pub use subordinator::{sample_path_until, SubordinatorPath, SubordinatorSpec};
pub use time_change::{build_grid, coarsen, TimeChangeGrid};
pub use truncation::{PowerEnvelope, TruncationPolicy};
