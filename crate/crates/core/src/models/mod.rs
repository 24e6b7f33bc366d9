//! Coefficient models for `dY = f(t, Y) dE(t) + g(t, Y) dB(E(t))`.
//!
//! A model supplies the drift `f: [a, b] × R^d → R^d`, the diffusion
//! `g: [a, b] × R^d → R^{d×m}` (row-major), and the exponents that its
//! coefficients are declared to satisfy. The built-in models are the two
//! super-linear benchmark equations plus a linear test equation and the zero
//! equation used as controls.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::truncation::PowerEnvelope;

mod probes;

pub use probes::{
    probe_assumption_1, probe_assumption_2, probe_assumption_3, probe_assumption_4,
    AssumptionReport, Witness, HOLDER_BALL_RADIUS, MIN_PROBES,
};

/// Names accepted by [`by_name`].
pub const MODEL_NAMES: [&str; 4] = ["example1", "example2", "linear-test", "zero"];

/// Static description of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub dim_state: usize,
    pub dim_noise: usize,
    /// Polynomial growth exponent of the local Lipschitz constant.
    pub alpha: f64,
    /// Temporal Hölder exponent of the drift.
    pub gamma_f: f64,
    /// Temporal Hölder exponent of the diffusion.
    pub gamma_g: f64,
    /// Real-time interval `[a, b]` on which the coefficients are defined.
    pub time_domain: (f64, f64),
    pub initial_state: Vec<f64>,
    /// Growth envelope `μ`, when the model fixes one.
    pub envelope: Option<PowerEnvelope>,
}

impl ModelInfo {
    /// Map scheme time `ρ` to the coefficient time `a + ρ`, clipped to `b`.
    #[inline]
    pub fn model_time(&self, rho: f64) -> f64 {
        let (a, b) = self.time_domain;
        (a + rho).min(b)
    }

    /// Length `b - a` of the time domain.
    pub fn duration(&self) -> f64 {
        self.time_domain.1 - self.time_domain.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::Model {
            model: self.name.clone(),
            message,
        };
        if self.dim_state == 0 || self.dim_noise == 0 {
            return Err(bad("dimensions must be positive".into()));
        }
        if self.initial_state.len() != self.dim_state {
            return Err(bad(format!(
                "initial state has {} components, expected {}",
                self.initial_state.len(),
                self.dim_state
            )));
        }
        for (name, g) in [("gamma_f", self.gamma_f), ("gamma_g", self.gamma_g)] {
            if !(g > 0.0 && g <= 1.0) {
                return Err(bad(format!("{name} = {g} must lie in (0, 1]")));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(bad(format!("alpha = {} must be >= 0", self.alpha)));
        }
        let (a, b) = self.time_domain;
        if !(a < b) {
            return Err(bad(format!("empty time domain [{a}, {b}]")));
        }
        Ok(())
    }
}

/// Drift and diffusion of a time-changed SDE.
pub trait SdeModel: Send + Sync {
    fn info(&self) -> &ModelInfo;

    /// Write `f(t, x)` into `out` (length `d`).
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Write `g(t, x)` into `out` (length `d·m`, row-major).
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
}

impl fmt::Debug for dyn SdeModel + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SdeModel").field(&self.info().name).finish()
    }
}

/// Euclidean norm; the Frobenius norm when applied to a flattened matrix.
#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Look up a built-in model.
pub fn by_name(name: &str) -> Result<Box<dyn SdeModel>> {
    match name {
        "example1" => Ok(Box::new(Example1::new())),
        "example2" => Ok(Box::new(Example2::new())),
        "linear-test" => Ok(Box::new(LinearTest::new())),
        "zero" => Ok(Box::new(ZeroModel::new())),
        other => Err(Error::Model {
            model: other.to_string(),
            message: format!("unknown model; expected one of {}", MODEL_NAMES.join(", ")),
        }),
    }
}

/// Scalar equation on `[0, 1]`:
/// `dY = (√(t(1-t)) Y² - 2Y⁵) dE + (t(1-t))^{1/4} Y² dB(E)`, `Y(0) = 2`.
#[derive(Debug, Clone)]
pub struct Example1 {
    info: ModelInfo,
}

impl Example1 {
    pub fn new() -> Self {
        Example1 {
            info: ModelInfo {
                name: "example1".into(),
                dim_state: 1,
                dim_noise: 1,
                alpha: 4.0,
                gamma_f: 0.5,
                gamma_g: 0.25,
                time_domain: (0.0, 1.0),
                initial_state: vec![2.0],
                envelope: Some(PowerEnvelope::new(3.0, 5.0).expect("valid envelope")),
            },
        }
    }
}

impl Default for Example1 {
    fn default() -> Self {
        Self::new()
    }
}

impl SdeModel for Example1 {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    #[inline]
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let s = (t * (1.0 - t)).max(0.0);
        let y = x[0];
        let y2 = y * y;
        out[0] = s.sqrt() * y2 - 2.0 * y2 * y2 * y;
    }

    #[inline]
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let s = (t * (1.0 - t)).max(0.0);
        out[0] = s.powf(0.25) * x[0] * x[0];
    }
}

/// Two-dimensional equation on `[1, 2]` with a single Brownian motion:
///
/// ```text
/// dx₁ = (c(t)^{1/5} x₁² - 2x₂⁵) dE + c(t)^{2/5} x₂² dB(E)
/// dx₂ = (c(t)^{1/5} x₂² - 2x₁⁵) dE + c(t)^{2/5} x₁² dB(E)
/// ```
///
/// with `c(t) = (t - 1)(2 - t)`. The default initial state is `(1, 1)`.
#[derive(Debug, Clone)]
pub struct Example2 {
    info: ModelInfo,
}

impl Example2 {
    pub fn new() -> Self {
        Self::with_initial_state([1.0, 1.0])
    }

    pub fn with_initial_state(y0: [f64; 2]) -> Self {
        Example2 {
            info: ModelInfo {
                name: "example2".into(),
                dim_state: 2,
                dim_noise: 1,
                alpha: 4.0,
                gamma_f: 0.2,
                gamma_g: 0.4,
                time_domain: (1.0, 2.0),
                initial_state: y0.to_vec(),
                envelope: Some(PowerEnvelope::new(3.0, 5.0).expect("valid envelope")),
            },
        }
    }
}

impl Default for Example2 {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn pow5(v: f64) -> f64 {
    let v2 = v * v;
    v2 * v2 * v
}

impl SdeModel for Example2 {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    #[inline]
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let c = ((t - 1.0) * (2.0 - t)).max(0.0).powf(0.2);
        out[0] = c * x[0] * x[0] - 2.0 * pow5(x[1]);
        out[1] = c * x[1] * x[1] - 2.0 * pow5(x[0]);
    }

    #[inline]
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let c = ((t - 1.0) * (2.0 - t)).max(0.0).powf(0.4);
        out[0] = c * x[1] * x[1];
        out[1] = c * x[0] * x[0];
    }
}

/// `dY = -Y dE`, `Y(0) = 1`: explicit Euler in operational time has a closed form.
#[derive(Debug, Clone)]
pub struct LinearTest {
    info: ModelInfo,
}

impl LinearTest {
    pub fn new() -> Self {
        LinearTest {
            info: ModelInfo {
                name: "linear-test".into(),
                dim_state: 1,
                dim_noise: 1,
                alpha: 0.0,
                gamma_f: 1.0,
                gamma_g: 1.0,
                time_domain: (0.0, 1.0),
                initial_state: vec![1.0],
                envelope: Some(PowerEnvelope::new(1.0, 1.0).expect("valid envelope")),
            },
        }
    }
}

impl Default for LinearTest {
    fn default() -> Self {
        Self::new()
    }
}

impl SdeModel for LinearTest {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    #[inline]
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = -x[0];
    }

    #[inline]
    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
}

/// `f = g = 0`, `Y(0) = 1`.
#[derive(Debug, Clone)]
pub struct ZeroModel {
    info: ModelInfo,
}

impl ZeroModel {
    pub fn new() -> Self {
        ZeroModel {
            info: ModelInfo {
                name: "zero".into(),
                dim_state: 1,
                dim_noise: 1,
                alpha: 0.0,
                gamma_f: 1.0,
                gamma_g: 1.0,
                time_domain: (0.0, 1.0),
                initial_state: vec![1.0],
                envelope: Some(PowerEnvelope::new(1.0, 1.0).expect("valid envelope")),
            },
        }
    }
}

impl Default for ZeroModel {
    fn default() -> Self {
        Self::new()
    }
}

impl SdeModel for ZeroModel {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

type CoefficientFn = Box<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// A model assembled from closures.
pub struct FnModel {
    info: ModelInfo,
    drift: CoefficientFn,
    diffusion: CoefficientFn,
}

impl FnModel {
    pub fn new(
        info: ModelInfo,
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        info.validate()?;
        Ok(FnModel {
            info,
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
        })
    }
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel").field("info", &self.info).finish()
    }
}

impl SdeModel for FnModel {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }
}
