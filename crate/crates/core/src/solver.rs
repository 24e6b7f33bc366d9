//! Euler–Maruyama recursion on the random grid `ρ_n`.
//!
//! Because `E_Δ(ρ_{n+1}) - E_Δ(ρ_n) = Δ`, the time-changed increments reduce
//! to `Δ` and the Brownian increment `B((n+1)Δ) - B(nΔ)` over operational
//! time, while the coefficients are evaluated at the real time `ρ_n`:
//!
//! ```text
//! X_{n+1} = X_n + f_Δ(ρ_n, X_n) Δ + g_Δ(ρ_n, X_n) ΔB_n
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{norm, SdeModel};
use crate::time_change::TimeChangeGrid;
use crate::truncation::{truncated_coefficients, Truncation, TruncationPolicy};

/// States larger than this (or non-finite) count as a blow-up of plain EM.
pub const BLOW_UP_THRESHOLD: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Coefficients evaluated at the truncated state `π_Δ(X_n)`.
    TruncatedEm,
    /// Classical explicit Euler–Maruyama, kept as a divergence comparator.
    PlainEm,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "truncated" | "truncated_em" | "truncated-em" => Ok(Scheme::TruncatedEm),
            "plain" | "plain_em" | "plain-em" => Ok(Scheme::PlainEm),
            other => Err(format!(
                "unknown scheme `{other}`; expected `truncated` or `plain`"
            )),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::TruncatedEm => "truncated",
            Scheme::PlainEm => "plain",
        })
    }
}

/// Discrete states `X_{ρ_0}, …, X_{ρ_N}` on a grid.
#[derive(Debug, Clone)]
pub struct Trajectory<'g> {
    grid: &'g TimeChangeGrid,
    scheme: Scheme,
    dim: usize,
    states: Vec<f64>,
    blow_up: Option<usize>,
    bound_respected: bool,
}

impl<'g> Trajectory<'g> {
    pub fn grid(&self) -> &'g TimeChangeGrid {
        self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored states; `N + 1` unless the run blew up.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.dim..(n + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    /// Index of the first state that overflowed (plain EM only).
    pub fn blow_up(&self) -> Option<usize> {
        self.blow_up
    }

    /// Whether every truncated coefficient evaluation stayed within `κ(Δ)`.
    pub fn bound_respected(&self) -> bool {
        self.bound_respected
    }

    /// `max_n |X_{ρ_n}|` over the stored states.
    pub fn sup_norm(&self) -> f64 {
        self.states().map(norm).fold(0.0, f64::max)
    }

    /// Step interpolant `X̄(t) = X_{ρ_i}` for `t ∈ [ρ_i, ρ_{i+1})`.
    pub fn evaluate_step_interpolant(&self, t: f64) -> Result<&[f64]> {
        let i = self.grid.index_at(t)?;
        if i >= self.len() {
            return Err(Error::Domain {
                what: "t (past blow-up)",
                value: t,
                lo: 0.0,
                hi: self.grid.rho()[self.len() - 1],
            });
        }
        Ok(self.state(i))
    }
}

/// Reusable buffers for stepping one model.
struct Stepper<'m> {
    model: &'m dyn SdeModel,
    truncation: Option<Truncation>,
    delta: f64,
    dim_noise: usize,
    projected: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl<'m> Stepper<'m> {
    fn new(model: &'m dyn SdeModel, truncation: Option<Truncation>, delta: f64) -> Self {
        let info = model.info();
        Stepper {
            model,
            truncation,
            delta,
            dim_noise: info.dim_noise,
            projected: vec![0.0; info.dim_state],
            f: vec![0.0; info.dim_state],
            g: vec![0.0; info.dim_state * info.dim_noise],
        }
    }

    /// One step into `out`; returns whether the `κ` bound held.
    #[inline]
    fn step(&mut self, t: f64, x: &[f64], dw: &[f64], out: &mut [f64]) -> bool {
        let at: &[f64] = match &self.truncation {
            Some(tr) => {
                tr.project(x, &mut self.projected);
                &self.projected
            }
            None => x,
        };
        self.model.drift(t, at, &mut self.f);
        self.model.diffusion(t, at, &mut self.g);
        let m = self.dim_noise;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = x[i] + self.f[i] * self.delta;
            for (j, w) in dw.iter().enumerate() {
                acc += self.g[i * m + j] * w;
            }
            *o = acc;
        }
        match &self.truncation {
            Some(tr) => tr.within_bound(&self.f, &self.g),
            None => true,
        }
    }
}

fn check_step_inputs(model: &dyn SdeModel, x: &[f64], dw: &[f64]) -> Result<()> {
    let info = model.info();
    if x.len() != info.dim_state || dw.len() != info.dim_noise {
        return Err(Error::Model {
            model: info.name.clone(),
            message: format!(
                "state/noise lengths {}/{} do not match dimensions {}/{}",
                x.len(),
                dw.len(),
                info.dim_state,
                info.dim_noise
            ),
        });
    }
    Ok(())
}

/// `x + f_Δ(t, x) Δ + g_Δ(t, x) ΔW` with truncated coefficients.
pub fn em_step(
    policy: &TruncationPolicy,
    delta: f64,
    model: &dyn SdeModel,
    t: f64,
    x: &[f64],
    dw: &[f64],
) -> Result<Vec<f64>> {
    check_step_inputs(model, x, dw)?;
    let tm = truncated_coefficients(policy, delta, model)?;
    let mut stepper = Stepper::new(model, Some(*tm.truncation()), delta);
    let mut out = vec![0.0; x.len()];
    stepper.step(t, x, dw, &mut out);
    finite_or_overflow(t, x, out)
}

/// `x + f(t, x) Δ + g(t, x) ΔW` without truncation.
pub fn plain_em_step(
    delta: f64,
    model: &dyn SdeModel,
    t: f64,
    x: &[f64],
    dw: &[f64],
) -> Result<Vec<f64>> {
    check_step_inputs(model, x, dw)?;
    let mut stepper = Stepper::new(model, None, delta);
    let mut out = vec![0.0; x.len()];
    stepper.step(t, x, dw, &mut out);
    finite_or_overflow(t, x, out)
}

fn finite_or_overflow(t: f64, x: &[f64], out: Vec<f64>) -> Result<Vec<f64>> {
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NumericalOverflow { t, x: x.to_vec() })
    }
}

/// Iterate the scheme along `ρ_0..ρ_N`.
///
/// `increments` holds at least `N` Brownian increments over operational
/// time `Δ`, flattened with stride `m`. Plain EM stops at the first state
/// above [`BLOW_UP_THRESHOLD`] and keeps the prefix.
///
/// The envelope of `policy` is trusted here; policies from
/// [`TruncationPolicy::for_model`] have been checked against `model`, and
/// [`truncated_coefficients`] checks any other pairing.
pub fn run_path<'g>(
    policy: &TruncationPolicy,
    model: &dyn SdeModel,
    grid: &'g TimeChangeGrid,
    increments: &[f64],
    scheme: Scheme,
) -> Result<Trajectory<'g>> {
    let info = model.info();
    info.validate()?;
    let (d, m) = (info.dim_state, info.dim_noise);
    let n_steps = grid.n_steps();
    if increments.len() < n_steps * m {
        return Err(Error::ParameterDomain {
            name: "increments",
            value: (increments.len() / m) as f64,
            expected: "at least N Brownian increments",
        });
    }
    let delta = grid.delta();
    let truncation = match scheme {
        Scheme::TruncatedEm => Some(policy.at(delta)?),
        Scheme::PlainEm => None,
    };
    let mut stepper = Stepper::new(model, truncation, delta);
    let mut states = Vec::with_capacity((n_steps + 1) * d);
    states.extend_from_slice(&info.initial_state);
    let mut bound_respected = true;
    let mut blow_up = None;
    let mut next = vec![0.0; d];
    let rho = grid.rho();
    for n in 0..n_steps {
        let t = info.model_time(rho[n]);
        let x = &states[n * d..(n + 1) * d];
        bound_respected &= stepper.step(t, x, &increments[n * m..(n + 1) * m], &mut next);
        match scheme {
            Scheme::TruncatedEm => {
                // only reachable when the envelope does not hold for `model`
                if !next.iter().all(|v| v.is_finite()) {
                    return Err(Error::NumericalOverflow { t, x: x.to_vec() });
                }
            }
            Scheme::PlainEm => {
                if !next.iter().all(|v| v.is_finite()) || norm(&next) > BLOW_UP_THRESHOLD {
                    blow_up = Some(n + 1);
                    break;
                }
            }
        }
        states.extend_from_slice(&next);
    }
    Ok(Trajectory {
        grid,
        scheme,
        dim: d,
        states,
        blow_up,
        bound_respected: bound_respected || scheme == Scheme::PlainEm,
    })
}

/// `n` i.i.d. `N(0, Δ I_m)` increments, flattened.
pub fn brownian_increments<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    delta: f64,
    rng: &mut R,
) -> Vec<f64> {
    let sd = delta.sqrt();
    (0..n * m)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Sum consecutive blocks of `k` increments; a trailing partial block is dropped.
pub fn block_sum(increments: &[f64], m: usize, k: usize) -> Vec<f64> {
    if k == 1 {
        return increments.to_vec();
    }
    let blocks = increments.len() / (m * k);
    let mut out = vec![0.0; blocks * m];
    for j in 0..blocks {
        for i in 0..k {
            let src = &increments[(j * k + i) * m..(j * k + i + 1) * m];
            for (o, v) in out[j * m..(j + 1) * m].iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    out
}
