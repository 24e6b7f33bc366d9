//! Truncation of the state before coefficient evaluation.
//!
//! Given an increasing envelope `μ` with
//! `sup_{t} sup_{|x| <= u} |f(t,x)| ∨ |g(t,x)| <= μ(u)` for `u >= 1` and the
//! cap `κ(Δ) = Δ^{-ε}`, the state is projected radially onto the ball of
//! radius `μ⁻¹(κ(Δ))`. Coefficients evaluated at the projected state are
//! then bounded by `κ(Δ)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{norm, ModelInfo, SdeModel};
use crate::rng::seeded;

/// Largest admissible `ε`.
pub const MAX_EPSILON: f64 = 0.25;

/// Relative slack for floating-point comparisons against `μ` and `κ`.
const ENVELOPE_SLACK: f64 = 1e-12;

/// Floor on the estimated envelope constant, so that `μ` stays strictly increasing.
const MIN_ENVELOPE_CONSTANT: f64 = 1e-6;

/// `μ(u) = coeff · u^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEnvelope {
    pub coeff: f64,
    pub exponent: f64,
}

impl PowerEnvelope {
    pub fn new(coeff: f64, exponent: f64) -> Result<Self> {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(Error::ParameterDomain {
                name: "envelope coeff",
                value: coeff,
                expected: "coeff > 0",
            });
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::ParameterDomain {
                name: "envelope exponent",
                value: exponent,
                expected: "exponent > 0",
            });
        }
        Ok(PowerEnvelope { coeff, exponent })
    }

    /// The default envelope `μ(u) = 2M u^{α+2}`.
    pub fn from_growth(m: f64, alpha: f64) -> Result<Self> {
        PowerEnvelope::new(2.0 * m, alpha + 2.0)
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        self.coeff * u.powf(self.exponent)
    }

    #[inline]
    pub fn inverse(&self, v: f64) -> f64 {
        (v / self.coeff).powf(1.0 / self.exponent)
    }
}

/// `(μ, κ, κ̂)` with `κ(Δ) = Δ^{-ε}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub envelope: PowerEnvelope,
    pub epsilon: f64,
    pub kappa_hat: f64,
}

impl TruncationPolicy {
    /// A policy with `κ̂ = 1`, which bounds `Δ^{1/4} κ(Δ)` whenever `ε <= 1/4`.
    pub fn new(envelope: PowerEnvelope, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= MAX_EPSILON) {
            return Err(Error::ParameterDomain {
                name: "epsilon",
                value: epsilon,
                expected: "0 < epsilon <= 1/4",
            });
        }
        Ok(TruncationPolicy {
            envelope,
            epsilon,
            kappa_hat: 1.0,
        })
    }

    /// Use the model's envelope, or estimate `μ(u) = 2M u^{α+2}`; then check
    /// the envelope on a probe grid.
    pub fn for_model(model: &dyn SdeModel, epsilon: f64) -> Result<Self> {
        let info = model.info();
        info.validate()?;
        let envelope = match info.envelope {
            Some(env) => env,
            None => {
                let m = 2.0 * estimate_growth_constant(model)?;
                PowerEnvelope::from_growth(m.max(MIN_ENVELOPE_CONSTANT), info.alpha)?
            }
        };
        verify_envelope(model, &envelope)?;
        TruncationPolicy::new(envelope, epsilon)
    }

    /// `κ(Δ) = Δ^{-ε}` for `Δ ∈ (0, 1]`.
    pub fn kappa(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Domain {
                what: "delta",
                value: delta,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(delta.powf(-self.epsilon))
    }

    /// Largest step size with `κ(Δ) >= μ(1)`.
    pub fn max_delta(&self) -> f64 {
        let floor = self.envelope.eval(1.0);
        if floor <= 1.0 {
            1.0
        } else {
            floor.powf(-1.0 / self.epsilon)
        }
    }

    /// Truncation radius `μ⁻¹(κ(Δ))`.
    pub fn radius(&self, delta: f64) -> Result<f64> {
        let kappa = self.kappa(delta)?;
        let floor = self.envelope.eval(1.0);
        if kappa < floor {
            return Err(Error::Configuration(format!(
                "kappa({delta}) = {kappa} is below mu(1) = {floor}; \
                 use a step size of at most {} or a larger epsilon",
                self.max_delta()
            )));
        }
        Ok(self.envelope.inverse(kappa))
    }

    /// Resolve `κ` and the radius for one step size.
    pub fn at(&self, delta: f64) -> Result<Truncation> {
        Ok(Truncation {
            delta,
            kappa: self.kappa(delta)?,
            radius: self.radius(delta)?,
        })
    }

    /// `π_Δ(x)`.
    pub fn truncate_state(&self, delta: f64, x: &[f64]) -> Result<Vec<f64>> {
        let trunc = self.at(delta)?;
        let mut out = vec![0.0; x.len()];
        trunc.project(x, &mut out);
        Ok(out)
    }

    /// `Δ^{1/4} κ(Δ) <= κ̂` for every listed step size.
    pub fn check_admissible(&self, deltas: &[f64]) -> Result<()> {
        for &delta in deltas {
            let scaled = delta.powf(0.25) * self.kappa(delta)?;
            if scaled > self.kappa_hat * (1.0 + ENVELOPE_SLACK) {
                return Err(Error::Configuration(format!(
                    "delta^(1/4) kappa(delta) = {scaled} exceeds kappa_hat = {} at delta = {delta}",
                    self.kappa_hat
                )));
            }
        }
        Ok(())
    }
}

/// A policy resolved at one step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub delta: f64,
    pub kappa: f64,
    pub radius: f64,
}

impl Truncation {
    /// Write `π_Δ(x)` into `out`; identity on the closed ball, `0 ↦ 0`.
    #[inline]
    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        let n = norm(x);
        if n <= self.radius {
            out.copy_from_slice(x);
        } else {
            let scale = self.radius / n;
            out.iter_mut().zip(x).for_each(|(o, v)| *o = v * scale);
        }
    }

    /// Whether `|f_Δ| ∨ |g_Δ| <= κ(Δ)` up to rounding.
    #[inline]
    pub fn within_bound(&self, f: &[f64], g: &[f64]) -> bool {
        let limit = self.kappa * (1.0 + ENVELOPE_SLACK) + ENVELOPE_SLACK;
        norm(f) <= limit && norm(g) <= limit
    }
}

/// `f_Δ(t, x) = f(t, π_Δ(x))`, `g_Δ(t, x) = g(t, π_Δ(x))`.
#[derive(Debug)]
pub struct TruncatedModel<'m> {
    model: &'m dyn SdeModel,
    truncation: Truncation,
}

impl<'m> TruncatedModel<'m> {
    /// Pair `model` with a truncation without re-checking the envelope; use
    /// [`truncated_coefficients`] unless the policy came from
    /// [`TruncationPolicy::for_model`] on the same model.
    pub fn new(model: &'m dyn SdeModel, truncation: Truncation) -> Self {
        TruncatedModel { model, truncation }
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    pub fn inner(&self) -> &'m dyn SdeModel {
        self.model
    }

    fn with_projected<T>(&self, x: &[f64], body: impl FnOnce(&[f64]) -> T) -> T {
        let mut stack = [0.0; 8];
        if x.len() <= stack.len() {
            let buf = &mut stack[..x.len()];
            self.truncation.project(x, buf);
            body(buf)
        } else {
            let mut buf = vec![0.0; x.len()];
            self.truncation.project(x, &mut buf);
            body(&buf)
        }
    }
}

impl SdeModel for TruncatedModel<'_> {
    fn info(&self) -> &ModelInfo {
        self.model.info()
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.with_projected(x, |p| self.model.drift(t, p, out))
    }

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.with_projected(x, |p| self.model.diffusion(t, p, out))
    }
}

/// The truncated coefficient pair at step size `Δ`.
///
/// Fails if `κ(Δ) < μ(1)` or if the envelope is violated on the probe grid.
pub fn truncated_coefficients<'m>(
    policy: &TruncationPolicy,
    delta: f64,
    model: &'m dyn SdeModel,
) -> Result<TruncatedModel<'m>> {
    let truncation = policy.at(delta)?;
    verify_envelope(model, &policy.envelope)?;
    Ok(TruncatedModel { model, truncation })
}

/// Deterministic probe points: radii `1..64`, a time grid, fixed directions.
fn envelope_probe_points(info: &ModelInfo) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (a, b) = info.time_domain;
    let times = (0..=16).map(|i| a + (b - a) * i as f64 / 16.0).collect();
    let d = info.dim_state;
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for axis in 0..d {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[axis] = sign;
            directions.push(e);
        }
    }
    let mut rng = seeded(0x656e_7665);
    for _ in 0..16 {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 {
            directions.push(v.iter().map(|c| c / n).collect());
        }
    }
    let mut points = vec![vec![0.0; d]];
    for k in 0..=24 {
        let u = 2f64.powf(k as f64 / 4.0);
        for dir in &directions {
            for frac in [0.5, 1.0] {
                let r = u * frac;
                points.push(dir.iter().map(|c| c * r).collect());
            }
        }
    }
    // a few draws inside the unit ball
    for _ in 0..32 {
        let r: f64 = rng.random();
        let dir = &directions[rng.random_range(0..directions.len())];
        points.push(dir.iter().map(|c| c * r).collect());
    }
    (times, points)
}

fn coefficient_sizes(model: &dyn SdeModel, t: f64, x: &[f64]) -> Result<f64> {
    let info = model.info();
    let mut f = vec![0.0; info.dim_state];
    let mut g = vec![0.0; info.dim_state * info.dim_noise];
    model.drift(t, x, &mut f);
    model.diffusion(t, x, &mut g);
    let size = norm(&f).max(norm(&g));
    if size.is_finite() {
        Ok(size)
    } else {
        Err(Error::Model {
            model: info.name.clone(),
            message: format!("non-finite coefficient at t = {t}, x = {x:?}"),
        })
    }
}

/// Check `|f(t,x)| ∨ |g(t,x)| <= μ(max(1, |x|))` on the probe grid.
pub fn verify_envelope(model: &dyn SdeModel, envelope: &PowerEnvelope) -> Result<()> {
    let info = model.info();
    let (times, points) = envelope_probe_points(info);
    for &t in &times {
        for x in &points {
            let size = coefficient_sizes(model, t, x)?;
            let bound = envelope.eval(norm(x).max(1.0));
            if size > bound * (1.0 + ENVELOPE_SLACK) {
                return Err(Error::Model {
                    model: info.name.clone(),
                    message: format!(
                        "coefficient size {size} exceeds envelope mu = {bound} at t = {t}, x = {x:?}"
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Largest `(|f| ∨ |g|) / (1 + |x|^{α+1})` over the probe grid.
pub fn estimate_growth_constant(model: &dyn SdeModel) -> Result<f64> {
    let info = model.info();
    let (times, points) = envelope_probe_points(info);
    let mut best: f64 = 0.0;
    for &t in &times {
        for x in &points {
            let size = coefficient_sizes(model, t, x)?;
            best = best.max(size / (1.0 + norm(x).powf(info.alpha + 1.0)));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Example1, Example2, FnModel, ZeroModel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn example1_policy() -> TruncationPolicy {
        TruncationPolicy::for_model(&Example1::new(), 0.25).unwrap()
    }

    #[test]
    fn kappa_values() {
        let p = example1_policy();
        assert_eq!(p.kappa(1.0).unwrap(), 1.0);
        assert_relative_eq!(p.kappa(0.01).unwrap(), 10f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(p.kappa(1e-4).unwrap(), 10.0, epsilon = 1e-13);
        assert!(p.kappa(0.0).is_err());
        assert!(p.kappa(1.5).is_err());
    }

    #[test]
    fn example1_radius() {
        let p = example1_policy();
        let r = p.radius(1e-4).unwrap();
        assert_relative_eq!(r, (10.0f64 / 3.0).powf(0.2), epsilon = 1e-13);
        assert_relative_eq!(r, 1.27226, epsilon = 1e-5);
    }

    #[test]
    fn unit_radius_for_default_envelope() {
        let env = PowerEnvelope::from_growth(1.0, 0.0).unwrap();
        let p = TruncationPolicy::new(env, 0.25).unwrap();
        // kappa = 2 at delta = 1/16
        assert_relative_eq!(p.radius(1.0 / 16.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn radius_requires_kappa_above_mu_one() {
        let p = example1_policy();
        // mu(1) = 3 needs delta <= 3^-4
        assert!(matches!(p.radius(0.5), Err(Error::Configuration(_))));
        assert_relative_eq!(p.max_delta(), 3f64.powi(-4), epsilon = 1e-15);
        assert!(p.radius(p.max_delta()).is_ok());
    }

    #[test]
    fn epsilon_is_bounded() {
        let env = PowerEnvelope::new(3.0, 5.0).unwrap();
        assert!(TruncationPolicy::new(env, 0.3).is_err());
        assert!(TruncationPolicy::new(env, 0.0).is_err());
        assert!(TruncationPolicy::new(env, 0.25).is_ok());
    }

    #[test]
    fn truncate_state_cases() {
        let env = PowerEnvelope::new(1.0, 1.0).unwrap();
        let p = TruncationPolicy::new(env, 0.25).unwrap();
        // kappa = 2, radius = 2
        let delta = 1.0 / 16.0;
        let out = p.truncate_state(delta, &[3.0, 4.0]).unwrap();
        assert_relative_eq!(out[0], 1.2, epsilon = 1e-15);
        assert_relative_eq!(out[1], 1.6, epsilon = 1e-15);
        assert_eq!(
            p.truncate_state(delta, &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        let inside = [0.3, -1.1];
        assert_eq!(p.truncate_state(delta, &inside).unwrap(), inside.to_vec());
    }

    #[test]
    fn example1_truncated_drift_at_large_state() {
        let model = Example1::new();
        let p = example1_policy();
        let tm = truncated_coefficients(&p, 1e-4, &model).unwrap();
        let mut f = [0.0];
        tm.drift(0.5, &[10.0], &mut f);
        let r = (10.0f64 / 3.0).powf(0.2);
        // r^5 = kappa / 3 by construction
        assert_relative_eq!(f[0], 0.5 * r * r - 2.0 * 10.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(f[0], -5.85734, epsilon = 1e-5);
        assert!(f[0].abs() <= 10.0);
    }

    #[test]
    fn zero_model_stays_zero() {
        let model = ZeroModel::new();
        let p = TruncationPolicy::for_model(&model, 0.25).unwrap();
        let tm = truncated_coefficients(&p, 1e-3, &model).unwrap();
        let (mut f, mut g) = ([1.0], [1.0]);
        tm.drift(0.3, &[1e6], &mut f);
        tm.diffusion(0.3, &[1e6], &mut g);
        assert_eq!((f[0], g[0]), (0.0, 0.0));
    }

    #[test]
    fn envelope_violation_is_detected() {
        let info = crate::models::ModelInfo {
            envelope: Some(PowerEnvelope::new(1.0, 2.0).unwrap()),
            ..Example1::new().info().clone()
        };
        let m = FnModel::new(
            info,
            |_, x, out| out[0] = 4.0 * x[0].powi(5),
            |_, _, out| out[0] = 0.0,
        )
        .unwrap();
        assert!(matches!(
            TruncationPolicy::for_model(&m, 0.25),
            Err(Error::Model { .. })
        ));
        let p = example1_policy();
        assert!(truncated_coefficients(&p, 1e-3, &m).is_err());
    }

    #[test]
    fn estimated_envelope_for_models_without_one() {
        let info = crate::models::ModelInfo {
            envelope: None,
            alpha: 2.0,
            ..Example1::new().info().clone()
        };
        let m = FnModel::new(
            info,
            |_, x, out| out[0] = x[0] - x[0].powi(3),
            |_, x, out| out[0] = x[0],
        )
        .unwrap();
        let p = TruncationPolicy::for_model(&m, 0.25).unwrap();
        assert_eq!(p.envelope.exponent, 4.0);
        assert!(p.envelope.coeff > 0.0);
    }

    #[test]
    fn admissibility_on_log_grid() {
        for eps in [0.05, 0.125, 0.25] {
            let p = TruncationPolicy::new(PowerEnvelope::new(3.0, 5.0).unwrap(), eps).unwrap();
            let grid: Vec<f64> = (0..=64).map(|i| 10f64.powf(-(i as f64) / 8.0)).collect();
            p.check_admissible(&grid).unwrap();
        }
    }

    fn bound_holds(model: &dyn SdeModel, seed: u64) {
        let p = TruncationPolicy::for_model(model, 0.25).unwrap();
        let info = model.info();
        let (a, b) = info.time_domain;
        let mut rng = seeded(seed);
        let hi = p.max_delta().ln();
        let mut f = vec![0.0; info.dim_state];
        let mut g = vec![0.0; info.dim_state * info.dim_noise];
        for _ in 0..10_000 {
            let delta = (hi + (1e-8f64.ln() - hi) * rng.random::<f64>()).exp();
            let t = a + (b - a) * rng.random::<f64>();
            let scale = 10f64.powf(-2.0 + 5.0 * rng.random::<f64>());
            let x: Vec<f64> = (0..info.dim_state)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let tm = truncated_coefficients(&p, delta, model).unwrap();
            tm.drift(t, &x, &mut f);
            tm.diffusion(t, &x, &mut g);
            let kappa = p.kappa(delta).unwrap();
            assert!(
                norm(&f).max(norm(&g)) <= kappa + 1e-12,
                "t={t} x={x:?} delta={delta}"
            );
        }
    }

    #[test]
    fn truncated_bound_example1() {
        bound_holds(&Example1::new(), 1);
    }

    #[test]
    fn truncated_bound_example2() {
        bound_holds(&Example2::new(), 2);
    }

    proptest! {
        #[test]
        fn projection_properties(
            x in proptest::collection::vec(-1e3f64..1e3, 1..5),
            lambda in 0.01f64..100.0,
            delta in 1e-8f64..1e-2,
        ) {
            let p = example1_policy();
            let r = p.radius(delta).unwrap();
            let px = p.truncate_state(delta, &x).unwrap();
            prop_assert!(norm(&px) <= r * (1.0 + 1e-15));
            if norm(&x) <= r {
                prop_assert_eq!(&px, &x);
            }
            let scaled: Vec<f64> = x.iter().map(|v| v * lambda).collect();
            let ps = p.truncate_state(delta, &scaled).unwrap();
            // same direction: components keep sign and proportion
            let nx = norm(&px);
            let ns = norm(&ps);
            if nx > 0.0 && ns > 0.0 {
                for (a, b) in px.iter().zip(&ps) {
                    prop_assert!((a / nx - b / ns).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn radius_grows_as_delta_shrinks(d1 in 1e-9f64..1e-2, d2 in 1e-9f64..1e-2) {
            let p = example1_policy();
            let (small, large) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(p.radius(small).unwrap() >= p.radius(large).unwrap());
        }
    }
}
