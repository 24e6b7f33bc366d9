//! Randomised screening of the structural conditions on `f` and `g`.
//!
//! Each probe estimates a sup-type constant from random points, then checks
//! the estimate against a second, independent batch:
//!
//! * the local Lipschitz and temporal Hölder probes re-draw twice as many
//!   points and allow the constant to grow by 20%;
//! * the monotonicity and Khasminskii probes re-draw on a ball of twice the
//!   radius and allow the constant to grow by 5%.
//!
//! The violation statistic is the largest `lhs - allowed · rhs` seen in the
//! second batch. Random probing only yields lower bounds on the true
//! constants, so a passing report is evidence, not proof.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{dist, norm, SdeModel};
use crate::error::{Error, Result};

/// Smallest admissible probe count.
pub const MIN_PROBES: usize = 1_000;

/// State-space ball used by the temporal Hölder probe.
pub const HOLDER_BALL_RADIUS: f64 = 3.0;

/// Pairs of times closer than this are not probed.
const MIN_TIME_GAP: f64 = 1e-8;

const RESAMPLE_GROWTH: f64 = 1.2;
const RADIUS_GROWTH: f64 = 0.05;

/// Where the largest violation statistic was observed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
}

/// Outcome of one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption: String,
    pub constant_estimate: f64,
    pub max_violation_statistic: f64,
    pub witness: Witness,
    pub passed: bool,
    pub ball_radius: f64,
    pub n_probes: usize,
}

impl AssumptionReport {
    fn new(
        assumption: &str,
        constant_estimate: f64,
        violation: Violation,
        ball_radius: f64,
        n_probes: usize,
    ) -> Self {
        AssumptionReport {
            assumption: assumption.to_string(),
            constant_estimate,
            max_violation_statistic: violation.statistic,
            witness: violation.witness,
            passed: violation.statistic <= 0.0,
            ball_radius,
            n_probes,
        }
    }
}

struct Probe {
    t: f64,
    s: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Probe {
    fn witness(&self, with_s: bool, with_y: bool) -> Witness {
        Witness {
            t: self.t,
            s: with_s.then_some(self.s),
            x: self.x.clone(),
            y: with_y.then(|| self.y.clone()),
        }
    }
}

struct Violation {
    statistic: f64,
    witness: Witness,
}

fn check_args(n_probes: usize, ball_radius: f64) -> Result<()> {
    if n_probes < MIN_PROBES {
        return Err(Error::ParameterDomain {
            name: "n_probes",
            value: n_probes as f64,
            expected: "n_probes >= 1000",
        });
    }
    if !(ball_radius > 0.0 && ball_radius.is_finite()) {
        return Err(Error::ParameterDomain {
            name: "ball_radius",
            value: ball_radius,
            expected: "ball_radius > 0",
        });
    }
    Ok(())
}

fn uniform_in_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n == 0.0 {
            continue;
        }
        let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
        v.iter_mut().for_each(|c| *c *= r / n);
        return v;
    }
}

fn uniform_time<R: Rng + ?Sized>(model: &dyn SdeModel, rng: &mut R) -> f64 {
    let (a, b) = model.info().time_domain;
    a + (b - a) * rng.random::<f64>()
}

fn state_pair<R: Rng + ?Sized>(model: &dyn SdeModel, radius: f64, rng: &mut R) -> Probe {
    let d = model.info().dim_state;
    Probe {
        t: uniform_time(model, rng),
        s: 0.0,
        x: uniform_in_ball(d, radius, rng),
        y: uniform_in_ball(d, radius, rng),
    }
}

fn time_pair<R: Rng + ?Sized>(model: &dyn SdeModel, rng: &mut R) -> Probe {
    let info = model.info();
    let (a, b) = info.time_domain;
    let len = b - a;
    // log-uniform gaps, and half of the pairs anchored at an end of the
    // domain, where time dependence is typically least regular
    let gap = (len * 10f64.powf(-8.0 * rng.random::<f64>()))
        .max(MIN_TIME_GAP)
        .min(len);
    let u: f64 = rng.random();
    let t = if u < 0.25 {
        a
    } else if u < 0.5 {
        b - gap
    } else {
        a + (len - gap) * rng.random::<f64>()
    };
    Probe {
        t,
        s: t + gap,
        x: uniform_in_ball(info.dim_state, HOLDER_BALL_RADIUS, rng),
        y: Vec::new(),
    }
}

/// Coefficient values with a finiteness check.
struct Eval<'m> {
    model: &'m dyn SdeModel,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl<'m> Eval<'m> {
    fn new(model: &'m dyn SdeModel) -> Self {
        let info = model.info();
        Eval {
            model,
            f: vec![0.0; info.dim_state],
            g: vec![0.0; info.dim_state * info.dim_noise],
        }
    }

    fn at(&mut self, t: f64, x: &[f64]) -> Result<(&[f64], &[f64])> {
        self.model.drift(t, x, &mut self.f);
        self.model.diffusion(t, x, &mut self.g);
        if self.f.iter().chain(&self.g).all(|v| v.is_finite()) {
            Ok((&self.f, &self.g))
        } else {
            Err(Error::Model {
                model: self.model.info().name.clone(),
                message: format!("non-finite coefficient at t = {t}, x = {x:?}"),
            })
        }
    }

    fn owned(&mut self, t: f64, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (f, g) = self.at(t, x)?;
        Ok((f.to_vec(), g.to_vec()))
    }
}

/// Largest `lhs / rhs` over a batch, skipping degenerate probes.
fn estimate(
    n: usize,
    mut draw: impl FnMut() -> Probe,
    mut eval: impl FnMut(&Probe) -> Result<Option<(f64, f64)>>,
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for _ in 0..n {
        let probe = draw();
        if let Some((lhs, rhs)) = eval(&probe)? {
            best = best.max(lhs / rhs);
        }
    }
    Ok(best)
}

/// Largest `lhs - allowed · rhs` over a batch.
fn violation(
    n: usize,
    allowed: f64,
    mut draw: impl FnMut() -> Probe,
    mut eval: impl FnMut(&Probe) -> Result<Option<(f64, f64)>>,
    witness: impl Fn(&Probe) -> Witness,
) -> Result<(Violation, f64)> {
    let mut out = Violation {
        statistic: f64::NEG_INFINITY,
        witness: Witness::default(),
    };
    let mut best_ratio = f64::NEG_INFINITY;
    for _ in 0..n {
        let probe = draw();
        if let Some((lhs, rhs)) = eval(&probe)? {
            best_ratio = best_ratio.max(lhs / rhs);
            let v = lhs - allowed * rhs;
            if v > out.statistic {
                out.statistic = v;
                out.witness = witness(&probe);
            }
        }
    }
    Ok((out, best_ratio))
}

/// Local Lipschitz screening:
/// `|f(t,x) - f(t,y)| ∨ |g(t,x) - g(t,y)| <= L (1 + |x|^α + |y|^α) |x - y|`.
pub fn probe_assumption_1<R: Rng + ?Sized>(
    model: &dyn SdeModel,
    n_probes: usize,
    ball_radius: f64,
    rng: &mut R,
) -> Result<AssumptionReport> {
    check_args(n_probes, ball_radius)?;
    model.info().validate()?;
    let alpha = model.info().alpha;
    let mut ev = Eval::new(model);
    let mut eval = |p: &Probe| -> Result<Option<(f64, f64)>> {
        let gap = dist(&p.x, &p.y);
        if gap == 0.0 {
            return Ok(None);
        }
        let (fx, gx) = ev.owned(p.t, &p.x)?;
        let (fy, gy) = ev.at(p.t, &p.y)?;
        let lhs = dist(&fx, fy).max(dist(&gx, gy));
        let rhs = (1.0 + norm(&p.x).powf(alpha) + norm(&p.y).powf(alpha)) * gap;
        Ok(Some((lhs, rhs)))
    };
    let first = estimate(n_probes, || state_pair(model, ball_radius, rng), &mut eval)?;
    let (v, second) = violation(
        2 * n_probes,
        RESAMPLE_GROWTH * first,
        || state_pair(model, ball_radius, rng),
        &mut eval,
        |p| p.witness(false, true),
    )?;
    Ok(AssumptionReport::new(
        "local-lipschitz",
        first.max(second),
        v,
        ball_radius,
        n_probes,
    ))
}

fn radius_doubling<R: Rng + ?Sized>(
    name: &str,
    model: &dyn SdeModel,
    n_probes: usize,
    ball_radius: f64,
    rng: &mut R,
    with_y: bool,
    mut eval: impl FnMut(&Probe) -> Result<Option<(f64, f64)>>,
) -> Result<AssumptionReport> {
    let first = estimate(n_probes, || state_pair(model, ball_radius, rng), &mut eval)?;
    let allowed = first + RADIUS_GROWTH * first.abs();
    let (v, _) = violation(
        n_probes,
        allowed,
        || state_pair(model, 2.0 * ball_radius, rng),
        &mut eval,
        |p| p.witness(false, with_y),
    )?;
    Ok(AssumptionReport::new(name, first, v, ball_radius, n_probes))
}

/// Monotonicity screening:
/// `(x - y)ᵀ(f(t,x) - f(t,y)) + (5p - 1)/2 |g(t,x) - g(t,y)|² <= K |x - y|²`.
pub fn probe_assumption_2<R: Rng + ?Sized>(
    model: &dyn SdeModel,
    p: f64,
    n_probes: usize,
    ball_radius: f64,
    rng: &mut R,
) -> Result<AssumptionReport> {
    check_args(n_probes, ball_radius)?;
    model.info().validate()?;
    if !(p > 2.0) {
        return Err(Error::ParameterDomain {
            name: "p",
            value: p,
            expected: "p > 2",
        });
    }
    let weight = 0.5 * (5.0 * p - 1.0);
    let mut ev = Eval::new(model);
    let eval = |pr: &Probe| -> Result<Option<(f64, f64)>> {
        let gap = dist(&pr.x, &pr.y);
        if gap == 0.0 {
            return Ok(None);
        }
        let (fx, gx) = ev.owned(pr.t, &pr.x)?;
        let (fy, gy) = ev.at(pr.t, &pr.y)?;
        let inner: f64 =
            pr.x.iter()
                .zip(&pr.y)
                .zip(fx.iter().zip(fy))
                .map(|((x, y), (a, b))| (x - y) * (a - b))
                .sum();
        let dg = dist(&gx, gy);
        Ok(Some((inner + weight * dg * dg, gap * gap)))
    };
    radius_doubling(
        "monotonicity",
        model,
        n_probes,
        ball_radius,
        rng,
        true,
        eval,
    )
}

/// Khasminskii-type screening:
/// `xᵀ f(t,x) + (5q - 1)/2 |g(t,x)|² <= K₁ (1 + |x|²)`.
pub fn probe_assumption_3<R: Rng + ?Sized>(
    model: &dyn SdeModel,
    q: f64,
    n_probes: usize,
    ball_radius: f64,
    rng: &mut R,
) -> Result<AssumptionReport> {
    check_args(n_probes, ball_radius)?;
    model.info().validate()?;
    if !(q > 2.0) {
        return Err(Error::ParameterDomain {
            name: "q",
            value: q,
            expected: "q > 2",
        });
    }
    let weight = 0.5 * (5.0 * q - 1.0);
    let mut ev = Eval::new(model);
    let eval = |pr: &Probe| -> Result<Option<(f64, f64)>> {
        let (f, g) = ev.at(pr.t, &pr.x)?;
        let inner: f64 = pr.x.iter().zip(f).map(|(x, f)| x * f).sum();
        let gn = norm(g);
        let nx = norm(&pr.x);
        Ok(Some((inner + weight * gn * gn, 1.0 + nx * nx)))
    };
    radius_doubling(
        "khasminskii",
        model,
        n_probes,
        ball_radius,
        rng,
        false,
        eval,
    )
}

/// Temporal Hölder screening of `f` and `g` with the declared exponents:
/// `|f(s,x) - f(t,x)| <= H₁ (1 + |x|^{α+1}) (s - t)^{γ_f}` and likewise for `g`
/// with `H₂`, `γ_g`. Reports `max(H₁, H₂)`.
pub fn probe_assumption_4<R: Rng + ?Sized>(
    model: &dyn SdeModel,
    n_probes: usize,
    rng: &mut R,
) -> Result<AssumptionReport> {
    check_args(n_probes, HOLDER_BALL_RADIUS)?;
    let info = model.info();
    info.validate()?;
    let growth = info.alpha + 1.0;
    let mut best_constant = f64::NEG_INFINITY;
    let mut worst = Violation {
        statistic: f64::NEG_INFINITY,
        witness: Witness::default(),
    };
    for (use_drift, gamma) in [(true, info.gamma_f), (false, info.gamma_g)] {
        let mut ev = Eval::new(model);
        let mut eval = |p: &Probe| -> Result<Option<(f64, f64)>> {
            let (fs, gs) = ev.owned(p.s, &p.x)?;
            let (ft, gt) = ev.at(p.t, &p.x)?;
            let lhs = if use_drift {
                dist(&fs, ft)
            } else {
                dist(&gs, gt)
            };
            let rhs = (1.0 + norm(&p.x).powf(growth)) * (p.s - p.t).powf(gamma);
            Ok(Some((lhs, rhs)))
        };
        let first = estimate(n_probes, || time_pair(model, rng), &mut eval)?;
        let (v, second) = violation(
            2 * n_probes,
            RESAMPLE_GROWTH * first,
            || time_pair(model, rng),
            &mut eval,
            |p| p.witness(true, false),
        )?;
        best_constant = best_constant.max(first.max(second));
        if v.statistic > worst.statistic {
            worst = v;
        }
    }
    Ok(AssumptionReport::new(
        "temporal-holder",
        best_constant,
        worst,
        HOLDER_BALL_RADIUS,
        n_probes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Example1, Example2, FnModel, LinearTest, ModelInfo, ZeroModel};
    use crate::rng::seeded;

    fn scalar_info(name: &str) -> ModelInfo {
        ModelInfo {
            name: name.into(),
            dim_state: 1,
            dim_noise: 1,
            alpha: 2.0,
            gamma_f: 1.0,
            gamma_g: 1.0,
            time_domain: (0.0, 1.0),
            initial_state: vec![1.0],
            envelope: None,
        }
    }

    fn cubic() -> FnModel {
        FnModel::new(
            scalar_info("cubic"),
            |_, x, out| out[0] = x[0] * x[0] * x[0],
            |_, _, out| out[0] = 0.0,
        )
        .unwrap()
    }

    fn declared(base: &dyn SdeModel, gamma_f: f64) -> FnModel {
        let mut info = base.info().clone();
        info.gamma_f = gamma_f;
        let f = Example1::new();
        let g = Example1::new();
        FnModel::new(
            info,
            move |t, x, out| f.drift(t, x, out),
            move |t, x, out| g.diffusion(t, x, out),
        )
        .unwrap()
    }

    #[test]
    fn linear_model_lipschitz_is_one() {
        let r = probe_assumption_1(&LinearTest::new(), 2_000, 3.0, &mut seeded(1)).unwrap();
        // |x|^0 = 1, so the weight is 3 and the constant is 1/3
        assert!(r.constant_estimate <= 1.0 / 3.0 + 1e-12);
        assert!(r.constant_estimate > 1.0 / 3.0 - 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn zero_model_constants_vanish() {
        let z = ZeroModel::new();
        let r1 = probe_assumption_1(&z, 1_000, 3.0, &mut seeded(1)).unwrap();
        assert_eq!(r1.constant_estimate, 0.0);
        assert!(r1.passed);
        let r3 = probe_assumption_3(&z, 3.0, 1_000, 3.0, &mut seeded(1)).unwrap();
        assert_eq!(r3.constant_estimate, 0.0);
        assert!(r3.passed);
        let r4 = probe_assumption_4(&z, 1_000, &mut seeded(1)).unwrap();
        assert_eq!(r4.constant_estimate, 0.0);
    }

    #[test]
    fn contractive_drift_has_negative_monotonicity_constant() {
        let r = probe_assumption_2(&LinearTest::new(), 3.0, 1_000, 3.0, &mut seeded(2)).unwrap();
        assert!((r.constant_estimate + 1.0).abs() < 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn cubic_drift_fails_monotonicity_and_khasminskii() {
        let m = cubic();
        let r2 = probe_assumption_2(&m, 3.0, 10_000, 3.0, &mut seeded(3)).unwrap();
        assert!(!r2.passed);
        let r3 = probe_assumption_3(&m, 3.0, 10_000, 3.0, &mut seeded(3)).unwrap();
        assert!(!r3.passed);
        assert!(r3.witness.x[0].abs() > 3.0);
    }

    #[test]
    fn autonomous_model_has_zero_holder_constant() {
        let r = probe_assumption_4(&LinearTest::new(), 1_000, &mut seeded(5)).unwrap();
        assert_eq!(r.constant_estimate, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn example1_lipschitz_is_finite() {
        let r = probe_assumption_1(&Example1::new(), 10_000, 3.0, &mut seeded(6)).unwrap();
        assert!(r.constant_estimate.is_finite());
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn misdeclared_holder_exponent_inflates_constant() {
        let honest = probe_assumption_4(&Example1::new(), 10_000, &mut seeded(7)).unwrap();
        assert!(honest.passed, "{honest:?}");
        let lying = declared(&Example1::new(), 1.0);
        let r = probe_assumption_4(&lying, 10_000, &mut seeded(7)).unwrap();
        assert!(r.constant_estimate > 100.0 * honest.constant_estimate);
    }

    #[test]
    fn example2_holder_is_finite() {
        let r = probe_assumption_4(&Example2::new(), 10_000, &mut seeded(8)).unwrap();
        assert!(r.constant_estimate.is_finite());
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn probes_are_deterministic() {
        let a = probe_assumption_2(&Example1::new(), 3.0, 2_000, 3.0, &mut seeded(9)).unwrap();
        let b = probe_assumption_2(&Example1::new(), 3.0, 2_000, 3.0, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = Example1::new();
        assert!(probe_assumption_1(&m, 999, 3.0, &mut seeded(0)).is_err());
        assert!(probe_assumption_1(&m, 1_000, 0.0, &mut seeded(0)).is_err());
        assert!(probe_assumption_2(&m, 2.0, 1_000, 3.0, &mut seeded(0)).is_err());
        assert!(probe_assumption_3(&m, 1.5, 1_000, 3.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn non_finite_coefficients_are_reported() {
        let m = FnModel::new(
            scalar_info("pole"),
            |_, x, out| out[0] = 1.0 / x[0].abs().min(0.0),
            |_, _, out| out[0] = 0.0,
        )
        .unwrap();
        assert!(matches!(
            probe_assumption_3(&m, 3.0, 1_000, 1.0, &mut seeded(0)),
            Err(Error::Model { .. })
        ));
    }
}
