//! Lévy subordinators and their discretised paths.
//!
//! A subordinator `D` is a nondecreasing Lévy process with Laplace transform
//! `E exp(-r D(t)) = exp(-t φ(r))`. The supported families are the
//! `β`-stable subordinator (`φ(r) = r^β`), a pure drift (`φ(r) = θ r`) and
//! their sum. Stable increments are drawn exactly with Kanter's
//! representation, so no bias enters through the sampler.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of increments drawn for one path.
pub const MAX_PATH_STEPS: usize = 1_000_000_000;

/// Smallest admissible sample count for [`validate_laplace`].
pub const MIN_LAPLACE_SAMPLES: usize = 1_000;

/// Identifies the subordinator family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubordinatorSpec {
    /// Totally skewed positive `β`-stable law, `β ∈ (0, 1)`.
    Stable { beta: f64 },
    /// Deterministic drift `D(t) = θ t`.
    DriftOnly { theta: f64 },
    /// Stable part plus drift.
    StableWithDrift { beta: f64, theta: f64 },
}

impl SubordinatorSpec {
    pub fn stable(beta: f64) -> Result<Self> {
        let spec = SubordinatorSpec::Stable { beta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn drift_only(theta: f64) -> Result<Self> {
        let spec = SubordinatorSpec::DriftOnly { theta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn stable_with_drift(beta: f64, theta: f64) -> Result<Self> {
        let spec = SubordinatorSpec::StableWithDrift { beta, theta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let check_beta = |beta: f64| {
            if beta > 0.0 && beta < 1.0 {
                Ok(())
            } else {
                Err(Error::ParameterDomain {
                    name: "beta",
                    value: beta,
                    expected: "0 < beta < 1",
                })
            }
        };
        let check_theta = |theta: f64| {
            if theta > 0.0 && theta.is_finite() {
                Ok(())
            } else {
                Err(Error::ParameterDomain {
                    name: "theta",
                    value: theta,
                    expected: "theta > 0",
                })
            }
        };
        match *self {
            SubordinatorSpec::Stable { beta } => check_beta(beta),
            SubordinatorSpec::DriftOnly { theta } => check_theta(theta),
            SubordinatorSpec::StableWithDrift { beta, theta } => {
                check_beta(beta)?;
                check_theta(theta)
            }
        }
    }

    /// Stability index, if the family has a stable part.
    pub fn beta(&self) -> Option<f64> {
        match *self {
            SubordinatorSpec::Stable { beta } | SubordinatorSpec::StableWithDrift { beta, .. } => {
                Some(beta)
            }
            SubordinatorSpec::DriftOnly { .. } => None,
        }
    }

    /// Drift coefficient, if present.
    pub fn theta(&self) -> Option<f64> {
        match *self {
            SubordinatorSpec::DriftOnly { theta }
            | SubordinatorSpec::StableWithDrift { theta, .. } => Some(theta),
            SubordinatorSpec::Stable { .. } => None,
        }
    }

    /// Laplace exponent `φ(r)`.
    pub fn laplace_exponent(&self, r: f64) -> f64 {
        match *self {
            SubordinatorSpec::Stable { beta } => r.powf(beta),
            SubordinatorSpec::DriftOnly { theta } => theta * r,
            SubordinatorSpec::StableWithDrift { beta, theta } => r.powf(beta) + theta * r,
        }
    }

    /// Draw without re-validating parameters.
    fn draw<R: Rng + ?Sized>(&self, delta: f64, rng: &mut R) -> f64 {
        match *self {
            SubordinatorSpec::Stable { beta } => {
                delta.powf(1.0 / beta) * positive_stable(beta, rng)
            }
            SubordinatorSpec::DriftOnly { theta } => theta * delta,
            SubordinatorSpec::StableWithDrift { beta, theta } => {
                delta.powf(1.0 / beta) * positive_stable(beta, rng) + theta * delta
            }
        }
    }
}

impl Default for SubordinatorSpec {
    fn default() -> Self {
        SubordinatorSpec::Stable { beta: 0.9 }
    }
}

/// Standard positive `β`-stable variate with `E exp(-r S) = exp(-r^β)`.
///
/// Kanter's representation with `U ~ Uniform(0, π)` and `W ~ Exp(1)`:
/// `S = sin(βU) / sin(U)^{1/β} · (sin((1-β)U) / W)^{(1-β)/β}`.
pub fn positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    loop {
        let u = PI * rng.random::<f64>();
        if u <= 0.0 {
            continue;
        }
        let w: f64 = rng.sample(Exp1);
        let s = (beta * u).sin() / u.sin().powf(1.0 / beta)
            * (((1.0 - beta) * u).sin() / w).powf((1.0 - beta) / beta);
        if s.is_finite() && s > 0.0 {
            return s;
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name: "delta",
            value: delta,
            expected: "delta > 0",
        })
    }
}

/// One draw distributed as `D(Δ)`.
pub fn sample_increment<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    delta: f64,
    rng: &mut R,
) -> Result<f64> {
    spec.validate()?;
    check_delta(delta)?;
    Ok(spec.draw(delta, rng))
}

/// Cumulative sums `D_Δ(t_i)` of i.i.d. increments on the grid `t_i = iΔ`.
///
/// `cumulative[0] = 0` and `cumulative[i] - cumulative[i-1] == increments[i-1]`
/// holds bit-exactly: increments are stored as the differences of the
/// running sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorPath {
    delta: f64,
    increments: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SubordinatorPath {
    /// An empty path (`cumulative = [0]`).
    pub fn new(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(SubordinatorPath {
            delta,
            increments: Vec::new(),
            cumulative: vec![0.0],
        })
    }

    /// Build a path from strictly positive increments.
    pub fn from_increments(delta: f64, increments: &[f64]) -> Result<Self> {
        let mut path = SubordinatorPath::new(delta)?;
        for &h in increments {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::ParameterDomain {
                    name: "increment",
                    value: h,
                    expected: "finite and > 0",
                });
            }
            path.push(h);
        }
        Ok(path)
    }

    /// Build a path from cumulative values taken verbatim.
    pub(crate) fn from_cumulative(delta: f64, cumulative: Vec<f64>) -> Self {
        debug_assert_eq!(cumulative.first(), Some(&0.0));
        let increments = cumulative.windows(2).map(|w| w[1] - w[0]).collect();
        SubordinatorPath {
            delta,
            increments,
            cumulative,
        }
    }

    fn push(&mut self, h: f64) {
        let prev = *self.cumulative.last().expect("cumulative is never empty");
        let mut next = prev + h;
        if next <= prev {
            // increment absorbed by rounding; keep the sequence strictly increasing
            next = prev.next_up();
        }
        self.increments.push(next - prev);
        self.cumulative.push(next);
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Number of increments drawn.
    pub fn n_increments(&self) -> usize {
        self.increments.len()
    }

    /// `D_Δ` at the last grid point.
    pub fn end(&self) -> f64 {
        *self.cumulative.last().expect("cumulative is never empty")
    }

    /// Keep drawing until the number of increments is a multiple of `block`.
    pub fn extend_to_multiple<R: Rng + ?Sized>(
        &mut self,
        spec: &SubordinatorSpec,
        block: usize,
        rng: &mut R,
    ) -> Result<()> {
        spec.validate()?;
        if block == 0 {
            return Err(Error::ParameterDomain {
                name: "block",
                value: 0.0,
                expected: "block >= 1",
            });
        }
        while self.increments.len() % block != 0 {
            let h = spec.draw(self.delta, rng);
            self.push(h);
        }
        Ok(())
    }
}

/// Sample `D_Δ` until it first exceeds `horizon`.
///
/// On return `cumulative` has length `N + 2` with `cumulative[N] <= horizon <
/// cumulative[N + 1]`.
pub fn sample_path_until<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    delta: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<SubordinatorPath> {
    spec.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::ParameterDomain {
            name: "horizon",
            value: horizon,
            expected: "horizon > 0",
        });
    }
    let mut path = SubordinatorPath::new(delta)?;
    while path.end() <= horizon {
        if path.increments.len() >= MAX_PATH_STEPS {
            return Err(Error::Resource(format!(
                "subordinator path did not pass horizon {horizon} within {MAX_PATH_STEPS} steps"
            )));
        }
        let h = spec.draw(delta, rng);
        path.push(h);
    }
    Ok(path)
}

/// Monte Carlo check of the Laplace transform of `D(Δ)` at one `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceCheck {
    pub empirical: f64,
    pub analytic: f64,
    pub std_error: f64,
}

impl LaplaceCheck {
    /// `|empirical - analytic| <= k · std_error`.
    pub fn within(&self, k: f64) -> bool {
        (self.empirical - self.analytic).abs() <= k * self.std_error
    }

    /// Standardised deviation; zero when both agree exactly.
    pub fn z_score(&self) -> f64 {
        let diff = self.empirical - self.analytic;
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_error
        }
    }
}

fn laplace_statistic(n: usize, analytic: f64, mut draw: impl FnMut() -> f64) -> LaplaceCheck {
    // Welford keeps the mean of identical samples exact.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 1..=n {
        let v = draw();
        let d = v - mean;
        mean += d / i as f64;
        m2 += d * (v - mean);
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    LaplaceCheck {
        empirical: mean,
        analytic,
        std_error: var.sqrt() / (n as f64).sqrt(),
    }
}

fn check_laplace_args(r: f64, n_samples: usize) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::ParameterDomain {
            name: "r",
            value: r,
            expected: "r > 0",
        });
    }
    if n_samples < MIN_LAPLACE_SAMPLES {
        return Err(Error::ParameterDomain {
            name: "n_samples",
            value: n_samples as f64,
            expected: "n_samples >= 1000",
        });
    }
    Ok(())
}

/// Compare the sample mean of `exp(-r h)` with `exp(-Δ φ(r))`.
pub fn validate_laplace<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    delta: f64,
    r: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<LaplaceCheck> {
    validate_laplace_blocks(spec, delta, 1, r, n_samples, rng)
}

/// As [`validate_laplace`], but each sample is the sum of `k` consecutive
/// increments at step `Δ`, which must be distributed as `D(kΔ)`.
pub fn validate_laplace_blocks<R: Rng + ?Sized>(
    spec: &SubordinatorSpec,
    delta: f64,
    k: usize,
    r: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<LaplaceCheck> {
    spec.validate()?;
    check_delta(delta)?;
    check_laplace_args(r, n_samples)?;
    if k == 0 {
        return Err(Error::ParameterDomain {
            name: "k",
            value: 0.0,
            expected: "k >= 1",
        });
    }
    let analytic = (-(k as f64) * delta * spec.laplace_exponent(r)).exp();
    Ok(laplace_statistic(n_samples, analytic, || {
        let h: f64 = (0..k).map(|_| spec.draw(delta, rng)).sum();
        (-r * h).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn drift_increment_is_exact() {
        let spec = SubordinatorSpec::drift_only(1.0).unwrap();
        let h = sample_increment(&spec, 0.1, &mut seeded(0)).unwrap();
        assert_eq!(h, 0.1);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SubordinatorSpec::stable(1.0).is_err());
        assert!(SubordinatorSpec::stable(0.0).is_err());
        assert!(SubordinatorSpec::drift_only(0.0).is_err());
        assert!(SubordinatorSpec::stable_with_drift(0.5, -1.0).is_err());
        let spec = SubordinatorSpec::Stable { beta: 1.5 };
        assert!(matches!(
            sample_increment(&spec, 0.1, &mut seeded(0)),
            Err(Error::ParameterDomain { name: "beta", .. })
        ));
        let ok = SubordinatorSpec::default();
        assert!(sample_increment(&ok, 0.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn tiny_step_increments_are_positive() {
        let spec = SubordinatorSpec::stable(0.9).unwrap();
        let mut rng = seeded(11);
        for _ in 0..100_000 {
            assert!(sample_increment(&spec, 1e-4, &mut rng).unwrap() > 0.0);
        }
    }

    #[test]
    fn all_families_give_positive_increments() {
        let specs = [
            SubordinatorSpec::stable(0.5).unwrap(),
            SubordinatorSpec::stable(0.99).unwrap(),
            SubordinatorSpec::drift_only(0.3).unwrap(),
            SubordinatorSpec::stable_with_drift(0.7, 2.0).unwrap(),
        ];
        let mut rng = seeded(5);
        for spec in specs {
            for delta in [1e-6, 1e-2, 1.0] {
                for _ in 0..100_000 {
                    assert!(sample_increment(&spec, delta, &mut rng).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn stable_half_laplace_at_unit_step() {
        // E exp(-D(1)) = exp(-1) for phi(r) = r^{1/2}
        let spec = SubordinatorSpec::stable(0.5).unwrap();
        let check = validate_laplace(&spec, 1.0, 1.0, 1_000_000, &mut seeded(2024)).unwrap();
        assert!((check.analytic - (-1.0f64).exp()).abs() < 1e-15);
        assert!(check.within(3.0), "{check:?}");
    }

    #[test]
    fn drift_laplace_is_degenerate() {
        let spec = SubordinatorSpec::drift_only(1.0).unwrap();
        let check = validate_laplace(&spec, 1.0, 1.0, 1_000, &mut seeded(1)).unwrap();
        assert_eq!(check.empirical, (-1.0f64).exp());
        assert_eq!(check.analytic, (-1.0f64).exp());
        assert_eq!(check.std_error, 0.0);
        assert!(check.within(3.0));
    }

    #[test]
    fn analytic_laplace_values() {
        let spec = SubordinatorSpec::stable(0.5).unwrap();
        let a = validate_laplace(&spec, 2.0, 1.0, 1_000, &mut seeded(1)).unwrap();
        assert!((a.analytic - (-2.0f64).exp()).abs() < 1e-15);
        let b = validate_laplace(&spec, 1.0, 4.0, 1_000, &mut seeded(1)).unwrap();
        assert!((b.analytic - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn laplace_requires_enough_samples() {
        let spec = SubordinatorSpec::default();
        assert!(validate_laplace(&spec, 1.0, 1.0, 999, &mut seeded(1)).is_err());
        assert!(validate_laplace(&spec, 1.0, 0.0, 1000, &mut seeded(1)).is_err());
    }

    #[test]
    fn drift_path_stops_after_horizon() {
        let spec = SubordinatorSpec::drift_only(2.0).unwrap();
        let path = sample_path_until(&spec, 0.5, 1.0, &mut seeded(0)).unwrap();
        // D(0.5) = 1 only reaches the horizon, so one more step is needed
        assert_eq!(path.cumulative(), &[0.0, 1.0, 2.0]);

        let spec = SubordinatorSpec::drift_only(1.0).unwrap();
        let path = sample_path_until(&spec, 0.1, 0.05, &mut seeded(0)).unwrap();
        assert_eq!(path.cumulative(), &[0.0, 0.1]);
    }

    #[test]
    fn stable_path_straddles_horizon() {
        let spec = SubordinatorSpec::stable(0.7).unwrap();
        let path = sample_path_until(&spec, 1e-3, 1.0, &mut seeded(9)).unwrap();
        let c = path.cumulative();
        assert!(c[c.len() - 1] > 1.0);
        assert!(c[c.len() - 2] <= 1.0);
        assert_eq!(c[0], 0.0);
        for (i, w) in c.windows(2).enumerate() {
            assert!(w[1] > w[0]);
            assert_eq!(w[1] - w[0], path.increments()[i]);
        }
    }

    #[test]
    fn extension_reaches_block_multiple() {
        let spec = SubordinatorSpec::stable(0.9).unwrap();
        let mut rng = seeded(3);
        let mut path = sample_path_until(&spec, 1e-3, 1.0, &mut rng).unwrap();
        let before = path.cumulative().to_vec();
        path.extend_to_multiple(&spec, 64, &mut rng).unwrap();
        assert_eq!(path.n_increments() % 64, 0);
        assert_eq!(&path.cumulative()[..before.len()], &before[..]);
    }

    #[test]
    fn from_increments_rejects_nonpositive() {
        assert!(SubordinatorPath::from_increments(0.1, &[0.1, 0.0]).is_err());
        let p = SubordinatorPath::from_increments(0.1, &[0.5, 0.25]).unwrap();
        assert_eq!(p.cumulative(), &[0.0, 0.5, 0.75]);
    }
}
