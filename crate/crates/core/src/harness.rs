//! Monte Carlo estimation of strong errors and convergence orders.
//!
//! Each trajectory samples one fine subordinator path and one set of fine
//! Brownian increments. Coarse runs reuse them: the coarse grid is a
//! subsequence of the fine grid and coarse Brownian increments are block
//! sums of fine ones, so the fine solution serves as a coupled reference.
//! The supremum of the difference of the two step interpolants over `[0, T]`
//! is attained at fine grid points and is computed exactly there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{by_name, dist, SdeModel, MODEL_NAMES};
use crate::rng::{substream, tag, Stream};
use crate::solver::{block_sum, brownian_increments, run_path, Scheme};
use crate::subordinator::{sample_path_until, SubordinatorSpec};
use crate::time_change::{build_grid, coarsen, TimeChangeGrid};
use crate::truncation::{TruncationPolicy, MAX_EPSILON};

/// Relative tolerance when checking that a step size is an integer multiple
/// of the reference step.
const MULTIPLE_TOLERANCE: f64 = 1e-9;

/// Largest tolerated fraction of failed trajectories.
const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Parameters of a convergence or moment experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub subordinator: SubordinatorSpec,
    pub epsilon: f64,
    /// Error exponent `p̄ >= 2`.
    pub pbar: f64,
    /// Reference step size.
    pub delta_fine: f64,
    /// Coarse step sizes, strictly decreasing integer multiples of `delta_fine`.
    pub deltas: Vec<f64>,
    pub n_paths: usize,
    pub horizon: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: "example1".into(),
            subordinator: SubordinatorSpec::Stable { beta: 0.9 },
            epsilon: 0.25,
            pbar: 2.0,
            delta_fine: 1e-5,
            deltas: vec![1e-2, 1e-3, 1e-4],
            n_paths: 100,
            horizon: 1.0,
            seed: 42,
            scheme: Scheme::TruncatedEm,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !MODEL_NAMES.contains(&self.model.as_str()) {
            return Err(Error::Model {
                model: self.model.clone(),
                message: format!("unknown model; expected one of {}", MODEL_NAMES.join(", ")),
            });
        }
        self.subordinator.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon <= MAX_EPSILON) {
            return Err(Error::ParameterDomain {
                name: "epsilon",
                value: self.epsilon,
                expected: "0 < epsilon <= 1/4",
            });
        }
        if !(self.pbar >= 2.0 && self.pbar.is_finite()) {
            return Err(Error::ParameterDomain {
                name: "pbar",
                value: self.pbar,
                expected: "pbar >= 2",
            });
        }
        if !(self.delta_fine > 0.0 && self.delta_fine <= 1.0) {
            return Err(Error::ParameterDomain {
                name: "delta_fine",
                value: self.delta_fine,
                expected: "0 < delta_fine <= 1",
            });
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::ParameterDomain {
                name: "horizon",
                value: self.horizon,
                expected: "horizon > 0",
            });
        }
        if self.n_paths == 0 {
            return Err(Error::ParameterDomain {
                name: "paths",
                value: 0.0,
                expected: "paths >= 1",
            });
        }
        if self.deltas.is_empty() {
            return Err(Error::ParameterDomain {
                name: "deltas",
                value: 0.0,
                expected: "at least one step size",
            });
        }
        for w in self.deltas.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::ParameterDomain {
                    name: "deltas",
                    value: w[1],
                    expected: "strictly decreasing step sizes",
                });
            }
        }
        self.factors()?;
        Ok(())
    }

    /// `k` with `delta = k · delta_fine` for each coarse step size.
    pub fn factors(&self) -> Result<Vec<usize>> {
        self.deltas
            .iter()
            .map(|&delta| {
                let ratio = delta / self.delta_fine;
                let k = ratio.round();
                if k >= 2.0 && (ratio - k).abs() <= MULTIPLE_TOLERANCE * k && delta <= 1.0 {
                    Ok(k as usize)
                } else {
                    Err(Error::ParameterDomain {
                        name: "deltas",
                        value: delta,
                        expected: "an integer multiple k >= 2 of delta_fine, at most 1",
                    })
                }
            })
            .collect()
    }
}

/// Least-squares fit of `log2 error` against `log2 Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares on `(log2 Δ, log2 error)`.
pub fn regress_loglog(points: &[(f64, f64)]) -> Result<Regression> {
    if points.len() < 2 {
        return Err(Error::ParameterDomain {
            name: "points",
            value: points.len() as f64,
            expected: "at least two points",
        });
    }
    for &(delta, err) in points {
        if !(delta > 0.0) {
            return Err(Error::ParameterDomain {
                name: "delta",
                value: delta,
                expected: "delta > 0 for a log-log fit",
            });
        }
        if !(err > 0.0) {
            return Err(Error::ParameterDomain {
                name: "error",
                value: err,
                expected: "error > 0 for a log-log fit",
            });
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::ParameterDomain {
            name: "delta",
            value: points[0].0,
            expected: "at least two distinct step sizes",
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(Regression {
        slope,
        intercept,
        r_squared,
    })
}

/// One row of an [`ErrorReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub delta: f64,
    /// Monte Carlo mean of `sup_t |X̄_ref(t) - X̄_Δ(t)|^{p̄}`.
    pub mean_sup_error: f64,
    /// `mean_sup_error^{1/p̄}`.
    pub rms_error: f64,
    /// Standard error of `mean_sup_error`.
    pub std_error: f64,
    pub n_blowups: usize,
}

/// Strong-error estimates for a list of step sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    /// Fit of `log2 rms_error` on `log2 Δ`; absent if some error is zero.
    pub regression: Option<Regression>,
    pub pbar: f64,
    pub seed: u64,
    pub n_failures: usize,
}

/// Sup-norm errors of one coupled trajectory, one entry per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct PathErrors {
    /// `None` when the coarse or reference run blew up.
    pub sup_errors: Vec<Option<f64>>,
}

/// Resolved model and truncation policy for a configuration.
pub struct Experiment {
    config: ExperimentConfig,
    model: Box<dyn SdeModel>,
    policy: TruncationPolicy,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment")
            .field("config", &self.config)
            .field("policy", &self.policy)
            .finish()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(values: &[usize]) -> usize {
    values.iter().fold(1, |acc, &v| acc / gcd(acc, v) * v)
}

impl Experiment {
    /// Validate the configuration and resolve the truncation policy.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = by_name(&config.model)?;
        Self::with_model(config, model)
    }

    /// As [`Experiment::new`] with an explicit model; `config.model` is
    /// only used as a label.
    pub fn with_model(config: ExperimentConfig, model: Box<dyn SdeModel>) -> Result<Self> {
        let policy = TruncationPolicy::for_model(model.as_ref(), config.epsilon)?;
        if config.scheme == Scheme::TruncatedEm {
            policy.radius(config.delta_fine)?;
            for &delta in &config.deltas {
                policy.radius(delta)?;
            }
        }
        Ok(Experiment {
            config,
            model,
            policy,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &dyn SdeModel {
        self.model.as_ref()
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    /// Sup-norm errors of one coupled trajectory against the reference run.
    ///
    /// `factors` may include `1`, which reproduces the reference exactly.
    pub fn coupled_sup_error(&self, factors: &[usize], rng: &mut Stream) -> Result<PathErrors> {
        if factors.contains(&0) {
            return Err(Error::ParameterDomain {
                name: "k",
                value: 0.0,
                expected: "k >= 1",
            });
        }
        let cfg = &self.config;
        let m = self.model.info().dim_noise;
        let block = lcm(factors);
        let mut path = sample_path_until(&cfg.subordinator, cfg.delta_fine, cfg.horizon, rng)?;
        path.extend_to_multiple(&cfg.subordinator, block, rng)?;
        let increments = brownian_increments(path.n_increments(), m, cfg.delta_fine, rng);

        let fine_grid = build_grid(&path, cfg.horizon)?;
        let fine = run_path(
            &self.policy,
            self.model(),
            &fine_grid,
            &increments,
            cfg.scheme,
        )?;
        if fine.blow_up().is_some() {
            return Ok(PathErrors {
                sup_errors: vec![None; factors.len()],
            });
        }

        let mut sup_errors = Vec::with_capacity(factors.len());
        for &k in factors {
            let coarse_path = coarsen(&path, k)?;
            let coarse_grid = build_grid(&coarse_path, cfg.horizon)?;
            let coarse_inc = block_sum(&increments, m, k);
            let coarse = run_path(
                &self.policy,
                self.model(),
                &coarse_grid,
                &coarse_inc,
                cfg.scheme,
            )?;
            if coarse.blow_up().is_some() {
                sup_errors.push(None);
                continue;
            }
            debug_assert_eq!(coarse.len() - 1, fine_grid.n_steps() / k);
            let mut sup: f64 = 0.0;
            for (i, x) in fine.states().enumerate() {
                sup = sup.max(dist(x, coarse.state(i / k)));
            }
            sup_errors.push(Some(sup.powf(cfg.pbar)));
        }
        Ok(PathErrors { sup_errors })
    }

    /// Average [`Experiment::coupled_sup_error`] over all trajectories.
    pub fn run(&self) -> Result<ErrorReport> {
        let cfg = &self.config;
        let factors = cfg.factors()?;
        let results: Vec<Result<PathErrors>> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(cfg.seed, tag::CONVERGENCE, i as u64);
                self.coupled_sup_error(&factors, &mut rng)
            })
            .collect();

        let n_failures = results.iter().filter(|r| r.is_err()).count();
        if n_failures as f64 > MAX_FAILURE_FRACTION * cfg.n_paths as f64 {
            let first = results
                .iter()
                .find_map(|r| r.as_ref().err())
                .map(ToString::to_string)
                .unwrap_or_default();
            return Err(Error::Experiment(format!(
                "{n_failures} of {} trajectories failed; first failure: {first}",
                cfg.n_paths
            )));
        }
        let ok: Vec<&PathErrors> = results.iter().filter_map(|r| r.as_ref().ok()).collect();

        let mut rows = Vec::with_capacity(factors.len());
        for (j, &delta) in cfg.deltas.iter().enumerate() {
            let values: Vec<f64> = ok.iter().filter_map(|p| p.sup_errors[j]).collect();
            let n_blowups = ok.len() - values.len();
            let (mean, std_error) = mean_and_std_error(&values);
            rows.push(ErrorRow {
                delta,
                mean_sup_error: mean,
                rms_error: mean.powf(1.0 / cfg.pbar),
                std_error,
                n_blowups,
            });
        }
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta, r.rms_error)).collect();
        let regression = regress_loglog(&points).ok();
        Ok(ErrorReport {
            rows,
            regression,
            pbar: cfg.pbar,
            seed: cfg.seed,
            n_failures,
        })
    }

    /// Sup-norm moments of independent truncated and plain EM runs per step size.
    pub fn moments(&self) -> Result<MomentTable> {
        let cfg = &self.config;
        let m = self.model.info().dim_noise;
        let mut rows = Vec::with_capacity(cfg.deltas.len());
        for (j, &delta) in cfg.deltas.iter().enumerate() {
            let per_path: Vec<Result<(f64, Option<f64>)>> = (0..cfg.n_paths)
                .into_par_iter()
                .map(|i| {
                    let mut rng = substream(cfg.seed, tag::MOMENTS + j as u64, i as u64);
                    let path = sample_path_until(&cfg.subordinator, delta, cfg.horizon, &mut rng)?;
                    let grid = build_grid(&path, cfg.horizon)?;
                    let inc = brownian_increments(grid.n_steps(), m, delta, &mut rng);
                    let tr =
                        run_path(&self.policy, self.model(), &grid, &inc, Scheme::TruncatedEm)?;
                    let pl = run_path(&self.policy, self.model(), &grid, &inc, Scheme::PlainEm)?;
                    let plain = pl.blow_up().is_none().then(|| pl.sup_norm());
                    Ok((tr.sup_norm(), plain))
                })
                .collect();
            let per_path: Vec<(f64, Option<f64>)> = per_path.into_iter().collect::<Result<_>>()?;
            let sups: Vec<f64> = per_path.iter().map(|p| p.0).collect();
            let moments: Vec<f64> = sups.iter().map(|s| s.powf(cfg.pbar)).collect();
            let plain: Vec<f64> = per_path.iter().filter_map(|p| p.1).collect();
            rows.push(MomentRow {
                delta,
                max_sup_norm: sups.iter().copied().fold(0.0, f64::max),
                mean_sup_moment: mean_and_std_error(&moments).0,
                plain_max_sup_norm: plain.iter().copied().fold(0.0, f64::max),
                plain_blowups: cfg.n_paths - plain.len(),
            });
        }
        Ok(MomentTable {
            rows,
            p: cfg.pbar,
            seed: cfg.seed,
        })
    }
}

/// Ordered-sum mean and standard error of the mean.
fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Run the coupled convergence experiment described by `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ErrorReport> {
    Experiment::new(config.clone())?.run()
}

/// Sup-norm statistics for one step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub delta: f64,
    /// `max` over paths of `sup_n |X_{ρ_n}|` for truncated EM.
    pub max_sup_norm: f64,
    /// Mean over paths of `sup_n |X_{ρ_n}|^p` for truncated EM.
    pub mean_sup_moment: f64,
    /// `max` over non-exploding plain EM paths of `sup_n |X_{ρ_n}|`.
    pub plain_max_sup_norm: f64,
    pub plain_blowups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub rows: Vec<MomentRow>,
    pub p: f64,
    pub seed: u64,
}

impl MomentTable {
    /// Ratio of the largest to the smallest `max_sup_norm` across step sizes.
    pub fn spread(&self) -> f64 {
        let values = self.rows.iter().map(|r| r.max_sup_norm);
        let hi = values.clone().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

/// Run the moment-boundedness experiment on `config.deltas`.
pub fn moment_boundedness_experiment(config: &ExperimentConfig) -> Result<MomentTable> {
    Experiment::new(config.clone())?.moments()
}

/// One simulated trajectory with its grid, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub grid: TimeChangeGrid,
    pub time_offset: (f64, f64),
    pub states: Vec<Vec<f64>>,
    pub blow_up: Option<usize>,
}

impl PathRecord {
    /// `(ρ_n, clipped model time, E_Δ(ρ_n), X_{ρ_n})` rows.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64, &[f64])> {
        let (a, b) = self.time_offset;
        let delta = self.grid.delta();
        self.states.iter().enumerate().map(move |(n, x)| {
            let rho = self.grid.rho()[n];
            (rho, (a + rho).min(b), n as f64 * delta, x.as_slice())
        })
    }
}

/// Simulate a single path at step `delta` from stream `(seed, 0)`.
pub fn simulate_path(
    model: &dyn SdeModel,
    subordinator: &SubordinatorSpec,
    epsilon: f64,
    delta: f64,
    horizon: f64,
    scheme: Scheme,
    seed: u64,
) -> Result<PathRecord> {
    let policy = TruncationPolicy::for_model(model, epsilon)?;
    let mut rng = substream(seed, tag::PATH, 0);
    let path = sample_path_until(subordinator, delta, horizon, &mut rng)?;
    let grid = build_grid(&path, horizon)?;
    let inc = brownian_increments(grid.n_steps(), model.info().dim_noise, delta, &mut rng);
    let traj = run_path(&policy, model, &grid, &inc, scheme)?;
    let states = traj.states().map(<[f64]>::to_vec).collect();
    let blow_up = traj.blow_up();
    Ok(PathRecord {
        time_offset: model.info().time_domain,
        grid,
        states,
        blow_up,
    })
}
