//! Discretised inverse subordinator.
//!
//! A sampled path `D_Δ(t_i)` defines the random real-time grid
//! `ρ_i = D_Δ(t_i)` and the step function
//! `E_Δ(t) = iΔ` for `t ∈ [ρ_i, ρ_{i+1})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subordinator::SubordinatorPath;

/// Real-time grid `ρ_0 = 0 < ρ_1 < … < ρ_N <= T < ρ_{N+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChangeGrid {
    delta: f64,
    rho: Vec<f64>,
    horizon: f64,
}

impl TimeChangeGrid {
    /// Operational step `Δ`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// All grid points including the one straddling the horizon.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `N`, the index of the last grid point not exceeding the horizon.
    pub fn n_steps(&self) -> usize {
        self.rho.len() - 2
    }

    /// Grid points `ρ_0..=ρ_N`, i.e. those inside `[0, T]`.
    pub fn usable(&self) -> &[f64] {
        &self.rho[..=self.n_steps()]
    }

    /// The unique `i` with `ρ_i <= t < ρ_{i+1}`.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.horizon,
            });
        }
        // rho[0] = 0 <= t, so the partition point is at least 1
        Ok(self.rho.partition_point(|&r| r <= t) - 1)
    }

    /// `E_Δ(t)`; right-continuous at the grid points.
    pub fn evaluate_e(&self, t: f64) -> Result<f64> {
        Ok(self.index_at(t)? as f64 * self.delta)
    }
}

/// Cut a path at its first exceedance of `horizon`.
pub fn build_grid(path: &SubordinatorPath, horizon: f64) -> Result<TimeChangeGrid> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::ParameterDomain {
            name: "horizon",
            value: horizon,
            expected: "horizon > 0",
        });
    }
    let cumulative = path.cumulative();
    if path.end() <= horizon {
        return Err(Error::Coverage {
            reached: path.end(),
            horizon,
        });
    }
    let stop = cumulative.partition_point(|&c| c <= horizon);
    Ok(TimeChangeGrid {
        delta: path.delta(),
        rho: cumulative[..=stop].to_vec(),
        horizon,
    })
}

/// Merge blocks of `k` fine increments into one coarse increment.
///
/// Coarse cumulative values are copied from the fine path, so every coarse
/// grid point is bit-identical to a fine one. Trailing fine increments that
/// do not fill a whole block are dropped.
pub fn coarsen(fine: &SubordinatorPath, k: usize) -> Result<SubordinatorPath> {
    if k == 0 {
        return Err(Error::ParameterDomain {
            name: "k",
            value: 0.0,
            expected: "k >= 1",
        });
    }
    if k == 1 {
        return Ok(fine.clone());
    }
    let blocks = fine.n_increments() / k;
    let cumulative = (0..=blocks).map(|j| fine.cumulative()[j * k]).collect();
    Ok(SubordinatorPath::from_cumulative(
        fine.delta() * k as f64,
        cumulative,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::subordinator::{sample_path_until, SubordinatorSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn drift_grid(theta: f64, delta: f64, horizon: f64) -> TimeChangeGrid {
        let spec = SubordinatorSpec::drift_only(theta).unwrap();
        let path = sample_path_until(&spec, delta, horizon, &mut seeded(0)).unwrap();
        build_grid(&path, horizon).unwrap()
    }

    #[test]
    fn drift_grid_matches_formula() {
        let grid = drift_grid(1.0, 0.1, 0.35);
        let expected = [0.0, 0.1, 0.2, 0.3, 0.4];
        assert_eq!(grid.rho().len(), expected.len());
        for (r, e) in grid.rho().iter().zip(expected) {
            assert_relative_eq!(*r, e, epsilon = 1e-15);
        }
        assert_eq!(grid.n_steps(), 3);
    }

    #[test]
    fn evaluate_e_worked_values() {
        let grid = drift_grid(1.0, 0.1, 0.35);
        assert_relative_eq!(grid.evaluate_e(0.35).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(grid.evaluate_e(0.0).unwrap(), 0.0);
        // right limit wins at a grid point
        let at_rho1 = grid.rho()[1];
        assert_relative_eq!(grid.evaluate_e(at_rho1).unwrap(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn evaluate_e_rejects_outside_horizon() {
        let grid = drift_grid(1.0, 0.1, 0.35);
        assert!(matches!(grid.evaluate_e(-1e-9), Err(Error::Domain { .. })));
        assert!(grid.evaluate_e(0.36).is_err());
        assert!(grid.evaluate_e(0.35).is_ok());
    }

    #[test]
    fn single_step_grid() {
        let path = SubordinatorPath::from_increments(0.1, &[0.7, 0.2]).unwrap();
        let grid = build_grid(&path, 0.5).unwrap();
        assert_eq!(grid.rho(), &[0.0, 0.7]);
        assert_eq!(grid.n_steps(), 0);
    }

    #[test]
    fn grid_requires_coverage() {
        let path = SubordinatorPath::from_increments(0.1, &[0.1, 0.1]).unwrap();
        assert!(matches!(
            build_grid(&path, 0.2),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn stable_grid_is_prefix_of_cumulative() {
        let spec = SubordinatorSpec::stable(0.8).unwrap();
        let path = sample_path_until(&spec, 1e-3, 2.0, &mut seeded(4)).unwrap();
        let grid = build_grid(&path, 2.0).unwrap();
        assert_eq!(grid.rho(), path.cumulative());
    }

    #[test]
    fn coarsen_identity_and_blocks() {
        let spec = SubordinatorSpec::drift_only(1.0).unwrap();
        let fine = sample_path_until(&spec, 0.1, 1.95, &mut seeded(0)).unwrap();
        assert_eq!(coarsen(&fine, 1).unwrap(), fine);
        let coarse = coarsen(&fine, 5).unwrap();
        assert_relative_eq!(coarse.delta(), 0.5);
        assert_eq!(coarse.n_increments(), fine.n_increments() / 5);
        for h in coarse.increments() {
            assert_relative_eq!(*h, 0.5, epsilon = 1e-14);
        }
        assert_relative_eq!(coarse.cumulative()[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(coarse.cumulative()[2], 1.0, epsilon = 1e-15);
        assert!(coarsen(&fine, 0).is_err());
    }

    proptest! {
        #[test]
        fn evaluate_e_is_a_staircase(seed in any::<u64>(), beta in 0.3f64..0.95) {
            let spec = SubordinatorSpec::stable(beta).unwrap();
            let path = sample_path_until(&spec, 1e-2, 1.0, &mut seeded(seed)).unwrap();
            let grid = build_grid(&path, 1.0).unwrap();
            let rho = grid.rho();
            for i in 0..=grid.n_steps() {
                prop_assert_eq!(grid.evaluate_e(rho[i]).unwrap(), i as f64 * 1e-2);
                let mid = 0.5 * (rho[i] + rho[i + 1]);
                if mid <= 1.0 {
                    prop_assert_eq!(grid.evaluate_e(mid).unwrap(), i as f64 * 1e-2);
                }
            }
            let mut last = 0.0;
            for j in 0..=200 {
                let t = j as f64 / 200.0;
                let e = grid.evaluate_e(t).unwrap();
                prop_assert!(e >= last);
                last = e;
            }
        }

        #[test]
        fn coarse_grid_is_fine_subsequence(seed in any::<u64>(), k in 1usize..20) {
            let spec = SubordinatorSpec::stable(0.9).unwrap();
            let mut rng = seeded(seed);
            let mut fine = sample_path_until(&spec, 1e-3, 1.0, &mut rng).unwrap();
            fine.extend_to_multiple(&spec, k, &mut rng).unwrap();
            let coarse = coarsen(&fine, k).unwrap();
            for (j, c) in coarse.cumulative().iter().enumerate() {
                prop_assert_eq!(c.to_bits(), fine.cumulative()[j * k].to_bits());
            }
            prop_assert!(coarse.end() > 1.0);
        }

        #[test]
        fn drift_inverse_is_within_one_step(theta in 0.2f64..5.0, t in 0.0f64..1.0) {
            let delta = 1e-3;
            let spec = SubordinatorSpec::drift_only(theta).unwrap();
            let path = sample_path_until(&spec, delta, 1.0, &mut seeded(0)).unwrap();
            let grid = build_grid(&path, 1.0).unwrap();
            prop_assert!((grid.evaluate_e(t).unwrap() - t / theta).abs() <= delta);
        }
    }
}
