use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the fast component is advanced within a slow step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FastMode {
    Euler,
    /// Exact Gaussian transition of `dz = -z/eps dt + s/sqrt(eps) dW`.
    ExactOu,
}

/// Multirate grid: the fast variable takes `dt_slow / dt_fast` substeps per
/// slow step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepScheme {
    pub dt_slow: f64,
    pub dt_fast: f64,
    pub fast_mode: FastMode,
}

const GRID_TOL: f64 = 1e-9;

impl StepScheme {
    pub fn new(dt_slow: f64, dt_fast: f64, fast_mode: FastMode) -> Result<Self> {
        if !(dt_slow > 0.0 && dt_slow.is_finite()) || !(dt_fast > 0.0 && dt_fast.is_finite()) {
            return Err(Error::invalid(format!(
                "step sizes must be positive, got dt_slow={dt_slow}, dt_fast={dt_fast}"
            )));
        }
        if dt_fast > dt_slow * (1.0 + GRID_TOL) {
            return Err(Error::invalid(format!(
                "dt_fast={dt_fast} exceeds dt_slow={dt_slow}"
            )));
        }
        let ratio = dt_slow / dt_fast;
        if (ratio - ratio.round()).abs() > GRID_TOL * ratio {
            return Err(Error::invalid(format!(
                "dt_fast={dt_fast} does not divide dt_slow={dt_slow}"
            )));
        }
        Ok(Self {
            dt_slow,
            dt_fast,
            fast_mode,
        })
    }

    /// Finest grid allowed for `epsilon`: `dt_fast = dt_slow / k` with the
    /// smallest `k` such that `dt_fast <= epsilon / 10` in Euler mode, and
    /// `dt_fast = dt_slow` for exact OU sampling.
    pub fn for_epsilon(dt_slow: f64, epsilon: f64, fast_mode: FastMode) -> Result<Self> {
        let dt_fast = match fast_mode {
            FastMode::ExactOu => dt_slow,
            FastMode::Euler => {
                let limit = epsilon / 10.0;
                let k = (dt_slow / limit * (1.0 - GRID_TOL)).ceil().max(1.0);
                dt_slow / k
            }
        };
        Self::new(dt_slow, dt_fast, fast_mode)
    }

    pub fn substeps(&self) -> usize {
        (self.dt_slow / self.dt_fast).round() as usize
    }

    /// Rejects Euler fast steps coarser than `epsilon / 10`.
    pub fn check_stiffness(&self, epsilon: f64) -> Result<()> {
        if self.fast_mode == FastMode::Euler {
            let limit = self.dt_slow.min(epsilon / 10.0);
            if self.dt_fast > limit * (1.0 + GRID_TOL) {
                return Err(Error::StiffnessRejected {
                    dt_fast: self.dt_fast,
                    limit,
                });
            }
        }
        Ok(())
    }

    /// Number of slow steps covering `[0, horizon]`.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        grid_steps(horizon, self.dt_slow)
    }
}

/// Number of steps of size `dt` in `[0, horizon]`; `horizon` must be a
/// multiple of `dt`.
pub fn grid_steps(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let ratio = horizon / dt;
    let steps = ratio.round();
    if steps < 1.0 || (ratio - steps).abs() > GRID_TOL * ratio.max(1.0) {
        return Err(Error::invalid(format!(
            "horizon {horizon} is not a multiple of dt={dt}"
        )));
    }
    Ok(steps as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divisor_and_order_checks() {
        assert!(StepScheme::new(0.01, 0.001, FastMode::Euler).is_ok());
        assert!(StepScheme::new(0.01, 0.003, FastMode::Euler).is_err());
        assert!(StepScheme::new(0.01, 0.02, FastMode::Euler).is_err());
        assert_eq!(StepScheme::new(0.01, 0.001, FastMode::Euler).unwrap().substeps(), 10);
    }

    #[test]
    fn stiffness_guard() {
        let s = StepScheme::new(0.01, 0.005, FastMode::Euler).unwrap();
        assert!(matches!(
            s.check_stiffness(0.01),
            Err(Error::StiffnessRejected { .. })
        ));
        assert!(s.check_stiffness(0.05).is_ok());
        let exact = StepScheme::new(0.01, 0.01, FastMode::ExactOu).unwrap();
        assert!(exact.check_stiffness(1e-6).is_ok());
    }

    #[test]
    fn epsilon_rule_picks_divisor_within_limit() {
        for eps in [0.5, 0.1, 0.02, 0.013, 0.001] {
            let s = StepScheme::for_epsilon(0.01, eps, FastMode::Euler).unwrap();
            assert!(s.check_stiffness(eps).is_ok(), "eps={eps}");
            assert!(s.dt_fast <= 0.01);
        }
        assert_eq!(StepScheme::for_epsilon(0.01, 0.1, FastMode::Euler).unwrap().substeps(), 1);
        assert_eq!(StepScheme::for_epsilon(0.01, 0.02, FastMode::Euler).unwrap().substeps(), 5);
    }

    #[test]
    fn grid_steps_requires_multiple() {
        assert_eq!(grid_steps(1.0, 0.01).unwrap(), 100);
        assert!(grid_steps(1.0, 0.3).is_err());
        assert!(grid_steps(0.0, 0.1).is_err());
    }
}
