use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::noise::NoiseConfig;
use crate::biomech::ChainModel;
use crate::error::{Error, Result};
use crate::optim::LbfgsbOptions;

/// When a closed-loop trial stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TrialMode {
    /// Run for a fixed movement time, as when replaying a recorded trial.
    Replication { duration: f64 },
    /// Run until the cursor has rested in the target for `hold_time`, or `max_sim_time` passes.
    Free { target_radius: f64, speed_threshold: f64, hold_time: f64 },
}

impl TrialMode {
    pub fn iso_free() -> Self {
        TrialMode::Free { target_radius: 0.025, speed_threshold: 0.5, hold_time: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Horizon N in control steps.
    pub horizon: usize,
    pub control_dt: f64,
    pub physics_dt: f64,
    pub solver: LbfgsbOptions,
    pub u_lo: DVector<f64>,
    pub u_hi: DVector<f64>,
    pub noise: NoiseConfig,
    pub warm_start: bool,
    pub max_sim_time: f64,
    pub mode: TrialMode,
    /// Evaluate finite-difference coordinates concurrently.
    pub parallel_gradient: bool,
}

impl MpcConfig {
    /// Defaults for `model`: N = 8, 40 ms control interval, noise on, free mode.
    pub fn for_model(model: &ChainModel) -> Self {
        let (u_lo, u_hi) = model.control_bounds();
        MpcConfig {
            horizon: 8,
            control_dt: 0.040,
            physics_dt: model.dt,
            solver: LbfgsbOptions::default(),
            u_lo,
            u_hi,
            noise: NoiseConfig::default(),
            warm_start: true,
            max_sim_time: 5.0,
            mode: TrialMode::iso_free(),
            parallel_gradient: false,
        }
    }

    /// Physics steps per control interval.
    pub fn substeps(&self) -> usize {
        (self.control_dt / self.physics_dt).round() as usize
    }

    pub fn validate(&self, model: &ChainModel) -> Result<()> {
        let fail = |m: String| Err(Error::Constraint(m));
        if self.horizon < 2 {
            return fail(format!("horizon N = {} must be at least 2", self.horizon));
        }
        if !(self.physics_dt > 0.0) || !(self.control_dt > 0.0) {
            return fail("sampling times must be positive".into());
        }
        let ratio = self.control_dt / self.physics_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return fail(format!(
                "control_dt {} s is not an integer multiple of physics_dt {} s",
                self.control_dt, self.physics_dt
            ));
        }
        if (self.physics_dt - model.dt).abs() > 1e-15 {
            return fail(format!("physics_dt {} s differs from the model step {} s", self.physics_dt, model.dt));
        }
        let n = model.dof();
        if self.u_lo.len() != n || self.u_hi.len() != n {
            return fail(format!("control bounds must have {n} entries"));
        }
        for i in 0..n {
            let (lo, hi) = (self.u_lo[i], self.u_hi[i]);
            if !(lo <= 0.0 && 0.0 <= hi && lo < hi) {
                return fail(format!("control bounds of joint {i} [{lo}, {hi}] must bracket zero"));
            }
            if (lo.abs().max(hi) - 1.0).abs() > 1e-12 {
                return fail(format!("control bounds of joint {i} [{lo}, {hi}] are not normalized to 1"));
            }
        }
        let s = &self.solver;
        if !(s.ftol >= 0.0 && s.gtol >= 0.0 && s.eps > 0.0) || s.maxfun == 0 || s.memory == 0 {
            return fail("solver tolerances must be non-negative, eps positive, maxfun and memory non-zero".into());
        }
        if !(self.noise.signal_dependent_std_ratio >= 0.0 && self.noise.constant_std >= 0.0) {
            return fail("noise standard deviations must be non-negative".into());
        }
        if !(self.max_sim_time > 0.0) {
            return fail("max_sim_time must be positive".into());
        }
        match self.mode {
            TrialMode::Replication { duration } if !(duration > 0.0) => fail("replication duration must be positive".into()),
            TrialMode::Free { target_radius, speed_threshold, hold_time }
                if !(target_radius > 0.0 && speed_threshold > 0.0 && hold_time >= 0.0) =>
            {
                fail("free-mode thresholds must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let m = ChainModel::paper_arm();
        let c = MpcConfig::for_model(&m);
        c.validate(&m).unwrap();
        assert_eq!(c.substeps(), 20);
    }

    #[test]
    fn rejects_fractional_substeps_and_short_horizon() {
        let m = ChainModel::paper_arm();
        let mut c = MpcConfig::for_model(&m);
        c.control_dt = 0.041;
        assert!(c.validate(&m).is_err());
        let mut c = MpcConfig::for_model(&m);
        c.horizon = 1;
        assert!(c.validate(&m).is_err());
    }
}
