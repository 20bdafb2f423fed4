use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::control::TrialLog;
use crate::error::{Error, Result};

/// Metadata carried alongside a recorded or synthesized movement.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub technique: Option<String>,
    pub target_index: Option<usize>,
    pub start_index: Option<usize>,
    pub target: Option<Vector3<f64>>,
    /// Cost weights (r1, r2) used to synthesize the trial.
    pub weights: Option<(f64, f64)>,
    pub seed: Option<u64>,
    /// Muscle state at the first sample, when known.
    pub sigma0: Option<DVector<f64>>,
    pub sigma_dot0: Option<DVector<f64>>,
}

/// Joint trajectory on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub times: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub qdot: Vec<DVector<f64>>,
    pub qddot: Vec<DVector<f64>>,
    pub cursor: Option<Vec<Vector3<f64>>>,
    /// Ground-truth applied torques of synthetic trials; entry k acts between samples k and k+1.
    pub tau: Option<Vec<DVector<f64>>>,
    pub meta: TrialMeta,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.q.first().map_or(0, |q| q.len())
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Sampling interval, checked to be uniform.
    pub fn dt(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::InvalidArgument("trajectory needs at least two samples".into()));
        }
        let dt = self.times[1] - self.times[0];
        let uniform = self.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0));
        if !(dt > 0.0) || !uniform {
            return Err(Error::InvalidArgument("trajectory is not on a uniform increasing grid".into()));
        }
        Ok(dt)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.len();
        let n = self.dof();
        let same = |v: &[DVector<f64>]| v.len() == m && v.iter().all(|x| x.len() == n);
        if !same(&self.q) || !same(&self.qdot) || !same(&self.qddot) {
            return Err(Error::InvalidArgument("joint channels differ in length or dimension".into()));
        }
        if self.cursor.as_ref().is_some_and(|c| c.len() != m) {
            return Err(Error::LengthMismatch { left: self.cursor.as_ref().map_or(0, |c| c.len()), right: m });
        }
        if let Some(t) = &self.tau {
            if t.len() + 1 != m && t.len() != m {
                return Err(Error::LengthMismatch { left: t.len(), right: m - 1 });
            }
        }
        Ok(())
    }

    /// Reference view of a closed-loop trial, ground-truth torques included.
    pub fn from_trial(log: &TrialLog, max_torque: &DVector<f64>) -> Self {
        let rows = &log.rows;
        let tau = rows[1..].iter().map(|r| r.sigma.component_mul(max_torque)).collect();
        ReferenceTrajectory {
            times: rows.iter().map(|r| r.t).collect(),
            q: rows.iter().map(|r| r.q.clone()).collect(),
            qdot: rows.iter().map(|r| r.qdot.clone()).collect(),
            qddot: rows.iter().map(|r| r.qddot.clone()).collect(),
            cursor: Some(rows.iter().map(|r| r.x_p).collect()),
            tau: Some(tau),
            meta: TrialMeta {
                target: Some(log.target),
                seed: Some(log.seed),
                sigma0: rows.first().map(|r| r.sigma.clone()),
                sigma_dot0: rows.first().map(|r| r.sigma_dot.clone()),
                ..Default::default()
            },
        }
    }
}
