use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::biomech::ChainModel;
use crate::control::{solve_ocp, CostSpec, MpcConfig, Plant, SystemState};
use crate::error::{Error, Result};
use crate::interaction::TechniqueSpec;

/// Default deviation threshold for [`TurnpikeCurve::time_to_exceed`], m.
pub const TURNPIKE_EPSILON: f64 = 0.01;

/// Open-loop trajectory sampled at every physics step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoop {
    pub horizon: usize,
    pub times: Vec<f64>,
    pub cursor: Vec<Vector3<f64>>,
    pub q: Vec<DVector<f64>>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnpikeCurve {
    pub horizon: usize,
    pub times: Vec<f64>,
    /// ‖x_p − x_p,ref‖ per sample.
    pub cursor_deviation: Vec<f64>,
    /// ‖q − q_ref‖ over all joints per sample.
    pub joint_deviation: Vec<f64>,
}

impl TurnpikeCurve {
    /// First time the cursor deviation exceeds `eps`; `None` if it stays within it.
    pub fn time_to_exceed(&self, eps: f64) -> Option<f64> {
        self.cursor_deviation.iter().position(|&d| d > eps).map(|i| self.times[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnpikeResult {
    pub reference: OpenLoop,
    /// One entry per requested horizon, in request order; failures are reported per horizon.
    pub curves: Vec<(usize, std::result::Result<TurnpikeCurve, String>)>,
}

/// Solves the open-loop problem of horizon `n` and applies the whole control sequence. Past its
/// own horizon the last control is held so the trajectory spans `span` control steps.
pub fn open_loop(
    x0: &SystemState,
    n: usize,
    span: usize,
    model: &ChainModel,
    spec: &CostSpec,
    technique: &TechniqueSpec,
    config: &MpcConfig,
) -> Result<OpenLoop> {
    let mut cfg = config.clone();
    cfg.horizon = n;
    cfg.validate(model)?;
    let guess = vec![DVector::zeros(model.dof()); n];
    let sol = solve_ocp(x0, &guess, model, technique, spec, &cfg)?;
    let plant = Plant::new(model, technique);
    let substeps = cfg.substeps();
    let mut x = x0.clone();
    let mut out = OpenLoop { horizon: n, times: vec![0.0], cursor: vec![x.cursor()], q: vec![x.body.q.clone()], cost: sol.cost };
    for k in 0..span {
        let u = &sol.u[k.min(n - 1)];
        for _ in 0..substeps {
            plant.step(&mut x, u)?;
            out.times.push(out.times.len() as f64 * model.dt);
            out.cursor.push(x.cursor());
            out.q.push(x.body.q.clone());
        }
    }
    Ok(out)
}

/// Deviation of per-horizon open-loop trajectories from the `n_ref` one.
pub fn turnpike_diagnostic(
    x0: &SystemState,
    model: &ChainModel,
    spec: &CostSpec,
    technique: &TechniqueSpec,
    n_list: &[usize],
    n_ref: usize,
    config: &MpcConfig,
) -> Result<TurnpikeResult> {
    if n_list.iter().any(|&n| n > n_ref || n == 0) {
        return Err(Error::InvalidArgument(format!("horizons {n_list:?} must lie in 1..={n_ref}")));
    }
    let mut cfg = config.clone();
    cfg.noise.enabled = false;
    let reference = open_loop(x0, n_ref, n_ref, model, spec, technique, &cfg)?;
    let curves = n_list
        .iter()
        .map(|&n| {
            let c = open_loop(x0, n, n_ref, model, spec, technique, &cfg).map(|ol| TurnpikeCurve {
                horizon: n,
                times: ol.times.clone(),
                cursor_deviation: ol.cursor.iter().zip(&reference.cursor).map(|(a, b)| (a - b).norm()).collect(),
                joint_deviation: ol.q.iter().zip(&reference.q).map(|(a, b)| (a - b).norm()).collect(),
            });
            (n, c.map_err(|e| e.to_string()))
        })
        .collect();
    Ok(TurnpikeResult { reference, curves })
}
