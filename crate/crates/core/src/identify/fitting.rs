use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reference::ReferenceTrajectory;
use super::rmse::rmse_joint;
use crate::biomech::{gravity_torque, BodyState, ChainModel};
use crate::control::{run_mpc, CostFamily, CostSpec, MpcConfig, NoiseConfig, SystemState, TrialMode};
use crate::error::{Error, Result};
use crate::interaction::TechniqueSpec;
use crate::optim::cmaes::{self, CmaesOptions};

/// Initial system state of a reference trial. Without a recorded muscle state the arm is assumed
/// to hold its posture against gravity.
pub fn initial_state(reference: &ReferenceTrajectory, model: &ChainModel, technique: &TechniqueSpec) -> Result<SystemState> {
    if reference.is_empty() {
        return Err(Error::InvalidArgument("empty reference trajectory".into()));
    }
    let mut body = BodyState::at_rest(reference.q[0].clone());
    body.qdot = reference.qdot[0].clone();
    body.qddot = reference.qddot[0].clone();
    body.sigma = match &reference.meta.sigma0 {
        Some(s) => s.clone(),
        None => gravity_torque(model, &body.q).component_div(&model.max_torque),
    };
    if let Some(sd) = &reference.meta.sigma_dot0 {
        body.sigma_dot = sd.clone();
    }
    Ok(SystemState::from_body(body, model, technique))
}

/// Joint-angle RMSE between the noise-free simulation with weights (r1, r2) and one reference.
pub fn trial_rmse(
    r1: f64,
    r2: f64,
    reference: &ReferenceTrajectory,
    model: &ChainModel,
    family: CostFamily,
    technique: &TechniqueSpec,
    config: &MpcConfig,
) -> Result<f64> {
    let target = reference
        .meta
        .target
        .ok_or_else(|| Error::InvalidArgument("reference trial has no target position".into()))?;
    let spec = CostSpec::new(family, r1, r2, target)?;
    let mut cfg = config.clone();
    cfg.noise = NoiseConfig::off();
    cfg.mode = TrialMode::Replication { duration: reference.duration() };
    let x0 = initial_state(reference, model, technique)?;
    let log = run_mpc(&x0, model, &spec, technique, &cfg)?;
    if let Some(reason) = log.aborted {
        return Err(Error::SolverFailure { message: reason, diagnostic: None });
    }
    let q: Vec<DVector<f64>> = log.rows.into_iter().map(|r| r.q).collect();
    rmse_joint(&q, &reference.q)
}

/// Sum of per-trial joint-angle RMSEs; +∞ when any simulation fails.
pub fn fitting_loss(
    r1: f64,
    r2: f64,
    trials: &[ReferenceTrajectory],
    model: &ChainModel,
    family: CostFamily,
    technique: &TechniqueSpec,
    config: &MpcConfig,
) -> f64 {
    if trials.is_empty() {
        return f64::INFINITY;
    }
    let per: Vec<f64> = trials
        .par_iter()
        .map(|t| trial_rmse(r1, r2, t, model, family, technique, config).unwrap_or(f64::INFINITY))
        .collect();
    per.iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEvaluation {
    pub generation: usize,
    pub r1: f64,
    pub r2: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub r1: f64,
    pub r2: f64,
    pub loss: f64,
    pub history: Vec<FitEvaluation>,
}

/// Initial CMA-ES mean, in log10 of (r1, r2).
pub const FIT_START_LOG10: [f64; 2] = [-2.0, -4.0];

/// Fits (r1, r2) by CMA-ES in log10 space; `opts.max_evals` is the evaluation budget.
pub fn cmaes_fit(
    trials: &[ReferenceTrajectory],
    model: &ChainModel,
    family: CostFamily,
    technique: &TechniqueSpec,
    config: &MpcConfig,
    opts: &CmaesOptions,
) -> Result<FitResult> {
    if trials.is_empty() {
        return Err(Error::InvalidArgument("weight fitting needs at least one trial".into()));
    }
    let f = |x: &[f64]| fitting_loss(10f64.powf(x[0]), 10f64.powf(x[1]), trials, model, family, technique, config);
    let res = cmaes::minimize(f, &FIT_START_LOG10, opts);
    let history: Vec<FitEvaluation> = res
        .history
        .iter()
        .map(|e| FitEvaluation { generation: e.generation, r1: 10f64.powf(e.x[0]), r2: 10f64.powf(e.x[1]), loss: e.value })
        .collect();
    if !res.best_value.is_finite() {
        return Err(Error::SolverFailure { message: "every weight candidate failed to simulate".into(), diagnostic: None });
    }
    Ok(FitResult { r1: 10f64.powf(res.best_x[0]), r2: 10f64.powf(res.best_x[1]), loss: res.best_value, history })
}
