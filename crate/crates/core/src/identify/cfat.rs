use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reference::ReferenceTrajectory;
use crate::biomech::{bias_torque, mass_matrix, step_torque_in_place, BodyState, ChainModel};
use crate::error::{Error, Result};
use crate::optim::lbfgsb::{self, LbfgsbOptions, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfatOptions {
    /// Weights of the joint angle, velocity and acceleration errors.
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Symmetric box on the applied torques, N·m.
    pub tau_bound: f64,
    /// Angle error (rad) that counts toward divergence.
    pub divergence_threshold: f64,
    pub divergence_steps: usize,
    pub solver: LbfgsbOptions,
}

impl Default for CfatOptions {
    fn default() -> Self {
        CfatOptions {
            alpha: 1000.0,
            beta: 50.0,
            gamma: 0.01,
            tau_bound: 100.0,
            divergence_threshold: 0.05,
            divergence_steps: 10,
            solver: LbfgsbOptions { ftol: 1e-12, gtol: 1e-9, maxiter: 200, ..Default::default() },
        }
    }
}

/// Reference sample the one-step simulation is compared against.
#[derive(Debug, Clone, Copy)]
pub struct CfatTarget<'a> {
    pub q: &'a DVector<f64>,
    pub qdot: &'a DVector<f64>,
    pub qddot: &'a DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct CfatStep {
    pub tau: DVector<f64>,
    pub loss: f64,
    pub initial_loss: f64,
    /// Set when the optimizer did not converge.
    pub flagged: bool,
    /// Body after one step under `tau`.
    pub next: BodyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfatResult {
    /// Entry k acts between samples k and k+1.
    pub tau_seq: Vec<DVector<f64>>,
    pub sigma0: DVector<f64>,
    pub sigma_dot0: DVector<f64>,
    pub losses: Vec<f64>,
    pub flagged: Vec<usize>,
    /// Forward-chained joint angles, one per reference sample.
    pub q_sim: Vec<DVector<f64>>,
}

fn advance(model: &ChainModel, state: &BodyState, tau: &[f64]) -> Option<BodyState> {
    let mut s = state.clone();
    step_torque_in_place(&mut s, tau, model).ok()?;
    Some(s)
}

fn loss_of(next: &BodyState, target: &CfatTarget, opts: &CfatOptions) -> f64 {
    opts.alpha * (&next.q - target.q).norm()
        + opts.beta * (&next.qdot - target.qdot).norm()
        + opts.gamma * (&next.qddot - target.qddot).norm()
}

/// Weighted sum of Euclidean angle, velocity and acceleration errors after one step under `tau`.
pub fn cfat_loss(model: &ChainModel, state: &BodyState, target: &CfatTarget, tau: &[f64], opts: &CfatOptions) -> f64 {
    advance(model, state, tau).map_or(f64::NAN, |s| loss_of(&s, target, opts))
}

/// Applied torque that best reproduces `target` one physics step after `state`.
pub fn cfat_step(
    model: &ChainModel,
    state: &BodyState,
    target: &CfatTarget,
    tau_init: &DVector<f64>,
    opts: &CfatOptions,
) -> Result<CfatStep> {
    let n = model.dof();
    let lo = vec![-opts.tau_bound; n];
    let hi = vec![opts.tau_bound; n];
    let f = |t: &[f64]| cfat_loss(model, state, target, t, opts);
    let start: Vec<f64> = tau_init.iter().map(|t| t.clamp(-opts.tau_bound, opts.tau_bound)).collect();
    let initial_loss = f(&start);
    let (tau, flagged) = match lbfgsb::minimize(&f, &start, &lo, &hi, &opts.solver) {
        Ok(sol) if sol.f <= initial_loss => {
            (DVector::from_vec(sol.x), matches!(sol.status, Termination::MaxFun | Termination::MaxIter))
        }
        _ => (DVector::from_vec(start), true),
    };
    let next = advance(model, state, tau.as_slice())
        .ok_or_else(|| Error::DegenerateConfiguration(format!("CFAT step from q = {:?} failed", state.q.as_slice())))?;
    let loss = loss_of(&next, target, opts);
    Ok(CfatStep { tau, loss, initial_loss, flagged, next })
}

/// Runs CFAT along a whole reference, chaining each step from the simulated (not recorded) state.
pub fn cfat_run(model: &ChainModel, reference: &ReferenceTrajectory, opts: &CfatOptions) -> Result<CfatResult> {
    reference.validate()?;
    let dt = reference.dt()?;
    if (dt - model.dt).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("reference step {dt} s differs from the model step {} s", model.dt)));
    }
    if reference.dof() != model.dof() {
        return Err(Error::LengthMismatch { left: reference.dof(), right: model.dof() });
    }
    let m = reference.len();
    let mut state = BodyState::at_rest(reference.q[0].clone());
    state.qdot = reference.qdot[0].clone();
    state.qddot = reference.qddot[0].clone();
    let mut tau_prev = bias_torque(model, &state.q, &state.qdot);
    let mut out = CfatResult {
        tau_seq: Vec::with_capacity(m - 1),
        sigma0: DVector::zeros(model.dof()),
        sigma_dot0: DVector::zeros(model.dof()),
        losses: Vec::with_capacity(m - 1),
        flagged: Vec::new(),
        q_sim: vec![state.q.clone()],
    };
    let mut over = 0;
    for k in 0..m - 1 {
        let target = CfatTarget { q: &reference.q[k + 1], qdot: &reference.qdot[k + 1], qddot: &reference.qddot[k + 1] };
        let step = cfat_step(model, &state, &target, &tau_prev, opts)?;
        if step.flagged {
            out.flagged.push(k);
        }
        let err = (&step.next.q - target.q).norm();
        over = if err > opts.divergence_threshold { over + 1 } else { 0 };
        if over >= opts.divergence_steps {
            return Err(Error::CfatDiverged { step: k, error: err, threshold: opts.divergence_threshold });
        }
        state = step.next;
        out.q_sim.push(state.q.clone());
        out.losses.push(step.loss);
        tau_prev = step.tau.clone();
        out.tau_seq.push(step.tau);
    }
    let g = &model.max_torque;
    out.sigma0 = out.tau_seq[0].component_div(g);
    if let Some(t1) = out.tau_seq.get(1) {
        out.sigma_dot0 = (t1 - &out.tau_seq[0]).component_div(g) / dt;
    }
    Ok(out)
}

/// [`cfat_run`] over many references in parallel.
pub fn cfat_run_all(model: &ChainModel, references: &[ReferenceTrajectory], opts: &CfatOptions) -> Vec<Result<CfatResult>> {
    references.par_iter().map(|r| cfat_run(model, r, opts)).collect()
}

/// Joint angles obtained by applying `tau_seq` open loop from the reference's first sample.
pub fn reapply_torques(model: &ChainModel, reference: &ReferenceTrajectory, tau_seq: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let mut state = BodyState::at_rest(reference.q[0].clone());
    state.qdot = reference.qdot[0].clone();
    let mut q = vec![state.q.clone()];
    for tau in tau_seq {
        step_torque_in_place(&mut state, tau.as_slice(), model)?;
        q.push(state.q.clone());
    }
    Ok(q)
}

/// Classical inverse-dynamics torques M(q) q̈ + c(q, q̇) + g(q) along the reference, for contrast
/// with CFAT.
pub fn inverse_dynamics_torques(model: &ChainModel, reference: &ReferenceTrajectory) -> Vec<DVector<f64>> {
    (0..reference.len())
        .map(|k| {
            let (q, qd, qdd) = (&reference.q[k], &reference.qdot[k], &reference.qddot[k]);
            mass_matrix(model, q) * qdd + bias_torque(model, q, qd)
        })
        .collect()
}
