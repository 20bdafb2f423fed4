use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{MpcConfig, TrialMode};
use super::cost::CostSpec;
use super::noise::inject_noise;
use super::ocp::{solve_ocp, Plant, SystemState};
use crate::biomech::{BodyState, ChainModel};
use crate::error::Result;
use crate::interaction::TechniqueSpec;
use crate::optim::Termination;

/// One physics step of a closed-loop trial. Controls are the ones applied from this state on;
/// the final row repeats the last applied control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub qddot: DVector<f64>,
    pub sigma: DVector<f64>,
    pub sigma_dot: DVector<f64>,
    pub u_cmd: DVector<f64>,
    pub u_noisy: DVector<f64>,
    pub x_ee: Vector3<f64>,
    pub x_p: Vector3<f64>,
}

impl LogRow {
    /// Body state recorded in this row, e.g. to continue a session from the end of a trial.
    pub fn body(&self) -> BodyState {
        BodyState {
            q: self.q.clone(),
            qdot: self.qdot.clone(),
            qddot: self.qddot.clone(),
            sigma: self.sigma.clone(),
            sigma_dot: self.sigma_dot.clone(),
        }
    }

    fn new(t: f64, x: &SystemState, u_cmd: DVector<f64>, u_noisy: DVector<f64>) -> Self {
        LogRow {
            t,
            q: x.body.q.clone(),
            qdot: x.body.qdot.clone(),
            qddot: x.body.qddot.clone(),
            sigma: x.body.sigma.clone(),
            sigma_dot: x.body.sigma_dot.clone(),
            u_cmd,
            u_noisy,
            x_ee: x.x_dev,
            x_p: x.iface.x_p,
        }
    }
}

/// Optimizer outcome for one receding-horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub step: usize,
    pub t: f64,
    pub nit: usize,
    pub nfev: usize,
    pub initial_cost: f64,
    pub cost: f64,
    pub status: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub rows: Vec<LogRow>,
    pub solver: Vec<SolverRecord>,
    pub target: Vector3<f64>,
    pub seed: u64,
    /// First row of the validated hold in free mode.
    pub hit_index: Option<usize>,
    /// Set when the trial stopped on a solver or dynamics failure.
    pub aborted: Option<String>,
}

impl TrialLog {
    pub fn duration(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    pub fn cursor(&self) -> Vec<Vector3<f64>> {
        self.rows.iter().map(|r| r.x_p).collect()
    }

    pub fn final_distance(&self) -> f64 {
        self.rows.last().map_or(f64::INFINITY, |r| (r.x_p - self.target).norm())
    }
}

/// Left shift by one control step, repeating the last entry.
pub fn shift_guess(prev: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut next: Vec<DVector<f64>> = prev[1..].to_vec();
    next.push(prev[prev.len() - 1].clone());
    next
}

/// Receding-horizon closed loop from `x0` toward `spec.target`.
pub fn run_mpc(
    x0: &SystemState,
    model: &ChainModel,
    spec: &CostSpec,
    technique: &TechniqueSpec,
    config: &MpcConfig,
) -> Result<TrialLog> {
    config.validate(model)?;
    spec.validate()?;
    let plant = Plant::new(model, technique);
    let n = model.dof();
    let dt = model.dt;
    let substeps = config.substeps();
    let limit = match config.mode {
        TrialMode::Replication { duration } => (duration / dt).round() as usize,
        TrialMode::Free { .. } => (config.max_sim_time / dt).round() as usize,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.noise.seed);
    let mut state = x0.clone();
    let mut log = TrialLog {
        rows: vec![LogRow::new(0.0, &state, DVector::zeros(n), DVector::zeros(n))],
        solver: Vec::new(),
        target: spec.target,
        seed: config.noise.seed,
        hit_index: None,
        aborted: None,
    };
    let mut guess = vec![DVector::zeros(n); config.horizon];
    let mut steps = 0usize;
    let mut hold_start: Option<usize> = None;

    'control: for k in 0.. {
        if steps >= limit {
            break;
        }
        let t = steps as f64 * dt;
        let sol = match solve_ocp(&state, &guess, model, technique, spec, config) {
            Ok(s) => s,
            Err(e) => {
                log.aborted = Some(e.to_string());
                break;
            }
        };
        log.solver.push(SolverRecord {
            step: k,
            t,
            nit: sol.nit,
            nfev: sol.nfev,
            initial_cost: sol.initial_cost,
            cost: sol.cost,
            status: sol.status,
        });
        let u_cmd = sol.u[0].clone();
        let u_noisy = inject_noise(&u_cmd, &config.noise, &config.u_lo, &config.u_hi, &mut rng);
        let last = log.rows.last_mut().expect("log has an initial row");
        last.u_cmd = u_cmd.clone();
        last.u_noisy = u_noisy.clone();
        guess = if config.warm_start { shift_guess(&sol.u) } else { vec![DVector::zeros(n); config.horizon] };

        for _ in 0..substeps {
            if steps >= limit {
                break 'control;
            }
            if let Err(e) = plant.step(&mut state, &u_noisy) {
                log.aborted = Some(e.to_string());
                break 'control;
            }
            steps += 1;
            let prev = log.rows.last().expect("log has an initial row").x_p;
            log.rows.push(LogRow::new(steps as f64 * dt, &state, u_cmd.clone(), u_noisy.clone()));

            if let TrialMode::Free { target_radius, speed_threshold, hold_time } = config.mode {
                let x_p = state.iface.x_p;
                let speed = (x_p - prev).norm() / dt;
                if (x_p - spec.target).norm() < target_radius && speed < speed_threshold {
                    let start = *hold_start.get_or_insert(steps);
                    if (steps - start) as f64 * dt >= hold_time - 1e-12 {
                        log.hit_index = Some(start);
                        break 'control;
                    }
                } else {
                    hold_start = None;
                }
            }
        }
    }
    Ok(log)
}
