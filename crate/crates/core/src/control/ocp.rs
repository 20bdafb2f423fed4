use std::sync::Mutex;

use nalgebra::{DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::MpcConfig;
use super::cost::{commanded_torque_derivative, stage_cost_terms, CostFamily, CostSpec};
use crate::biomech::{activation_to_torque, forward_kinematics, step_user_in_place, BodyState, ChainModel};
use crate::error::{Error, Result};
use crate::interaction::{interface_step, InterfaceState, TechniqueSpec};
use crate::optim::lbfgsb::{self, fd_step, Objective, Termination};

/// Complete interaction state: body, device and interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub body: BodyState,
    pub x_dev: Vector3<f64>,
    pub iface: InterfaceState,
}

impl SystemState {
    /// Derives device and cursor from the body.
    pub fn from_body(body: BodyState, model: &ChainModel, technique: &TechniqueSpec) -> Self {
        let x_dev = forward_kinematics(model, &body.q);
        let iface = InterfaceState { x_p: technique.transfer(&x_dev) };
        SystemState { body, x_dev, iface }
    }

    pub fn cursor(&self) -> Vector3<f64> {
        self.iface.x_p
    }
}

/// Model and technique driven together: the system dynamics f.
#[derive(Debug, Clone, Copy)]
pub struct Plant<'a> {
    pub model: &'a ChainModel,
    pub technique: &'a TechniqueSpec,
}

impl<'a> Plant<'a> {
    pub fn new(model: &'a ChainModel, technique: &'a TechniqueSpec) -> Self {
        Plant { model, technique }
    }

    /// One physics step followed by the device and interface updates.
    pub fn step(&self, x: &mut SystemState, u: &DVector<f64>) -> Result<()> {
        step_user_in_place(&mut x.body, u, self.model)?;
        self.refresh(x);
        Ok(())
    }

    /// Holds `u` for `substeps` physics steps. Device and cursor are updated once at the end.
    pub fn hold(&self, x: &mut SystemState, u: &DVector<f64>, substeps: usize) -> Result<()> {
        for _ in 0..substeps {
            step_user_in_place(&mut x.body, u, self.model)?;
        }
        self.refresh(x);
        Ok(())
    }

    fn refresh(&self, x: &mut SystemState) {
        x.x_dev = forward_kinematics(self.model, &x.body.q);
        x.iface = interface_step(&x.iface, &x.x_dev, self.technique);
    }
}

/// ℓ(x, u) with the auxiliary torque rate required by CTC.
pub fn stage_cost(x: &SystemState, u: &DVector<f64>, tau_dot: Option<&DVector<f64>>, spec: &CostSpec) -> Result<f64> {
    stage_cost_terms(&x.iface.x_p, &x.body.qddot, u, tau_dot, spec)
}

#[derive(Debug, Clone)]
pub struct Rollout {
    /// States at control-step boundaries, `N + 1` entries.
    pub states: Vec<SystemState>,
    pub stage_costs: Vec<f64>,
    pub total: f64,
}

/// Stage costs over a horizon given the boundary states.
pub fn horizon_costs(states: &[SystemState], u_seq: &[DVector<f64>], spec: &CostSpec, model: &ChainModel, control_dt: f64) -> Result<Vec<f64>> {
    let tau_dot = match spec.family {
        CostFamily::Ctc => {
            let tau: Vec<DVector<f64>> = states.iter().map(|s| activation_to_torque(&s.body.sigma, model)).collect();
            Some(commanded_torque_derivative(&tau, control_dt)?)
        }
        _ => None,
    };
    u_seq
        .iter()
        .enumerate()
        .map(|(k, u)| stage_cost(&states[k], u, tau_dot.as_ref().map(|t| &t[k]), spec))
        .collect()
}

fn simulate_from(plant: &Plant, states: &mut Vec<SystemState>, u_seq: &[DVector<f64>], substeps: usize) -> Result<()> {
    let start = states.len() - 1;
    for u in &u_seq[start..] {
        let mut next = states.last().expect("non-empty state list").clone();
        plant.hold(&mut next, u, substeps)?;
        states.push(next);
    }
    Ok(())
}

/// Open-loop simulation of `u_seq`, each control held for one control interval, and its cost
/// J_N = Σ_{k<N} ℓ(x(k), u(k)).
pub fn rollout(
    x0: &SystemState,
    u_seq: &[DVector<f64>],
    model: &ChainModel,
    technique: &TechniqueSpec,
    spec: &CostSpec,
    config: &MpcConfig,
) -> Result<Rollout> {
    let plant = Plant::new(model, technique);
    let mut states = Vec::with_capacity(u_seq.len() + 1);
    states.push(x0.clone());
    simulate_from(&plant, &mut states, u_seq, config.substeps())?;
    let stage_costs = horizon_costs(&states, u_seq, spec, model, config.control_dt)?;
    let total = stage_costs.iter().sum();
    Ok(Rollout { states, stage_costs, total })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcpSolution {
    pub u: Vec<DVector<f64>>,
    pub cost: f64,
    pub initial_cost: f64,
    pub nit: usize,
    pub nfev: usize,
    pub status: Termination,
}

struct OcpObjective<'a> {
    x0: &'a SystemState,
    plant: Plant<'a>,
    spec: &'a CostSpec,
    dof: usize,
    substeps: usize,
    control_dt: f64,
    parallel: bool,
    cache: Mutex<Option<(Vec<f64>, Vec<SystemState>)>>,
}

impl OcpObjective<'_> {
    fn unpack(&self, z: &[f64]) -> Vec<DVector<f64>> {
        z.chunks(self.dof).map(DVector::from_column_slice).collect()
    }

    fn total(&self, states: &[SystemState], u: &[DVector<f64>]) -> f64 {
        match horizon_costs(states, u, self.spec, self.plant.model, self.control_dt) {
            Ok(c) => c.iter().sum(),
            Err(_) => f64::NAN,
        }
    }

    fn states(&self, z: &[f64]) -> Option<Vec<SystemState>> {
        if let Some((cz, cs)) = self.cache.lock().expect("cache lock").as_ref() {
            if cz.as_slice() == z {
                return Some(cs.clone());
            }
        }
        let u = self.unpack(z);
        let mut states = vec![self.x0.clone()];
        simulate_from(&self.plant, &mut states, &u, self.substeps).ok()?;
        *self.cache.lock().expect("cache lock") = Some((z.to_vec(), states.clone()));
        Some(states)
    }

    // J with coordinate `c` shifted by `h`, reusing the unaffected prefix of `base`.
    fn perturbed(&self, z: &[f64], base: &[SystemState], c: usize, h: f64) -> f64 {
        let k = c / self.dof;
        let mut u = self.unpack(z);
        u[k][c % self.dof] += h;
        let mut states = base[..=k].to_vec();
        match simulate_from(&self.plant, &mut states, &u, self.substeps) {
            Ok(()) => self.total(&states, &u),
            Err(_) => f64::NAN,
        }
    }
}

impl Objective for OcpObjective<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        match self.states(z) {
            Some(states) => self.total(&states, &self.unpack(z)),
            None => f64::NAN,
        }
    }

    fn gradient(&self, z: &[f64], fz: f64, hi: &[f64], eps: f64) -> (Vec<f64>, usize) {
        let Some(base) = self.states(z) else {
            return (vec![f64::NAN; z.len()], 0);
        };
        let coord = |c: usize| {
            let h = fd_step(z[c], hi[c], eps);
            (self.perturbed(z, &base, c, h) - fz) / h
        };
        let g = if self.parallel {
            (0..z.len()).into_par_iter().map(coord).collect()
        } else {
            (0..z.len()).map(coord).collect()
        };
        (g, z.len())
    }
}

/// Finite-horizon optimal control from `x0`, starting the search at `init_guess`.
pub fn solve_ocp(
    x0: &SystemState,
    init_guess: &[DVector<f64>],
    model: &ChainModel,
    technique: &TechniqueSpec,
    spec: &CostSpec,
    config: &MpcConfig,
) -> Result<OcpSolution> {
    let n = model.dof();
    let horizon = init_guess.len();
    if horizon == 0 || init_guess.iter().any(|u| u.len() != n) {
        return Err(Error::InvalidArgument(format!("initial guess must hold {n}-vectors for every horizon step")));
    }
    let objective = OcpObjective {
        x0,
        plant: Plant::new(model, technique),
        spec,
        dof: n,
        substeps: config.substeps(),
        control_dt: config.control_dt,
        parallel: config.parallel_gradient,
        cache: Mutex::new(None),
    };
    let z0: Vec<f64> = init_guess.iter().flat_map(|u| u.iter().copied()).collect();
    let lo: Vec<f64> = (0..horizon).flat_map(|_| config.u_lo.iter().copied()).collect();
    let hi: Vec<f64> = (0..horizon).flat_map(|_| config.u_hi.iter().copied()).collect();
    let mut start = z0.clone();
    for i in 0..start.len() {
        start[i] = start[i].clamp(lo[i], hi[i]);
    }
    let initial_cost = objective.value(&start);
    let sol = lbfgsb::minimize(&objective, &start, &lo, &hi, &config.solver).map_err(|e| Error::SolverFailure {
        message: format!("objective is {} at the initial guess", e.value),
        diagnostic: Some(format!("q = {:?}, qdot = {:?}", x0.body.q.as_slice(), x0.body.qdot.as_slice())),
    })?;
    Ok(OcpSolution {
        u: objective.unpack(&sol.x),
        cost: sol.f,
        initial_cost,
        nit: sol.nit,
        nfev: sol.nfev,
        status: sol.status,
    })
}
