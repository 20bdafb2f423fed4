use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::dynamics::{forward_dynamics_raw, Stack};
use super::kinematics::MAX_DOF;
use super::model::ChainModel;
use super::muscle::MuscleDiscretization;
use crate::error::Result;

/// Joint kinematics plus aggregated muscle activation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    /// Acceleration from the most recent forward-dynamics evaluation.
    pub qddot: DVector<f64>,
    pub sigma: DVector<f64>,
    pub sigma_dot: DVector<f64>,
}

impl BodyState {
    pub fn zeros(n: usize) -> Self {
        BodyState {
            q: DVector::zeros(n),
            qdot: DVector::zeros(n),
            qddot: DVector::zeros(n),
            sigma: DVector::zeros(n),
            sigma_dot: DVector::zeros(n),
        }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let mut s = BodyState::zeros(q.len());
        s.q = q;
        s
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// Spring and one-sided damper pushing each joint back into its range.
pub fn joint_limit_torque(q: &DVector<f64>, qdot: &DVector<f64>, model: &ChainModel) -> DVector<f64> {
    let mut tau = joint_limit_spring(q, model);
    let d = joint_limit_damping(q, qdot, model);
    for i in 0..tau.len() {
        tau[i] -= d[i] * qdot[i];
    }
    tau
}

fn joint_limit_spring(q: &DVector<f64>, model: &ChainModel) -> DVector<f64> {
    let k = model.limits.stiffness;
    DVector::from_iterator(
        q.len(),
        q.iter().zip(&model.joints).map(|(&qi, j)| {
            if qi > j.range[1] {
                -k * (qi - j.range[1])
            } else if qi < j.range[0] {
                -k * (qi - j.range[0])
            } else {
                0.0
            }
        }),
    )
}

// Damping coefficient active on each joint: nonzero only while moving further out of range.
fn joint_limit_damping(q: &DVector<f64>, qdot: &DVector<f64>, model: &ChainModel) -> DVector<f64> {
    let lim = &model.limits;
    DVector::from_iterator(
        q.len(),
        model.joints.iter().enumerate().map(|(i, j)| {
            if q[i] > j.range[1] && qdot[i] > 0.0 {
                lim.damping_at(q[i] - j.range[1], qdot[i])
            } else if q[i] < j.range[0] && qdot[i] < 0.0 {
                lim.damping_at(j.range[0] - q[i], -qdot[i])
            } else {
                0.0
            }
        }),
    )
}

/// Advances the body by one physics step in place.
///
/// Semi-implicit Euler: velocity first, then position with the new velocity. Velocity-dependent
/// torques (passive damping, the limit damper and the Coriolis/centrifugal terms) are linearized
/// at the end-of-step velocity. Damping stays stable on the light distal joints at 2 ms, and the
/// Coriolis part stops the secular energy gain that large passive swings show otherwise.
pub fn step_user_in_place(state: &mut BodyState, u: &DVector<f64>, model: &ChainModel) -> Result<()> {
    let md = MuscleDiscretization::new(model.muscle, model.dt);
    let mut tau = [0.0; MAX_DOF];
    for i in 0..model.dof() {
        (state.sigma[i], state.sigma_dot[i]) = md.step(state.sigma[i], state.sigma_dot[i], u[i]);
        tau[i] = model.max_torque[i] * state.sigma[i];
    }
    integrate(state, tau, model)
}

/// One physics step driven directly by applied joint torques; the muscle state is left untouched.
pub fn step_torque_in_place(state: &mut BodyState, tau: &[f64], model: &ChainModel) -> Result<()> {
    let mut t = [0.0; MAX_DOF];
    t[..model.dof()].copy_from_slice(tau);
    integrate(state, t, model)
}

fn integrate(state: &mut BodyState, mut tau: Stack, model: &ChainModel) -> Result<()> {
    let n = model.dof();
    let (k, lim) = (model.limits.stiffness, &model.limits);
    let mut damping = [0.0; MAX_DOF];
    let mut active = false;
    for (i, j) in model.joints.iter().enumerate() {
        let (q, qd) = (state.q[i], state.qdot[i]);
        damping[i] = j.damping;
        if q > j.range[1] {
            tau[i] -= k * (q - j.range[1]);
            if qd > 0.0 {
                damping[i] += lim.damping_at(q - j.range[1], qd);
            }
        } else if q < j.range[0] {
            tau[i] -= k * (q - j.range[0]);
            if qd < 0.0 {
                damping[i] += lim.damping_at(j.range[0] - q, -qd);
            }
        }
        active |= damping[i] != 0.0;
    }
    let qddot = forward_dynamics_raw(
        model,
        state.q.as_slice(),
        state.qdot.as_slice(),
        &tau[..n],
        active.then_some(&damping[..n]),
        model.dt,
        true,
    )?;
    for i in 0..n {
        state.qdot[i] += model.dt * qddot[i];
        state.q[i] += model.dt * state.qdot[i];
        state.qddot[i] = qddot[i];
    }
    if model.limits.hard_clamp {
        for (i, j) in model.joints.iter().enumerate() {
            if state.q[i] > j.range[1] {
                state.q[i] = j.range[1];
                state.qdot[i] = state.qdot[i].min(0.0);
            } else if state.q[i] < j.range[0] {
                state.q[i] = j.range[0];
                state.qdot[i] = state.qdot[i].max(0.0);
            }
        }
    }
    Ok(())
}

/// f_user: one physics step of the body under control `u`.
pub fn step_user(state: &BodyState, u: &DVector<f64>, model: &ChainModel) -> Result<BodyState> {
    let mut next = state.clone();
    step_user_in_place(&mut next, u, model)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomech::muscle::activation_to_torque;
    use crate::biomech::dynamics::{bias_torque, forward_dynamics, gravity_torque, mass_matrix};
    use crate::biomech::muscle::step_muscle;

    #[test]
    fn limit_spring_direct_formula() {
        let m = ChainModel::paper_arm();
        let mut q = DVector::from_vec(vec![0.0, 1.0, -0.3, 1.0, 0.0, 0.0, 0.0]);
        let z = DVector::zeros(7);
        assert_eq!(joint_limit_torque(&q, &z, &m), z);
        q[3] = m.joints[3].range[1] + 0.1;
        let t = joint_limit_torque(&q, &z, &m);
        assert!((t[3] + 5.0).abs() < 1e-12);
    }

    #[test]
    fn hanging_arm_stays_put() {
        let m = ChainModel::paper_arm();
        let mut s = BodyState::zeros(7);
        let u = DVector::zeros(7);
        for _ in 0..500 {
            step_user_in_place(&mut s, &u, &m).unwrap();
        }
        assert!(s.q.amax() < 1e-9 && s.qdot.amax() < 1e-9);
    }

    #[test]
    fn matches_manual_composition_without_damping() {
        let mut m = ChainModel::paper_arm();
        for j in &mut m.joints {
            j.damping = 0.0;
        }
        let mut s = BodyState::at_rest(DVector::from_vec(vec![0.2, 1.0, -0.3, 1.0, 0.1, 0.0, 0.0]));
        s.qdot = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.1, 0.0, 0.2, -0.1]);
        let u = DVector::from_vec(vec![0.3, 0.5, -0.2, 0.4, 0.1, -0.1, 0.2]);
        let next = step_user(&s, &u, &m).unwrap();

        let (sigma, sigma_dot) = step_muscle(&s.sigma, &s.sigma_dot, &u, &m);
        let tau = activation_to_torque(&sigma, &m) + joint_limit_torque(&s.q, &s.qdot, &m);
        // Dense oracle: C = ½Ṁ + skew part reproducing C q̇ = c, with a central difference for Ṁ.
        let h = 1e-5;
        let mdot = (mass_matrix(&m, &(&s.q + &s.qdot * h)) - mass_matrix(&m, &(&s.q - &s.qdot * h))) / (2.0 * h);
        let c = bias_torque(&m, &s.q, &s.qdot) - gravity_torque(&m, &s.q);
        let w = &c - &mdot * &s.qdot * 0.5;
        let n2 = s.qdot.norm_squared();
        let skew = (&w * s.qdot.transpose() - &s.qdot * w.transpose()) / n2;
        let cm = &mdot * 0.5 + skew;
        assert!((&cm * &s.qdot - &c).amax() < 1e-9);
        let a = mass_matrix(&m, &s.q) + cm * m.dt;
        let qddot = a.lu().solve(&(tau - bias_torque(&m, &s.q, &s.qdot))).unwrap();
        let qdot = &s.qdot + &qddot * m.dt;
        let q = &s.q + &qdot * m.dt;
        assert_eq!(next.sigma, sigma);
        assert_eq!(next.sigma_dot, sigma_dot);
        assert!((&next.qddot - &qddot).amax() < 1e-6, "{}", (&next.qddot - &qddot).amax());
        assert!((&next.qdot - &qdot).amax() < 1e-8);
        assert!((&next.q - &q).amax() < 1e-10);
        // The implicit correction is small but real.
        let explicit = forward_dynamics(&m, &s.q, &s.qdot, &(activation_to_torque(&sigma, &m) + joint_limit_torque(&s.q, &s.qdot, &m))).unwrap();
        assert!((&explicit - &qddot).amax() > 1e-6);
    }

    #[test]
    fn hard_clamp_keeps_range() {
        let mut m = ChainModel::paper_arm();
        m.limits.hard_clamp = true;
        let mut s = BodyState::at_rest(DVector::from_vec(vec![0.0, 1.0, -0.3, 2.2, 0.0, 0.0, 0.0]));
        let mut u = DVector::zeros(7);
        u[3] = 1.0;
        for _ in 0..200 {
            step_user_in_place(&mut s, &u, &m).unwrap();
            assert!(s.q[3] <= m.joints[3].range[1]);
        }
    }
}
