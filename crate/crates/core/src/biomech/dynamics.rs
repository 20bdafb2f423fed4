use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::kinematics::{Frames, MAX_DOF};
use super::model::ChainModel;
use crate::error::{Error, Result};

/// Largest accepted condition-number estimate of the (effective) mass matrix.
pub const MAX_CONDITION: f64 = 1e12;

pub(crate) type Stack = [f64; MAX_DOF];
type StackMatrix = [[f64; MAX_DOF]; MAX_DOF];

struct Bodies {
    len: usize,
    carrier: [usize; MAX_DOF],
    mass: [f64; MAX_DOF],
    com: [Vector3<f64>; MAX_DOF],
    inertia: [Matrix3<f64>; MAX_DOF],
}

impl Bodies {
    fn new(model: &ChainModel, frames: &Frames) -> Self {
        let mut b = Bodies {
            len: model.segments.len(),
            carrier: [0; MAX_DOF],
            mass: [0.0; MAX_DOF],
            com: [Vector3::zeros(); MAX_DOF],
            inertia: [Matrix3::zeros(); MAX_DOF],
        };
        for (i, (seg, &k)) in model.segments.iter().zip(&model.carrier).enumerate() {
            let r = frames.rot[k];
            b.carrier[i] = k;
            b.mass[i] = seg.mass;
            b.com[i] = frames.point(k, &seg.com);
            b.inertia[i] = r * seg.inertia * r.transpose();
        }
        b
    }
}

fn mass_matrix_raw(model: &ChainModel, frames: &Frames, bodies: &Bodies) -> StackMatrix {
    let mut m = [[0.0; MAX_DOF]; MAX_DOF];
    let mut jv = [Vector3::zeros(); MAX_DOF];
    let mut iz = [Vector3::zeros(); MAX_DOF];
    for b in 0..bodies.len {
        let k = bodies.carrier[b];
        let (mass, com, inertia) = (bodies.mass[b], bodies.com[b], bodies.inertia[b]);
        for j in 0..=k {
            jv[j] = frames.axis[j].cross(&(com - frames.pos[j]));
            iz[j] = inertia * frames.axis[j];
        }
        for i in 0..=k {
            for j in 0..=i {
                m[i][j] += mass * jv[i].dot(&jv[j]) + frames.axis[i].dot(&iz[j]);
            }
        }
    }
    let n = model.dof();
    for i in 0..n {
        m[i][i] += model.joints[i].armature;
        for j in 0..i {
            m[j][i] = m[i][j];
        }
    }
    m
}

// Recursive Newton-Euler in world coordinates; gravity enters as a base acceleration.
fn rnea_raw(model: &ChainModel, frames: &Frames, bodies: &Bodies, qdot: &[f64], qddot: Option<&[f64]>) -> Stack {
    let n = model.dof();
    let mut omega = [Vector3::zeros(); MAX_DOF];
    let mut alpha = [Vector3::zeros(); MAX_DOF];
    let mut acc = [Vector3::zeros(); MAX_DOF];
    let (mut w, mut dw, mut a) = (Vector3::zeros(), Vector3::zeros(), -model.gravity);
    let mut prev = Vector3::zeros();
    for j in 0..n {
        let d = frames.pos[j] - prev;
        a += dw.cross(&d) + w.cross(&w.cross(&d));
        let z = frames.axis[j];
        let qdd = qddot.map_or(0.0, |v| v[j]);
        dw += z * qdd + w.cross(&z) * qdot[j];
        w += z * qdot[j];
        omega[j] = w;
        alpha[j] = dw;
        acc[j] = a;
        prev = frames.pos[j];
    }

    // Per carrier joint: moment about the world origin and force of its bodies.
    let mut moment = [Vector3::zeros(); MAX_DOF];
    let mut force = [Vector3::zeros(); MAX_DOF];
    for b in 0..bodies.len {
        let k = bodies.carrier[b];
        let (com, inertia) = (bodies.com[b], bodies.inertia[b]);
        let r = com - frames.pos[k];
        let (w, dw) = (omega[k], alpha[k]);
        let f = (acc[k] + dw.cross(&r) + w.cross(&w.cross(&r))) * bodies.mass[b];
        moment[k] += inertia * dw + w.cross(&(inertia * w)) + com.cross(&f);
        force[k] += f;
    }
    let mut tau = [0.0; MAX_DOF];
    let (mut mo, mut fo) = (Vector3::zeros(), Vector3::zeros());
    for j in (0..n).rev() {
        mo += moment[j];
        fo += force[j];
        tau[j] = frames.axis[j].dot(&(mo - frames.pos[j].cross(&fo)));
    }
    tau
}

// In-place Cholesky factorization of the leading n×n block; rejects ill-conditioned matrices.
fn cholesky_factor(m: &mut StackMatrix, n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = m[j][j];
        for k in 0..j {
            d -= m[j][k] * m[j][k];
        }
        if !(d > 0.0) {
            return Err(Error::DegenerateConfiguration("mass matrix is not positive definite".into()));
        }
        let d = d.sqrt();
        m[j][j] = d;
        for i in j + 1..n {
            let mut v = m[i][j];
            for k in 0..j {
                v -= m[i][k] * m[j][k];
            }
            m[i][j] = v / d;
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        lo = lo.min(m[i][i]);
        hi = hi.max(m[i][i]);
    }
    let cond = (hi / lo).powi(2);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::DegenerateConfiguration(format!(
            "mass matrix condition estimate {cond:.3e} exceeds {MAX_CONDITION:.0e}"
        )));
    }
    Ok(())
}

fn cholesky_apply(l: &StackMatrix, n: usize, rhs: &mut Stack) {
    for i in 0..n {
        let mut v = rhs[i];
        for k in 0..i {
            v -= l[i][k] * rhs[k];
        }
        rhs[i] = v / l[i][i];
    }
    for i in (0..n).rev() {
        let mut v = rhs[i];
        for k in i + 1..n {
            v -= l[k][i] * rhs[k];
        }
        rhs[i] = v / l[i][i];
    }
}

fn dot(a: &Stack, b: &Stack, n: usize) -> f64 {
    (0..n).map(|i| a[i] * b[i]).sum()
}

/// Allocation-free forward dynamics used by the integrator. See [`forward_dynamics_damped`].
///
/// With `implicit_coriolis` the velocity-product torques are also taken at the end-of-step
/// velocity, through a factorization c = C q̇ with Ṁ − 2C skew. Such a C does no net work, so
/// the step does not pump energy in through the Coriolis coupling. No Christoffel symbols are
/// needed: C = ½Ṁ + S, where Ṁ is a directional difference of M along q̇ and S is the rank-2
/// skew matrix (w q̇ᵀ − q̇ wᵀ)/|q̇|² that restores S q̇ = w = c − ½Ṁ q̇.
pub(crate) fn forward_dynamics_raw(
    model: &ChainModel,
    q: &[f64],
    qdot: &[f64],
    tau: &[f64],
    damping: Option<&[f64]>,
    dt: f64,
    implicit_coriolis: bool,
) -> Result<Stack> {
    let n = model.dof();
    let frames = Frames::new(model, q);
    let bodies = Bodies::new(model, &frames);
    let m0 = mass_matrix_raw(model, &frames, &bodies);
    let mut m = m0;
    let bias = rnea_raw(model, &frames, &bodies, qdot, None);
    let mut rhs = [0.0; MAX_DOF];
    for i in 0..n {
        rhs[i] = tau[i] - bias[i];
    }
    if let Some(d) = damping {
        for i in 0..n {
            m[i][i] += dt * d[i];
            rhs[i] -= d[i] * qdot[i];
        }
    }
    let speed2: f64 = qdot[..n].iter().map(|v| v * v).sum();
    if !implicit_coriolis || dt == 0.0 || speed2 == 0.0 {
        cholesky_factor(&mut m, n)?;
        cholesky_apply(&m, n, &mut rhs);
        return Ok(rhs);
    }

    let eps = 1e-7 / qdot[..n].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut shifted = [0.0; MAX_DOF];
    for i in 0..n {
        shifted[i] = q[i] + eps * qdot[i];
    }
    let frames_s = Frames::new(model, &shifted[..n]);
    let m_s = mass_matrix_raw(model, &frames_s, &Bodies::new(model, &frames_s));
    let gravity = rnea_raw(model, &frames, &bodies, &[0.0; MAX_DOF][..n], None);
    let mut v = [0.0; MAX_DOF];
    let mut w = [0.0; MAX_DOF];
    v[..n].copy_from_slice(&qdot[..n]);
    for i in 0..n {
        let mut half_mdot_qd = 0.0;
        for j in 0..n {
            let half_mdot = 0.5 * (m_s[i][j] - m0[i][j]) / eps;
            m[i][j] += dt * half_mdot;
            half_mdot_qd += half_mdot * qdot[j];
        }
        w[i] = bias[i] - gravity[i] - half_mdot_qd;
    }

    // (B + s U Vᵀ) x = r with B = M + dt(D + ½Ṁ), U = [w, q̇], V = [q̇, −w], s = dt/|q̇|².
    cholesky_factor(&mut m, n)?;
    cholesky_apply(&m, n, &mut rhs);
    let (mut bw, mut bv) = (w, v);
    cholesky_apply(&m, n, &mut bw);
    cholesky_apply(&m, n, &mut bv);
    let s = dt / speed2;
    let k11 = 1.0 + s * dot(&v, &bw, n);
    let k12 = s * dot(&v, &bv, n);
    let k21 = -s * dot(&w, &bw, n);
    let k22 = 1.0 - s * dot(&w, &bv, n);
    let (r1, r2) = (dot(&v, &rhs, n), -dot(&w, &rhs, n));
    let det = k11 * k22 - k12 * k21;
    if !(det.abs() > 1e-300) {
        return Err(Error::DegenerateConfiguration("implicit Coriolis update is singular".into()));
    }
    let y1 = (k22 * r1 - k12 * r2) / det;
    let y2 = (k11 * r2 - k21 * r1) / det;
    for i in 0..n {
        rhs[i] -= s * (bw[i] * y1 + bv[i] * y2);
    }
    Ok(rhs)
}

/// Joint-space inertia matrix including armature.
pub fn mass_matrix(model: &ChainModel, q: &DVector<f64>) -> DMatrix<f64> {
    let frames = Frames::new(model, q.as_slice());
    let bodies = Bodies::new(model, &frames);
    let m = mass_matrix_raw(model, &frames, &bodies);
    let n = model.dof();
    DMatrix::from_fn(n, n, |i, j| m[i][j])
}

/// Torques required for the given motion, gravity included.
pub fn inverse_dynamics(model: &ChainModel, q: &DVector<f64>, qdot: &DVector<f64>, qddot: &DVector<f64>) -> DVector<f64> {
    let frames = Frames::new(model, q.as_slice());
    let bodies = Bodies::new(model, &frames);
    let tau = rnea_raw(model, &frames, &bodies, qdot.as_slice(), Some(qddot.as_slice()));
    DVector::from_fn(model.dof(), |i, _| tau[i] + model.joints[i].armature * qddot[i])
}

/// Coriolis, centrifugal and gravity torques c(q, q̇) + g(q).
pub fn bias_torque(model: &ChainModel, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
    let frames = Frames::new(model, q.as_slice());
    let bodies = Bodies::new(model, &frames);
    let tau = rnea_raw(model, &frames, &bodies, qdot.as_slice(), None);
    DVector::from_column_slice(&tau[..model.dof()])
}

/// Gravity torques at rest.
pub fn gravity_torque(model: &ChainModel, q: &DVector<f64>) -> DVector<f64> {
    bias_torque(model, q, &DVector::zeros(model.dof()))
}

/// Solves M(q) q̈ + c(q, q̇) + g(q) = τ.
pub fn forward_dynamics(model: &ChainModel, q: &DVector<f64>, qdot: &DVector<f64>, tau: &DVector<f64>) -> Result<DVector<f64>> {
    forward_dynamics_damped(model, q, qdot, tau, None, 0.0)
}

/// Forward dynamics with viscous damping `D = diag(damping)` integrated implicitly over `dt`:
/// (M + dt·D) q̈ = τ − D q̇ − c − g. With `damping = None` this is plain forward dynamics.
pub fn forward_dynamics_damped(
    model: &ChainModel,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    tau: &DVector<f64>,
    damping: Option<&DVector<f64>>,
    dt: f64,
) -> Result<DVector<f64>> {
    let n = model.dof();
    if q.len() != n || qdot.len() != n || tau.len() != n || damping.is_some_and(|d| d.len() != n) {
        return Err(Error::LengthMismatch { left: q.len().max(qdot.len()).max(tau.len()), right: n });
    }
    let qdd = forward_dynamics_raw(model, q.as_slice(), qdot.as_slice(), tau.as_slice(), damping.map(|d| d.as_slice()), dt, false)?;
    Ok(DVector::from_column_slice(&qdd[..n]))
}

/// Kinetic energy ½ q̇ᵀ M q̇.
pub fn kinetic_energy(model: &ChainModel, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
    0.5 * qdot.dot(&(mass_matrix(model, q) * qdot))
}

/// Gravitational potential energy relative to the world origin.
pub fn potential_energy(model: &ChainModel, q: &DVector<f64>) -> f64 {
    let frames = Frames::new(model, q.as_slice());
    let b = Bodies::new(model, &frames);
    (0..b.len).map(|i| -b.mass[i] * model.gravity.dot(&b.com[i])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomech::model::fixtures;

    #[test]
    fn pendulum_hanging_is_equilibrium() {
        let m = fixtures::pendulum(0.5, 2.0);
        let qdd = forward_dynamics(&m, &DVector::zeros(1), &DVector::zeros(1), &DVector::zeros(1)).unwrap();
        assert!(qdd[0].abs() < 1e-12);
    }

    #[test]
    fn pendulum_horizontal_matches_analytic() {
        let (l, mass) = (0.5, 2.0);
        let m = fixtures::pendulum(l, mass);
        let q = DVector::from_element(1, std::f64::consts::FRAC_PI_2);
        let qdd = forward_dynamics(&m, &q, &DVector::zeros(1), &DVector::zeros(1)).unwrap();
        let inertia = mass * l * l + 1e-12;
        assert!((qdd[0] + mass * 9.81 * l / inertia).abs() < 1e-9);
    }

    #[test]
    fn inverse_and_forward_agree_on_arm() {
        let m = ChainModel::paper_arm();
        let q = DVector::from_vec(vec![0.3, 1.1, -0.4, 0.9, 0.2, 0.05, -0.1]);
        let qd = DVector::from_vec(vec![0.5, -0.3, 1.0, 0.2, -0.7, 0.4, 0.3]);
        let qdd = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0, 2.0, 0.7]);
        let tau = inverse_dynamics(&m, &q, &qd, &qdd);
        let back = forward_dynamics(&m, &q, &qd, &tau).unwrap();
        assert!((back - qdd).amax() < 1e-9);
    }

    #[test]
    fn arm_mass_matrix_is_spd_at_singular_shoulder() {
        let m = ChainModel::paper_arm();
        let mm = mass_matrix(&m, &DVector::zeros(7));
        assert!((&mm - mm.transpose()).amax() < 1e-14);
        assert!(mm.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn gravity_torque_is_potential_gradient() {
        let m = ChainModel::paper_arm();
        let q = DVector::from_vec(vec![0.3, 1.1, -0.4, 0.9, 0.2, 0.05, -0.1]);
        let g = gravity_torque(&m, &q);
        let h = 1e-6;
        for j in 0..7 {
            let mut qp = q.clone();
            qp[j] += h;
            let mut qm = q.clone();
            qm[j] -= h;
            let d = (potential_energy(&m, &qp) - potential_energy(&m, &qm)) / (2.0 * h);
            assert!((g[j] - d).abs() < 1e-7, "joint {j}: {} vs {d}", g[j]);
        }
    }

    #[test]
    fn singular_mass_matrix_is_rejected() {
        let mut m = fixtures::planar_two_link();
        m.segments[1].mass = 1e-300;
        m.segments[1].inertia = Matrix3::identity() * 1e-300;
        let z = DVector::zeros(2);
        let r = forward_dynamics(&m, &z, &z, &z);
        assert!(matches!(r, Err(Error::DegenerateConfiguration(_))));
    }
}
