use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::model::ChainModel;

/// Largest supported joint count; dynamics scratch space lives on the stack.
pub const MAX_DOF: usize = 12;

/// Rotation by `angle` about the unit `axis` (Rodrigues).
#[inline]
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let v = 1.0 - c;
    let (x, y, z) = (axis.x, axis.y, axis.z);
    Matrix3::new(
        c + x * x * v,
        x * y * v - z * s,
        x * z * v + y * s,
        y * x * v + z * s,
        c + y * y * v,
        y * z * v - x * s,
        z * x * v - y * s,
        z * y * v + x * s,
        c + z * z * v,
    )
}

/// World-frame pose of every joint for one configuration.
#[derive(Debug, Clone)]
pub struct Frames {
    pub n: usize,
    /// Orientation of joint frame `j` after its own rotation.
    pub rot: [Matrix3<f64>; MAX_DOF],
    /// Origin of joint `j`.
    pub pos: [Vector3<f64>; MAX_DOF],
    /// Rotation axis of joint `j` in world coordinates.
    pub axis: [Vector3<f64>; MAX_DOF],
}

impl Frames {
    pub fn new(model: &ChainModel, q: &[f64]) -> Self {
        let n = model.dof();
        assert_eq!(q.len(), n, "configuration length must equal joint count");
        let mut f = Frames {
            n,
            rot: [Matrix3::identity(); MAX_DOF],
            pos: [Vector3::zeros(); MAX_DOF],
            axis: [Vector3::zeros(); MAX_DOF],
        };
        let mut r = Matrix3::identity();
        let mut p = Vector3::zeros();
        for (j, joint) in model.joints.iter().enumerate() {
            p += r * joint.origin;
            f.axis[j] = r * joint.axis;
            r *= axis_angle(&joint.axis, q[j]);
            f.pos[j] = p;
            f.rot[j] = r;
        }
        f
    }

    /// Transforms a point given in the frame of joint `j` to world coordinates.
    #[inline]
    pub fn point(&self, j: usize, local: &Vector3<f64>) -> Vector3<f64> {
        self.pos[j] + self.rot[j] * local
    }

    /// Columns `z_j × (x − p_j)` for joints up to and including `last`, zero beyond.
    pub fn point_jacobian(&self, last: usize, x: &Vector3<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3, self.n);
        for j in 0..=last {
            let col = self.axis[j].cross(&(x - self.pos[j]));
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
        }
        jac
    }
}

/// Marker position in the shoulder-anchored world frame.
pub fn forward_kinematics(model: &ChainModel, q: &DVector<f64>) -> Vector3<f64> {
    let frames = Frames::new(model, q.as_slice());
    frames.point(model.dof() - 1, &model.marker)
}

/// 3×n positional Jacobian of the marker.
pub fn marker_jacobian(model: &ChainModel, q: &DVector<f64>) -> DMatrix<f64> {
    let frames = Frames::new(model, q.as_slice());
    let last = model.dof() - 1;
    let x = frames.point(last, &model.marker);
    frames.point_jacobian(last, &x)
}

/// Options for [`inverse_kinematics`].
#[derive(Debug, Clone)]
pub struct IkOptions {
    /// Posture the null-space term pulls toward.
    pub nominal: DVector<f64>,
    pub damping: f64,
    pub posture_gain: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl IkOptions {
    pub fn new(nominal: DVector<f64>) -> Self {
        IkOptions { nominal, damping: 1e-2, posture_gain: 0.1, max_iter: 500, tolerance: 1e-9 }
    }
}

/// Damped least-squares marker IK with joint range clamping, starting at the nominal posture.
/// Returns the configuration and the residual distance.
pub fn inverse_kinematics(model: &ChainModel, target: &Vector3<f64>, opts: &IkOptions) -> (DVector<f64>, f64) {
    let n = model.dof();
    let clamp = |q: &mut DVector<f64>| {
        for (i, joint) in model.joints.iter().enumerate() {
            q[i] = q[i].clamp(joint.range[0], joint.range[1]);
        }
    };
    let mut q = opts.nominal.clone();
    clamp(&mut q);
    let mut err = target - forward_kinematics(model, &q);
    for _ in 0..opts.max_iter {
        let e_norm = err.norm();
        if e_norm < opts.tolerance {
            break;
        }
        // Damping fades near the solution so the last iterations are Gauss-Newton steps.
        let lambda = opts.damping * (e_norm / 0.01).min(1.0);
        let jac = marker_jacobian(model, &q);
        let jjt = &jac * jac.transpose() + DMatrix::identity(3, 3) * (lambda * lambda);
        let Some(inv) = jjt.try_inverse() else { break };
        let pinv = jac.transpose() * inv;
        let e = DVector::from_column_slice(err.as_slice());
        let task = &pinv * e;
        let null = (DMatrix::identity(n, n) - &pinv * &jac) * ((&opts.nominal - &q) * opts.posture_gain);
        let mut accepted = false;
        for dq in [&task + null, task] {
            let mut step = 1.0;
            while step > 1e-4 {
                let mut trial = &q + &dq * step;
                clamp(&mut trial);
                let trial_err = target - forward_kinematics(model, &trial);
                if trial_err.norm() < e_norm {
                    q = trial;
                    err = trial_err;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    let residual = err.norm();
    (q, residual)
}

#[cfg(test)]
mod tests {
    use nalgebra::Matrix4;

    use super::*;
    use crate::biomech::model::fixtures;

    fn homogeneous(r: Matrix3<f64>, t: Vector3<f64>) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    }

    // Independent chain: translate to the origin, then rotate, as explicit 4x4 products.
    fn naive_marker(model: &ChainModel, q: &DVector<f64>) -> Vector3<f64> {
        let mut t = Matrix4::identity();
        for (j, joint) in model.joints.iter().enumerate() {
            let a = joint.axis;
            let (s, c) = q[j].sin_cos();
            let v = 1.0 - c;
            let r = Matrix3::new(
                a.x * a.x * v + c,
                a.x * a.y * v - a.z * s,
                a.x * a.z * v + a.y * s,
                a.y * a.x * v + a.z * s,
                a.y * a.y * v + c,
                a.y * a.z * v - a.x * s,
                a.z * a.x * v - a.y * s,
                a.z * a.y * v + a.x * s,
                a.z * a.z * v + c,
            );
            t = t * homogeneous(Matrix3::identity(), joint.origin) * homogeneous(r, Vector3::zeros());
        }
        let m = t * model.marker.push(1.0);
        Vector3::new(m.x, m.y, m.z)
    }

    #[test]
    fn reference_pose_is_segment_sum() {
        let m = ChainModel::paper_arm();
        let x = forward_kinematics(&m, &DVector::zeros(7));
        assert!((x - Vector3::new(0.0, -0.70, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn matches_transform_product_oracle() {
        let m = ChainModel::paper_arm();
        let mut seed = 7u64;
        for _ in 0..200 {
            let q = DVector::from_fn(7, |_, _| {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 6.0
            });
            let a = forward_kinematics(&m, &q);
            let b = naive_marker(&m, &q);
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = ChainModel::paper_arm();
        let q = DVector::from_vec(vec![0.2, 0.9, -0.3, 1.1, 0.4, 0.1, -0.2]);
        let jac = marker_jacobian(&m, &q);
        let h = 1e-6;
        for j in 0..7 {
            let mut qp = q.clone();
            qp[j] += h;
            let mut qm = q.clone();
            qm[j] -= h;
            let d = (forward_kinematics(&m, &qp) - forward_kinematics(&m, &qm)) / (2.0 * h);
            for r in 0..3 {
                assert!((jac[(r, j)] - d[r]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn planar_two_link_closed_form() {
        let m = fixtures::planar_two_link();
        let q = DVector::from_vec(vec![0.4, 0.7]);
        let x = forward_kinematics(&m, &q);
        let expect = Vector3::new(
            0.33 * q[0].sin() + 0.37 * (q[0] + q[1]).sin(),
            -0.33 * q[0].cos() - 0.37 * (q[0] + q[1]).cos(),
            0.0,
        );
        assert!((x - expect).norm() < 1e-14);
    }

    #[test]
    fn ik_reaches_workspace_point() {
        let m = ChainModel::paper_arm();
        let nominal = DVector::from_vec(vec![-0.1, 1.0, -0.3, 1.2, 0.0, 0.0, 0.0]);
        let target = Vector3::new(-0.1, -0.05, 0.45);
        let (q, res) = inverse_kinematics(&m, &target, &IkOptions::new(nominal));
        assert!(res < 1e-7, "residual {res}");
        for (i, j) in m.joints.iter().enumerate() {
            assert!(q[i] >= j.range[0] && q[i] <= j.range[1]);
        }
    }
}
