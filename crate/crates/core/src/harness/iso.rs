use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::biomech::{gravity_torque, inverse_kinematics, BodyState, ChainModel, IkOptions};
use crate::control::SystemState;
use crate::error::{Error, Result};
use crate::interaction::{TechniqueSpec, OUTPUT_NORMAL, OUTPUT_ORIGIN};

/// Multidirectional pointing task on a circle in the output plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoTask {
    pub center: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub circle_diameter: f64,
    pub target_diameter: f64,
    pub target_count: usize,
}

impl Default for IsoTask {
    fn default() -> Self {
        IsoTask {
            center: Vector3::from(OUTPUT_ORIGIN),
            normal: Vector3::from(OUTPUT_NORMAL),
            circle_diameter: 0.30,
            target_diameter: 0.05,
            target_count: 13,
        }
    }
}

impl IsoTask {
    pub fn target_radius(&self) -> f64 {
        0.5 * self.target_diameter
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_count < 3 || self.target_count % 2 == 0 {
            return Err(Error::InvalidArgument(format!("target count {} must be odd and at least 3", self.target_count)));
        }
        if !(self.circle_diameter > 0.0 && self.target_diameter > 0.0) {
            return Err(Error::InvalidArgument("task diameters must be positive".into()));
        }
        if (self.normal.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("task plane normal must be a unit vector".into()));
        }
        Ok(())
    }

    /// In-plane (right, up) basis as seen by the user looking along `-normal`.
    fn basis(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.normal;
        let mut up = Vector3::y() - n * n.y;
        if up.norm() < 1e-9 {
            up = Vector3::z() - n * n.z;
        }
        up.normalize_mut();
        (up.cross(&n), up)
    }

    /// Target `i` sits at angle 2πi/n, starting at 12 o'clock and proceeding clockwise.
    pub fn positions(&self) -> Result<Vec<Vector3<f64>>> {
        self.validate()?;
        let (right, up) = self.basis();
        let r = 0.5 * self.circle_diameter;
        let n = self.target_count;
        Ok((0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                self.center + (right * a.sin() + up * a.cos()) * r
            })
            .collect())
    }

    /// Presentation sequence s_j = (j·⌈n/2⌉) mod n.
    pub fn order(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let n = self.target_count;
        let step = n.div_ceil(2);
        Ok((0..n).map(|j| (j * step) % n).collect())
    }

    /// Target positions in presentation order.
    pub fn iso_targets(&self) -> Result<Vec<Vector3<f64>>> {
        let p = self.positions()?;
        Ok(self.order()?.into_iter().map(|i| p[i]).collect())
    }

    /// Consecutive (from, to) target index pairs of one pass.
    pub fn transitions(&self) -> Result<Vec<(usize, usize)>> {
        let o = self.order()?;
        Ok(o.windows(2).map(|w| (w[0], w[1])).collect())
    }
}

/// Default posture used to resolve the arm's redundancy when placing it at a cursor position.
pub fn nominal_posture(model: &ChainModel) -> DVector<f64> {
    posture(model, [-0.1, 1.0, -0.3, 1.2])
}

fn posture(model: &ChainModel, v: [f64; 4]) -> DVector<f64> {
    let mut q = DVector::zeros(model.dof());
    for (name, v) in ["elevation_angle", "shoulder_elevation", "shoulder_rotation", "elbow_flexion"].into_iter().zip(v) {
        if let Some(i) = model.joint_index(name) {
            q[i] = v;
        }
    }
    q
}

// Alternative postures tried in order when the default one cannot be held against gravity.
const FALLBACK_POSTURES: [[f64; 4]; 6] = [
    [-0.1, 1.0, -0.1, 1.2],
    [-0.1, 1.0, 0.0, 1.2],
    [-0.1, 1.0, 0.1, 1.2],
    [0.2, 1.0, 0.0, 1.2],
    [-0.1, 0.8, 0.1, 1.5],
    [0.3, 0.9, 0.2, 1.4],
];

/// The arm at rest with the cursor at `cursor`, muscles holding it against gravity.
///
/// Redundancy is resolved toward [`nominal_posture`]; if IK fails or some joint would need an
/// activation outside its bounds, a few alternative postures are tried before giving up.
pub fn rest_state(model: &ChainModel, technique: &TechniqueSpec, cursor: &Vector3<f64>) -> Result<SystemState> {
    let goal = technique.preimage(cursor);
    let (lo, hi) = model.control_bounds();
    let mut last = None;
    // Models without the named arm joints get every joint bent, away from the straight-arm
    // singularity where IK stalls.
    let mut candidates: Vec<DVector<f64>> = std::iter::once(nominal_posture(model))
        .chain(FALLBACK_POSTURES.iter().map(|&v| posture(model, v)))
        .chain([0.5, -0.5].map(|b| DVector::from_element(model.dof(), b)))
        .collect();
    candidates.dedup();
    for nominal in candidates {
        let (q, residual) = inverse_kinematics(model, &goal, &IkOptions::new(nominal));
        if residual > 1e-6 {
            last = Some(Error::InvalidArgument(format!(
                "cursor position {:?} is not reachable (fingertip residual {residual:.3e} m)",
                cursor.as_slice()
            )));
            continue;
        }
        let mut body = BodyState::at_rest(q);
        body.sigma = gravity_torque(model, &body.q).component_div(&model.max_torque);
        match (0..model.dof()).find(|&i| body.sigma[i] < lo[i] - 1e-12 || body.sigma[i] > hi[i] + 1e-12) {
            None => return Ok(SystemState::from_body(body, model, technique)),
            Some(i) => {
                last = Some(Error::InvalidArgument(format!(
                    "holding joint {} against gravity needs activation {:.3} outside [{:.3}, {:.3}]",
                    model.joints[i].name, body.sigma[i], lo[i], hi[i]
                )))
            }
        }
    }
    Err(last.expect("at least one posture is tried"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_targets_on_circle() {
        let task = IsoTask::default();
        let p = task.positions().unwrap();
        assert_eq!(p.len(), 13);
        for x in &p {
            assert!(((x - task.center).norm() - 0.15).abs() < 1e-12);
        }
        // 12 o'clock first, then toward the user's right (-x).
        assert!(p[0].y > 0.149 && p[1].x < task.center.x);
    }

    #[test]
    fn three_targets_order() {
        let task = IsoTask { target_count: 3, ..Default::default() };
        assert_eq!(task.order().unwrap(), vec![0, 2, 1]);
        assert!(IsoTask { target_count: 4, ..Default::default() }.order().is_err());
    }

    #[test]
    fn consecutive_targets_far_apart() {
        let task = IsoTask::default();
        let t = task.iso_targets().unwrap();
        for w in t.windows(2) {
            assert!((w[0] - w[1]).norm() >= 0.9 * task.circle_diameter);
        }
    }

    #[test]
    fn rest_state_holds_position() {
        let m = ChainModel::paper_arm();
        let tech = TechniqueSpec::preset("virtual-cursor-identity").unwrap();
        let task = IsoTask::default();
        for p in task.positions().unwrap() {
            let x = rest_state(&m, &tech, &p).unwrap();
            assert!((x.cursor() - p).norm() < 1e-6);
        }
    }

    #[test]
    fn rest_state_escapes_straight_arm_singularity() {
        let m = crate::biomech::model::fixtures::planar_two_link();
        let tech = TechniqueSpec::preset("virtual-cursor-identity").unwrap();
        let task = IsoTask {
            center: Vector3::new(0.3, -0.4, 0.0),
            normal: Vector3::new(0.0, 0.0, -1.0),
            circle_diameter: 0.2,
            target_diameter: 0.05,
            target_count: 13,
        };
        for p in task.positions().unwrap() {
            let x = rest_state(&m, &tech, &p).unwrap();
            assert!((x.cursor() - p).norm() < 1e-6);
        }
    }
}
