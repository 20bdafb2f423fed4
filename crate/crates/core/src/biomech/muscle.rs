use nalgebra::DVector;

use super::model::{ChainModel, MuscleConstants};

/// Coefficients of the discrete second-order activation update for one step `dt`.
#[derive(Debug, Clone, Copy)]
pub struct MuscleDiscretization {
    pub dt: f64,
    /// Coefficient of σ in the σ̇ update, and of u with opposite sign.
    pub k: f64,
    /// Coefficient of σ̇ in the σ̇ update.
    pub c: f64,
}

impl MuscleDiscretization {
    pub fn new(constants: MuscleConstants, dt: f64) -> Self {
        let MuscleConstants { excitation: te, activation: ta } = constants;
        let k = dt / (te * ta);
        MuscleDiscretization { dt, k, c: 1.0 - dt * (te + ta) / (te * ta) }
    }

    /// One step for a single channel.
    #[inline]
    pub fn step(&self, sigma: f64, sigma_dot: f64, u: f64) -> (f64, f64) {
        (sigma + self.dt * sigma_dot, -self.k * sigma + self.c * sigma_dot + self.k * u)
    }
}

/// Advances (σ, σ̇) by one physics step under control `u`.
pub fn step_muscle(
    sigma: &DVector<f64>,
    sigma_dot: &DVector<f64>,
    u: &DVector<f64>,
    model: &ChainModel,
) -> (DVector<f64>, DVector<f64>) {
    let d = MuscleDiscretization::new(model.muscle, model.dt);
    let mut s = sigma.clone();
    let mut sd = sigma_dot.clone();
    for i in 0..s.len() {
        (s[i], sd[i]) = d.step(sigma[i], sigma_dot[i], u[i]);
    }
    (s, sd)
}

/// τⁱ = gⁱ σⁱ.
pub fn activation_to_torque(sigma: &DVector<f64>, model: &ChainModel) -> DVector<f64> {
    sigma.component_mul(&model.max_torque)
}

#[cfg(test)]
mod tests {
    use nalgebra::{Matrix2, Vector2};

    use super::*;

    #[test]
    fn rest_is_a_fixed_point() {
        let d = MuscleDiscretization::new(MuscleConstants::default(), 0.002);
        assert_eq!(d.step(0.0, 0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn matches_matrix_iteration() {
        let (te, ta, dt) = (0.03, 0.04, 0.002);
        let d = MuscleDiscretization::new(MuscleConstants { excitation: te, activation: ta }, dt);
        let a = Matrix2::new(1.0, dt, -dt / (te * ta), 1.0 - dt * (te + ta) / (te * ta));
        let b = Vector2::new(0.0, dt / (te * ta));
        let (mut s, mut sd) = (0.0, 0.0);
        let mut x = Vector2::zeros();
        for _ in 0..1000 {
            (s, sd) = d.step(s, sd, 1.0);
            x = a * x + b;
            assert!((s - x[0]).abs() < 1e-12 && (sd - x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn torque_scales_by_gain() {
        let m = ChainModel::paper_arm();
        let ef = m.joint_index("elbow_flexion").unwrap();
        let ea = m.joint_index("elevation_angle").unwrap();
        let mut s = DVector::zeros(7);
        s[ef] = 1.0;
        s[ea] = -1.0;
        let t = activation_to_torque(&s, &m);
        assert_eq!(t[ef], 5.08);
        assert_eq!(t[ea], -16.12);
    }
}
