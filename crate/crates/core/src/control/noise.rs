use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Signal-dependent plus constant Gaussian motor noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Standard deviation per unit control magnitude.
    pub signal_dependent_std_ratio: f64,
    pub constant_std: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { enabled: true, signal_dependent_std_ratio: 0.103, constant_std: 0.185, seed: 0 }
    }
}

impl NoiseConfig {
    pub fn off() -> Self {
        NoiseConfig { enabled: false, ..Default::default() }
    }
}

/// Unclamped noisy control `u + ε₁ + ε₂`. Draws ε₁ then ε₂ for every component in order.
pub fn sample_noisy_control(u: &DVector<f64>, cfg: &NoiseConfig, rng: &mut impl Rng) -> DVector<f64> {
    if !cfg.enabled {
        return u.clone();
    }
    u.map(|ui| {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        ui + z1 * cfg.signal_dependent_std_ratio * ui.abs() + z2 * cfg.constant_std
    })
}

/// Noisy control clamped to `[lo, hi]`.
pub fn inject_noise(
    u: &DVector<f64>,
    cfg: &NoiseConfig,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    rng: &mut impl Rng,
) -> DVector<f64> {
    if !cfg.enabled {
        return u.clone();
    }
    let mut v = sample_noisy_control(u, cfg, rng);
    for i in 0..v.len() {
        v[i] = v[i].clamp(lo[i], hi[i]);
    }
    v
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn disabled_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = DVector::from_vec(vec![0.3, -0.7]);
        let lo = DVector::from_element(2, -1.0);
        let hi = DVector::from_element(2, 1.0);
        assert_eq!(inject_noise(&u, &NoiseConfig::off(), &lo, &hi, &mut rng), u);
    }

    #[test]
    fn clamped_to_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = DVector::from_vec(vec![0.95, -0.95]);
        let lo = DVector::from_element(2, -1.0);
        let hi = DVector::from_element(2, 1.0);
        for _ in 0..1000 {
            let v = inject_noise(&u, &NoiseConfig::default(), &lo, &hi, &mut rng);
            assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }
}
