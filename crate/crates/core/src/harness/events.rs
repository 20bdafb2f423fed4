use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::iso::IsoTask;
use crate::control::TrialLog;
use crate::error::{Error, Result};

/// Cursor speed below which a sample inside the target counts as a hit, m/s.
pub const HIT_SPEED: f64 = 0.5;
/// Cursor acceleration marking movement onset, m/s².
pub const ONSET_ACCELERATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialEvents {
    pub onset: Option<usize>,
    pub hit: Option<usize>,
    /// Whether the closed loop itself validated the hit by holding inside the target.
    pub hold_validated: bool,
    /// Time from onset to hit, s.
    pub movement_duration: Option<f64>,
}

/// Backward-difference speed at every sample; the first sample uses the forward difference.
pub fn cursor_speed(cursor: &[Vector3<f64>], dt: f64) -> Vec<f64> {
    (0..cursor.len())
        .map(|i| match i {
            0 if cursor.len() > 1 => (cursor[1] - cursor[0]).norm() / dt,
            0 => 0.0,
            _ => (cursor[i] - cursor[i - 1]).norm() / dt,
        })
        .collect()
}

/// First sample inside the target sphere with the cursor slower than `speed_threshold`.
pub fn detect_hit_series(cursor: &[Vector3<f64>], dt: f64, target: &Vector3<f64>, radius: f64, speed_threshold: f64) -> Option<usize> {
    let speed = cursor_speed(cursor, dt);
    (0..cursor.len()).find(|&i| (cursor[i] - target).norm() < radius && speed[i] < speed_threshold)
}

/// First interior sample where the central-difference cursor acceleration reaches `threshold`.
pub fn detect_onset_series(cursor: &[Vector3<f64>], dt: f64, threshold: f64) -> Result<Option<usize>> {
    if cursor.len() < 3 {
        return Err(Error::InvalidArgument(format!("onset detection needs 3 samples, got {}", cursor.len())));
    }
    Ok((1..cursor.len() - 1).find(|&i| ((cursor[i + 1] - cursor[i] * 2.0 + cursor[i - 1]) / (dt * dt)).norm() >= threshold))
}

fn log_dt(log: &TrialLog) -> Result<f64> {
    match log.rows.as_slice() {
        [a, b, ..] if b.t > a.t => Ok(b.t - a.t),
        _ => Err(Error::InvalidArgument("trial log needs two increasing samples".into())),
    }
}

/// Hit index of a trial against `target` under the task's target radius.
pub fn detect_hit(log: &TrialLog, target: &Vector3<f64>, task: &IsoTask) -> Result<Option<usize>> {
    let dt = log_dt(log)?;
    Ok(detect_hit_series(&log.cursor(), dt, target, task.target_radius(), HIT_SPEED))
}

/// Onset index of a trial.
pub fn detect_onset(log: &TrialLog) -> Result<Option<usize>> {
    let dt = log_dt(log)?;
    detect_onset_series(&log.cursor(), dt, ONSET_ACCELERATION)
}

pub fn trial_events(log: &TrialLog, target: &Vector3<f64>, task: &IsoTask) -> Result<TrialEvents> {
    let dt = log_dt(log)?;
    let onset = detect_onset(log)?;
    let hit = detect_hit(log, target, task)?;
    let movement_duration = match (onset, hit) {
        (Some(o), Some(h)) if h >= o => Some((h - o) as f64 * dt),
        _ => None,
    };
    Ok(TrialEvents { onset, hit, hold_validated: log.hit_index.is_some(), movement_duration })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_on_slow_return() {
        let dt = 0.002;
        let target = Vector3::zeros();
        // Passes through the target at 1.2 m/s, then comes back at 0.2 m/s.
        let mut x = -0.05;
        let mut c = Vec::new();
        while x < 0.05 {
            c.push(Vector3::new(x, 0.0, 0.0));
            x += 1.2 * dt;
        }
        while x > 0.0 {
            c.push(Vector3::new(x, 0.0, 0.0));
            x -= 0.2 * dt;
        }
        let h = detect_hit_series(&c, dt, &target, 0.025, HIT_SPEED).unwrap();
        assert!(h > 42 && c[h].x < 0.025 && c[h - 1].x > c[h].x);
        let far: Vec<_> = c.iter().map(|p| p + Vector3::new(0.0, 1.0, 0.0)).collect();
        assert_eq!(detect_hit_series(&far, dt, &target, 0.025, HIT_SPEED), None);
    }

    #[test]
    fn onset_of_constant_acceleration() {
        let dt = 0.002;
        let c: Vec<_> = (0..10).map(|i| Vector3::new((i as f64 * dt).powi(2), 0.0, 0.0)).collect();
        assert_eq!(detect_onset_series(&c, dt, 1.0).unwrap(), Some(1));
        let still = vec![Vector3::new(0.1, 0.2, 0.3); 10];
        assert_eq!(detect_onset_series(&still, dt, 1.0).unwrap(), None);
        assert!(detect_onset_series(&still[..2], dt, 1.0).is_err());
    }
}
