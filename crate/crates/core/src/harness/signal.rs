use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};

/// Derivative by central differences in the interior and one-sided differences at the ends.
pub fn gradient(x: &[f64], dt: f64) -> Vec<f64> {
    let m = x.len();
    match m {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..m)
            .map(|i| {
                if i == 0 {
                    (x[1] - x[0]) / dt
                } else if i == m - 1 {
                    (x[m - 1] - x[m - 2]) / dt
                } else {
                    (x[i + 1] - x[i - 1]) / (2.0 * dt)
                }
            })
            .collect(),
    }
}

/// Componentwise [`gradient`] of a vector series.
pub fn gradient_vec(x: &[Vector3<f64>], dt: f64) -> Vec<Vector3<f64>> {
    let cols: Vec<Vec<f64>> = (0..3).map(|c| gradient(&x.iter().map(|v| v[c]).collect::<Vec<_>>(), dt)).collect();
    (0..x.len()).map(|i| Vector3::new(cols[0][i], cols[1][i], cols[2][i])).collect()
}

/// Position along the straight path, with its velocity and acceleration.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisProjection {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

/// Projects cursor positions orthogonally onto the line from `start` to `target`.
pub fn project_onto_axis(traj: &[Vector3<f64>], start: &Vector3<f64>, target: &Vector3<f64>, dt: f64) -> Result<AxisProjection> {
    let axis = target - start;
    let len = axis.norm();
    if !(len > 0.0) {
        return Err(Error::InvalidArgument("projection axis has zero length".into()));
    }
    let e = axis / len;
    let position: Vec<f64> = traj.iter().map(|x| (x - start).dot(&e)).collect();
    let velocity = gradient(&position, dt);
    let acceleration = gradient(&velocity, dt);
    Ok(AxisProjection { position, velocity, acceleration })
}

/// Linear interpolation of samples at `times` onto a uniform grid of step `target_dt` starting at
/// the first timestamp. The last grid point is the final timestamp when it falls on the grid.
pub fn resample_to_grid(times: &[f64], values: &[DVector<f64>], target_dt: f64) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch { left: times.len(), right: values.len() });
    }
    if times.is_empty() || !(target_dt > 0.0) {
        return Err(Error::InvalidArgument("resampling needs samples and a positive step".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("timestamps are not strictly increasing".into()));
    }
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let steps = (span / target_dt + 1e-9).floor() as usize;
    let mut grid = Vec::with_capacity(steps + 1);
    let mut out = Vec::with_capacity(steps + 1);
    let mut j = 0;
    for k in 0..=steps {
        let t = (t0 + k as f64 * target_dt).min(times[times.len() - 1]);
        while j + 2 < times.len() && times[j + 1] < t {
            j += 1;
        }
        let v = if times.len() == 1 {
            values[0].clone()
        } else {
            let (ta, tb) = (times[j], times[j + 1]);
            let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            &values[j] * (1.0 - w) + &values[j + 1] * w
        };
        grid.push(t);
        out.push(v);
    }
    Ok((grid, out))
}
