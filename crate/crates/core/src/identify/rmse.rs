use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::reference::ReferenceTrajectory;
use crate::error::{Error, Result};
use crate::harness::signal::gradient_vec;

/// Channel compared by [`rmse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RmseField {
    JointAngle,
    JointVelocity,
    JointAcceleration,
    CursorPosition,
    CursorVelocity,
    CursorAcceleration,
}

/// sqrt(mean ‖a_k − b_k‖²) over equal-length series of equal-dimension vectors.
pub fn rmse_series<'a, 'b>(
    a: impl ExactSizeIterator<Item = &'a [f64]>,
    b: impl ExactSizeIterator<Item = &'b [f64]>,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let m = a.len();
    if m == 0 {
        return Err(Error::InvalidArgument("RMSE of empty trajectories".into()));
    }
    let mut acc = 0.0;
    for (x, y) in a.zip(b) {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
        }
        acc += x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    }
    Ok((acc / m as f64).sqrt())
}

/// RMSE between joint series.
pub fn rmse_joint(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<f64> {
    rmse_series(a.iter().map(|v| v.as_slice()), b.iter().map(|v| v.as_slice()))
}

/// RMSE between cursor series.
pub fn rmse_cursor(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64> {
    rmse_series(a.iter().map(|v| v.as_slice()), b.iter().map(|v| v.as_slice()))
}

/// RMSE of one channel between two trajectories on the same grid.
pub fn rmse(a: &ReferenceTrajectory, b: &ReferenceTrajectory, field: RmseField) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    match field {
        RmseField::JointAngle => rmse_joint(&a.q, &b.q),
        RmseField::JointVelocity => rmse_joint(&a.qdot, &b.qdot),
        RmseField::JointAcceleration => rmse_joint(&a.qddot, &b.qddot),
        _ => {
            let (Some(ca), Some(cb)) = (&a.cursor, &b.cursor) else {
                return Err(Error::InvalidArgument("cursor RMSE needs cursor channels on both trajectories".into()));
            };
            let dt = a.dt()?;
            let (mut ca, mut cb) = (ca.clone(), cb.clone());
            let order = match field {
                RmseField::CursorVelocity => 1,
                RmseField::CursorAcceleration => 2,
                _ => 0,
            };
            for _ in 0..order {
                ca = gradient_vec(&ca, dt);
                cb = gradient_vec(&cb, dt);
            }
            rmse_cursor(&ca, &cb)
        }
    }
}
