use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CostFamily {
    /// Distance and control.
    Dc,
    /// Adds commanded torque change.
    Ctc,
    /// Adds joint acceleration.
    Jac,
}

impl CostFamily {
    pub fn name(self) -> &'static str {
        match self {
            CostFamily::Dc => "DC",
            CostFamily::Ctc => "CTC",
            CostFamily::Jac => "JAC",
        }
    }
}

impl std::str::FromStr for CostFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DC" => Ok(CostFamily::Dc),
            "CTC" => Ok(CostFamily::Ctc),
            "JAC" => Ok(CostFamily::Jac),
            _ => Err(Error::InvalidArgument(format!("unknown cost family `{s}` (expected DC, CTC or JAC)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub family: CostFamily,
    pub r1: f64,
    /// Torque-change (CTC) or joint-acceleration (JAC) weight; ignored for DC.
    pub r2: f64,
    pub target: Vector3<f64>,
}

/// Joint-acceleration weights of the reference user model.
pub const JAC_R1: f64 = 0.016;
pub const JAC_R2: f64 = 1.2e-4;

impl CostSpec {
    pub fn new(family: CostFamily, r1: f64, r2: f64, target: Vector3<f64>) -> Result<Self> {
        let spec = CostSpec { family, r1, r2, target };
        spec.validate()?;
        Ok(spec)
    }

    pub fn jac(target: Vector3<f64>) -> Self {
        CostSpec { family: CostFamily::Jac, r1: JAC_R1, r2: JAC_R2, target }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r1 >= 0.0 && self.r1.is_finite()) || !(self.r2 >= 0.0 && self.r2.is_finite()) {
            return Err(Error::Constraint(format!("cost weights must be finite and non-negative (r1 = {}, r2 = {})", self.r1, self.r2)));
        }
        Ok(())
    }

    pub fn with_target(self, target: Vector3<f64>) -> Self {
        CostSpec { target, ..self }
    }
}

/// ℓ(x, u) for the cursor position `x_p` and cached joint accelerations `qacc`.
pub fn stage_cost_terms(
    x_p: &Vector3<f64>,
    qacc: &DVector<f64>,
    u: &DVector<f64>,
    tau_dot: Option<&DVector<f64>>,
    spec: &CostSpec,
) -> Result<f64> {
    let base = (x_p - spec.target).norm() + spec.r1 * u.norm_squared();
    match spec.family {
        CostFamily::Dc => Ok(base),
        CostFamily::Ctc => {
            let td = tau_dot.ok_or(Error::MissingAuxiliary { family: "CTC", field: "tau_dot" })?;
            Ok(base + spec.r2 * td.norm_squared())
        }
        CostFamily::Jac => Ok(base + spec.r2 * qacc.norm_squared()),
    }
}

/// Time derivative of a torque sequence: central differences inside, one-sided at the ends.
pub fn commanded_torque_derivative(tau: &[DVector<f64>], control_dt: f64) -> Result<Vec<DVector<f64>>> {
    let n = tau.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("torque derivative needs at least 2 samples, got {n}")));
    }
    Ok((0..n)
        .map(|k| {
            if k == 0 {
                (&tau[1] - &tau[0]) / control_dt
            } else if k == n - 1 {
                (&tau[n - 1] - &tau[n - 2]) / control_dt
            } else {
                (&tau[k + 1] - &tau[k - 1]) / (2.0 * control_dt)
            }
        })
        .collect())
}
