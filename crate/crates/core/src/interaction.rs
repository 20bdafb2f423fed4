//! Input device and transfer functions from the tracked fingertip to the virtual cursor.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::biomech::{forward_kinematics, BodyState, ChainModel};
use crate::error::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-12;
const PARALLEL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TechniqueKind {
    VirtualCursor,
    VirtualPad,
}

/// Transfer-function definition. Normals are only meaningful for the Virtual Pad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TechniqueFile", into = "TechniqueFile")]
pub struct TechniqueSpec {
    pub kind: TechniqueKind,
    pub omega_i: Vector3<f64>,
    pub omega_o: Vector3<f64>,
    pub n_i: Vector3<f64>,
    pub n_o: Vector3<f64>,
    rotation: Matrix3<f64>,
}

/// Output origin shared by all presets: 10 cm right of and 55 cm in front of the shoulder.
pub const OUTPUT_ORIGIN: [f64; 3] = [-0.1, 0.0, 0.55];
/// Output plane normal facing the user.
pub const OUTPUT_NORMAL: [f64; 3] = [0.0, 0.0, -1.0];

pub const PRESETS: [&str; 4] = ["virtual-cursor-identity", "virtual-cursor-ergonomic", "virtual-pad-identity", "virtual-pad-ergonomic"];

impl TechniqueSpec {
    pub fn virtual_cursor(omega_i: Vector3<f64>, omega_o: Vector3<f64>) -> Self {
        let n = Vector3::from(OUTPUT_NORMAL);
        TechniqueSpec {
            kind: TechniqueKind::VirtualCursor,
            omega_i,
            omega_o,
            n_i: n,
            n_o: n,
            rotation: Matrix3::identity(),
        }
    }

    pub fn virtual_pad(omega_i: Vector3<f64>, n_i: Vector3<f64>, omega_o: Vector3<f64>, n_o: Vector3<f64>) -> Result<Self> {
        for (label, n) in [("input", &n_i), ("output", &n_o)] {
            if (n.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::InvalidTechnique(format!("{label} normal has norm {}", n.norm())));
            }
        }
        let rotation = rotation_between_normals(&n_i, &n_o)?;
        Ok(TechniqueSpec { kind: TechniqueKind::VirtualPad, omega_i, omega_o, n_i, n_o, rotation })
    }

    /// Resolves one of the four named techniques.
    pub fn preset(name: &str) -> Result<Self> {
        let o = Vector3::from(OUTPUT_ORIGIN);
        let n = Vector3::from(OUTPUT_NORMAL);
        match name {
            "virtual-cursor-identity" => Ok(TechniqueSpec::virtual_cursor(o, o)),
            "virtual-cursor-ergonomic" => Ok(TechniqueSpec::virtual_cursor(Vector3::new(-0.1, -0.4, 0.45), o)),
            "virtual-pad-identity" => TechniqueSpec::virtual_pad(o, n, o, n),
            "virtual-pad-ergonomic" => TechniqueSpec::virtual_pad(Vector3::new(-0.1, -0.3, 0.55), n, o, n),
            other => Err(Error::InvalidTechnique(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Cached input-to-output rotation (identity for the Virtual Cursor).
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// f_tf: fingertip to cursor.
    pub fn transfer(&self, x_ee: &Vector3<f64>) -> Vector3<f64> {
        match self.kind {
            TechniqueKind::VirtualCursor => virtual_cursor(x_ee, self),
            TechniqueKind::VirtualPad => {
                self.rotation * (project_to_plane(x_ee, &self.omega_i, &self.n_i) - self.omega_i) + self.omega_o
            }
        }
    }

    /// A fingertip position whose image is `x_p`. For the Virtual Pad it lies on the input plane.
    pub fn preimage(&self, x_p: &Vector3<f64>) -> Vector3<f64> {
        match self.kind {
            TechniqueKind::VirtualCursor => x_p + self.omega_i - self.omega_o,
            TechniqueKind::VirtualPad => self.rotation.transpose() * (x_p - self.omega_o) + self.omega_i,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TechniqueFile {
    kind: TechniqueKind,
    input_origin_m: [f64; 3],
    #[serde(default = "default_output_origin")]
    output_origin_m: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_normal: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_normal: Option<[f64; 3]>,
}

fn default_output_origin() -> [f64; 3] {
    OUTPUT_ORIGIN
}

impl TryFrom<TechniqueFile> for TechniqueSpec {
    type Error = Error;

    fn try_from(f: TechniqueFile) -> Result<Self> {
        let oi = Vector3::from(f.input_origin_m);
        let oo = Vector3::from(f.output_origin_m);
        match f.kind {
            TechniqueKind::VirtualCursor => Ok(TechniqueSpec::virtual_cursor(oi, oo)),
            TechniqueKind::VirtualPad => TechniqueSpec::virtual_pad(
                oi,
                Vector3::from(f.input_normal.unwrap_or(OUTPUT_NORMAL)),
                oo,
                Vector3::from(f.output_normal.unwrap_or(OUTPUT_NORMAL)),
            ),
        }
    }
}

impl From<TechniqueSpec> for TechniqueFile {
    fn from(t: TechniqueSpec) -> Self {
        let pad = t.kind == TechniqueKind::VirtualPad;
        TechniqueFile {
            kind: t.kind,
            input_origin_m: t.omega_i.into(),
            output_origin_m: t.omega_o.into(),
            input_normal: pad.then(|| t.n_i.into()),
            output_normal: pad.then(|| t.n_o.into()),
        }
    }
}

/// Cursor state of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceState {
    pub x_p: Vector3<f64>,
}

/// f_dev: the device state is the tracked fingertip position.
pub fn device_update(x_user: &BodyState, model: &ChainModel) -> Vector3<f64> {
    forward_kinematics(model, &x_user.q)
}

pub fn virtual_cursor(x_ee: &Vector3<f64>, spec: &TechniqueSpec) -> Vector3<f64> {
    x_ee - spec.omega_i + spec.omega_o
}

/// Orthogonal projection of `y` onto the plane through `omega` with unit normal `n`.
pub fn project_to_plane(y: &Vector3<f64>, omega: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
    y - n * (y - omega).dot(n)
}

/// Rotation about `n_i × n_o` taking `n_i` onto `n_o`.
pub fn rotation_between_normals(n_i: &Vector3<f64>, n_o: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let cross = n_i.cross(n_o);
    let c = n_i.dot(n_o) / (n_i.norm() * n_o.norm());
    if cross.norm() < PARALLEL_TOLERANCE {
        return if c > 0.0 {
            Ok(Matrix3::identity())
        } else {
            Err(Error::InvalidTechnique("antiparallel normals leave the rotation axis undefined".into()))
        };
    }
    let a = cross / cross.norm();
    let s = (1.0 - c * c).max(0.0).sqrt();
    #[rustfmt::skip]
    let skew = Matrix3::new(
        c,         -a.z * s,  a.y * s,
        a.z * s,   c,         -a.x * s,
        -a.y * s,  a.x * s,   c,
    );
    Ok(a * a.transpose() * (1.0 - c) + skew)
}

pub fn virtual_pad(x_ee: &Vector3<f64>, spec: &TechniqueSpec) -> Vector3<f64> {
    spec.rotation * (project_to_plane(x_ee, &spec.omega_i, &spec.n_i) - spec.omega_i) + spec.omega_o
}

/// Optional internal dynamics of the interface applied after the transfer function.
pub trait VirtualDynamics {
    fn apply(&self, previous: &InterfaceState, transferred: Vector3<f64>) -> Vector3<f64>;
}

/// No virtual dynamics: the cursor follows the transfer function.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThrough;

impl VirtualDynamics for PassThrough {
    fn apply(&self, _previous: &InterfaceState, transferred: Vector3<f64>) -> Vector3<f64> {
        transferred
    }
}

pub fn interface_step(x_if: &InterfaceState, x_dev: &Vector3<f64>, spec: &TechniqueSpec) -> InterfaceState {
    interface_step_with(x_if, x_dev, spec, &PassThrough)
}

pub fn interface_step_with(
    x_if: &InterfaceState,
    x_dev: &Vector3<f64>,
    spec: &TechniqueSpec,
    dynamics: &impl VirtualDynamics,
) -> InterfaceState {
    InterfaceState { x_p: dynamics.apply(x_if, spec.transfer(x_dev)) }
}
