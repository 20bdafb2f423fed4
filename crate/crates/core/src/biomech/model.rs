use std::path::Path;

use nalgebra::{DVector, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::kinematics::MAX_DOF;
use crate::error::{Error, Result};

const AXIS_TOLERANCE: f64 = 1e-12;
const DEFAULT_PASSIVE_DAMPING: f64 = 0.05;

/// Rigid body carried by the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub length: f64,
    pub mass: f64,
    /// Center of mass in the frame of the joint that carries the segment.
    pub com: Vector3<f64>,
    /// Inertia tensor about the center of mass, same frame.
    pub inertia: Matrix3<f64>,
}

impl Segment {
    /// Solid cylinder of the given radius hanging along -y from the joint origin.
    pub fn rod(name: &str, length: f64, mass: f64, radius: f64) -> Self {
        let transverse = mass * (3.0 * radius * radius + length * length) / 12.0;
        let axial = 0.5 * mass * radius * radius;
        Segment {
            name: name.to_string(),
            length,
            mass,
            com: Vector3::new(0.0, -0.5 * length, 0.0),
            inertia: Matrix3::from_diagonal(&Vector3::new(transverse, axial, transverse)),
        }
    }

    /// Point mass at `-length` along y, with a tiny isotropic inertia to keep the tensor definite.
    pub fn point_mass(name: &str, length: f64, mass: f64) -> Self {
        Segment {
            name: name.to_string(),
            length,
            mass,
            com: Vector3::new(0.0, -length, 0.0),
            inertia: Matrix3::identity() * 1e-12,
        }
    }
}

/// Hinge joint. Frames compose serially: joint `j` sits at `origin` in the frame of joint
/// `j - 1` and rotates about `axis`, also expressed in that frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub origin: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub range: [f64; 2],
    /// Passive viscous damping, N·m·s/rad.
    pub damping: f64,
    /// Reflected rotor inertia added to the mass-matrix diagonal, kg·m².
    pub armature: f64,
    /// Segment rigidly attached to this joint's frame, if any.
    pub segment: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleConstants {
    /// Excitation time constant t_e, s.
    pub excitation: f64,
    /// Activation time constant t_a, s.
    pub activation: f64,
}

impl Default for MuscleConstants {
    fn default() -> Self {
        MuscleConstants { excitation: 0.030, activation: 0.040 }
    }
}

/// Soft joint-limit spring-damper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitParams {
    pub stiffness: f64,
    pub damping: f64,
    /// Penetration (rad) and outward speed (rad/s) over which the damper fades in. With both at
    /// zero it switches on at the bound.
    pub damping_ramp: f64,
    pub damping_speed_ramp: f64,
    pub hard_clamp: bool,
}

impl LimitParams {
    /// Damping coefficient at penetration `depth` > 0 while moving further out at `speed` > 0.
    ///
    /// The ramps keep the coefficient, and with it the implicitly integrated acceleration,
    /// continuous where the damper engages.
    #[inline]
    pub fn damping_at(&self, depth: f64, speed: f64) -> f64 {
        let ramp = |x: f64, w: f64| if w > 0.0 { (x / w).min(1.0) } else { 1.0 };
        self.damping * ramp(depth, self.damping_ramp) * ramp(speed, self.damping_speed_ramp)
    }
}

impl Default for LimitParams {
    fn default() -> Self {
        LimitParams { stiffness: 50.0, damping: 2.0, damping_ramp: 0.02, damping_speed_ramp: 0.05, hard_clamp: false }
    }
}

/// Kinematic and inertial description of a torque-actuated serial arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub name: String,
    pub segments: Vec<Segment>,
    pub joints: Vec<Joint>,
    pub gravity: Vector3<f64>,
    /// Marker position in the frame of the last joint.
    pub marker: Vector3<f64>,
    /// Maximum voluntary torque per joint (g), N·m.
    pub max_torque: DVector<f64>,
    /// Identified applied-torque range per joint, N·m.
    pub torque_range: Vec<[f64; 2]>,
    /// Force normalized control bounds to contain zero.
    pub bounds_include_zero: bool,
    pub muscle: MuscleConstants,
    pub limits: LimitParams,
    /// Physics step, s.
    pub dt: f64,
    /// For every segment, the index of the joint carrying it.
    pub(crate) carrier: Vec<usize>,
}

impl ChainModel {
    /// Validates and assembles a model. `torque_range` defaults to `[-g, g]` when empty.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        segments: Vec<Segment>,
        joints: Vec<Joint>,
        gravity: Vector3<f64>,
        marker: Vector3<f64>,
        max_torque: DVector<f64>,
        muscle: MuscleConstants,
        limits: LimitParams,
        dt: f64,
    ) -> Result<Self> {
        let n = joints.len();
        let torque_range = max_torque.iter().map(|&g| [-g, g]).collect();
        let mut model = ChainModel {
            name: name.into(),
            segments,
            joints,
            gravity,
            marker,
            max_torque,
            torque_range,
            bounds_include_zero: false,
            muscle,
            limits,
            dt,
            carrier: Vec::new(),
        };
        if model.max_torque.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} maximum torques for {} joints",
                model.max_torque.len(),
                n
            )));
        }
        model.carrier = model.validate()?;
        Ok(model)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    fn validate(&self) -> Result<Vec<usize>> {
        if self.joints.is_empty() || self.joints.len() > MAX_DOF {
            return Err(Error::InvalidModel(format!(
                "chain has {} joints, supported range is 1 to {MAX_DOF}",
                self.joints.len()
            )));
        }
        if self.segments.len() > MAX_DOF {
            return Err(Error::InvalidModel(format!("at most {MAX_DOF} segments are supported")));
        }
        for s in &self.segments {
            if !(s.mass > 0.0) {
                return Err(Error::InvalidModel(format!("segment {} has non-positive mass", s.name)));
            }
            if (s.inertia - s.inertia.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidModel(format!("segment {} inertia is not symmetric", s.name)));
            }
            let eig = SymmetricEigen::new(s.inertia).eigenvalues;
            if eig.min() <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "segment {} inertia is not positive definite",
                    s.name
                )));
            }
        }
        let mut carrier = vec![usize::MAX; self.segments.len()];
        for (j, joint) in self.joints.iter().enumerate() {
            if (joint.axis.norm() - 1.0).abs() > AXIS_TOLERANCE {
                return Err(Error::InvalidModel(format!(
                    "joint {} axis norm {} is not 1",
                    joint.name,
                    joint.axis.norm()
                )));
            }
            if !(joint.range[0] < joint.range[1]) {
                return Err(Error::InvalidModel(format!("joint {} has an empty range", joint.name)));
            }
            if joint.damping < 0.0 || joint.armature < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "joint {} has negative damping or armature",
                    joint.name
                )));
            }
            if let Some(s) = joint.segment {
                if s >= self.segments.len() {
                    return Err(Error::InvalidModel(format!("joint {} references segment {s}", joint.name)));
                }
                if carrier[s] != usize::MAX {
                    return Err(Error::InvalidModel(format!(
                        "segment {} is attached to two joints",
                        self.segments[s].name
                    )));
                }
                carrier[s] = j;
            }
        }
        if let Some(s) = carrier.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidModel(format!(
                "segment {} is not attached to any joint",
                self.segments[s].name
            )));
        }
        if let Some(i) = self.max_torque.iter().position(|&g| !(g > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "maximum voluntary torque of joint {} must be positive",
                self.joints[i].name
            )));
        }
        let MuscleConstants { excitation, activation } = self.muscle;
        if !(excitation > 0.0 && activation > 0.0) {
            return Err(Error::InvalidModel("muscle time constants must be positive".into()));
        }
        if !(self.dt > 0.0) || self.dt >= (excitation * activation).sqrt() {
            return Err(Error::InvalidModel(format!(
                "physics step {} s must satisfy 0 < dt < sqrt(t_e t_a) = {} s",
                self.dt,
                (excitation * activation).sqrt()
            )));
        }
        if self.torque_range.len() != self.joints.len() {
            return Err(Error::InvalidModel("torque range count differs from joint count".into()));
        }
        Ok(carrier)
    }

    /// Replaces the identified torque ranges and the derived gains `g = max(|lo|, |hi|)`.
    pub fn with_torque_ranges(mut self, ranges: &[[f64; 2]]) -> Result<Self> {
        if ranges.len() != self.dof() {
            return Err(Error::LengthMismatch { left: ranges.len(), right: self.dof() });
        }
        self.torque_range = ranges.to_vec();
        self.max_torque = DVector::from_iterator(ranges.len(), ranges.iter().map(|r| r[0].abs().max(r[1].abs())));
        self.carrier = self.validate()?;
        Ok(self)
    }

    /// Normalized control bounds: the identified range divided by g, so that the larger
    /// magnitude maps to one.
    pub fn control_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.dof();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for i in 0..n {
            let g = self.max_torque[i];
            lo[i] = self.torque_range[i][0] / g;
            hi[i] = self.torque_range[i][1] / g;
            if self.bounds_include_zero {
                lo[i] = lo[i].min(0.0);
                hi[i] = hi[i].max(0.0);
            }
        }
        (lo, hi)
    }

    /// Sum of joint origin offsets and the marker offset.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.origin.norm()).sum::<f64>() + self.marker.norm()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Built-in seven-hinge right-arm profile.
    pub fn paper_arm() -> Self {
        ChainModel::from_toml_str(PAPER_ARM_TOML, "paper-arm")
            .expect("embedded paper-arm profile is valid")
    }

    /// Resolves a profile name or a path to a TOML model file.
    pub fn from_profile(profile: &str) -> Result<Self> {
        match profile {
            "paper-arm" => Ok(ChainModel::paper_arm()),
            path => ChainModel::load(path),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ChainModel::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let file: ChainModelFile = toml::from_str(text)
            .map_err(|e| Error::Config { origin: origin.to_string(), message: e.to_string() })?;
        file.into_model()
    }

    pub fn to_file(&self) -> ChainModelFile {
        ChainModelFile {
            name: self.name.clone(),
            gravity_m_s2: self.gravity.into(),
            marker_offset_m: self.marker.into(),
            physics_dt_ms: self.dt * 1e3,
            bounds_include_zero: self.bounds_include_zero,
            muscle: MuscleFile {
                excitation_ms: self.muscle.excitation * 1e3,
                activation_ms: self.muscle.activation * 1e3,
            },
            limits: LimitsFile {
                stiffness_nm_per_rad: self.limits.stiffness,
                damping_nms_per_rad: self.limits.damping,
                damping_ramp_rad: self.limits.damping_ramp,
                damping_ramp_rad_per_s: self.limits.damping_speed_ramp,
                hard_clamp: self.limits.hard_clamp,
            },
            segments: self
                .segments
                .iter()
                .map(|s| SegmentFile {
                    name: s.name.clone(),
                    length_m: s.length,
                    mass_kg: s.mass,
                    radius_m: None,
                    com_m: Some(s.com.into()),
                    inertia_kg_m2: Some(s.inertia.into()),
                })
                .collect(),
            joints: self
                .joints
                .iter()
                .enumerate()
                .map(|(i, j)| JointFile {
                    name: j.name.clone(),
                    origin_m: j.origin.into(),
                    axis: j.axis.into(),
                    range_deg: None,
                    range_rad: Some(j.range),
                    torque_range_nm: Some(self.torque_range[i]),
                    max_torque_nm: None,
                    damping_nms_per_rad: j.damping,
                    armature_kg_m2: j.armature,
                    segment: j.segment.map(|s| self.segments[s].name.clone()),
                })
                .collect(),
        }
    }
}

pub const PAPER_ARM_TOML: &str = include_str!("../../profiles/paper_arm.toml");

/// On-disk model schema. Units are carried by the field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainModelFile {
    pub name: String,
    #[serde(default = "default_gravity")]
    pub gravity_m_s2: [f64; 3],
    pub marker_offset_m: [f64; 3],
    #[serde(default = "default_physics_dt_ms")]
    pub physics_dt_ms: f64,
    #[serde(default)]
    pub bounds_include_zero: bool,
    #[serde(default)]
    pub muscle: MuscleFile,
    #[serde(default)]
    pub limits: LimitsFile,
    pub segments: Vec<SegmentFile>,
    pub joints: Vec<JointFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleFile {
    pub excitation_ms: f64,
    pub activation_ms: f64,
}

impl Default for MuscleFile {
    fn default() -> Self {
        MuscleFile { excitation_ms: 30.0, activation_ms: 40.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsFile {
    pub stiffness_nm_per_rad: f64,
    pub damping_nms_per_rad: f64,
    #[serde(default = "default_ramp")]
    pub damping_ramp_rad: f64,
    #[serde(default = "default_speed_ramp")]
    pub damping_ramp_rad_per_s: f64,
    #[serde(default)]
    pub hard_clamp: bool,
}

fn default_ramp() -> f64 {
    LimitParams::default().damping_ramp
}

fn default_speed_ramp() -> f64 {
    LimitParams::default().damping_speed_ramp
}

impl Default for LimitsFile {
    fn default() -> Self {
        let d = LimitParams::default();
        LimitsFile {
            stiffness_nm_per_rad: d.stiffness,
            damping_nms_per_rad: d.damping,
            damping_ramp_rad: d.damping_ramp,
            damping_ramp_rad_per_s: d.damping_speed_ramp,
            hard_clamp: d.hard_clamp,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub name: String,
    pub length_m: f64,
    pub mass_kg: f64,
    /// Cylinder radius; used to derive com and inertia when those are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub com_m: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia_kg_m2: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointFile {
    pub name: String,
    #[serde(default)]
    pub origin_m: [f64; 3],
    pub axis: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_deg: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_rad: Option<[f64; 2]>,
    /// Identified applied-torque range; g is the larger magnitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque_range_nm: Option<[f64; 2]>,
    /// Symmetric alternative to `torque_range_nm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_torque_nm: Option<f64>,
    #[serde(default = "default_damping")]
    pub damping_nms_per_rad: f64,
    #[serde(default)]
    pub armature_kg_m2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<String>,
}

fn default_gravity() -> [f64; 3] {
    [0.0, -9.81, 0.0]
}

fn default_physics_dt_ms() -> f64 {
    2.0
}

fn default_damping() -> f64 {
    DEFAULT_PASSIVE_DAMPING
}

impl ChainModelFile {
    pub fn into_model(self) -> Result<ChainModel> {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let mut seg = match s.radius_m {
                    Some(r) => Segment::rod(&s.name, s.length_m, s.mass_kg, r),
                    None => Segment::rod(&s.name, s.length_m, s.mass_kg, 0.0),
                };
                if let Some(c) = s.com_m {
                    seg.com = c.into();
                }
                match (s.inertia_kg_m2, s.radius_m) {
                    (Some(i), _) => seg.inertia = i.into(),
                    (None, Some(_)) => {}
                    (None, None) => {
                        return Err(Error::InvalidModel(format!(
                            "segment {} needs radius_m or inertia_kg_m2",
                            s.name
                        )))
                    }
                }
                Ok(seg)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut joints = Vec::with_capacity(self.joints.len());
        let mut ranges = Vec::with_capacity(self.joints.len());
        for j in &self.joints {
            let range = match (j.range_rad, j.range_deg) {
                (Some(r), _) => r,
                (None, Some(d)) => [d[0].to_radians(), d[1].to_radians()],
                (None, None) => {
                    return Err(Error::InvalidModel(format!("joint {} needs range_deg or range_rad", j.name)))
                }
            };
            let torque = match (j.torque_range_nm, j.max_torque_nm) {
                (Some(r), _) => r,
                (None, Some(g)) => [-g, g],
                (None, None) => {
                    return Err(Error::InvalidModel(format!(
                        "joint {} needs torque_range_nm or max_torque_nm",
                        j.name
                    )))
                }
            };
            let segment = match &j.segment {
                None => None,
                Some(name) => Some(segments.iter().position(|s| &s.name == name).ok_or_else(|| {
                    Error::InvalidModel(format!("joint {} references unknown segment {name}", j.name))
                })?),
            };
            joints.push(Joint {
                name: j.name.clone(),
                origin: j.origin_m.into(),
                axis: j.axis.into(),
                range,
                damping: j.damping_nms_per_rad,
                armature: j.armature_kg_m2,
                segment,
            });
            ranges.push(torque);
        }

        let n = joints.len();
        let mut model = ChainModel::new(
            self.name,
            segments,
            joints,
            self.gravity_m_s2.into(),
            self.marker_offset_m.into(),
            DVector::from_element(n, 1.0),
            MuscleConstants {
                excitation: self.muscle.excitation_ms * 1e-3,
                activation: self.muscle.activation_ms * 1e-3,
            },
            LimitParams {
                stiffness: self.limits.stiffness_nm_per_rad,
                damping: self.limits.damping_nms_per_rad,
                damping_ramp: self.limits.damping_ramp_rad,
                damping_speed_ramp: self.limits.damping_ramp_rad_per_s,
                hard_clamp: self.limits.hard_clamp,
            },
            self.physics_dt_ms * 1e-3,
        )?
        .with_torque_ranges(&ranges)?;
        model.bounds_include_zero = self.bounds_include_zero;
        Ok(model)
    }
}

/// Test and example fixtures.
pub mod fixtures {
    use super::*;

    /// Single hinge about z carrying a point mass at distance `length` below the pivot.
    pub fn pendulum(length: f64, mass: f64) -> ChainModel {
        ChainModel::new(
            "pendulum",
            vec![Segment::point_mass("bob", length, mass)],
            vec![Joint {
                name: "hinge".into(),
                origin: Vector3::zeros(),
                axis: Vector3::z(),
                range: [-10.0, 10.0],
                damping: 0.0,
                armature: 0.0,
                segment: Some(0),
            }],
            Vector3::new(0.0, -9.81, 0.0),
            Vector3::new(0.0, -length, 0.0),
            DVector::from_element(1, 10.0),
            MuscleConstants::default(),
            LimitParams::default(),
            0.002,
        )
        .expect("pendulum fixture is valid")
    }

    /// Planar two-link arm in the x-y plane, hinges about z, links hanging along -y at q = 0.
    pub fn planar_two_link() -> ChainModel {
        let upper = Segment {
            name: "link1".into(),
            length: 0.33,
            mass: 2.0,
            com: Vector3::new(0.0, -0.15, 0.0),
            inertia: Matrix3::from_diagonal(&Vector3::new(0.02, 0.002, 0.021)),
        };
        let fore = Segment {
            name: "link2".into(),
            length: 0.37,
            mass: 1.7,
            com: Vector3::new(0.0, -0.19, 0.0),
            inertia: Matrix3::from_diagonal(&Vector3::new(0.015, 0.001, 0.017)),
        };
        let hinge = |name: &str, origin: Vector3<f64>, seg: usize| Joint {
            name: name.into(),
            origin,
            axis: Vector3::z(),
            range: [-10.0, 10.0],
            damping: 0.0,
            armature: 0.0,
            segment: Some(seg),
        };
        ChainModel::new(
            "planar-two-link",
            vec![upper, fore],
            vec![
                hinge("shoulder", Vector3::zeros(), 0),
                hinge("elbow", Vector3::new(0.0, -0.33, 0.0), 1),
            ],
            Vector3::new(0.0, -9.81, 0.0),
            Vector3::new(0.0, -0.37, 0.0),
            DVector::from_vec(vec![20.0, 10.0]),
            MuscleConstants::default(),
            LimitParams::default(),
            0.002,
        )
        .expect("two-link fixture is valid")
    }
}
