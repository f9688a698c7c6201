//! Serial 7-DOF arm: forward kinematics, geometric Jacobian and
//! master-to-slave motion scaling.
//!
//! Lengths are in mm and joint angles in rad. Every joint is revolute. The
//! first three joints position the wrist, the last four orient the tool.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Isometry3, SMatrix, Translation3, Unit, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::Clamped;

pub const JOINT_COUNT: usize = 7;

pub type Jacobian = SMatrix<f64, 6, JOINT_COUNT>;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("arm model needs exactly {JOINT_COUNT} joints, got {0}")]
    JointCount(usize),
    #[error("joint {joint}: {reason}")]
    InvalidJoint { joint: usize, reason: String },
    #[error("invalid scaling policy: {0}")]
    InvalidScaling(String),
}

/// One revolute joint.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// Fixed transform from the previous joint frame (or base) to this joint
    /// frame at zero angle.
    pub origin: Isometry3<f64>,
    /// Rotation axis in this joint's frame.
    pub axis: Unit<Vector3<f64>>,
    pub limits: [f64; 2],
}

impl Joint {
    pub fn new(origin: Isometry3<f64>, axis: Vector3<f64>, limits: [f64; 2]) -> Self {
        Joint { origin, axis: Unit::new_normalize(axis), limits }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    joints: [Joint; JOINT_COUNT],
    tool: Isometry3<f64>,
}

/// Posture of the default model where the arm is stretched straight up so
/// that joints 1, 4 and 7 share one line; the Jacobian drops to rank 5.
pub const DEFAULT_SINGULAR_POSTURE: [f64; JOINT_COUNT] = [0.0, 0.0, -FRAC_PI_2, 0.0, 0.0, 0.0, 0.0];

impl ArmModel {
    pub fn new(joints: Vec<Joint>, tool: Isometry3<f64>) -> Result<Self, KinematicsError> {
        let n = joints.len();
        let joints: [Joint; JOINT_COUNT] = joints.try_into().map_err(|_| KinematicsError::JointCount(n))?;
        for (i, j) in joints.iter().enumerate() {
            let [lo, hi] = j.limits;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(KinematicsError::InvalidJoint {
                    joint: i + 1,
                    reason: format!("limits must be finite with min < max, got [{lo}, {hi}]"),
                });
            }
            if !j.axis.iter().all(|v| v.is_finite()) {
                return Err(KinematicsError::InvalidJoint { joint: i + 1, reason: "axis is not finite".into() });
            }
        }
        Ok(ArmModel { joints, tool })
    }

    /// Default master/slave arm, about 900 mm from base to tool tip.
    ///
    /// | joint | role        | offset from previous (mm) | axis |
    /// |-------|-------------|---------------------------|------|
    /// | 1     | base yaw    | (0, 0, 100)               | z    |
    /// | 2     | shoulder    | (0, 0, 100)               | y    |
    /// | 3     | elbow       | (0, 0, 300)               | y    |
    /// | 4     | forearm roll| (200, 0, 0)               | x    |
    /// | 5     | wrist pitch | (50, 0, 0)                | y    |
    /// | 6     | wrist yaw   | (50, 0, 0)                | z    |
    /// | 7     | tool roll   | (50, 0, 0)                | x    |
    /// | tool  | tip         | (50, 0, 0), z along +x    |      |
    ///
    /// At zero angles the tool tip sits at (400, 0, 500) with its z axis
    /// (the instrument shaft) pointing along base +x.
    pub fn default_master() -> Self {
        let t = |x: f64, y: f64, z: f64| Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::identity());
        let joints = vec![
            Joint::new(t(0.0, 0.0, 100.0), Vector3::z(), [-PI, PI]),
            Joint::new(t(0.0, 0.0, 100.0), Vector3::y(), [-1.8, 1.8]),
            Joint::new(t(0.0, 0.0, 300.0), Vector3::y(), [-2.4, 2.4]),
            Joint::new(t(200.0, 0.0, 0.0), Vector3::x(), [-PI, PI]),
            Joint::new(t(50.0, 0.0, 0.0), Vector3::y(), [-1.8, 1.8]),
            Joint::new(t(50.0, 0.0, 0.0), Vector3::z(), [-1.8, 1.8]),
            Joint::new(t(50.0, 0.0, 0.0), Vector3::x(), [-PI, PI]),
        ];
        let tool = Isometry3::from_parts(
            Translation3::new(50.0, 0.0, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2),
        );
        ArmModel::new(joints, tool).expect("default model is valid")
    }

    pub fn joints(&self) -> &[Joint; JOINT_COUNT] {
        &self.joints
    }

    pub fn tool(&self) -> &Isometry3<f64> {
        &self.tool
    }

    pub fn clamp(&self, q: &JointState7) -> Clamped<JointState7> {
        let mut out = *q;
        let mut clamped = false;
        for (v, j) in out.q.iter_mut().zip(&self.joints) {
            let c = v.clamp(j.limits[0], j.limits[1]);
            if c != *v {
                clamped = true;
                *v = c;
            }
        }
        Clamped::new(out, clamped)
    }

    /// World frame of each joint (after its fixed offset, before its own
    /// rotation) together with the tool frame.
    fn chain(&self, q: &JointState7) -> ([Isometry3<f64>; JOINT_COUNT], Isometry3<f64>) {
        let mut frames = [Isometry3::identity(); JOINT_COUNT];
        let mut acc = Isometry3::identity();
        for (i, j) in self.joints.iter().enumerate() {
            acc *= j.origin;
            frames[i] = acc;
            acc *= UnitQuaternion::from_axis_angle(&j.axis, q.q[i]);
        }
        (frames, acc * self.tool)
    }

    pub fn forward_kinematics(&self, q: &JointState7) -> Clamped<ToolPose> {
        let q = self.clamp(q);
        let (_, tool) = self.chain(&q.value);
        q.map(|_| ToolPose::from_isometry(&tool))
    }

    /// Geometric Jacobian: rows 0-2 map joint rates to tool-tip linear
    /// velocity (mm/s), rows 3-5 to angular velocity (rad/s), both in the
    /// base frame.
    pub fn jacobian(&self, q: &JointState7) -> Clamped<Jacobian> {
        let q = self.clamp(q);
        let (frames, tool) = self.chain(&q.value);
        let tip = tool.translation.vector;
        let mut jac = Jacobian::zeros();
        for (i, (frame, joint)) in frames.iter().zip(&self.joints).enumerate() {
            let w = frame.rotation * joint.axis.into_inner();
            let v = w.cross(&(tip - frame.translation.vector));
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&v);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&w);
        }
        q.map(|_| jac)
    }

    /// Tool frame as an isometry, for callers that need the full transform.
    pub fn tool_frame(&self, q: &JointState7) -> Isometry3<f64> {
        self.chain(&self.clamp(q).value).1
    }

    /// Tool twist for joint rates `qdot` at `q`.
    pub fn twist(&self, q: &JointState7, qdot: &[f64; JOINT_COUNT]) -> Vector6<f64> {
        self.jacobian(q).value * nalgebra::SVector::<f64, JOINT_COUNT>::from_column_slice(qdot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState7 {
    pub q: [f64; JOINT_COUNT],
}

impl JointState7 {
    pub fn new(q: [f64; JOINT_COUNT]) -> Self {
        JointState7 { q }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolPose {
    /// mm, base frame.
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl ToolPose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        ToolPose { position, orientation }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        ToolPose { position: iso.translation.vector, orientation: iso.rotation }
    }

    /// Displacement taking `self` to `other`, expressed in the base frame.
    pub fn delta_to(&self, other: &ToolPose) -> PoseDelta {
        PoseDelta {
            translation: other.position - self.position,
            rotation: other.orientation * self.orientation.inverse(),
        }
    }

    pub fn apply(&self, delta: &PoseDelta) -> ToolPose {
        ToolPose {
            position: self.position + delta.translation,
            orientation: UnitQuaternion::new_normalize((delta.rotation * self.orientation).into_inner()),
        }
    }
}

/// Rigid displacement: a base-frame translation (mm) and a base-frame
/// rotation applied on the left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDelta {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl PoseDelta {
    pub fn identity() -> Self {
        PoseDelta { translation: Vector3::zeros(), rotation: UnitQuaternion::identity() }
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        PoseDelta { translation: Vector3::new(x, y, z), rotation: UnitQuaternion::identity() }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite()) && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

/// Master-to-slave scaling: translation is multiplied by
/// `translation_scale` and then limited to an axis-aligned box of admissible
/// per-command displacement. Rotation passes through unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPolicy {
    translation_scale: f64,
    clamp_min: Vector3<f64>,
    clamp_max: Vector3<f64>,
}

pub const DEFAULT_TRANSLATION_SCALE: f64 = 0.25;
pub const DEFAULT_CLAMP_HALF_WIDTH: f64 = 50.0;

impl Default for ScalingPolicy {
    fn default() -> Self {
        let h = DEFAULT_CLAMP_HALF_WIDTH;
        ScalingPolicy {
            translation_scale: DEFAULT_TRANSLATION_SCALE,
            clamp_min: Vector3::repeat(-h),
            clamp_max: Vector3::repeat(h),
        }
    }
}

impl ScalingPolicy {
    pub fn new(
        translation_scale: f64,
        clamp_min: Vector3<f64>,
        clamp_max: Vector3<f64>,
    ) -> Result<Self, KinematicsError> {
        if !(translation_scale > 0.0 && translation_scale <= 1.0) {
            return Err(KinematicsError::InvalidScaling(format!(
                "translation_scale must be in (0, 1], got {translation_scale}"
            )));
        }
        for i in 0..3 {
            let (lo, hi) = (clamp_min[i], clamp_max[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= 0.0 && 0.0 <= hi) {
                return Err(KinematicsError::InvalidScaling(format!(
                    "clamp box axis {i} must be finite and contain 0, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(ScalingPolicy { translation_scale, clamp_min, clamp_max })
    }

    pub fn translation_scale(&self) -> f64 {
        self.translation_scale
    }

    pub fn clamp_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.clamp_min, self.clamp_max)
    }
}

pub fn scale_motion(master_delta: &PoseDelta, policy: &ScalingPolicy) -> Clamped<PoseDelta> {
    let scaled = master_delta.translation * policy.translation_scale;
    let mut out = scaled;
    for i in 0..3 {
        out[i] = scaled[i].clamp(policy.clamp_min[i], policy.clamp_max[i]);
    }
    Clamped::new(PoseDelta { translation: out, rotation: master_delta.rotation }, out != scaled)
}
