//! Kinesthetic and tactile feedback for the master console.
//!
//! Kinesthetic: the sensed tool wrench is reflected onto the master joints
//! through the Jacobian transpose, `τ = Jᵀ·F`. The sensor has no Fx, Fy or
//! Mz channel, so those components of `F` are zero.
//!
//! Tactile: motor 1 vibrates with an intensity linear in grip force; motor 2
//! is a hard over-force alarm with a hysteresis band on release. Default
//! operating points (10 N full intensity, 5 N alarm, 0.2 N band) are
//! placeholders to be set per user.

use nalgebra::{SVector, Vector3, Vector6};
use thiserror::Error;

use crate::kinematics::{ArmModel, JointState7, JOINT_COUNT};
use crate::sensor::Wrench3;
use crate::Clamped;

#[derive(Debug, Error, PartialEq)]
pub enum FeedbackError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: String) -> FeedbackError {
    FeedbackError::Invalid { field, reason }
}

/// Joint torques, N·mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointTorques7 {
    pub tau: [f64; JOINT_COUNT],
}

impl JointTorques7 {
    pub fn is_finite(&self) -> bool {
        self.tau.iter().all(|v| v.is_finite())
    }
}

/// Per-joint absolute torque limits, N·mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueCaps([f64; JOINT_COUNT]);

pub const DEFAULT_TORQUE_CAPS: [f64; JOINT_COUNT] = [3000.0, 3000.0, 2000.0, 800.0, 500.0, 500.0, 300.0];

impl Default for TorqueCaps {
    fn default() -> Self {
        TorqueCaps(DEFAULT_TORQUE_CAPS)
    }
}

impl TorqueCaps {
    pub fn new(caps: [f64; JOINT_COUNT]) -> Result<Self, FeedbackError> {
        if let Some(i) = caps.iter().position(|c| !c.is_finite() || *c <= 0.0) {
            return Err(invalid("torque_caps", format!("cap for joint {} must be > 0, got {}", i + 1, caps[i])));
        }
        Ok(TorqueCaps(caps))
    }

    /// No practical limit; useful when checking the unclamped mapping.
    pub fn unlimited() -> Self {
        TorqueCaps([f64::INFINITY; JOINT_COUNT])
    }

    pub fn as_array(&self) -> &[f64; JOINT_COUNT] {
        &self.0
    }
}

/// Base-frame 6-vector `[force (N); moment (N·mm)]` for a sensor-frame
/// wrench at the master tool posture `q`.
pub fn tool_wrench_world(w: Wrench3, model: &ArmModel, q: &JointState7) -> Vector6<f64> {
    let rot = model.tool_frame(q).rotation;
    let force = rot * Vector3::new(0.0, 0.0, w.fz);
    let moment = rot * Vector3::new(w.mx, w.my, 0.0);
    Vector6::new(force.x, force.y, force.z, moment.x, moment.y, moment.z)
}

pub fn kinesthetic_torques(
    w: Wrench3,
    model: &ArmModel,
    q: &JointState7,
    caps: &TorqueCaps,
) -> Clamped<JointTorques7> {
    let f = tool_wrench_world(w, model, q);
    let raw: SVector<f64, JOINT_COUNT> = model.jacobian(q).value.transpose() * f;
    let mut tau = [0.0; JOINT_COUNT];
    let mut clamped = false;
    for i in 0..JOINT_COUNT {
        let cap = caps.0[i];
        let v = raw[i].clamp(-cap, cap);
        clamped |= v != raw[i];
        tau[i] = v;
    }
    Clamped::new(JointTorques7 { tau }, clamped)
}

/// Gripping force at the tool tip, N.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct GripForce(f64);

impl GripForce {
    pub fn new(f: f64) -> Result<Self, FeedbackError> {
        if f.is_finite() && f >= 0.0 {
            Ok(GripForce(f))
        } else {
            Err(invalid("grip_force", format!("must be finite and >= 0, got {f}")))
        }
    }

    pub fn newtons(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TactileConfig {
    f_max: f64,
    f_threshold: f64,
    hysteresis: f64,
}

impl Default for TactileConfig {
    fn default() -> Self {
        TactileConfig { f_max: 10.0, f_threshold: 5.0, hysteresis: 0.2 }
    }
}

impl TactileConfig {
    pub fn new(f_max: f64, f_threshold: f64, hysteresis: f64) -> Result<Self, FeedbackError> {
        if !(f_max.is_finite() && f_max > 0.0) {
            return Err(invalid("f_max", format!("must be finite and > 0, got {f_max}")));
        }
        if !(f_threshold.is_finite() && f_threshold > 0.0) {
            return Err(invalid("f_threshold", format!("must be finite and > 0, got {f_threshold}")));
        }
        if !(hysteresis.is_finite() && hysteresis >= 0.0) {
            return Err(invalid("hysteresis", format!("must be finite and >= 0, got {hysteresis}")));
        }
        Ok(TactileConfig { f_max, f_threshold, hysteresis })
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn f_threshold(&self) -> f64 {
        self.f_threshold
    }

    pub fn hysteresis(&self) -> f64 {
        self.hysteresis
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VibrationCommand {
    /// Motor 1 intensity in [0, 1].
    pub motor1_intensity: f64,
    /// Motor 2 over-force alarm.
    pub motor2_on: bool,
}

pub fn tactile_command(f: GripForce, cfg: &TactileConfig, prev: VibrationCommand) -> VibrationCommand {
    let f = f.0;
    let motor2_on = if f > cfg.f_threshold {
        true
    } else if f < cfg.f_threshold - cfg.hysteresis {
        false
    } else {
        prev.motor2_on
    };
    VibrationCommand { motor1_intensity: (f / cfg.f_max).clamp(0.0, 1.0), motor2_on }
}
