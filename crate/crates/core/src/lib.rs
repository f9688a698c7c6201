//! Haptic pipeline for a master/slave robotic endotrainer.
//!
//! The crate models the slave-side three-axis optoelectronic force/torque
//! sensor (three springs read by three photo sensors), fits and evaluates its
//! calibration, maps sensed wrenches onto the 7-DOF master arm as joint
//! torques, drives the two vibration motors of the tactile channel, and ties
//! everything together in a deterministic, tick-based teleoperation
//! simulator with a simulated transport.
//!
//! Canonical units throughout are N, mm and N·mm; joint angles are radians.
//!
//! Modules:
//! * [`sensor`] - forward/inverse sensor model and photo-sensor noise.
//! * [`calibration`] - least-squares calibration fit, accuracy metric, sample CSV.
//! * [`kinematics`] - 7-DOF arm model, forward kinematics, geometric Jacobian, motion scaling.
//! * [`feedback`] - kinesthetic (Jacobian transpose) and tactile feedback.
//! * [`teleop`] - message protocol, transport, environment and the simulation loop.
//! * [`config`] - scenario configuration, overrides and validation.
//! * [`cli`] - command-line front end.

pub mod calibration;
pub mod cli;
pub mod config;
pub mod feedback;
pub mod kinematics;
pub mod sensor;
pub mod teleop;

pub use calibration::{AccuracyReport, CalibrationFit, CalibrationSample};
pub use feedback::{GripForce, JointTorques7, TactileConfig, VibrationCommand};
pub use kinematics::{ArmModel, JointState7, PoseDelta, ScalingPolicy, ToolPose};
pub use sensor::{CalibrationMatrix, PhotoReadings, SensorParams, SpringDeflections, Wrench3};

/// A value that may have been limited to an admissible range.
///
/// `clamped` is set when at least one component was altered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped<T> {
    pub value: T,
    pub clamped: bool,
}

impl<T> Clamped<T> {
    pub fn exact(value: T) -> Self {
        Clamped { value, clamped: false }
    }

    pub fn new(value: T, clamped: bool) -> Self {
        Clamped { value, clamped }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Clamped<U> {
        Clamped { value: f(self.value), clamped: self.clamped }
    }
}
