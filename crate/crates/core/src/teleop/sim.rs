//! Tick-based master/slave teleoperation loop.
//!
//! Three stations exchange [`TeleopMessage`]s:
//!
//! ```text
//!  console ──MasterState/PedalEvent──▶ controller ──SlaveCommand──▶ slave
//!  console ◀──FeedbackCommand──────── controller ◀──Wrench/GripReport── slave
//! ```
//!
//! The console and the controller share a PC, so those two links are ideal.
//! The controller-slave links carry the configured [`TransportModel`].
//!
//! One tick runs, in order: console sampling, controller motion handling
//! (pedal, pose delta, scaling), slave command application, environment
//! contact and the sensor pipeline, controller feedback computation, and
//! console feedback application. Every stage consumes whatever its links
//! deliver at the current time, so with zero latency a master motion reaches
//! the slave, and its reflected force reaches the console, within the same
//! tick.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

use crate::feedback::{
    kinesthetic_torques, tactile_command, GripForce, JointTorques7, TactileConfig, TorqueCaps, VibrationCommand,
};
use crate::kinematics::{scale_motion, ArmModel, JointState7, PoseDelta, ScalingPolicy, ToolPose};
use crate::sensor::{
    calibration_matrix, estimate_wrench, forward_deflections, photo_from_springs, CalibrationMatrix, PhotoNoise,
    PhotoNoiseModel, SensorParams, Wrench3,
};

use super::environment::{Environment, Profile};
use super::message::{MessageKind, Payload, TeleopMessage};
use super::trace::{TraceRecord, TraceSink};
use super::transport::{Link, LinkStats, TransportError, TransportModel};

/// Ticks the pipeline adds on top of transport delay. Every stage runs in
/// the tick its input arrives.
pub const PROCESSING_TICKS: u64 = 0;

const UPLINK_SEED_SALT: u64 = 0xA5A5_5A5A_0F0F_F0F0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("tick {tick} (t = {t_ms} ms): invariant violated: {invariant}")]
    Invariant { tick: u64, t_ms: u64, invariant: String },
    #[error("invalid scenario: {0}")]
    Setup(String),
    #[error("output: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ControlMode {
    Manipulators,
    CameraArm,
}

impl ControlMode {
    pub fn toggled(self) -> Self {
        match self {
            ControlMode::Manipulators => ControlMode::CameraArm,
            ControlMode::CameraArm => ControlMode::Manipulators,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ControlMode::Manipulators => "Manipulators",
            ControlMode::CameraArm => "CameraArm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    t_ms: u64,
    tick_ms: u64,
}

impl SimClock {
    pub fn new(tick_ms: u64) -> Result<Self, SimError> {
        if tick_ms == 0 {
            return Err(SimError::Setup("tick_ms must be > 0".into()));
        }
        Ok(SimClock { t_ms: 0, tick_ms })
    }

    pub fn now(&self) -> u64 {
        self.t_ms
    }

    pub fn tick_ms(&self) -> u64 {
        self.tick_ms
    }

    pub fn tick_index(&self) -> u64 {
        self.t_ms / self.tick_ms
    }

    pub fn step(&mut self) {
        self.t_ms += self.tick_ms;
    }
}

/// Scripted master motion.
#[derive(Debug, Clone, PartialEq)]
pub enum MasterTrajectory {
    /// Encoder angles over time.
    Joints(Profile<7>),
    /// Tool-tip translation (mm) added to the pose of a fixed posture. The
    /// posture is still what the feedback torques are computed at.
    Pose { reference_q: JointState7, offsets: Profile<3> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputScript {
    pub master: MasterTrajectory,
    /// Jaw force at the slave tool tip, N.
    pub grip: Profile<1>,
    /// Pedal press times, ms. A press fires on the first tick at or after it.
    pub pedal_presses: Vec<u64>,
}

impl InputScript {
    pub fn idle(q: JointState7) -> Self {
        InputScript {
            master: MasterTrajectory::Joints(Profile::constant(q.q)),
            grip: Profile::constant([0.0]),
            pedal_presses: Vec::new(),
        }
    }

    /// Inputs for the tick ending at `t_ms`; `prev_ms` is the previous tick
    /// time or `None` on the first tick.
    pub fn at(&self, t_ms: u64, prev_ms: Option<u64>) -> TickInputs {
        let (master_q, pose_offset) = match &self.master {
            MasterTrajectory::Joints(p) => (JointState7::new(p.sample(t_ms)), Vector3::zeros()),
            MasterTrajectory::Pose { reference_q, offsets } => (*reference_q, Vector3::from(offsets.sample(t_ms))),
        };
        let pedal_presses = self
            .pedal_presses
            .iter()
            .filter(|&&p| p <= t_ms && prev_ms.is_none_or(|prev| p > prev))
            .count() as u32;
        TickInputs { master_q, pose_offset, grip_drive: self.grip.sample(t_ms)[0], pedal_presses }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickInputs {
    pub master_q: JointState7,
    /// Added to the forward-kinematics tool position, mm.
    pub pose_offset: Vector3<f64>,
    pub grip_drive: f64,
    pub pedal_presses: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub tick_ms: u64,
    pub duration_ms: u64,
    pub sensor: SensorParams,
    pub noise: PhotoNoiseModel,
    pub arm: ArmModel,
    pub scaling: ScalingPolicy,
    pub tactile: TactileConfig,
    pub torque_caps: TorqueCaps,
    pub transport: TransportModel,
    pub environment: Environment,
    pub slave_initial: ToolPose,
    pub input: InputScript,
}

impl Scenario {
    /// A quiet scenario on the default arm: no motion, no contact, ideal
    /// transport, noise-free sensor.
    pub fn quiescent(duration_ms: u64) -> Self {
        let arm = ArmModel::default_master();
        Scenario {
            tick_ms: 1,
            duration_ms,
            sensor: SensorParams::reference(),
            noise: PhotoNoiseModel::new(0.0, 0.0, 0).unwrap(),
            slave_initial: arm.forward_kinematics(&JointState7::default()).value,
            arm,
            scaling: ScalingPolicy::default(),
            tactile: TactileConfig::default(),
            torque_caps: TorqueCaps::default(),
            transport: TransportModel::ideal(),
            environment: Environment::None,
            input: InputScript::idle(JointState7::default()),
        }
    }

    pub fn tick_count(&self) -> u64 {
        self.duration_ms / self.tick_ms
    }

    /// One-way controller-slave delay in whole ticks, for a jitter-free link.
    pub fn hop_delay_ms(&self) -> u64 {
        let base = self.transport.base_latency_ms();
        let ticks = (base / self.tick_ms as f64).ceil() as u64;
        ticks * self.tick_ms
    }

    /// Console-to-console feedback delay expected with zero jitter: one hop
    /// down to the slave, one hop back, plus pipeline processing.
    pub fn expected_feedback_latency_ms(&self) -> u64 {
        2 * self.hop_delay_ms() + PROCESSING_TICKS * self.tick_ms
    }
}

/// What one tick produced.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Every frame emitted this tick, in emission order.
    pub messages: Vec<TeleopMessage>,
    pub trace: TraceRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LatencyStats {
    pub samples: u64,
    pub min_ms: Option<u64>,
    pub max_ms: Option<u64>,
    pub mean_ms: Option<f64>,
    /// Latency (ms) -> number of samples.
    pub histogram: BTreeMap<u64, u64>,
    /// Value every sample takes when the transport has no jitter and no loss.
    pub expected_jitter_free_ms: u64,
}

impl LatencyStats {
    fn add(&mut self, v: u64) {
        self.samples += 1;
        *self.histogram.entry(v).or_default() += 1;
        self.min_ms = Some(self.min_ms.map_or(v, |m| m.min(v)));
        self.max_ms = Some(self.max_ms.map_or(v, |m| m.max(v)));
    }

    fn finish(&mut self) {
        if self.samples > 0 {
            let total: u64 = self.histogram.iter().map(|(v, n)| v * n).sum();
            self.mean_ms = Some(total as f64 / self.samples as f64);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SaturationCounts {
    /// Ticks where a spring deflection hit the clamp.
    pub sensor_ticks: u64,
    /// Ticks where a feedback torque hit its cap.
    pub torque_ticks: u64,
    /// Ticks where a master joint reading was outside its limits.
    pub joint_clamp_ticks: u64,
    /// Slave commands limited by the scaling clamp box.
    pub workspace_clamps: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MessageCounts {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
    pub retracted: u64,
    pub lost_detected: u64,
    pub late_discarded: u64,
    pub per_link: BTreeMap<String, LinkStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub ticks: u64,
    pub tick_ms: u64,
    /// Largest |sensed - true| per axis: Fz (N), Mx, My (N·mm).
    pub max_wrench_error: [f64; 3],
    pub feedback_latency: LatencyStats,
    pub saturation: SaturationCounts,
    pub messages: MessageCounts,
    pub mode_switches: u64,
    pub final_mode: ControlMode,
    /// Sum of master tool translations forwarded while driving the manipulators, mm.
    pub master_translation_commanded: [f64; 3],
    /// Sum of translations the slave actually applied, mm.
    pub slave_translation_applied: [f64; 3],
    pub slave_initial_position: [f64; 3],
    pub slave_final_position: [f64; 3],
}

impl fmt::Display for SummaryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.max_wrench_error;
        let l = &self.feedback_latency;
        let s = &self.saturation;
        let m = &self.messages;
        writeln!(f, "ticks:                 {} x {} ms", self.ticks, self.tick_ms)?;
        writeln!(f, "max wrench error:      Fz {:.3e} N, Mx {:.3e} N·mm, My {:.3e} N·mm", e[0], e[1], e[2])?;
        match (l.min_ms, l.max_ms, l.mean_ms) {
            (Some(lo), Some(hi), Some(mean)) => writeln!(
                f,
                "feedback latency:      {} samples, min {lo} ms, mean {mean:.2} ms, max {hi} ms (jitter-free {} ms)",
                l.samples, l.expected_jitter_free_ms
            )?,
            _ => writeln!(f, "feedback latency:      no samples")?,
        }
        writeln!(
            f,
            "saturation:            sensor {} ticks, torque {} ticks, joint clamp {} ticks, workspace clamp {}",
            s.sensor_ticks, s.torque_ticks, s.joint_clamp_ticks, s.workspace_clamps
        )?;
        writeln!(
            f,
            "messages:              sent {}, delivered {}, dropped {}, lost (detected) {}, retracted {}",
            m.sent, m.delivered, m.dropped, m.lost_detected, m.retracted
        )?;
        writeln!(f, "mode switches:         {} (final mode {})", self.mode_switches, self.final_mode.label())?;
        let p = self.slave_final_position;
        write!(f, "slave final position:  ({:.4}, {:.4}, {:.4}) mm", p[0], p[1], p[2])
    }
}

pub struct Simulation {
    scenario: Scenario,
    clock: SimClock,
    mode: ControlMode,
    calibration: CalibrationMatrix,
    noise: PhotoNoise,

    console_to_ctrl: Link,
    ctrl_to_console: Link,
    ctrl_to_slave: Link,
    slave_to_ctrl: Link,
    last_delivered: BTreeMap<&'static str, u32>,

    // console
    master_q: JointState7,
    applied_torques: JointTorques7,
    applied_vibration: VibrationCommand,

    // controller
    last_master_pose: Option<ToolPose>,
    ctrl_sensed: Wrench3,
    ctrl_vibration: VibrationCommand,
    /// WrenchReport seq -> send time of the newest command the slave had applied.
    report_origin: BTreeMap<u32, u64>,
    /// FeedbackCommand seq -> same origin, carried to the console.
    feedback_origin: BTreeMap<u32, u64>,

    // slave
    slave_pose: ToolPose,

    // bookkeeping
    latency: LatencyStats,
    saturation: SaturationCounts,
    max_wrench_error: [f64; 3],
    mode_switches: u64,
    master_translation: Vector3<f64>,
    slave_translation: Vector3<f64>,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let clock = SimClock::new(scenario.tick_ms)?;
        let calibration = calibration_matrix(&scenario.sensor).map_err(|e| SimError::Setup(e.to_string()))?;
        let down = scenario.transport;
        let up = down.with_seed(down.seed() ^ UPLINK_SEED_SALT);
        let latency = LatencyStats { expected_jitter_free_ms: scenario.expected_feedback_latency_ms(), ..Default::default() };
        Ok(Simulation {
            clock,
            mode: ControlMode::Manipulators,
            calibration,
            noise: scenario.noise.source(),
            console_to_ctrl: Link::new("console_to_controller", TransportModel::ideal()),
            ctrl_to_console: Link::new("controller_to_console", TransportModel::ideal()),
            ctrl_to_slave: Link::new("controller_to_slave", down),
            slave_to_ctrl: Link::new("slave_to_controller", up),
            last_delivered: BTreeMap::new(),
            master_q: JointState7::default(),
            applied_torques: JointTorques7::default(),
            applied_vibration: VibrationCommand::default(),
            last_master_pose: None,
            ctrl_sensed: Wrench3::ZERO,
            ctrl_vibration: VibrationCommand::default(),
            report_origin: BTreeMap::new(),
            feedback_origin: BTreeMap::new(),
            slave_pose: scenario.slave_initial,
            latency,
            saturation: SaturationCounts::default(),
            max_wrench_error: [0.0; 3],
            mode_switches: 0,
            master_translation: Vector3::zeros(),
            slave_translation: Vector3::zeros(),
            scenario,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn slave_pose(&self) -> &ToolPose {
        &self.slave_pose
    }

    /// Foot-pedal press: toggles between driving the manipulators and the
    /// camera arm. Motion commands still in flight to the slave are
    /// withdrawn, and the master reference is re-taken on the next sample so
    /// no motion made before the switch carries over.
    pub fn handle_pedal(&mut self) {
        self.mode = self.mode.toggled();
        self.mode_switches += 1;
        self.last_master_pose = None;
        if self.mode == ControlMode::CameraArm {
            self.ctrl_to_slave.retract(MessageKind::SlaveCommand);
        }
    }

    fn violation(&self, invariant: impl Into<String>) -> SimError {
        SimError::Invariant { tick: self.clock.tick_index(), t_ms: self.clock.now(), invariant: invariant.into() }
    }

    fn send(link: &mut Link, t: u64, payload: Payload, out: &mut Vec<TeleopMessage>) -> Result<u32, TransportError> {
        let msg = link.send(t, payload)?;
        out.push(msg);
        Ok(msg.seq)
    }

    fn receive(&mut self, which: LinkId) -> Result<Vec<TeleopMessage>, SimError> {
        let now = self.clock.now();
        let link = self.link_mut(which);
        let msgs = link.poll(now);
        let earliest_ok = |m: &TeleopMessage| now as f64 + 1e-9 >= link.model().earliest_delivery(m.t_sim_ms);
        let name = link.name();
        if let Some(m) = msgs.iter().find(|m| !earliest_ok(m)) {
            return Err(self.violation(format!(
                "causality on {name}: seq {} sent at {} ms delivered at {now} ms",
                m.seq, m.t_sim_ms
            )));
        }
        for m in &msgs {
            if let Some(&prev) = self.last_delivered.get(name) {
                if m.seq <= prev {
                    return Err(self.violation(format!("sequence order on {name}: seq {} after {prev}", m.seq)));
                }
            }
            self.last_delivered.insert(name, m.seq);
        }
        Ok(msgs)
    }

    fn link_mut(&mut self, which: LinkId) -> &mut Link {
        match which {
            LinkId::ConsoleToCtrl => &mut self.console_to_ctrl,
            LinkId::CtrlToConsole => &mut self.ctrl_to_console,
            LinkId::CtrlToSlave => &mut self.ctrl_to_slave,
            LinkId::SlaveToCtrl => &mut self.slave_to_ctrl,
        }
    }

    fn links(&self) -> [&Link; 4] {
        [&self.console_to_ctrl, &self.ctrl_to_console, &self.ctrl_to_slave, &self.slave_to_ctrl]
    }

    /// Runs one tick and advances the clock.
    pub fn step(&mut self, inputs: &TickInputs) -> Result<StepOutput, SimError> {
        let t = self.clock.now();
        let mut emitted = Vec::new();
        let tx = |e: TransportError| e.to_string();

        if !inputs.master_q.is_finite() || !inputs.grip_drive.is_finite() || inputs.pose_offset.iter().any(|v| !v.is_finite()) {
            return Err(self.violation("tick inputs must be finite"));
        }

        // Console: sample encoders and pedal.
        let sampled = self.scenario.arm.clamp(&inputs.master_q);
        self.master_q = sampled.value;
        if sampled.clamped {
            self.saturation.joint_clamp_ticks += 1;
        }
        for _ in 0..inputs.pedal_presses {
            Self::send(&mut self.console_to_ctrl, t, Payload::PedalEvent { pressed: true }, &mut emitted)
                .map_err(|e| self.violation(tx(e)))?;
        }
        Self::send(&mut self.console_to_ctrl, t, Payload::MasterState(self.master_q), &mut emitted)
            .map_err(|e| self.violation(tx(e)))?;

        // Controller: mode and motion.
        let mut workspace_clamped = false;
        for msg in self.receive(LinkId::ConsoleToCtrl)? {
            match msg.payload {
                Payload::PedalEvent { pressed: true } => self.handle_pedal(),
                Payload::PedalEvent { pressed: false } => {}
                Payload::MasterState(q) => {
                    let mut pose = self.scenario.arm.forward_kinematics(&q).value;
                    pose.position += inputs.pose_offset;
                    let delta = match self.last_master_pose {
                        Some(prev) => prev.delta_to(&pose),
                        None => PoseDelta::identity(),
                    };
                    self.last_master_pose = Some(pose);
                    if self.mode == ControlMode::Manipulators {
                        let scaled = scale_motion(&delta, &self.scenario.scaling);
                        if scaled.clamped {
                            workspace_clamped = true;
                            self.saturation.workspace_clamps += 1;
                        }
                        self.master_translation += delta.translation;
                        Self::send(&mut self.ctrl_to_slave, t, Payload::SlaveCommand(scaled.value), &mut emitted)
                            .map_err(|e| self.violation(tx(e)))?;
                    }
                }
                other => return Err(self.violation(format!("unexpected {:?} on console link", other.kind()))),
            }
        }

        // Slave: apply commands, touch the environment, read the sensor.
        let pose_before = self.slave_pose;
        let mut fresh_origin = None;
        for msg in self.receive(LinkId::CtrlToSlave)? {
            match msg.payload {
                Payload::SlaveCommand(d) => {
                    self.slave_pose = self.slave_pose.apply(&d);
                    self.slave_translation += d.translation;
                    fresh_origin = Some(msg.t_sim_ms);
                }
                other => return Err(self.violation(format!("unexpected {:?} on slave link", other.kind()))),
            }
        }
        if self.mode == ControlMode::CameraArm && self.slave_pose != pose_before {
            return Err(self.violation("mode gating: slave moved while in CameraArm mode"));
        }
        let p = &self.slave_pose;
        if p.position.iter().any(|v| !v.is_finite()) || (p.orientation.norm() - 1.0).abs() > 1e-9 {
            return Err(self.violation("slave pose must be finite with a unit quaternion"));
        }

        let true_wrench = self.scenario.environment.wrench(t, &self.slave_pose);
        let springs = forward_deflections(true_wrench, &self.scenario.sensor).map_err(|e| self.violation(e.to_string()))?;
        if springs.clamped {
            self.saturation.sensor_ticks += 1;
        }
        let readings = photo_from_springs(springs.value, Some(&mut self.noise));
        let sensed = estimate_wrench(readings, &self.calibration);
        if !sensed.is_finite() {
            return Err(self.violation("sensed wrench must be finite"));
        }
        for (j, (s, w)) in sensed.to_array().iter().zip(true_wrench.to_array()).enumerate() {
            self.max_wrench_error[j] = self.max_wrench_error[j].max((s - w).abs());
        }
        let grip = GripForce::new(inputs.grip_drive.max(0.0)).map_err(|e| self.violation(e.to_string()))?;
        let wseq = Self::send(&mut self.slave_to_ctrl, t, Payload::WrenchReport(sensed), &mut emitted)
            .map_err(|e| self.violation(tx(e)))?;
        if let Some(o) = fresh_origin {
            self.report_origin.insert(wseq, o);
        }
        Self::send(&mut self.slave_to_ctrl, t, Payload::GripReport(grip), &mut emitted)
            .map_err(|e| self.violation(tx(e)))?;

        // Controller: feedback.
        let mut feedback_origin = None;
        for msg in self.receive(LinkId::SlaveToCtrl)? {
            match msg.payload {
                Payload::WrenchReport(w) => {
                    self.ctrl_sensed = w;
                    if let Some(o) = self.report_origin.remove(&msg.seq) {
                        feedback_origin = Some(feedback_origin.map_or(o, |f: u64| f.max(o)));
                    }
                }
                Payload::GripReport(g) => {
                    self.ctrl_vibration = tactile_command(g, &self.scenario.tactile, self.ctrl_vibration);
                }
                other => return Err(self.violation(format!("unexpected {:?} on uplink", other.kind()))),
            }
        }
        // Reports at or below the last delivered seq will never arrive.
        if let Some(&last) = self.last_delivered.get(self.slave_to_ctrl.name()) {
            self.report_origin = self.report_origin.split_off(&(last + 1));
        }
        let torques =
            kinesthetic_torques(self.ctrl_sensed, &self.scenario.arm, &self.master_q, &self.scenario.torque_caps);
        if torques.clamped {
            self.saturation.torque_ticks += 1;
        }
        if !torques.value.is_finite() {
            return Err(self.violation("feedback torques must be finite"));
        }
        let fseq = Self::send(
            &mut self.ctrl_to_console,
            t,
            Payload::FeedbackCommand { torques: torques.value, vibration: self.ctrl_vibration },
            &mut emitted,
        )
        .map_err(|e| self.violation(tx(e)))?;
        if let Some(o) = feedback_origin {
            self.feedback_origin.insert(fseq, o);
        }

        // Console: apply feedback.
        let mut latency_this_tick = None;
        for msg in self.receive(LinkId::CtrlToConsole)? {
            match msg.payload {
                Payload::FeedbackCommand { torques, vibration } => {
                    self.applied_torques = torques;
                    self.applied_vibration = vibration;
                    if let Some(o) = self.feedback_origin.remove(&msg.seq) {
                        let l = t - o;
                        self.latency.add(l);
                        latency_this_tick = Some(l);
                    }
                }
                other => return Err(self.violation(format!("unexpected {:?} on console feedback link", other.kind()))),
            }
        }

        let dropped: u64 = self.links().iter().map(|l| l.stats().dropped).sum();
        let lost: u64 = self.links().iter().map(|l| l.stats().lost_detected).sum();
        let trace = TraceRecord {
            t_ms: t,
            mode: self.mode,
            master_q: self.master_q.q,
            slave_position: self.slave_pose.position.into(),
            true_wrench,
            sensed_wrench: sensed,
            grip_n: grip.newtons(),
            tau: self.applied_torques.tau,
            motor1: self.applied_vibration.motor1_intensity,
            motor2: self.applied_vibration.motor2_on,
            dropped_msgs: dropped,
            sensor_saturated: springs.clamped,
            torque_saturated: torques.clamped,
            joint_clamped: sampled.clamped,
            workspace_clamped,
            feedback_latency_ms: latency_this_tick,
            lost_msgs: lost,
        };
        self.clock.step();
        Ok(StepOutput { messages: emitted, trace })
    }

    pub fn summary(&self) -> SummaryStats {
        let mut latency = self.latency.clone();
        latency.finish();
        let mut messages = MessageCounts::default();
        for l in self.links() {
            let s = l.stats();
            messages.sent += s.sent;
            messages.dropped += s.dropped;
            messages.delivered += s.delivered;
            messages.retracted += s.retracted;
            messages.lost_detected += s.lost_detected;
            messages.late_discarded += s.late_discarded;
            messages.per_link.insert(l.name().to_string(), s);
        }
        SummaryStats {
            ticks: self.clock.tick_index(),
            tick_ms: self.clock.tick_ms(),
            max_wrench_error: self.max_wrench_error,
            feedback_latency: latency,
            saturation: self.saturation,
            messages,
            mode_switches: self.mode_switches,
            final_mode: self.mode,
            master_translation_commanded: self.master_translation.into(),
            slave_translation_applied: self.slave_translation.into(),
            slave_initial_position: self.scenario.slave_initial.position.into(),
            slave_final_position: self.slave_pose.position.into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum LinkId {
    ConsoleToCtrl,
    CtrlToConsole,
    CtrlToSlave,
    SlaveToCtrl,
}

/// Runs the whole scenario, writing one trace record per tick and, when a
/// message sink is given, every emitted frame in wire format.
pub fn run_scenario(
    scenario: &Scenario,
    trace: &mut dyn TraceSink,
    mut messages: Option<&mut dyn Write>,
) -> Result<SummaryStats, SimError> {
    let mut sim = Simulation::new(scenario.clone())?;
    let mut prev = None;
    let mut frame = Vec::new();
    for _ in 0..scenario.tick_count() {
        let t = sim.clock().now();
        let inputs = scenario.input.at(t, prev);
        let out = sim.step(&inputs)?;
        trace.record(&out.trace)?;
        if let Some(w) = messages.as_deref_mut() {
            frame.clear();
            for m in &out.messages {
                m.encode_into(&mut frame);
            }
            w.write_all(&frame)?;
        }
        prev = Some(t);
    }
    trace.finish()?;
    if let Some(w) = messages {
        w.flush()?;
    }
    Ok(sim.summary())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teleop::message::decode_stream;

    fn pose_step(x_mm: f64) -> InputScript {
        InputScript {
            master: MasterTrajectory::Pose {
                reference_q: JointState7::default(),
                offsets: Profile::new(vec![(0, [0.0; 3]), (1, [x_mm, 0.0, 0.0])]).unwrap(),
            },
            grip: Profile::constant([0.0]),
            pedal_presses: vec![],
        }
    }

    fn run(s: &Scenario) -> (Vec<TraceRecord>, SummaryStats) {
        let mut rows = Vec::new();
        let summary = run_scenario(s, &mut rows, None).unwrap();
        (rows, summary)
    }

    #[test]
    fn quiescent_run_stays_quiet() {
        let s = Scenario::quiescent(200);
        let (rows, summary) = run(&s);
        assert_eq!(rows.len(), 200);
        let x0 = s.slave_initial.position;
        for r in &rows {
            assert_eq!(Vector3::from(r.slave_position), x0);
            assert_eq!(r.tau, [0.0; 7]);
            assert_eq!((r.motor1, r.motor2), (0.0, false));
            assert_eq!(r.sensed_wrench, Wrench3::ZERO);
        }
        assert_eq!(summary.max_wrench_error, [0.0; 3]);
    }

    #[test]
    fn step_reaches_slave_same_tick_without_latency() {
        let mut s = Scenario::quiescent(5);
        s.input = pose_step(8.0);
        let (rows, _) = run(&s);
        let x0 = s.slave_initial.position.x;
        assert_eq!(rows[0].slave_position[0], x0);
        assert!((rows[1].slave_position[0] - (x0 + 2.0)).abs() < 1e-9);
    }

    #[test]
    fn step_arrives_after_latency() {
        let mut s = Scenario::quiescent(40);
        s.input = pose_step(8.0);
        s.transport = TransportModel::new(20.0, 0.0, 0.0, 1).unwrap();
        let (rows, _) = run(&s);
        let x0 = s.slave_initial.position.x;
        for r in &rows[..21] {
            assert_eq!(r.slave_position[0], x0, "t = {}", r.t_ms);
        }
        assert!((rows[21].slave_position[0] - (x0 + 2.0)).abs() < 1e-9);
    }

    #[test]
    fn pedal_toggles_and_involutes() {
        let mut sim = Simulation::new(Scenario::quiescent(10)).unwrap();
        assert_eq!(sim.mode(), ControlMode::Manipulators);
        sim.handle_pedal();
        assert_eq!(sim.mode(), ControlMode::CameraArm);
        sim.handle_pedal();
        assert_eq!(sim.mode(), ControlMode::Manipulators);
    }

    #[test]
    fn camera_mode_freezes_slave() {
        let mut s = Scenario::quiescent(300);
        s.transport = TransportModel::new(15.0, 0.0, 0.0, 2).unwrap();
        s.input = InputScript {
            master: MasterTrajectory::Pose {
                reference_q: JointState7::default(),
                offsets: Profile::new(vec![(0, [0.0; 3]), (300, [60.0, -30.0, 15.0])]).unwrap(),
            },
            grip: Profile::constant([0.0]),
            pedal_presses: vec![100, 200],
        };
        let (rows, summary) = run(&s);
        let frozen: Vec<_> = rows.iter().filter(|r| r.mode == ControlMode::CameraArm).collect();
        assert_eq!(frozen.len(), 100);
        assert!(frozen.windows(2).all(|w| w[0].slave_position == w[1].slave_position));
        assert_eq!(summary.mode_switches, 2);
        assert!(summary.messages.retracted > 0);
        assert_eq!(summary.messages.lost_detected, 0);
        // The master advances 0.2 mm/tick, the slave 0.05 mm per command.
        // Manipulator phases are ticks 0..100 and 200..300; each loses its
        // first tick to re-referencing and its last 15 commands to the link
        // (retracted at the switch, or still in flight at the end).
        let applied = summary.slave_translation_applied[0];
        assert!((applied - 2.0 * 84.0 * 0.05).abs() < 1e-9, "{applied}");
    }

    #[test]
    fn zero_jitter_latency_is_two_hops() {
        let mut s = Scenario::quiescent(500);
        s.transport = TransportModel::new(20.0, 0.0, 0.0, 3).unwrap();
        let (rows, summary) = run(&s);
        let l = &summary.feedback_latency;
        assert_eq!(s.expected_feedback_latency_ms(), 40);
        assert_eq!(l.samples, 500 - 40);
        assert_eq!(l.histogram.keys().copied().collect::<Vec<_>>(), vec![40]);
        assert!(rows.iter().filter_map(|r| r.feedback_latency_ms).all(|v| v == 40));
    }

    #[test]
    fn jitter_and_drops_are_counted() {
        let mut s = Scenario::quiescent(2000);
        s.transport = TransportModel::new(10.0, 5.0, 0.1, 4).unwrap();
        s.input = pose_step(8.0);
        let (rows, summary) = run(&s);
        assert!(summary.messages.dropped > 0);
        assert_eq!(rows.last().unwrap().dropped_msgs, summary.messages.dropped);
        assert!(summary.messages.lost_detected <= summary.messages.dropped);
        let l = &summary.feedback_latency;
        assert!(l.min_ms.unwrap() >= 10);
        assert!(l.max_ms.unwrap() <= 40);
    }

    #[test]
    fn message_stream_decodes() {
        let mut s = Scenario::quiescent(20);
        s.input = pose_step(4.0);
        s.input.pedal_presses = vec![10];
        let mut bytes = Vec::new();
        let mut rows = Vec::new();
        run_scenario(&s, &mut rows, Some(&mut bytes)).unwrap();
        let msgs = decode_stream(&bytes).unwrap();
        // Per tick: MasterState, SlaveCommand (manipulator mode only), WrenchReport,
        // GripReport, FeedbackCommand; plus one PedalEvent.
        assert_eq!(msgs.len(), 20 * 4 + 10 + 1);
        assert_eq!(msgs.iter().filter(|m| m.kind() == MessageKind::PedalEvent).count(), 1);
        assert!(msgs.windows(2).all(|w| w[0].t_sim_ms <= w[1].t_sim_ms));
    }

    #[test]
    fn step_rejects_non_finite_inputs() {
        let mut sim = Simulation::new(Scenario::quiescent(10)).unwrap();
        let mut inputs = Scenario::quiescent(10).input.at(0, None);
        inputs.grip_drive = f64::NAN;
        let err = sim.step(&inputs).err().unwrap();
        assert!(matches!(err, SimError::Invariant { tick: 0, .. }));
        assert!(err.to_string().contains("finite"));
    }

    #[test]
    fn pedal_presses_fire_once() {
        let script = InputScript { pedal_presses: vec![0, 5, 5, 7], ..InputScript::idle(JointState7::default()) };
        let counts: Vec<u32> = (0..10u64)
            .map(|t| script.at(t, if t == 0 { None } else { Some(t - 1) }).pedal_presses)
            .collect();
        assert_eq!(counts, vec![1, 0, 0, 0, 0, 2, 0, 1, 0, 0]);
    }
}
