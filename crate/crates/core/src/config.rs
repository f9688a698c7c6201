//! Scenario configuration: TOML schema, `--set` overrides and validation.
//!
//! Every section is optional except `duration_ms`. Example:
//!
//! ```toml
//! duration_ms = 2000
//! tick_ms = 1
//!
//! [sensor]
//! k = 0.196            # N/mm
//! d = 16.0             # mm
//! deflection_limit = 5.6
//! sigma = 0.01         # mm, photo-sensor noise
//! quantization = 0.0   # mm, 0 disables
//! seed = 7
//!
//! [arm]
//! model = "default"    # or "inline" with [[arm.joints]] and [arm.tool]
//!
//! [scaling]
//! translation_scale = 0.25
//! workspace_min = [-50.0, -50.0, -50.0]
//! workspace_max = [50.0, 50.0, 50.0]
//!
//! [tactile]
//! f_max = 10.0
//! f_threshold = 5.0
//! hysteresis = 0.2
//!
//! [feedback]
//! torque_caps = [3000.0, 3000.0, 2000.0, 800.0, 500.0, 500.0, 300.0]
//!
//! [transport]
//! base_latency_ms = 5.0
//! jitter_ms = 1.0
//! drop_rate = 0.01
//! seed = 11
//!
//! [environment]
//! kind = "scripted"    # "none" | "scripted" | "wall"
//! wrench = [{ t_ms = 0, fz = 0.0, mx = 0.0, my = 0.0 }, { t_ms = 1000, fz = 1.0, mx = 5.0, my = -5.0 }]
//!
//! [input]
//! kind = "joints"      # or "pose" with reference_q and offset waypoints
//! waypoints = [{ t_ms = 0, q = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0] }]
//! grip = [{ t_ms = 0, force = 0.0 }, { t_ms = 1000, force = 8.0 }]
//! pedal_presses = [500]
//!
//! [output]
//! trace = "trace.csv"
//! summary = "summary.json"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::{FeedbackError, TactileConfig, TorqueCaps};
use crate::kinematics::{ArmModel, Joint, JointState7, ScalingPolicy, ToolPose};
use crate::sensor::{PhotoNoiseModel, SensorError, SensorParams, DEFAULT_DEFLECTION_LIMIT, REFERENCE_RADIUS, REFERENCE_STIFFNESS};
use crate::teleop::environment::{Environment, Profile, SpringWall};
use crate::teleop::sim::{InputScript, MasterTrajectory, Scenario};
use crate::teleop::transport::{TransportError, TransportModel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("bad override `{0}`: expected dotted.path=value")]
    Override(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration_ms: u64,
    #[serde(default = "default_tick")]
    pub tick_ms: u64,
    #[serde(default)]
    pub sensor: SensorSection,
    #[serde(default)]
    pub arm: ArmSection,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub tactile: TactileSection,
    #[serde(default)]
    pub feedback: FeedbackSection,
    #[serde(default)]
    pub transport: TransportSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub slave: SlaveSection,
    #[serde(default)]
    pub input: InputSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_tick() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSection {
    pub k: f64,
    pub d: f64,
    pub deflection_limit: f64,
    pub sigma: f64,
    pub quantization: f64,
    pub seed: u64,
    pub spring_angles: Option<[f64; 3]>,
}

impl Default for SensorSection {
    fn default() -> Self {
        SensorSection {
            k: REFERENCE_STIFFNESS,
            d: REFERENCE_RADIUS,
            deflection_limit: DEFAULT_DEFLECTION_LIMIT,
            sigma: 0.0,
            quantization: 0.0,
            seed: 0,
            spring_angles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmSection {
    pub model: String,
    pub joints: Vec<JointSection>,
    pub tool: FrameSection,
}

impl Default for ArmSection {
    fn default() -> Self {
        ArmSection { model: "default".into(), joints: Vec::new(), tool: FrameSection::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSection {
    /// Offset from the previous frame, mm.
    pub xyz: [f64; 3],
    /// Fixed roll/pitch/yaw of the joint frame, rad.
    #[serde(default)]
    pub rpy: [f64; 3],
    pub axis: [f64; 3],
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSection {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

impl FrameSection {
    fn isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.xyz;
        let [r, p, w] = self.rpy;
        Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::from_euler_angles(r, p, w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub translation_scale: f64,
    pub workspace_min: [f64; 3],
    pub workspace_max: [f64; 3],
}

impl Default for ScalingSection {
    fn default() -> Self {
        let p = ScalingPolicy::default();
        let (lo, hi) = p.clamp_box();
        ScalingSection { translation_scale: p.translation_scale(), workspace_min: lo.into(), workspace_max: hi.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TactileSection {
    pub f_max: f64,
    pub f_threshold: f64,
    pub hysteresis: f64,
}

impl Default for TactileSection {
    fn default() -> Self {
        let t = TactileConfig::default();
        TactileSection { f_max: t.f_max(), f_threshold: t.f_threshold(), hysteresis: t.hysteresis() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackSection {
    /// Per-joint torque caps, N·mm.
    pub torque_caps: [f64; 7],
}

impl Default for FeedbackSection {
    fn default() -> Self {
        FeedbackSection { torque_caps: *TorqueCaps::default().as_array() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSection {
    pub base_latency_ms: f64,
    pub jitter_ms: f64,
    pub drop_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub kind: String,
    /// Scripted wrench waypoints.
    pub wrench: Vec<WrenchPoint>,
    pub wall: Option<WallSection>,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        EnvironmentSection { kind: "none".into(), wrench: Vec::new(), wall: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrenchPoint {
    pub t_ms: u64,
    pub fz: f64,
    pub mx: f64,
    pub my: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSection {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    /// N/mm.
    pub stiffness: f64,
    #[serde(default)]
    pub tip_offset: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlaveSection {
    /// Defaults to the master tool position at t = 0.
    pub initial_position: Option<[f64; 3]>,
    /// Defaults to the master tool orientation at t = 0.
    pub initial_rpy: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputSection {
    pub kind: String,
    pub reference_q: [f64; 7],
    pub waypoints: Vec<InputPoint>,
    pub grip: Vec<GripPoint>,
    pub pedal_presses: Vec<u64>,
}

impl Default for InputSection {
    fn default() -> Self {
        InputSection {
            kind: "joints".into(),
            reference_q: [0.0; 7],
            waypoints: Vec::new(),
            grip: Vec::new(),
            pedal_presses: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPoint {
    pub t_ms: u64,
    /// Joint angles, for `kind = "joints"`.
    pub q: Option<[f64; 7]>,
    /// Tool translation in mm, for `kind = "pose"`.
    pub offset: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripPoint {
    pub t_ms: u64,
    pub force: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub messages: Option<PathBuf>,
}

/// Reads a config file and applies `path=value` overrides.
pub fn load(path: &Path, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
    parse(&text, overrides)
}

pub fn parse(text: &str, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
}

/// Sets `a.b.c=value` in place. Numeric segments index arrays. Values are
/// read as TOML literals; anything that does not parse is taken as a string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::Override(assignment.to_string());
    let (path, raw) = assignment.split_once('=').ok_or_else(bad)?;
    let segments: Vec<&str> = path.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(bad());
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut root = toml::Value::Table(std::mem::take(table));
    let ok = set_path(&mut root, &segments, value);
    if let toml::Value::Table(t) = root {
        *table = t;
    }
    if ok {
        Ok(())
    } else {
        Err(bad())
    }
}

fn set_path(node: &mut toml::Value, path: &[&str], value: toml::Value) -> bool {
    let Some((seg, rest)) = path.split_first() else {
        *node = value;
        return true;
    };
    let child = match node {
        toml::Value::Table(t) => t.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(Default::default())),
        toml::Value::Array(a) => match seg.parse::<usize>().ok().and_then(|i| a.get_mut(i)) {
            Some(c) => c,
            None => return false,
        },
        _ => return false,
    };
    set_path(child, rest, value)
}

#[derive(Default)]
struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, path: impl Into<String>, message: impl fmt::Display) {
        self.0.push(FieldError { path: path.into(), message: message.to_string() });
    }

    fn check<T, E: fmt::Display>(&mut self, path: &str, r: Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(path, e);
                None
            }
        }
    }

    /// Like `check`, but extends `section` with the field the error names.
    fn check_in<T, E: fmt::Display + NamesField>(&mut self, section: &str, r: Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                let path = match e.field() {
                    Some(f) => format!("{section}.{f}"),
                    None => section.to_string(),
                };
                self.push(path, e);
                None
            }
        }
    }
}

trait NamesField {
    fn field(&self) -> Option<&'static str>;
}

impl NamesField for SensorError {
    fn field(&self) -> Option<&'static str> {
        match self {
            SensorError::InvalidParams { field: "quantization_step", .. } => Some("quantization"),
            SensorError::InvalidParams { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl NamesField for TransportError {
    fn field(&self) -> Option<&'static str> {
        match self {
            TransportError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl NamesField for FeedbackError {
    fn field(&self) -> Option<&'static str> {
        match self {
            FeedbackError::Invalid { field, .. } => Some(field),
        }
    }
}

impl ScenarioConfig {
    /// Checks every field and builds the runnable scenario. All problems are
    /// reported together.
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let mut errs = Errors::default();

        if self.tick_ms == 0 {
            errs.push("tick_ms", "must be > 0");
        }
        if self.duration_ms == 0 {
            errs.push("duration_ms", "must be > 0");
        }

        let s = &self.sensor;
        let sensor = match s.spring_angles {
            Some(a) => errs.check_in("sensor", SensorParams::with_layout(s.k, s.d, s.deflection_limit, a)),
            None => errs.check_in("sensor", SensorParams::new(s.k, s.d, s.deflection_limit)),
        };
        let noise = errs.check_in("sensor", PhotoNoiseModel::new(s.sigma, s.quantization, s.seed));

        let arm = self.arm_model(&mut errs);

        let sc = &self.scaling;
        let scaling = errs.check(
            "scaling",
            ScalingPolicy::new(sc.translation_scale, sc.workspace_min.into(), sc.workspace_max.into()),
        );
        let t = &self.tactile;
        let tactile = errs.check_in("tactile", TactileConfig::new(t.f_max, t.f_threshold, t.hysteresis));
        let torque_caps = errs.check("feedback.torque_caps", TorqueCaps::new(self.feedback.torque_caps));
        let tr = &self.transport;
        let transport =
            errs.check_in("transport", TransportModel::new(tr.base_latency_ms, tr.jitter_ms, tr.drop_rate, tr.seed));
        let environment = self.environment(&mut errs);
        let input = self.input_script(&mut errs);

        let slave_initial = match (&arm, &input) {
            (Some(arm), Some(input)) => self.slave_initial(arm, input, &mut errs),
            _ => None,
        };

        if !errs.0.is_empty() {
            return Err(ConfigError::Invalid(errs.0));
        }
        Ok(Scenario {
            tick_ms: self.tick_ms,
            duration_ms: self.duration_ms,
            sensor: sensor.unwrap(),
            noise: noise.unwrap(),
            arm: arm.unwrap(),
            scaling: scaling.unwrap(),
            tactile: tactile.unwrap(),
            torque_caps: torque_caps.unwrap(),
            transport: transport.unwrap(),
            environment: environment.unwrap(),
            slave_initial: slave_initial.unwrap(),
            input: input.unwrap(),
        })
    }

    fn arm_model(&self, errs: &mut Errors) -> Option<ArmModel> {
        match self.arm.model.as_str() {
            "default" => {
                if !self.arm.joints.is_empty() {
                    errs.push("arm.joints", "only allowed with model = \"inline\"");
                    return None;
                }
                Some(ArmModel::default_master())
            }
            "inline" => {
                let mut joints = Vec::new();
                let mut ok = true;
                for (i, j) in self.arm.joints.iter().enumerate() {
                    let finite = j.xyz.iter().chain(&j.rpy).chain(&j.axis).all(|v| v.is_finite());
                    let norm = Vector3::from(j.axis).norm();
                    if !finite || norm < 1e-9 {
                        errs.push(format!("arm.joints[{i}]"), "xyz, rpy and axis must be finite with a non-zero axis");
                        ok = false;
                        continue;
                    }
                    let frame = FrameSection { xyz: j.xyz, rpy: j.rpy };
                    joints.push(Joint { origin: frame.isometry(), axis: Unit::new_normalize(j.axis.into()), limits: j.limits });
                }
                if !ok {
                    return None;
                }
                errs.check("arm.joints", ArmModel::new(joints, self.arm.tool.isometry()))
            }
            other => {
                errs.push("arm.model", format!("must be \"default\" or \"inline\", got {other:?}"));
                None
            }
        }
    }

    fn environment(&self, errs: &mut Errors) -> Option<Environment> {
        let e = &self.environment;
        match e.kind.as_str() {
            "none" => Some(Environment::None),
            "scripted" => {
                let pts = e.wrench.iter().map(|p| (p.t_ms, [p.fz, p.mx, p.my])).collect();
                errs.check("environment.wrench", Profile::new(pts)).map(Environment::Scripted)
            }
            "wall" => {
                let Some(w) = &e.wall else {
                    errs.push("environment.wall", "required when kind = \"wall\"");
                    return None;
                };
                let normal = Vector3::from(w.normal);
                let mut ok = true;
                if !(w.point.iter().all(|v| v.is_finite())) {
                    errs.push("environment.wall.point", "must be finite");
                    ok = false;
                }
                if !(normal.iter().all(|v| v.is_finite()) && normal.norm() > 1e-9) {
                    errs.push("environment.wall.normal", "must be finite and non-zero");
                    ok = false;
                }
                if !(w.stiffness.is_finite() && w.stiffness >= 0.0) {
                    errs.push("environment.wall.stiffness", format!("must be finite and >= 0, got {}", w.stiffness));
                    ok = false;
                }
                if !(w.tip_offset.is_finite() && w.tip_offset >= 0.0) {
                    errs.push("environment.wall.tip_offset", format!("must be finite and >= 0, got {}", w.tip_offset));
                    ok = false;
                }
                ok.then(|| {
                    Environment::Wall(SpringWall {
                        point: w.point.into(),
                        normal: Unit::new_normalize(normal),
                        stiffness: w.stiffness,
                        tip_offset: w.tip_offset,
                    })
                })
            }
            other => {
                errs.push("environment.kind", format!("must be \"none\", \"scripted\" or \"wall\", got {other:?}"));
                None
            }
        }
    }

    fn input_script(&self, errs: &mut Errors) -> Option<InputScript> {
        let inp = &self.input;
        let master = match inp.kind.as_str() {
            "joints" => {
                let mut pts = Vec::new();
                for (i, w) in inp.waypoints.iter().enumerate() {
                    match (w.q, w.offset) {
                        (Some(q), None) => pts.push((w.t_ms, q)),
                        _ => errs.push(format!("input.waypoints[{i}]"), "needs `q` (and no `offset`) when kind = \"joints\""),
                    }
                }
                if inp.waypoints.is_empty() {
                    pts.push((0, inp.reference_q));
                }
                errs.check("input.waypoints", Profile::new(pts)).map(MasterTrajectory::Joints)
            }
            "pose" => {
                let mut pts = Vec::new();
                for (i, w) in inp.waypoints.iter().enumerate() {
                    match (w.q, w.offset) {
                        (None, Some(o)) => pts.push((w.t_ms, o)),
                        _ => errs.push(format!("input.waypoints[{i}]"), "needs `offset` (and no `q`) when kind = \"pose\""),
                    }
                }
                if inp.waypoints.is_empty() {
                    pts.push((0, [0.0; 3]));
                }
                let q = JointState7::new(inp.reference_q);
                if !q.is_finite() {
                    errs.push("input.reference_q", "must be finite");
                }
                errs.check("input.waypoints", Profile::new(pts))
                    .map(|offsets| MasterTrajectory::Pose { reference_q: q, offsets })
            }
            other => {
                errs.push("input.kind", format!("must be \"joints\" or \"pose\", got {other:?}"));
                None
            }
        };
        let mut grip_pts: Vec<(u64, [f64; 1])> = Vec::new();
        for (i, g) in inp.grip.iter().enumerate() {
            if !(g.force.is_finite() && g.force >= 0.0) {
                errs.push(format!("input.grip[{i}].force"), format!("must be finite and >= 0, got {}", g.force));
            }
            grip_pts.push((g.t_ms, [g.force]));
        }
        if grip_pts.is_empty() {
            grip_pts.push((0, [0.0]));
        }
        let grip = errs.check("input.grip", Profile::new(grip_pts));
        if inp.pedal_presses.windows(2).any(|w| w[0] > w[1]) {
            errs.push("input.pedal_presses", "must be sorted by time");
        }
        Some(InputScript { master: master?, grip: grip?, pedal_presses: inp.pedal_presses.clone() })
    }

    fn slave_initial(&self, arm: &ArmModel, input: &InputScript, errs: &mut Errors) -> Option<ToolPose> {
        let t0 = input.at(0, None);
        let mut master = arm.forward_kinematics(&arm.clamp(&t0.master_q).value).value;
        master.position += t0.pose_offset;
        let position = match self.slave.initial_position {
            Some(p) if p.iter().all(|v| v.is_finite()) => Vector3::from(p),
            Some(_) => {
                errs.push("slave.initial_position", "must be finite");
                return None;
            }
            None => master.position,
        };
        let orientation = match self.slave.initial_rpy {
            Some([r, p, y]) if [r, p, y].iter().all(|v| v.is_finite()) => UnitQuaternion::from_euler_angles(r, p, y),
            Some(_) => {
                errs.push("slave.initial_rpy", "must be finite");
                return None;
            }
            None => master.orientation,
        };
        Some(ToolPose::new(position, orientation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "duration_ms = 100\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.tick_ms, 1);
        assert_eq!(cfg.sensor.k, 0.196);
        let s = cfg.to_scenario().unwrap();
        assert_eq!(s.tick_count(), 100);
        assert_eq!(s.slave_initial.position, Vector3::new(400.0, 0.0, 500.0));
        assert_eq!(s.environment, Environment::None);
    }

    #[test]
    fn overrides_set_nested_values() {
        let text = "duration_ms = 100\n[input]\nkind = \"pose\"\nwaypoints = [{ t_ms = 0, offset = [0.0, 0.0, 0.0] }, { t_ms = 10, offset = [1.0, 2.0, 3.0] }]\n";
        let cfg = parse(
            text,
            &[
                "sensor.sigma=0.5".into(),
                "transport.base_latency_ms = 20".into(),
                "environment.kind=wall".into(),
                "input.waypoints.1.t_ms=40".into(),
                "output.trace=\"out.csv\"".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.sensor.sigma, 0.5);
        assert_eq!(cfg.transport.base_latency_ms, 20.0);
        assert_eq!(cfg.environment.kind, "wall");
        assert_eq!(cfg.input.waypoints[1].t_ms, 40);
        assert_eq!(cfg.output.trace, Some(PathBuf::from("out.csv")));
    }

    #[test]
    fn bad_overrides_are_rejected() {
        for o in ["sensor.sigma", "=3", "a..b=1", "input.waypoints.7.t_ms=1", "duration_ms.x=1"] {
            let mut t: toml::Table = toml::from_str("duration_ms = 1\ninput = { waypoints = [] }").unwrap();
            assert!(matches!(apply_override(&mut t, o), Err(ConfigError::Override(_))), "{o}");
        }
    }

    #[test]
    fn unknown_fields_are_parse_errors() {
        let err = parse("duration_ms = 100\n[sensor]\nstiffness = 1.0\n", &[]).unwrap_err();
        assert!(matches!(&err, ConfigError::Parse(m) if m.contains("stiffness")), "{err}");
        assert!(matches!(parse("duration_ms = ", &[]), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn validation_reports_every_field() {
        let cfg = parse(
            MINIMAL,
            &[
                "sensor.k=-1".into(),
                "transport.drop_rate=1.5".into(),
                "tactile.hysteresis=-1".into(),
                "environment.kind=lava".into(),
            ],
        )
        .unwrap();
        let Err(ConfigError::Invalid(errs)) = cfg.to_scenario() else { panic!("expected validation failure") };
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, ["sensor.k", "tactile.hysteresis", "transport.drop_rate", "environment.kind"]);
    }

    #[test]
    fn inline_arm_round_trips_default_geometry() {
        let mut text = format!(
            "duration_ms = 10\n[arm]\nmodel = \"inline\"\ntool = {{ xyz = [50.0, 0.0, 0.0], rpy = [0.0, {:?}, 0.0] }}\n",
            std::f64::consts::FRAC_PI_2
        );
        let rows = [
            ([0.0, 0.0, 100.0], [0.0, 0.0, 1.0], std::f64::consts::PI),
            ([0.0, 0.0, 100.0], [0.0, 1.0, 0.0], 1.8),
            ([0.0, 0.0, 300.0], [0.0, 1.0, 0.0], 2.4),
            ([200.0, 0.0, 0.0], [1.0, 0.0, 0.0], std::f64::consts::PI),
            ([50.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.8),
            ([50.0, 0.0, 0.0], [0.0, 0.0, 1.0], 1.8),
            ([50.0, 0.0, 0.0], [1.0, 0.0, 0.0], std::f64::consts::PI),
        ];
        for (xyz, axis, lim) in rows {
            text += &format!(
                "[[arm.joints]]\nxyz = {xyz:?}\naxis = {axis:?}\nlimits = [{}, {lim:?}]\n",
                -lim
            );
        }
        let s = parse(&text, &[]).unwrap().to_scenario().unwrap();
        let q = JointState7::new([0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.7]);
        let a = s.arm.forward_kinematics(&q).value;
        let b = ArmModel::default_master().forward_kinematics(&q).value;
        assert!((a.position - b.position).norm() < 1e-9);
        assert!(a.orientation.angle_to(&b.orientation) < 1e-9);
    }

    #[test]
    fn inline_arm_needs_seven_joints() {
        let cfg = parse("duration_ms = 10\n[arm]\nmodel = \"inline\"\n", &[]).unwrap();
        let Err(ConfigError::Invalid(errs)) = cfg.to_scenario() else { panic!() };
        assert_eq!(errs[0].path, "arm.joints");
    }

    #[test]
    fn waypoint_kind_mismatch_names_index() {
        let text = "duration_ms = 10\n[input]\nwaypoints = [{ t_ms = 0, offset = [1.0, 0.0, 0.0] }]\n";
        let Err(ConfigError::Invalid(errs)) = parse(text, &[]).unwrap().to_scenario() else { panic!() };
        assert_eq!(errs[0].path, "input.waypoints[0]");
    }
}
