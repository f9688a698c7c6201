//! Teleoperation messages and their binary framing.
//!
//! Frame layout, all little-endian:
//!
//! ```text
//! u32  length    bytes that follow this field
//! u8   kind      1..=6, see MessageKind
//! u32  seq       per-sender sequence number
//! u64  t_sim_ms  simulation time at send
//! f64* payload   kind-specific fields, in declaration order
//! ```
//!
//! Booleans travel as 0.0 / 1.0. A pose displacement is the translation
//! (x, y, z in mm) followed by the rotation quaternion (w, i, j, k).

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::feedback::{GripForce, JointTorques7, VibrationCommand};
use crate::kinematics::{JointState7, PoseDelta};
use crate::sensor::Wrench3;

const HEADER_LEN: usize = 1 + 4 + 8;

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown message kind tag {0}")]
    UnknownKind(u8),
    #[error("length {length} does not match kind {kind:?} (expected {expected})")]
    LengthMismatch { kind: MessageKind, length: usize, expected: usize },
    #[error("invalid payload for {kind:?}: {reason}")]
    InvalidPayload { kind: MessageKind, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MessageKind {
    MasterState = 1,
    SlaveCommand = 2,
    WrenchReport = 3,
    GripReport = 4,
    FeedbackCommand = 5,
    PedalEvent = 6,
}

impl MessageKind {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self, WireError> {
        Ok(match tag {
            1 => MessageKind::MasterState,
            2 => MessageKind::SlaveCommand,
            3 => MessageKind::WrenchReport,
            4 => MessageKind::GripReport,
            5 => MessageKind::FeedbackCommand,
            6 => MessageKind::PedalEvent,
            other => return Err(WireError::UnknownKind(other)),
        })
    }

    /// Number of f64 payload fields.
    pub fn payload_fields(self) -> usize {
        match self {
            MessageKind::MasterState => 7,
            MessageKind::SlaveCommand => 7,
            MessageKind::WrenchReport => 3,
            MessageKind::GripReport => 1,
            MessageKind::FeedbackCommand => 9,
            MessageKind::PedalEvent => 1,
        }
    }

    /// Value of the length prefix for this kind.
    pub fn frame_length(self) -> usize {
        HEADER_LEN + 8 * self.payload_fields()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    MasterState(JointState7),
    SlaveCommand(PoseDelta),
    WrenchReport(Wrench3),
    GripReport(GripForce),
    FeedbackCommand { torques: JointTorques7, vibration: VibrationCommand },
    PedalEvent { pressed: bool },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::MasterState(_) => MessageKind::MasterState,
            Payload::SlaveCommand(_) => MessageKind::SlaveCommand,
            Payload::WrenchReport(_) => MessageKind::WrenchReport,
            Payload::GripReport(_) => MessageKind::GripReport,
            Payload::FeedbackCommand { .. } => MessageKind::FeedbackCommand,
            Payload::PedalEvent { .. } => MessageKind::PedalEvent,
        }
    }

    fn fields(&self) -> Vec<f64> {
        match self {
            Payload::MasterState(q) => q.q.to_vec(),
            Payload::SlaveCommand(d) => {
                let t = d.translation;
                let r = d.rotation.quaternion();
                vec![t.x, t.y, t.z, r.w, r.i, r.j, r.k]
            }
            Payload::WrenchReport(w) => w.to_array().to_vec(),
            Payload::GripReport(g) => vec![g.newtons()],
            Payload::FeedbackCommand { torques, vibration } => {
                let mut v = torques.tau.to_vec();
                v.push(vibration.motor1_intensity);
                v.push(bool_field(vibration.motor2_on));
                v
            }
            Payload::PedalEvent { pressed } => vec![bool_field(*pressed)],
        }
    }

    fn from_fields(kind: MessageKind, f: &[f64]) -> Result<Self, WireError> {
        let bad = |reason: String| WireError::InvalidPayload { kind, reason };
        Ok(match kind {
            MessageKind::MasterState => Payload::MasterState(JointState7::new(f[..7].try_into().unwrap())),
            MessageKind::SlaveCommand => {
                let q = Quaternion::new(f[3], f[4], f[5], f[6]);
                if (q.norm() - 1.0).abs() > 1e-9 {
                    return Err(bad(format!("rotation quaternion norm {} is not 1", q.norm())));
                }
                Payload::SlaveCommand(PoseDelta {
                    translation: Vector3::new(f[0], f[1], f[2]),
                    rotation: UnitQuaternion::new_unchecked(q),
                })
            }
            MessageKind::WrenchReport => Payload::WrenchReport(Wrench3::new(f[0], f[1], f[2])),
            MessageKind::GripReport => Payload::GripReport(GripForce::new(f[0]).map_err(|e| bad(e.to_string()))?),
            MessageKind::FeedbackCommand => Payload::FeedbackCommand {
                torques: JointTorques7 { tau: f[..7].try_into().unwrap() },
                vibration: VibrationCommand {
                    motor1_intensity: f[7],
                    motor2_on: field_bool(f[8]).ok_or_else(|| bad(format!("motor2 flag {} is not 0 or 1", f[8])))?,
                },
            },
            MessageKind::PedalEvent => Payload::PedalEvent {
                pressed: field_bool(f[0]).ok_or_else(|| bad(format!("pedal flag {} is not 0 or 1", f[0])))?,
            },
        })
    }
}

fn bool_field(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn field_bool(v: f64) -> Option<bool> {
    if v == 1.0 {
        Some(true)
    } else if v == 0.0 {
        Some(false)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeleopMessage {
    pub seq: u32,
    pub t_sim_ms: u64,
    pub payload: Payload,
}

impl TeleopMessage {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let kind = self.kind();
        out.reserve(4 + kind.frame_length());
        out.extend_from_slice(&(kind.frame_length() as u32).to_le_bytes());
        out.push(kind.tag());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.t_sim_ms.to_le_bytes());
        for v in self.payload.fields() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    /// Decodes one frame from the front of `buf`, returning it with the
    /// number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(TeleopMessage, usize), WireError> {
        let length = u32::from_le_bytes(take::<4>(buf, 0)?) as usize;
        if buf.len() < 4 + length {
            return Err(WireError::Truncated { needed: 4 + length, available: buf.len() });
        }
        if length < HEADER_LEN {
            return Err(WireError::Truncated { needed: HEADER_LEN, available: length });
        }
        let kind = MessageKind::from_tag(buf[4])?;
        if length != kind.frame_length() {
            return Err(WireError::LengthMismatch { kind, length, expected: kind.frame_length() });
        }
        let seq = u32::from_le_bytes(take::<4>(buf, 5)?);
        let t_sim_ms = u64::from_le_bytes(take::<8>(buf, 9)?);
        let fields: Vec<f64> = (0..kind.payload_fields())
            .map(|i| take::<8>(buf, 4 + HEADER_LEN + 8 * i).map(f64::from_le_bytes))
            .collect::<Result<_, _>>()?;
        let payload = Payload::from_fields(kind, &fields)?;
        Ok((TeleopMessage { seq, t_sim_ms, payload }, 4 + length))
    }
}

fn take<const N: usize>(buf: &[u8], at: usize) -> Result<[u8; N], WireError> {
    buf.get(at..at + N)
        .map(|s| s.try_into().unwrap())
        .ok_or(WireError::Truncated { needed: at + N, available: buf.len() })
}

/// Decodes back-to-back frames until `buf` is exhausted.
pub fn decode_stream(mut buf: &[u8]) -> Result<Vec<TeleopMessage>, WireError> {
    let mut out = Vec::new();
    while !buf.is_empty() {
        let (msg, used) = TeleopMessage::decode(buf)?;
        out.push(msg);
        buf = &buf[used..];
    }
    Ok(out)
}
