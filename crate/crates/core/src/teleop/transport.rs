//! Simulated one-way links between the console, the controller and the slave.
//!
//! Each [`Link`] is a single sender stream: it stamps outgoing messages with
//! consecutive sequence numbers, delays them by `base_latency ± jitter`,
//! drops a fraction of them, and hands them to the receiver strictly in
//! sequence order. Delivery is at-most-once. A gap in the sequence is
//! declared lost once a later message has waited `2·jitter` past its own
//! arrival; after that window no earlier-sent message can still be in
//! flight. Losses are counted, never filled in.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::message::{MessageKind, Payload, TeleopMessage};

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("invalid transport {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("send time {t_ms} ms precedes previous send at {prev_ms} ms")]
    TimeWentBackwards { t_ms: u64, prev_ms: u64 },
    #[error("sequence space exhausted")]
    SeqOverflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportModel {
    base_latency_ms: f64,
    jitter_ms: f64,
    drop_rate: f64,
    seed: u64,
}

impl TransportModel {
    pub fn new(base_latency_ms: f64, jitter_ms: f64, drop_rate: f64, seed: u64) -> Result<Self, TransportError> {
        if !(base_latency_ms.is_finite() && base_latency_ms >= 0.0) {
            return Err(TransportError::Invalid {
                field: "base_latency_ms",
                reason: format!("must be finite and >= 0, got {base_latency_ms}"),
            });
        }
        if !(jitter_ms.is_finite() && jitter_ms >= 0.0 && jitter_ms <= base_latency_ms) {
            return Err(TransportError::Invalid {
                field: "jitter_ms",
                reason: format!("must be in [0, base_latency_ms = {base_latency_ms}], got {jitter_ms}"),
            });
        }
        if !(0.0..1.0).contains(&drop_rate) {
            return Err(TransportError::Invalid {
                field: "drop_rate",
                reason: format!("must be in [0, 1), got {drop_rate}"),
            });
        }
        Ok(TransportModel { base_latency_ms, jitter_ms, drop_rate, seed })
    }

    /// Zero latency, no jitter, no loss.
    pub fn ideal() -> Self {
        TransportModel { base_latency_ms: 0.0, jitter_ms: 0.0, drop_rate: 0.0, seed: 0 }
    }

    pub fn base_latency_ms(&self) -> f64 {
        self.base_latency_ms
    }

    pub fn jitter_ms(&self) -> f64 {
        self.jitter_ms
    }

    pub fn drop_rate(&self) -> f64 {
        self.drop_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Earliest time a message sent at `t_ms` may be handed over.
    pub fn earliest_delivery(&self, t_ms: u64) -> f64 {
        t_ms as f64 + self.base_latency_ms - self.jitter_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LinkStats {
    pub sent: u64,
    /// Dropped by the transport (ground truth).
    pub dropped: u64,
    pub delivered: u64,
    /// Withdrawn by the sender before delivery.
    pub retracted: u64,
    /// Sequence gaps the receiver declared lost.
    pub lost_detected: u64,
    /// Arrived after their slot had already been declared lost.
    pub late_discarded: u64,
}

#[derive(Debug, Clone)]
struct InFlight {
    arrival_ms: f64,
    msg: TeleopMessage,
}

#[derive(Debug, Clone)]
enum Slot {
    Arrived { arrival_ms: f64, msg: TeleopMessage },
    Retracted,
}

#[derive(Debug, Clone)]
pub struct Link {
    name: &'static str,
    model: TransportModel,
    rng: ChaCha8Rng,
    next_seq: u32,
    last_send_ms: Option<u64>,
    in_flight: Vec<InFlight>,
    buffer: BTreeMap<u32, Slot>,
    next_expected: u32,
    stats: LinkStats,
}

impl Link {
    pub fn new(name: &'static str, model: TransportModel) -> Self {
        Link {
            name,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
            next_seq: 0,
            last_send_ms: None,
            in_flight: Vec::new(),
            buffer: BTreeMap::new(),
            next_expected: 0,
            stats: LinkStats::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn model(&self) -> &TransportModel {
        &self.model
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// Stamps and submits a message. The returned frame is what the sender
    /// emitted, whether or not the transport later loses it.
    pub fn send(&mut self, t_ms: u64, payload: Payload) -> Result<TeleopMessage, TransportError> {
        if let Some(prev_ms) = self.last_send_ms {
            if t_ms < prev_ms {
                return Err(TransportError::TimeWentBackwards { t_ms, prev_ms });
            }
        }
        let seq = self.next_seq;
        self.next_seq = seq.checked_add(1).ok_or(TransportError::SeqOverflow)?;
        self.last_send_ms = Some(t_ms);
        let msg = TeleopMessage { seq, t_sim_ms: t_ms, payload };
        self.stats.sent += 1;

        let u_drop: f64 = self.rng.random();
        let u_jitter: f64 = self.rng.random();
        if u_drop < self.model.drop_rate {
            self.stats.dropped += 1;
            return Ok(msg);
        }
        let jitter = (2.0 * u_jitter - 1.0) * self.model.jitter_ms;
        let arrival_ms = t_ms as f64 + self.model.base_latency_ms + jitter;
        self.in_flight.push(InFlight { arrival_ms, msg });
        Ok(msg)
    }

    /// Withdraws every undelivered message of `kind`, both in flight and
    /// held in the reorder buffer. Returns how many were withdrawn.
    pub fn retract(&mut self, kind: MessageKind) -> usize {
        let mut n = 0;
        let mut keep = Vec::with_capacity(self.in_flight.len());
        for f in self.in_flight.drain(..) {
            if f.msg.kind() == kind {
                self.buffer.insert(f.msg.seq, Slot::Retracted);
                n += 1;
            } else {
                keep.push(f);
            }
        }
        self.in_flight = keep;
        for slot in self.buffer.values_mut() {
            if matches!(slot, Slot::Arrived { msg, .. } if msg.kind() == kind) {
                *slot = Slot::Retracted;
                n += 1;
            }
        }
        self.stats.retracted += n as u64;
        n
    }

    /// Messages the receiver may consume at `now_ms`, in sequence order.
    pub fn poll(&mut self, now_ms: u64) -> Vec<TeleopMessage> {
        let now = now_ms as f64;
        let mut still = Vec::with_capacity(self.in_flight.len());
        for f in self.in_flight.drain(..) {
            if f.arrival_ms <= now {
                if f.msg.seq < self.next_expected {
                    self.stats.late_discarded += 1;
                } else {
                    self.buffer.insert(f.msg.seq, Slot::Arrived { arrival_ms: f.arrival_ms, msg: f.msg });
                }
            } else {
                still.push(f);
            }
        }
        self.in_flight = still;

        let hold = 2.0 * self.model.jitter_ms;
        let mut out = Vec::new();
        loop {
            if let Some(slot) = self.buffer.remove(&self.next_expected) {
                if let Slot::Arrived { msg, .. } = slot {
                    out.push(msg);
                    self.stats.delivered += 1;
                }
                self.next_expected += 1;
                continue;
            }
            let gap_settled = self.buffer.iter().any(|(&seq, slot)| {
                seq > self.next_expected
                    && matches!(slot, Slot::Arrived { arrival_ms, .. } if now >= arrival_ms + hold)
            });
            if gap_settled {
                self.stats.lost_detected += 1;
                self.next_expected += 1;
            } else {
                break;
            }
        }
        out
    }
}
