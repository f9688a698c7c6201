//! Per-tick trace records and their CSV form.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! runs produce byte-identical files.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::sensor::Wrench3;

use super::sim::ControlMode;

pub const TRACE_COLUMNS: [&str; 29] = [
    "t_ms", "mode", "master_q1", "master_q2", "master_q3", "master_q4", "master_q5", "master_q6", "master_q7",
    "slave_x", "slave_y", "slave_z", "true_Fz", "true_Mx", "true_My", "sensed_Fz", "sensed_Mx", "sensed_My",
    "grip_N", "tau1", "tau2", "tau3", "tau4", "tau5", "tau6", "tau7", "motor1", "motor2", "dropped_msgs",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t_ms: u64,
    pub mode: ControlMode,
    pub master_q: [f64; 7],
    pub slave_position: [f64; 3],
    pub true_wrench: Wrench3,
    pub sensed_wrench: Wrench3,
    pub grip_n: f64,
    pub tau: [f64; 7],
    pub motor1: f64,
    pub motor2: bool,
    /// Cumulative messages lost in transport.
    pub dropped_msgs: u64,
    pub sensor_saturated: bool,
    pub torque_saturated: bool,
    pub joint_clamped: bool,
    pub workspace_clamped: bool,
    /// Latency of the freshest feedback sample completed this tick, if any.
    pub feedback_latency_ms: Option<u64>,
    /// Cumulative sequence gaps detected by receivers.
    pub lost_msgs: u64,
}

impl TraceRecord {
    pub fn to_csv_line(&self) -> String {
        let mut s = String::with_capacity(512);
        let b = |v: bool| if v { 1 } else { 0 };
        write!(s, "{},{}", self.t_ms, self.mode.label()).unwrap();
        for v in self.master_q.iter().chain(&self.slave_position) {
            write!(s, ",{v}").unwrap();
        }
        for v in self.true_wrench.to_array().iter().chain(&self.sensed_wrench.to_array()) {
            write!(s, ",{v}").unwrap();
        }
        write!(s, ",{}", self.grip_n).unwrap();
        for v in &self.tau {
            write!(s, ",{v}").unwrap();
        }
        write!(s, ",{},{},{}", self.motor1, b(self.motor2), self.dropped_msgs).unwrap();
        s
    }
}

/// Destination for trace records, in tick order.
pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord) -> io::Result<()>;

    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &TraceRecord) -> io::Result<()> {
        Ok(())
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) -> io::Result<()> {
        self.push(*rec);
        Ok(())
    }
}

pub struct CsvTraceWriter<W: Write> {
    out: W,
    header_written: bool,
}

impl<W: Write> CsvTraceWriter<W> {
    pub fn new(out: W) -> Self {
        CsvTraceWriter { out, header_written: false }
    }

    pub fn into_inner(self) -> W {
        self.out
    }

    fn header(&mut self) -> io::Result<()> {
        if !self.header_written {
            writeln!(self.out, "{}", TRACE_COLUMNS.join(","))?;
            self.header_written = true;
        }
        Ok(())
    }
}

impl<W: Write> TraceSink for CsvTraceWriter<W> {
    fn record(&mut self, rec: &TraceRecord) -> io::Result<()> {
        self.header()?;
        writeln!(self.out, "{}", rec.to_csv_line())
    }

    fn finish(&mut self) -> io::Result<()> {
        self.header()?;
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_has_one_field_per_column() {
        let rec = TraceRecord {
            t_ms: 12,
            mode: ControlMode::CameraArm,
            master_q: [0.5; 7],
            slave_position: [1.0, 2.0, 3.0],
            true_wrench: Wrench3::new(0.1, 0.2, 0.3),
            sensed_wrench: Wrench3::new(0.1, 0.2, 0.3),
            grip_n: 4.0,
            tau: [1.0; 7],
            motor1: 0.4,
            motor2: true,
            dropped_msgs: 3,
            sensor_saturated: false,
            torque_saturated: true,
            joint_clamped: false,
            workspace_clamped: false,
            feedback_latency_ms: None,
            lost_msgs: 2,
        };
        let line = rec.to_csv_line();
        assert_eq!(line.split(',').count(), TRACE_COLUMNS.len());
        assert!(line.starts_with("12,CameraArm,0.5,"));
        assert!(line.ends_with(",0.4,1,3"));

        let mut w = CsvTraceWriter::new(Vec::new());
        w.record(&rec).unwrap();
        w.finish().unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert!(text.starts_with("t_ms,mode,master_q1,"));
        assert_eq!(text.lines().count(), 2);
    }
}
