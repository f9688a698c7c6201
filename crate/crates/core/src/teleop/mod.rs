//! Master/slave teleoperation: wire protocol, simulated transport, contact
//! environment, per-tick trace and the simulation loop.

pub mod environment;
pub mod message;
pub mod sim;
pub mod trace;
pub mod transport;

pub use environment::{Environment, Profile, SpringWall};
pub use message::{MessageKind, Payload, TeleopMessage, WireError};
pub use sim::{
    run_scenario, ControlMode, InputScript, MasterTrajectory, Scenario, SimClock, SimError, Simulation, StepOutput,
    SummaryStats, TickInputs,
};
pub use trace::{CsvTraceWriter, NullSink, TraceRecord, TraceSink, TRACE_COLUMNS};
pub use transport::{Link, LinkStats, TransportModel};
