//! Closed-loop simulation of the SSVEP wheelchair controller.
//!
//! [`engine::ControlLoop`] advances simulated time in fixed hops: the
//! synthetic subject produces samples, the classifier side scores the latest
//! window and emits a command frame, and the controller side decodes it and
//! drives the panel and the chair. [`scenario`] scripts gaze sequences and
//! measures delays; [`telemetry`] exposes the loop over a WebSocket.

pub mod config;
pub mod engine;
pub mod ring;
pub mod scenario;
pub mod telemetry;

pub use config::LoopConfig;
pub use engine::{run_loop, subject_for, ControlLoop, EventLog, HopRecord, LoopError};
pub use scenario::{run_scenario, DelayReport, ScenarioScript};
pub use telemetry::{serve_telemetry, ControlMessage, ServeOptions, TelemetryFrame};
