//! Event-camera domain: event types, the log-threshold simulator,
//! per-timestamp event matrices, synchronous accumulation baselines,
//! and the on-disk formats.

pub mod accum;
pub mod io;
pub mod sim;
pub mod types;

pub use accum::{accumulate_event_frame, accumulate_split_histograms, CountImage, TimeWindow};
pub use sim::simulate_events;
pub use types::{build_event_matrix, Event, EventError, EventMatrix, GrayImage, Sequence, SimulatorConfig};
