//! Asynchronous event--stream steering pipeline.
//!
//! The crate is organized around four subsystems:
//!
//! * [`event`] -- event-camera domain types, a log-threshold simulator,
//!   per-timestamp event matrices, synchronous accumulation baselines, and
//!   the text/PGM/CSV formats everything is stored in.
//! * [`nn`] -- a small `f64` tensor library with define-by-run reverse-mode
//!   autodiff, the layers the model needs, Adam, gradient checking, and
//!   binary checkpoints.
//! * [`pipeline`] -- the steering model itself: APS encoder, per-timestamp
//!   event feature extraction with angle-history attention, GRU sequencing,
//!   channel/spatial attention, mask generation, and the residual regressor.
//! * [`eval`] -- metrics (RMSE / explained variance / improvement), a
//!   synthetic driving-scene generator, baseline comparators, training, and
//!   the benchmark harness.

pub mod event;
pub mod eval;
pub mod nn;
pub mod pipeline;
