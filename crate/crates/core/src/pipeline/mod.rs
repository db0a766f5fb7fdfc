//! The asynchronous steering model: APS encoding, per-timestamp event
//! feature extraction with angle-history attention, GRU sequencing,
//! channel/spatial attention, mask generation, and masked-image
//! regression. Events are consumed one timestamp at a time; predictions
//! are emitted at each frame arrival.

pub mod config;
pub mod model;
pub mod params;
pub mod runner;
pub mod state;

pub use config::{PipelineConfig, PipelineError};
pub use model::{
    aps_encode, cs_attention, cs_attention_with_weights, event_feature_extract, generate_mask,
    gru_step, regress_angle,
};
pub use params::{build_params, ModelKind};
pub use runner::{group_gap_events, run_sequence, FramePrediction, Mode, RunOutput};
pub use state::{advance_timestamp, PipelineState};
