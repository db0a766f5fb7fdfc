//! Model/shape configuration for the steering pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Event(#[from] crate::event::EventError),
}

/// Shapes and knobs of the asynchronous model. Defaults target the
/// desk-scale working resolution; every dimension is configurable so
/// full-sensor shapes remain expressible.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    /// Working resolution, columns.
    pub width: usize,
    /// Working resolution, rows.
    pub height: usize,
    /// Channels of the image-specific feature tensor.
    pub channels: usize,
    /// q: length of the angle history and of the timestamp-specific vector.
    pub history_len: usize,
    /// Z: expected event timestamps per frame interval.
    pub frame_interval: usize,
    /// GRU hidden size (defaults to `width`).
    pub hidden_dim: usize,
    /// Hidden widths of the two APS encoder stages (third stage outputs
    /// `channels`).
    pub encoder_widths: [usize; 2],
    /// Hidden width of both attention score heads.
    pub attention_dim: usize,
    /// Hidden width of the mask MLP.
    pub mask_hidden: usize,
    /// Stem width of the regressor.
    pub reg_stem: usize,
    /// Output widths of the stride-2 residual blocks.
    pub reg_blocks: Vec<usize>,
    /// Coarsen event timestamps into bins of this many microseconds before
    /// grouping; 0 groups by exact timestamp.
    pub bin_us: u64,
    /// Fixed factor applied to the regressor head, keeping the head's raw
    /// output in unit range while targets are in degrees.
    pub output_scale: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            channels: 4,
            history_len: 32,
            frame_interval: 10,
            hidden_dim: 64,
            encoder_widths: [8, 16],
            attention_dim: 16,
            mask_hidden: 64,
            reg_stem: 8,
            reg_blocks: vec![8, 8, 16, 16],
            bin_us: 0,
            output_scale: 10.0,
        }
    }
}

impl PipelineConfig {
    /// Tiny configuration for gradient checking and fast tests.
    pub fn toy() -> Self {
        Self {
            width: 16,
            height: 12,
            channels: 2,
            history_len: 4,
            frame_interval: 4,
            hidden_dim: 6,
            encoder_widths: [3, 4],
            attention_dim: 5,
            mask_hidden: 8,
            reg_stem: 4,
            reg_blocks: vec![4, 6],
            bin_us: 0,
            output_scale: 10.0,
        }
    }

    pub fn spatial_len(&self) -> usize {
        self.width * self.height
    }

    pub fn flat_feature_len(&self) -> usize {
        self.channels * self.width * self.height
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive = [
            ("width", self.width),
            ("height", self.height),
            ("channels", self.channels),
            ("history_len", self.history_len),
            ("frame_interval", self.frame_interval),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("mask_hidden", self.mask_hidden),
            ("reg_stem", self.reg_stem),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        if self.encoder_widths.iter().any(|&v| v == 0) || self.reg_blocks.iter().any(|&v| v == 0) {
            return Err(PipelineError::Config("layer widths must be positive".into()));
        }
        if self.reg_blocks.is_empty() {
            return Err(PipelineError::Config("need at least one residual block".into()));
        }
        // Each residual block halves the spatial dims; they must not vanish.
        let (mut d1, mut d2) = (self.width, self.height);
        for _ in &self.reg_blocks {
            d1 = (d1 - 1) / 2 + 1;
            d2 = (d2 - 1) / 2 + 1;
            if d1 == 0 || d2 == 0 {
                return Err(PipelineError::Config(
                    "too many residual blocks for the working resolution".into(),
                ));
            }
        }
        Ok(())
    }
}
