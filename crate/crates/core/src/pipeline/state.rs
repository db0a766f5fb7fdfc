//! Recurrent state carried between event timestamps and frames.

use crate::nn::{ParamSet, Tape, Tensor};

use super::config::{PipelineConfig, PipelineError};
use super::model::gru_step;

/// GRU hidden state, the ring of the latest q steering angles (degrees,
/// most recent first, zero-padded at sequence start), and the most recent
/// timestamp-specific vector.
#[derive(Clone, Debug)]
pub struct PipelineState {
    pub gru_hidden: Tensor,
    pub angle_history: Vec<f64>,
    pub last_t: Option<Tensor>,
}

impl PipelineState {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            gru_hidden: Tensor::zeros(&[cfg.hidden_dim]),
            angle_history: vec![0.0; cfg.history_len],
            last_t: None,
        }
    }

    /// Record a steering angle as the most recent history entry.
    pub fn push_angle(&mut self, degrees: f64) {
        self.angle_history.rotate_right(1);
        self.angle_history[0] = degrees;
    }

    pub fn history_tensor(&self) -> Tensor {
        Tensor::from_vec(self.angle_history.clone())
    }

    /// Latest timestamp-specific vector, or zeros before the first event.
    pub fn last_t_or_zeros(&self, q: usize) -> Tensor {
        self.last_t.clone().unwrap_or_else(|| Tensor::zeros(&[q]))
    }
}

/// One standalone recurrent step: feed a timestamp-specific vector through
/// the GRU and record it as the latest. This is the per-timestamp contract;
/// training unrolls the same step on a shared tape instead.
pub fn advance_timestamp(
    state: &PipelineState,
    t: &Tensor,
    params: &ParamSet,
    cfg: &PipelineConfig,
) -> Result<PipelineState, PipelineError> {
    if t.shape() != [cfg.history_len] {
        return Err(PipelineError::Config(format!(
            "timestamp vector has shape {:?}, expected [{}]",
            t.shape(),
            cfg.history_len
        )));
    }
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape);
    let t_var = tape.constant(t.clone());
    let h_var = tape.constant(state.gru_hidden.clone());
    let next = gru_step(&mut tape, &bp, t_var, h_var)?;
    Ok(PipelineState {
        gru_hidden: tape.value(next).clone(),
        angle_history: state.angle_history.clone(),
        last_t: Some(t.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::params::{build_params, ModelKind};

    #[test]
    fn zero_everything_stays_zero() {
        let cfg = PipelineConfig::toy();
        let mut params = build_params(&cfg, ModelKind::Asynchronous, 0).unwrap();
        for (name, t) in params.iter_mut() {
            if name.starts_with("gru.") {
                t.data_mut().fill(0.0);
            }
        }
        let state = PipelineState::new(&cfg);
        let t = Tensor::zeros(&[cfg.history_len]);
        let next = advance_timestamp(&state, &t, &params, &cfg).unwrap();
        assert!(next.gru_hidden.data().iter().all(|&v| v == 0.0));
        assert_eq!(next.last_t.unwrap().data(), t.data());
    }

    #[test]
    fn order_sensitivity() {
        let cfg = PipelineConfig::toy();
        let params = build_params(&cfg, ModelKind::Asynchronous, 1).unwrap();
        let t_a = Tensor::from_vec(vec![1.0, 0.0, -1.0, 0.5]);
        let t_b = Tensor::from_vec(vec![-0.5, 2.0, 0.0, 1.0]);

        let s0 = PipelineState::new(&cfg);
        let ab = advance_timestamp(
            &advance_timestamp(&s0, &t_a, &params, &cfg).unwrap(),
            &t_b,
            &params,
            &cfg,
        )
        .unwrap();
        let ba = advance_timestamp(
            &advance_timestamp(&s0, &t_b, &params, &cfg).unwrap(),
            &t_a,
            &params,
            &cfg,
        )
        .unwrap();
        assert_ne!(ab.gru_hidden.data(), ba.gru_hidden.data());
    }

    #[test]
    fn angle_ring_holds_latest_q() {
        let cfg = PipelineConfig::toy(); // q = 4
        let mut state = PipelineState::new(&cfg);
        for a in [1.0, 2.0, 3.0] {
            state.push_angle(a);
        }
        assert_eq!(state.angle_history, vec![3.0, 2.0, 1.0, 0.0]);
        for a in [4.0, 5.0] {
            state.push_angle(a);
        }
        assert_eq!(state.angle_history, vec![5.0, 4.0, 3.0, 2.0]);
        assert_eq!(state.angle_history.len(), cfg.history_len);
    }
}
