//! Whole-sequence execution of the asynchronous model.
//!
//! For each frame `i`: the frame is encoded, every distinct event timestamp
//! in the gap `(t_i, t_{i+1}]` drives one extraction + GRU step, and at the
//! arrival of frame `i+1` the attention/mask/regressor head emits the
//! prediction for frame `i+1` from the gap's events and the frame that
//! preceded them. Gaps without events take no recurrent steps and reuse the
//! previous timestamp vector.

use crate::event::types::{build_event_matrix, Event, Sequence};
use crate::nn::{Tape, Tensor};

use super::config::{PipelineConfig, PipelineError};
use super::model::{
    aps_encode, cs_attention, event_feature_extract, generate_mask, gru_step, regress_angle,
};
use super::state::PipelineState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Prediction for one frame arrival.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePrediction {
    pub frame_index: usize,
    pub predicted: f64,
    pub target: f64,
}

/// Output of one sequence pass.
pub struct RunOutput {
    pub predictions: Vec<FramePrediction>,
    /// Mean squared error over the sequence's predictions (train mode).
    pub loss: Option<f64>,
    /// Parameter gradients of the loss (train mode).
    pub gradients: Option<Vec<(String, Tensor)>>,
    /// Recurrent steps taken per frame gap; equals the number of distinct
    /// event timestamps in that gap.
    pub gru_steps_per_gap: Vec<usize>,
    /// Mask `S` per frame gap, `[width, height]` in `(0, 1)`.
    pub masks: Vec<Tensor>,
}

/// Group gap events by (optionally binned) timestamp, ascending.
///
/// With `bin_us == 0`, events share a group iff they share an exact
/// timestamp. Otherwise timestamps are coarsened to bins of `bin_us`
/// microseconds anchored at the gap start, and each group is labeled with
/// its bin's right edge.
pub fn group_gap_events(
    events: &[Event],
    gap_start: u64,
    bin_us: u64,
) -> Vec<(u64, Vec<Event>)> {
    let mut groups: Vec<(u64, Vec<Event>)> = Vec::new();
    for &e in events {
        debug_assert!(e.t > gap_start);
        let key = if bin_us == 0 {
            e.t
        } else {
            gap_start + ((e.t - gap_start - 1) / bin_us + 1) * bin_us
        };
        match groups.last_mut() {
            Some((k, group)) if *k == key => group.push(e),
            _ => groups.push((key, vec![e])),
        }
    }
    groups
}

/// Run the asynchronous pipeline over a sequence.
///
/// In train mode the whole unrolled computation is differentiated and the
/// output carries the MSE loss and its parameter gradients. With
/// `teacher_forcing` the angle history is fed ground-truth angles;
/// otherwise the model's own predictions are fed back (detached from the
/// gradient graph).
pub fn run_sequence(
    params: &crate::nn::ParamSet,
    cfg: &PipelineConfig,
    seq: &Sequence,
    mode: Mode,
    teacher_forcing: bool,
) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    seq.validate()?;
    if seq.width != cfg.width || seq.height != cfg.height {
        return Err(PipelineError::Config(format!(
            "sequence is {}x{}, config wants {}x{}",
            seq.width, seq.height, cfg.width, cfg.height
        )));
    }
    if seq.num_frames() < 2 {
        return Err(PipelineError::Config(
            "need at least two frames to predict".into(),
        ));
    }

    let mut tape = Tape::new();
    let bp = params.bind(&mut tape);
    let mut state = PipelineState::new(cfg);
    let mut hidden = tape.constant(state.gru_hidden.clone());
    let mut last_t = None;

    let mut predictions = Vec::new();
    let mut gru_steps_per_gap = Vec::new();
    let mut masks = Vec::new();
    let mut loss_terms = Vec::new();

    for i in 0..seq.num_frames() - 1 {
        let frame = &seq.frames[i];
        let encoded = aps_encode(&mut tape, &bp, cfg, frame)?;

        let groups = group_gap_events(seq.events_in_gap(i), seq.frame_time(i), cfg.bin_us);
        gru_steps_per_gap.push(groups.len());
        for (key, group) in &groups {
            // Binned groups share the bin label as their common timestamp.
            let relabeled: Vec<Event> = group.iter().map(|e| Event { t: *key, ..*e }).collect();
            let matrix = build_event_matrix(&relabeled, cfg.width, cfg.height)?;
            let m = tape.constant(matrix.to_tensor());
            let a = tape.constant(state.history_tensor());
            let t = event_feature_extract(&mut tape, &bp, m, a)?;
            hidden = gru_step(&mut tape, &bp, t, hidden)?;
            last_t = Some(t);
        }

        let t_z = match last_t {
            Some(t) => t,
            None => tape.constant(Tensor::zeros(&[cfg.history_len])),
        };
        let attended = cs_attention(&mut tape, &bp, cfg, encoded, hidden)?;
        let (s, y) = generate_mask(&mut tape, &bp, cfg, attended, t_z, frame)?;
        let y3 = tape.reshape(y, &[1, cfg.width, cfg.height])?;
        let d = regress_angle(&mut tape, &bp, cfg, y3)?;

        let predicted = tape.value(d).item();
        let target = seq.angles[i + 1];
        predictions.push(FramePrediction {
            frame_index: i + 1,
            predicted,
            target,
        });
        masks.push(tape.value(s).clone());

        if mode == Mode::Train {
            let target_var = tape.constant(Tensor::scalar(target));
            let diff = tape.sub(d, target_var)?;
            let sq = tape.mul(diff, diff)?;
            loss_terms.push(sq);
        }

        // The fed-back angle is ground truth under teacher forcing, else the
        // model's own prediction (as a value, outside the gradient graph).
        state.push_angle(if teacher_forcing { target } else { predicted });
    }

    state.gru_hidden = tape.value(hidden).clone();

    let (loss, gradients) = if mode == Mode::Train {
        let mut acc = loss_terms[0];
        for term in &loss_terms[1..] {
            acc = tape.add(acc, *term)?;
        }
        let loss_var = tape.scale(acc, 1.0 / loss_terms.len() as f64);
        let grads = tape.backward(loss_var)?;
        let collected = bp.collect_grads(&tape, &grads);
        (Some(tape.value(loss_var).item()), Some(collected))
    } else {
        (None, None)
    };

    Ok(RunOutput {
        predictions,
        loss,
        gradients,
        gru_steps_per_gap,
        masks,
    })
}
