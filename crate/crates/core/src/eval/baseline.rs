//! Synchronous comparators sharing the asynchronous model's regressor
//! stack: the h+/h- two-channel accumulation model and the gray-scale-only
//! ablation.

use crate::event::accum::{accumulate_split_histograms, TimeWindow};
use crate::event::types::Sequence;
use crate::nn::{ParamSet, Tape, Tensor};
use crate::pipeline::config::{PipelineConfig, PipelineError};
use crate::pipeline::model::regress_angle;
use crate::pipeline::runner::{FramePrediction, Mode, RunOutput};
use crate::pipeline::ModelKind;

/// Three-channel input for the synchronous model at gap `i`: positive and
/// negative count histograms over the gap (scaled by 1/Z) stacked with the
/// gray-scale frame preceding the gap.
pub fn sync_input(seq: &Sequence, gap: usize, cfg: &PipelineConfig) -> Result<Tensor, PipelineError> {
    let window = TimeWindow::new(seq.frame_time(gap), seq.frame_time(gap + 1))?;
    let (pos, neg) = accumulate_split_histograms(&seq.events, seq.width, seq.height, window)?;
    let scale = 1.0 / seq.frame_interval as f64;
    let mut data = Vec::with_capacity(3 * cfg.spatial_len());
    data.extend_from_slice(pos.to_tensor_scaled(scale).data());
    data.extend_from_slice(neg.to_tensor_scaled(scale).data());
    data.extend_from_slice(seq.frames[gap].to_tensor().data());
    Ok(Tensor::new(vec![3, cfg.width, cfg.height], data)?)
}

/// Run a synchronous comparator over a sequence: one regressor pass per
/// frame gap, predicting the angle at the arriving frame.
pub fn run_sequence_baseline(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &PipelineConfig,
    seq: &Sequence,
    mode: Mode,
) -> Result<RunOutput, PipelineError> {
    debug_assert!(kind != ModelKind::Asynchronous);
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
    let mut predictions = Vec::new();
    let mut loss_terms = Vec::new();

    for gap in 0..seq.num_frames() - 1 {
        let input = match kind {
            ModelKind::SyncHistogram => sync_input(seq, gap, cfg)?,
            ModelKind::ApsOnly => seq.frames[gap]
                .to_tensor()
                .reshaped(&[1, cfg.width, cfg.height])?,
            ModelKind::Asynchronous => unreachable!(),
        };
        let x = tape.constant(input);
        let d = regress_angle(&mut tape, &bp, cfg, x)?;
        let predicted = tape.value(d).item();
        let target = seq.angles[gap + 1];
        predictions.push(FramePrediction {
            frame_index: gap + 1,
            predicted,
            target,
        });
        if mode == Mode::Train {
            let t = tape.constant(Tensor::scalar(target));
            let diff = tape.sub(d, t)?;
            let sq = tape.mul(diff, diff)?;
            loss_terms.push(sq);
        }
    }

    let (loss, gradients) = if mode == Mode::Train {
        let mut acc = loss_terms[0];
        for term in &loss_terms[1..] {
            acc = tape.add(acc, *term)?;
        }
        let loss_var = tape.scale(acc, 1.0 / loss_terms.len() as f64);
        let grads = tape.backward(loss_var)?;
        (
            Some(tape.value(loss_var).item()),
            Some(bp.collect_grads(&tape, &grads)),
        )
    } else {
        (None, None)
    };

    Ok(RunOutput {
        predictions,
        loss,
        gradients,
        gru_steps_per_gap: vec![0; seq.num_frames() - 1],
        masks: Vec::new(),
    })
}

/// Run any model kind over a sequence with one entry point.
pub fn run_model(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &PipelineConfig,
    seq: &Sequence,
    mode: Mode,
    teacher_forcing: bool,
) -> Result<RunOutput, PipelineError> {
    match kind {
        ModelKind::Asynchronous => {
            crate::pipeline::runner::run_sequence(params, cfg, seq, mode, teacher_forcing)
        }
        _ => run_sequence_baseline(kind, params, cfg, seq, mode),
    }
}
