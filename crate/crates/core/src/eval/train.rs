//! Training loop: per-sequence Adam steps with optional mini-batching,
//! per-epoch train/validation RMSE logging, and best-validation snapshots.

use crate::event::types::Sequence;
use crate::nn::{Adam, AdamConfig, NnError, ParamSet, Tensor};
use crate::pipeline::config::{PipelineConfig, PipelineError};
use crate::pipeline::runner::Mode;
use crate::pipeline::ModelKind;

use super::baseline::run_model;
use super::metrics;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub teacher_forcing: bool,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    /// Threads used to evaluate a batch's gradients; merging is by batch
    /// index, so the result is independent of the worker count.
    pub workers: usize,
    /// Seed for parameter initialization.
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            adam: AdamConfig {
                learning_rate: 1e-3,
                ..AdamConfig::default()
            },
            teacher_forcing: true,
            batch_size: 1,
            workers: 1,
            init_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
}

pub struct TrainResult {
    /// Parameters of the best validation epoch.
    pub params: ParamSet,
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
}

/// Evaluation-mode RMSE of `params` over `sequences` (self-fed history).
pub fn eval_rmse(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &PipelineConfig,
    sequences: &[Sequence],
) -> Result<f64, PipelineError> {
    let (mut predicted, mut observed) = (Vec::new(), Vec::new());
    for seq in sequences {
        let out = run_model(kind, params, cfg, seq, Mode::Eval, false)?;
        for p in out.predictions {
            predicted.push(p.predicted);
            observed.push(p.target);
        }
    }
    metrics::rmse(&predicted, &observed)
        .map_err(|e| PipelineError::Config(format!("evaluation produced no predictions: {e}")))
}

fn sum_grads(batch: Vec<Vec<(String, Tensor)>>) -> Vec<(String, Tensor)> {
    let mut iter = batch.into_iter();
    let mut acc = iter.next().expect("non-empty batch");
    for grads in iter {
        for ((_, total), (_, g)) in acc.iter_mut().zip(grads) {
            total.add_assign(&g);
        }
    }
    acc
}

/// Train `kind` from a fresh initialization over `train` sequences,
/// reporting per-epoch RMSE on `train` (as-trained) and `val` (self-fed).
/// Deterministic for a fixed config regardless of `workers`.
pub fn train_model(
    kind: ModelKind,
    cfg: &PipelineConfig,
    tc: &TrainConfig,
    train: &[Sequence],
    val: &[Sequence],
) -> Result<TrainResult, PipelineError> {
    if train.is_empty() || val.is_empty() {
        return Err(PipelineError::Config("empty train or val split".into()));
    }
    let mut params = crate::pipeline::build_params(cfg, kind, tc.init_seed)?;
    let mut adam = Adam::new(tc.adam, &params);

    let mut logs = Vec::with_capacity(tc.epochs);
    let mut best: Option<(usize, f64, ParamSet)> = None;

    for epoch in 0..tc.epochs {
        let mut sq_sum = 0.0;
        let mut n_preds = 0usize;

        for batch in train.chunks(tc.batch_size.max(1)) {
            let outputs = run_batch(kind, &params, cfg, tc, batch)?;
            let mut grad_sets = Vec::with_capacity(outputs.len());
            for out in outputs {
                for p in &out.predictions {
                    sq_sum += (p.predicted - p.target) * (p.predicted - p.target);
                    n_preds += 1;
                }
                let loss = out.loss.expect("train mode");
                if !loss.is_finite() {
                    return Err(PipelineError::Nn(NnError::NonFinite("training loss")));
                }
                grad_sets.push(out.gradients.expect("train mode"));
            }
            let summed = sum_grads(grad_sets);
            adam.step(&mut params, &summed)?;
        }

        let train_rmse = (sq_sum / n_preds as f64).sqrt();
        let val_rmse = eval_rmse(kind, &params, cfg, val)?;
        logs.push(EpochLog {
            epoch,
            train_rmse,
            val_rmse,
        });
        let improved = best.as_ref().map_or(true, |(_, b, _)| val_rmse < *b);
        if improved {
            best = Some((epoch, val_rmse, params.clone()));
        }
    }

    let (best_epoch, best_val_rmse, best_params) = best.expect("at least one epoch");
    Ok(TrainResult {
        params: best_params,
        logs,
        best_epoch,
        best_val_rmse,
    })
}

fn run_batch(
    kind: ModelKind,
    params: &ParamSet,
    cfg: &PipelineConfig,
    tc: &TrainConfig,
    batch: &[Sequence],
) -> Result<Vec<crate::pipeline::RunOutput>, PipelineError> {
    let workers = tc.workers.max(1).min(batch.len());
    if workers <= 1 || batch.len() <= 1 {
        return batch
            .iter()
            .map(|seq| run_model(kind, params, cfg, seq, Mode::Train, tc.teacher_forcing))
            .collect();
    }
    // Fan sequences out to scoped threads; results land in batch order.
    let mut slots: Vec<Option<Result<crate::pipeline::RunOutput, PipelineError>>> =
        (0..batch.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = batch.len().div_ceil(workers);
        for (slot_chunk, seq_chunk) in slots.chunks_mut(chunk).zip(batch.chunks(chunk)) {
            scope.spawn(move || {
                for (slot, seq) in slot_chunk.iter_mut().zip(seq_chunk) {
                    *slot = Some(run_model(kind, params, cfg, seq, Mode::Train, tc.teacher_forcing));
                }
            });
        }
    });
    slots.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::scene::{generate_scenes, CurvatureSchedule, SceneConfig};

    fn tiny_setup() -> (PipelineConfig, SceneConfig) {
        let mut cfg = PipelineConfig::toy();
        cfg.bin_us = 250;
        let scene = SceneConfig {
            width: cfg.width,
            height: cfg.height,
            frames: 3,
            frame_interval: cfg.frame_interval,
            frame_dt_us: 1000,
            schedule: CurvatureSchedule::SplitRandom {
                slow_amp: 4.0,
                fast_amp: 2.0,
            },
            ..SceneConfig::default()
        };
        (cfg, scene)
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (cfg, scene) = tiny_setup();
        let seqs = generate_scenes(&scene, 0, 3).unwrap();
        let tc = TrainConfig {
            epochs: 3,
            adam: AdamConfig {
                learning_rate: 0.0,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let result =
            train_model(ModelKind::ApsOnly, &cfg, &tc, &seqs[..2], &seqs[2..]).unwrap();
        let first = result.logs[0].val_rmse;
        assert!(result.logs.iter().all(|l| l.val_rmse == first));
    }

    #[test]
    fn training_reduces_loss_on_tiny_problem() {
        let (cfg, scene) = tiny_setup();
        let seqs = generate_scenes(&scene, 0, 4).unwrap();
        let tc = TrainConfig {
            epochs: 10,
            adam: AdamConfig {
                learning_rate: 3e-3,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let result =
            train_model(ModelKind::SyncHistogram, &cfg, &tc, &seqs[..3], &seqs[3..]).unwrap();
        let first = result.logs.first().unwrap().train_rmse;
        let last = result.logs.last().unwrap().train_rmse;
        assert!(
            last < first,
            "train RMSE did not drop: {first} -> {last}"
        );
    }

    #[test]
    fn workers_do_not_change_results() {
        let (cfg, scene) = tiny_setup();
        let seqs = generate_scenes(&scene, 5, 4).unwrap();
        let mut tc = TrainConfig {
            epochs: 2,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let a = train_model(ModelKind::ApsOnly, &cfg, &tc, &seqs[..3], &seqs[3..]).unwrap();
        tc.workers = 3;
        let b = train_model(ModelKind::ApsOnly, &cfg, &tc, &seqs[..3], &seqs[3..]).unwrap();
        for (la, lb) in a.logs.iter().zip(&b.logs) {
            assert_eq!(la.val_rmse.to_bits(), lb.val_rmse.to_bits());
        }
    }
}
