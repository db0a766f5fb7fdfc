//! The standard synthetic benchmark: train the asynchronous model and both
//! synchronous comparators on the same generated scenes, average test RMSE
//! over several init seeds, and render a Table-2-style comparison.

use std::time::Instant;

use crate::event::types::Sequence;
use crate::pipeline::config::{PipelineConfig, PipelineError};
use crate::pipeline::ModelKind;

use super::metrics::{self, MetricReport};
use super::scene::{generate_scenes, SceneConfig};
use super::train::{eval_rmse, train_model, TrainConfig, TrainResult};

/// Seed-range split of generated scenes (70/15/15).
#[derive(Clone, Copy, Debug)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub pipeline: PipelineConfig,
    pub scene: SceneConfig,
    pub split: SplitCounts,
    /// Parameter-init seeds; results are averaged over them.
    pub init_seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Run (model, seed) jobs on threads. Results are merged by index and
    /// do not depend on scheduling.
    pub parallel: bool,
}

impl BenchmarkConfig {
    /// The standard benchmark: 64x48 scenes, 200 training sequences,
    /// 43 validation and 43 test sequences split by seed range, three
    /// init seeds per model.
    pub fn standard() -> Self {
        let pipeline = PipelineConfig {
            bin_us: 10_000, // frame_dt 100ms / Z=10
            ..PipelineConfig::default()
        };
        let scene = SceneConfig::default();
        Self {
            pipeline,
            scene,
            split: SplitCounts {
                train: 200,
                val: 43,
                test: 43,
            },
            init_seeds: vec![0, 1, 2],
            train: TrainConfig::default(),
            parallel: true,
        }
    }

    /// A heavily shrunk variant for smoke tests.
    pub fn smoke() -> Self {
        let mut cfg = Self::standard();
        cfg.split = SplitCounts {
            train: 6,
            val: 2,
            test: 2,
        };
        cfg.init_seeds = vec![0];
        cfg.train.epochs = 1;
        cfg
    }
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub init_seed: u64,
    pub report: MetricReport,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
}

#[derive(Clone, Debug)]
pub struct ModelOutcome {
    pub kind: ModelKind,
    pub per_seed: Vec<SeedOutcome>,
}

impl ModelOutcome {
    pub fn mean_rmse(&self) -> f64 {
        self.per_seed.iter().map(|s| s.report.rmse).sum::<f64>() / self.per_seed.len() as f64
    }

    pub fn mean_eva(&self) -> f64 {
        self.per_seed.iter().map(|s| s.report.eva).sum::<f64>() / self.per_seed.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkResult {
    pub aps_only: ModelOutcome,
    pub sync_histogram: ModelOutcome,
    pub asynchronous: ModelOutcome,
    pub wall_seconds: f64,
}

impl BenchmarkResult {
    pub fn outcome(&self, kind: ModelKind) -> &ModelOutcome {
        match kind {
            ModelKind::ApsOnly => &self.aps_only,
            ModelKind::SyncHistogram => &self.sync_histogram,
            ModelKind::Asynchronous => &self.asynchronous,
        }
    }

    /// The ordering claim: asynchronous < synchronous < APS-only on mean
    /// test RMSE, each gap at least `min_gap` relative (e.g. 0.05).
    pub fn ordering_ok(&self, min_gap: f64) -> bool {
        let ours = self.asynchronous.mean_rmse();
        let sync = self.sync_histogram.mean_rmse();
        let aps = self.aps_only.mean_rmse();
        ours <= sync * (1.0 - min_gap) && sync <= aps * (1.0 - min_gap)
    }

    /// Comparison table in the layout of the scenario/method grid:
    /// methods as columns, cells as `RMSE (EVA)`.
    pub fn markdown_table(&self) -> String {
        let mut out = String::new();
        out.push_str("| Scenario | APS-only | Synchronous h+/h- | Asynchronous (ours) |\n");
        out.push_str("|---|---|---|---|\n");
        for (i, seed) in self.aps_only.per_seed.iter().map(|s| s.init_seed).enumerate() {
            out.push_str(&format!(
                "| synthetic, seed {} | {:.2} ({:.3}) | {:.2} ({:.3}) | {:.2} ({:.3}) |\n",
                seed,
                self.aps_only.per_seed[i].report.rmse,
                self.aps_only.per_seed[i].report.eva,
                self.sync_histogram.per_seed[i].report.rmse,
                self.sync_histogram.per_seed[i].report.eva,
                self.asynchronous.per_seed[i].report.rmse,
                self.asynchronous.per_seed[i].report.eva,
            ));
        }
        out.push_str(&format!(
            "| synthetic, mean | {:.2} ({:.3}) | {:.2} ({:.3}) | **{:.2} ({:.3})** |\n",
            self.aps_only.mean_rmse(),
            self.aps_only.mean_eva(),
            self.sync_histogram.mean_rmse(),
            self.sync_histogram.mean_eva(),
            self.asynchronous.mean_rmse(),
            self.asynchronous.mean_eva(),
        ));
        let vs_sync =
            metrics::improvement(self.sync_histogram.mean_rmse(), self.asynchronous.mean_rmse());
        let vs_aps = metrics::improvement(self.aps_only.mean_rmse(), self.asynchronous.mean_rmse());
        if let (Ok(s), Ok(a)) = (vs_sync, vs_aps) {
            out.push_str(&format!(
                "\nRMSE change of the asynchronous model: {:.1}% vs the synchronous \
                 h+/h- baseline, {:.1}% vs APS-only.\n",
                s, a
            ));
        }
        out
    }
}

/// Generate the benchmark's scene splits by seed range.
pub fn generate_splits(
    cfg: &BenchmarkConfig,
) -> Result<(Vec<Sequence>, Vec<Sequence>, Vec<Sequence>), PipelineError> {
    let s = &cfg.split;
    let train = generate_scenes(&cfg.scene, 0, s.train)?;
    let val = generate_scenes(&cfg.scene, s.train as u64, s.val)?;
    let test = generate_scenes(&cfg.scene, (s.train + s.val) as u64, s.test)?;
    Ok((train, val, test))
}

fn run_one(
    kind: ModelKind,
    init_seed: u64,
    cfg: &BenchmarkConfig,
    train: &[Sequence],
    val: &[Sequence],
    test: &[Sequence],
) -> Result<SeedOutcome, PipelineError> {
    let tc = TrainConfig {
        init_seed,
        ..cfg.train.clone()
    };
    let TrainResult {
        params,
        best_epoch,
        best_val_rmse,
        ..
    } = train_model(kind, &cfg.pipeline, &tc, train, val)?;

    let (mut predicted, mut observed) = (Vec::new(), Vec::new());
    for seq in test {
        let out = super::baseline::run_model(
            kind,
            &params,
            &cfg.pipeline,
            seq,
            crate::pipeline::Mode::Eval,
            false,
        )?;
        for p in out.predictions {
            predicted.push(p.predicted);
            observed.push(p.target);
        }
    }
    let report = MetricReport::from_pairs(&predicted, &observed)
        .map_err(|e| PipelineError::Config(format!("test metrics: {e}")))?;
    Ok(SeedOutcome {
        init_seed,
        report,
        best_epoch,
        best_val_rmse,
    })
}

/// Run the full comparison: every model kind trained from every init seed
/// on the same splits.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResult, PipelineError> {
    let started = Instant::now();
    let (train, val, test) = generate_splits(cfg)?;

    let kinds = [
        ModelKind::ApsOnly,
        ModelKind::SyncHistogram,
        ModelKind::Asynchronous,
    ];
    let jobs: Vec<(ModelKind, u64)> = kinds
        .iter()
        .flat_map(|&k| cfg.init_seeds.iter().map(move |&s| (k, s)))
        .collect();

    let mut slots: Vec<Option<Result<SeedOutcome, PipelineError>>> =
        (0..jobs.len()).map(|_| None).collect();
    if cfg.parallel {
        std::thread::scope(|scope| {
            for (slot, &(kind, seed)) in slots.iter_mut().zip(&jobs) {
                let (train, val, test) = (&train, &val, &test);
                scope.spawn(move || {
                    *slot = Some(run_one(kind, seed, cfg, train, val, test));
                });
            }
        });
    } else {
        for (slot, &(kind, seed)) in slots.iter_mut().zip(&jobs) {
            *slot = Some(run_one(kind, seed, cfg, &train, &val, &test));
        }
    }

    let mut outcomes: Vec<SeedOutcome> = Vec::with_capacity(jobs.len());
    for slot in slots {
        outcomes.push(slot.expect("job ran")?);
    }
    let per_kind = |idx: usize| ModelOutcome {
        kind: kinds[idx],
        per_seed: outcomes[idx * cfg.init_seeds.len()..(idx + 1) * cfg.init_seeds.len()].to_vec(),
    };

    Ok(BenchmarkResult {
        aps_only: per_kind(0),
        sync_histogram: per_kind(1),
        asynchronous: per_kind(2),
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Convenience for tooling: RMSE of an untrained (freshly initialized)
/// model on a split, the floor any training run should beat.
pub fn untrained_rmse(
    kind: ModelKind,
    cfg: &BenchmarkConfig,
    sequences: &[Sequence],
    init_seed: u64,
) -> Result<f64, PipelineError> {
    let params = crate::pipeline::build_params(&cfg.pipeline, kind, init_seed)?;
    eval_rmse(kind, &params, &cfg.pipeline, sequences)
}
