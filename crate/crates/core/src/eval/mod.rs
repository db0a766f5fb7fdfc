//! Evaluation: metrics, synthetic scene generation, dataset splits,
//! baseline comparators, training, and the benchmark harness.

pub mod baseline;
pub mod benchmark;
pub mod metrics;
pub mod scene;
pub mod train;

pub use baseline::{run_model, run_sequence_baseline, sync_input};
pub use benchmark::{run_benchmark, BenchmarkConfig, BenchmarkResult};
pub use metrics::{eva, improvement, rmse, MetricError, MetricReport};
pub use scene::{generate_scene, generate_scenes, save_scenes, CurvatureSchedule, SceneConfig};
pub use train::{eval_rmse, train_model, EpochLog, TrainConfig, TrainResult};
