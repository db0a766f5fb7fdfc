// Temporary: train a single model kind with verbose epoch logs.
use evsteer_core::eval::benchmark::{generate_splits, BenchmarkConfig};
use evsteer_core::eval::train::{train_model, TrainConfig};
use evsteer_core::pipeline::ModelKind;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind: ModelKind = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(ModelKind::Asynchronous);
    let train_n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(10);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    let scale: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let batch: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1);

    let mut cfg = BenchmarkConfig::standard();
    cfg.pipeline.output_scale = scale;
    cfg.split.train = train_n;
    cfg.split.val = (train_n / 5).max(2);
    cfg.split.test = (train_n / 5).max(2);
    let (train, val, _test) = generate_splits(&cfg).unwrap();

    let tc = TrainConfig {
        epochs,
        adam: evsteer_core::nn::AdamConfig { learning_rate: lr, ..Default::default() },
        batch_size: batch,
        workers: 2,
        ..TrainConfig::default()
    };
    let result = train_model(kind, &cfg.pipeline, &tc, &train, &val).unwrap();
    for log in &result.logs {
        println!("epoch {:2}: train {:.3} val {:.3}", log.epoch, log.train_rmse, log.val_rmse);
    }
    // Head norm to check input-sensitivity collapse.
    let w = result.params.get("reg.head.w").unwrap();
    let n: f64 = w.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("head |w| = {n:.4}");
}
