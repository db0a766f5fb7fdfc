// Temporary tuning probe for the benchmark configuration.
use evsteer_core::eval::benchmark::{run_benchmark, untrained_rmse, BenchmarkConfig, generate_splits};
use evsteer_core::pipeline::ModelKind;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let train_n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let seeds: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-3);

    let mut cfg = BenchmarkConfig::standard();
    cfg.split.train = train_n;
    cfg.split.val = (train_n / 5).max(2);
    cfg.split.test = (train_n / 5).max(2);
    cfg.train.epochs = epochs;
    cfg.train.adam.learning_rate = lr;
    cfg.init_seeds = (0..seeds as u64).collect();

    let t0 = Instant::now();
    let (train, _val, test) = generate_splits(&cfg).unwrap();
    println!("scene gen: {:.1}s for {} seqs, {} events in train[0]",
        t0.elapsed().as_secs_f64(), train.len() + _val.len() + test.len(), train[0].events.len());

    for kind in [ModelKind::ApsOnly, ModelKind::SyncHistogram, ModelKind::Asynchronous] {
        let r = untrained_rmse(kind, &cfg, &test, 0).unwrap();
        println!("untrained {:?}: test rmse {:.3}", kind, r);
    }
    // angle stats
    let angles: Vec<f64> = test.iter().flat_map(|s| s.angles[1..].iter().copied()).collect();
    let mean = angles.iter().sum::<f64>() / angles.len() as f64;
    let std = (angles.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / angles.len() as f64).sqrt();
    println!("angle std: {:.3} (mean {:.3})", std, mean);

    let result = run_benchmark(&cfg).unwrap();
    println!("benchmark wall: {:.1}s", result.wall_seconds);
    println!("{}", result.markdown_table());
    for (name, o) in [("aps", &result.aps_only), ("sync", &result.sync_histogram), ("ours", &result.asynchronous)] {
        for s in &o.per_seed {
            println!("{name} seed {}: test rmse {:.3} eva {:.3} (best epoch {} val {:.3})",
                s.init_seed, s.report.rmse, s.report.eva, s.best_epoch, s.best_val_rmse);
        }
    }
}
