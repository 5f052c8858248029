//! Per-sample client agreement, confidence histograms and the rank
//! correlation between utility and attack accuracy for a short federation.
//!
//! cargo run --release --example diagnostics

use fedmia::harness::{run_experiment_with, ExperimentConfig, RunOptions};
use fedmia::metrics::{spearman, Population};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = ExperimentConfig::synthetic(5, 20);
    config.split.train = 300;
    config.split.holdout = 300;
    config.attack.eval_size = 250;
    config.train.learning_rate = 0.1;
    config.train.local_epochs = 5;
    config.output_dir = std::env::temp_dir().join(format!("fedmia-diagnostics-{}", std::process::id()));
    let run = run_experiment_with(&config, &RunOptions::default())?.runs.remove(0);
    std::fs::remove_dir_all(&config.output_dir)?;

    for (name, profile) in [("train", &run.agreement_train), ("test", &run.agreement_test)] {
        if let Some(p) = profile {
            println!("{name} agreement: mean {:.3}, per-level counts {:?}", p.mean_agreement().unwrap_or(0.0), p.counts);
        }
    }
    for p in Population::ALL {
        let counts = run.confidence.population(p);
        println!(
            "{:<16} n {:>4}  mean confidence {}",
            p.as_str(),
            counts.total,
            counts.mean_confidence().map_or("-".into(), |c| format!("{c:.3}"))
        );
    }

    let (test, mia): (Vec<f64>, Vec<f64>) = run
        .records
        .iter()
        .filter_map(|r| r.mia_accuracy.map(|m| (r.test_accuracy, m)))
        .unzip();
    let rho = spearman(&test, &mia)?;
    println!("spearman(test accuracy, attack accuracy) = {:.3} over {} rounds", rho.rho, test.len());
    Ok(())
}
