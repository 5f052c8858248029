//! Sweep the number of clients, write every run plus the merged round table,
//! then build the report (summary.json and the figure CSVs).
//!
//! cargo run --release --example client_count_sweep -- results/sweep

use std::path::PathBuf;

use fedmia::harness::{run_sweep, write_report, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "results/sweep".into());
    let configs: Vec<ExperimentConfig> = [2, 5, 10]
        .into_iter()
        .flat_map(|n| (0..2).map(move |seed| (n, seed)))
        .map(|(n, seed)| {
            let mut c = ExperimentConfig::synthetic(n, 15);
            c.seed = seed;
            c.train.learning_rate = 0.1;
            c.train.local_epochs = 5;
            c.output_dir = out.clone();
            c
        })
        .collect();
    let result = run_sweep(&configs)?;
    let summary = write_report(&result, &out)?;
    let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3}"));
    println!("{:<18} {:>3} {:>4} {:>6} {:>6} {:>6}  rho", "hash", "n", "seed", "test", "gap", "mia");
    for c in &summary.configs {
        println!(
            "{:<18} {:>3} {:>4} {:>6} {:>6} {:>6.3}  {}",
            c.config_hash,
            c.n_clients,
            c.seed,
            fmt(c.final_test_acc),
            fmt(c.final_gap),
            c.final_mia_acc,
            fmt(c.spearman_test_mia)
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
