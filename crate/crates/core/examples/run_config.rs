//! Load an experiment config file and run it, as `fedmia run` does.
//!
//! cargo run --release --example run_config -- configs/fedavg_n5.cfg

use fedmia::harness::{load_config, run_experiment};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/fedavg_n5.cfg".into());
    let config = load_config(&path)?;
    println!("{path}: hash {}", config.config_hash());
    print!("{}", config.to_config_string());
    let run = run_experiment(&config)?.runs.remove(0);
    for r in &run.records {
        println!(
            "round {:>3}  train {:.3}  test {:.3}  attack {}",
            r.round,
            r.train_accuracy,
            r.test_accuracy,
            r.mia_accuracy.map_or("-".into(), |m| format!("{m:.3}"))
        );
    }
    println!("outputs in {}", config.output_dir.join(config.config_hash()).display());
    Ok(())
}
