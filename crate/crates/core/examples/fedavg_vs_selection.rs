//! Run the same federation under FedAvg and each single-client selection
//! scheme and compare final utility.
//!
//! cargo run --release --example fedavg_vs_selection

use fedmia::data::{generate_synthetic, partition};
use fedmia::federation::{run_federation, AggregationStrategy, CorrectnessMask, FederatedData, FederationConfig};
use fedmia::model::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let all = generate_synthetic(2000, 20, 4, 2.5, 11)?;
    let pool = all.subset(&(0..500).collect::<Vec<_>>());
    let data = FederatedData {
        plan: partition(pool.len(), 5, 0)?,
        pool,
        reference: Some(all.subset(&(500..550).collect::<Vec<_>>())),
        test: all.subset(&(1000..2000).collect::<Vec<_>>()),
    };
    println!("{:<18} {:>6} {:>6}  selections", "strategy", "train", "test");
    for strategy in AggregationStrategy::ALL {
        let cfg = FederationConfig {
            layer_dims: vec![20, 32, 4],
            n_clients: 5,
            rounds: 15,
            strategy,
            correct_mask: CorrectnessMask::Truth,
            train: TrainConfig {
                learning_rate: 0.1,
                batch_size: 16,
                local_epochs: 2,
                seed: 0,
            },
            seed: 0,
            parallel: true,
        };
        let outcome = run_federation(&cfg, &data)?;
        let last = outcome.records.last().expect("rounds > 0");
        let picks: Vec<String> = outcome
            .records
            .iter()
            .filter_map(|r| r.selected_client.map(|c| c.to_string()))
            .collect();
        println!(
            "{:<18} {:>6.3} {:>6.3}  {}",
            strategy.as_str(),
            last.train_accuracy,
            last.test_accuracy,
            picks.join(" ")
        );
    }
    Ok(())
}
