//! Train a dense network centrally, report loss and accuracy as it goes,
//! and save and reload a checkpoint.
//!
//! cargo run --release --example train_dense_net

use fedmia::data::generate_synthetic;
use fedmia::model::{
    accuracy, init_params, load_checkpoint, mean_loss, predict_confidence, save_checkpoint, train_local,
    CheckpointFormat, TrainConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(1200, 20, 4, 2.0, 3)?;
    let train = data.subset(&(0..300).collect::<Vec<_>>());
    let test = data.subset(&(300..1200).collect::<Vec<_>>());

    let mut net = init_params(&[20, 64, 4], 0)?;
    println!("{} parameters", net.num_params());
    for step in 1..=8 {
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 16,
            local_epochs: 10,
            seed: step,
        };
        net = train_local(&net, &train, &cfg)?;
        println!(
            "epoch {:>3}  loss {:.4}  train {:.3}  test {:.3}",
            step * 10,
            mean_loss(&net, &train)?,
            accuracy(&net, &train)?,
            accuracy(&net, &test)?
        );
    }
    let (x, y) = test.sample(0);
    let conf = predict_confidence(&net, x)?;
    println!("sample 0: label {y}, predicted {} with confidence {:.3}", conf.argmax(), conf.max());

    let path = std::env::temp_dir().join(format!("fedmia-example-{}.ckpt", std::process::id()));
    save_checkpoint(&net, &path, CheckpointFormat::Binary)?;
    let restored = load_checkpoint(&path)?;
    std::fs::remove_file(&path)?;
    assert_eq!(restored, net);
    println!("checkpoint round trip ok ({})", path.display());
    Ok(())
}
