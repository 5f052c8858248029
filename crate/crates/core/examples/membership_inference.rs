//! Attack an overfit model: train shadow models, fit the attack classifier
//! and the confidence-threshold baseline, and evaluate both on a balanced
//! member/non-member set.
//!
//! cargo run --release --example membership_inference

use fedmia::attack::{build_attack_dataset, calibrate_threshold, evaluate_mia, train_attack, train_shadows, AttackModel};
use fedmia::data::{generate_synthetic, MembershipSplit};
use fedmia::model::{accuracy, init_params, train_local, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = [20, 64, 4];
    let all = generate_synthetic(1400, 20, 4, 2.0, 12)?;
    let members: Vec<usize> = (0..200).collect();
    let nonmembers: Vec<usize> = (200..600).collect();
    let pool = all.subset(&(600..1400).collect::<Vec<_>>());
    let cfg = TrainConfig {
        learning_rate: 0.2,
        batch_size: 16,
        local_epochs: 400,
        seed: 0,
    };

    let target = train_local(&init_params(&dims, 1)?, &all.subset(&members), &cfg)?;
    println!(
        "target: train {:.3}, held-out {:.3}",
        accuracy(&target, &all.subset(&members))?,
        accuracy(&target, &all.subset(&nonmembers))?
    );

    let shadows = train_shadows(&pool, 4, &dims, &cfg, 5)?;
    let attack_data = build_attack_dataset(&shadows, &pool)?;
    println!("attack training set: {} rows of {} features", attack_data.len(), attack_data.feature_dim());
    let shadow_attack = train_attack(&attack_data, 0)?;
    let threshold = calibrate_threshold(&attack_data)?;
    if let AttackModel::Threshold { tau } = threshold {
        println!("calibrated threshold tau = {tau:.4}");
    }

    let split = MembershipSplit::from_pools(members, nonmembers, 200, 4)?;
    for (name, attack) in [("shadow", &shadow_attack), ("threshold", &threshold)] {
        let report = evaluate_mia(attack, &target, &split, &all)?;
        println!(
            "{name:<9} accuracy {:.3}  member conf {:.3}  non-member conf {:.3}  (n = {})",
            report.attack_accuracy, report.member_mean_confidence, report.nonmember_mean_confidence, report.n_eval
        );
    }
    Ok(())
}
