//! Split a training pool into disjoint client shards and carve out a
//! balanced member/non-member evaluation set.
//!
//! cargo run --example partition_clients -- 7

use fedmia::data::{generate_synthetic, make_membership_split, partition};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_clients: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let plan = partition(1003, n_clients, 42)?;
    println!("{} samples over {n_clients} clients", plan.source_size());
    for (client, shard) in plan.assignments().iter().enumerate() {
        println!("  client {client}: {} samples, first {:?}", shard.len(), &shard[..3.min(shard.len())]);
    }

    let data = generate_synthetic(1000, 8, 3, 2.0, 1)?;
    let split = make_membership_split(&data, 0.5, 100, 3)?;
    println!(
        "membership split: {} members, {} non-members, evaluating {} of each",
        split.member_indices.len(),
        split.nonmember_indices.len(),
        split.eval_size()
    );
    Ok(())
}
