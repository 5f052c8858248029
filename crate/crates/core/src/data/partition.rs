use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Disjoint, near-even assignment of sample indices `0..source_size` to
/// clients. Each client's index set is stored in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    assignments: Vec<Vec<usize>>,
    source_size: usize,
}

impl PartitionPlan {
    pub fn n_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn shard(&self, client: usize) -> &[usize] {
        &self.assignments[client]
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }
}

/// Shuffle `0..dataset_size` with `seed` and deal it into `n_clients`
/// contiguous chunks. The first `N mod n` clients receive `⌈N/n⌉` indices,
/// the rest `⌊N/n⌋`.
pub fn partition(dataset_size: usize, n_clients: usize, seed: u64) -> Result<PartitionPlan> {
    if n_clients == 0 {
        return Err(Error::invalid("n_clients must be at least 1"));
    }
    if n_clients > dataset_size {
        return Err(Error::invalid(format!(
            "cannot split {dataset_size} samples across {n_clients} clients"
        )));
    }
    let mut order: Vec<usize> = (0..dataset_size).collect();
    order.shuffle(&mut seed::rng(seed));

    let base = dataset_size / n_clients;
    let extra = dataset_size % n_clients;
    let mut assignments = Vec::with_capacity(n_clients);
    let mut start = 0;
    for client in 0..n_clients {
        let len = base + usize::from(client < extra);
        let mut shard = order[start..start + len].to_vec();
        shard.sort_unstable();
        assignments.push(shard);
        start += len;
    }
    Ok(PartitionPlan {
        assignments,
        source_size: dataset_size,
    })
}

/// Member / non-member populations plus the equal-size evaluation subsets
/// the attack is scored on. Indices refer to rows of one [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipSplit {
    pub member_indices: Vec<usize>,
    pub nonmember_indices: Vec<usize>,
    pub member_eval: Vec<usize>,
    pub nonmember_eval: Vec<usize>,
}

impl MembershipSplit {
    /// Draw `eval_size` evaluation samples without replacement from each
    /// population.
    pub fn from_pools(
        member_indices: Vec<usize>,
        nonmember_indices: Vec<usize>,
        eval_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if eval_size == 0 {
            return Err(Error::invalid("eval_size must be positive"));
        }
        if eval_size > member_indices.len() || eval_size > nonmember_indices.len() {
            return Err(Error::invalid(format!(
                "eval_size {eval_size} exceeds population sizes ({} members, {} non-members)",
                member_indices.len(),
                nonmember_indices.len()
            )));
        }
        let nonmember_set: HashSet<usize> = nonmember_indices.iter().copied().collect();
        if let Some(shared) = member_indices.iter().find(|i| nonmember_set.contains(i)) {
            return Err(Error::invalid(format!(
                "index {shared} is both member and non-member"
            )));
        }
        let mut rng = seed::rng(seed);
        let mut members = member_indices.clone();
        let mut nonmembers = nonmember_indices.clone();
        members.shuffle(&mut rng);
        nonmembers.shuffle(&mut rng);
        members.truncate(eval_size);
        nonmembers.truncate(eval_size);
        Ok(MembershipSplit {
            member_indices,
            nonmember_indices,
            member_eval: members,
            nonmember_eval: nonmembers,
        })
    }

    pub fn eval_size(&self) -> usize {
        self.member_eval.len()
    }
}

/// Split `dataset` into a training population (`round(train_fraction *
/// len)` rows) and a held-out population, then draw the evaluation subsets.
pub fn make_membership_split(
    dataset: &Dataset,
    train_fraction: f64,
    eval_size: usize,
    seed: u64,
) -> Result<MembershipSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = seed::rng(seed);
    order.shuffle(&mut rng);
    let n_train = (train_fraction * dataset.len() as f64).round() as usize;
    let nonmembers = order.split_off(n_train);
    MembershipSplit::from_pools(order, nonmembers, eval_size, seed::derive_seed(seed, "eval", &[]))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::matrix::Matrix;
    use proptest::prelude::*;

    fn toy(n: usize) -> Dataset {
        Dataset::new(Matrix::zeros(n, 1), vec![0; n], 1, "toy").unwrap()
    }

    #[test]
    fn single_client_gets_everything() {
        let plan = partition(10, 1, 0).unwrap();
        assert_eq!(plan.assignments(), &[(0..10).collect::<Vec<_>>()]);
    }

    #[test]
    fn ten_over_three_is_four_three_three() {
        for seed in 0..5 {
            assert_eq!(partition(10, 3, seed).unwrap().shard_sizes(), vec![4, 3, 3]);
        }
    }

    #[test]
    fn thousand_over_ten_brute_force_check() {
        let plan = partition(1000, 10, 5).unwrap();
        assert_eq!(plan.shard_sizes(), vec![100; 10]);
        let mut seen = vec![0u32; 1000];
        for shard in plan.assignments() {
            for &i in shard {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn rejects_more_clients_than_samples() {
        assert!(partition(3, 4, 0).is_err());
        assert!(partition(3, 0, 0).is_err());
    }

    #[test]
    fn membership_split_sizes() {
        let s = make_membership_split(&toy(100), 0.5, 50, 3).unwrap();
        assert_eq!(s.member_eval.len(), 50);
        assert_eq!(s.nonmember_eval.len(), 50);
        let m: BTreeSet<_> = s.member_indices.iter().collect();
        assert!(s.nonmember_indices.iter().all(|i| !m.contains(i)));
        assert_eq!(s, make_membership_split(&toy(100), 0.5, 50, 3).unwrap());
    }

    #[test]
    fn membership_split_eval_too_large() {
        assert!(make_membership_split(&toy(100), 0.5, 60, 3).is_err());
    }

    #[test]
    fn overlapping_pools_rejected() {
        assert!(MembershipSplit::from_pools(vec![1, 2], vec![2, 3], 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_exhaustive_balanced(n_total in 1usize..400, k in 1usize..40, seed: u64) {
            prop_assume!(k <= n_total);
            let plan = partition(n_total, k, seed).unwrap();
            prop_assert_eq!(plan.n_clients(), k);
            let mut seen = vec![false; n_total];
            for shard in plan.assignments() {
                for &i in shard {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.into_iter().all(|s| s));
            let sizes = plan.shard_sizes();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }

        #[test]
        fn membership_split_always_disjoint(n in 4usize..200, frac in 0.1f64..0.9, seed: u64) {
            let ds = toy(n);
            let n_train = (frac * n as f64).round() as usize;
            let eval = n_train.min(n - n_train);
            prop_assume!(eval >= 1);
            let s = make_membership_split(&ds, frac, eval, seed).unwrap();
            let m: BTreeSet<_> = s.member_indices.iter().collect();
            prop_assert!(s.nonmember_indices.iter().all(|i| !m.contains(i)));
            prop_assert_eq!(s.member_eval.len(), s.nonmember_eval.len());
            prop_assert!(s.member_eval.iter().all(|i| m.contains(i)));
        }
    }
}
