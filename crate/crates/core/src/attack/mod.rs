//! Black-box membership inference.
//!
//! The adversary trains shadow models on data from the target's
//! distribution, labels the shadows' confidence vectors by known
//! membership, and fits an attack classifier on them. Against the target it
//! only ever sees confidence vectors through [`ConfidenceOracle`].

mod classifier;

pub use classifier::{calibrate_threshold, train_attack, AttackModel, LogisticAttack};

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MembershipSplit};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{init_params, train_local, ConfidenceOracle, ConfidenceVector, DenseNet, TrainConfig};
use crate::seed::{self, derive_seed};

/// A shadow model and the pool indices it was (and was not) trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Shadow {
    pub net: DenseNet,
    pub members: Vec<usize>,
    pub nonmembers: Vec<usize>,
}

/// Train `k_shadows` models, each on a random half of `shadow_pool`
/// (`⌊len/2⌋` members, the rest held out). `cfg.seed` is ignored; every
/// shadow's split, initialization and batch order derive from `seed`.
pub fn train_shadows(
    shadow_pool: &Dataset,
    k_shadows: usize,
    architecture: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<Shadow>> {
    if k_shadows == 0 {
        return Err(Error::invalid("need at least one shadow model"));
    }
    if shadow_pool.len() < 4 {
        return Err(Error::invalid(format!(
            "shadow pool of {} samples leaves fewer than 2 per split",
            shadow_pool.len()
        )));
    }
    (0..k_shadows)
        .into_par_iter()
        .map(|i| {
            let i = i as u64;
            let mut order: Vec<usize> = (0..shadow_pool.len()).collect();
            order.shuffle(&mut seed::rng(derive_seed(seed, "shadow-split", &[i])));
            let mut nonmembers = order.split_off(shadow_pool.len() / 2);
            let mut members = order;
            members.sort_unstable();
            nonmembers.sort_unstable();
            let init = init_params(architecture, derive_seed(seed, "shadow-init", &[i]))?;
            let train_cfg = cfg.with_seed(derive_seed(seed, "shadow-train", &[i]));
            let net = train_local(&init, &shadow_pool.subset(&members), &train_cfg)?;
            Ok(Shadow {
                net,
                members,
                nonmembers,
            })
        })
        .collect()
}

/// Confidence vector sorted descending, so the feature ignores class identity.
pub fn extract_features(conf: &ConfidenceVector) -> Vec<f64> {
    let mut f = conf.probs().to_vec();
    f.sort_by(|a, b| b.total_cmp(a));
    f
}

/// Membership-labelled attack features. Always class-balanced.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackDataset {
    features: Matrix,
    membership: Vec<bool>,
    /// `(shadow index, pool index)` for each row when built from shadows.
    origin: Vec<(usize, usize)>,
}

impl AttackDataset {
    pub fn new(features: Matrix, membership: Vec<bool>) -> Result<Self> {
        if features.rows() != membership.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} membership labels",
                features.rows(),
                membership.len()
            )));
        }
        let members = membership.iter().filter(|&&m| m).count();
        if 2 * members != membership.len() {
            return Err(Error::invalid(format!(
                "attack data must be balanced: {members} members of {}",
                membership.len()
            )));
        }
        Ok(AttackDataset {
            features,
            membership,
            origin: Vec::new(),
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    pub fn origin(&self) -> &[(usize, usize)] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.membership.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membership.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// CSV with header `f0,...,fC-1,member`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for j in 0..self.feature_dim() {
            let _ = write!(out, "f{j},");
        }
        out.push_str("member\n");
        for (row, &m) in self.features.iter_rows().zip(&self.membership) {
            for v in row {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", u8::from(m));
        }
        out
    }
}

/// Query every shadow on every pool sample and label rows by that shadow's
/// membership. Per shadow, rows are emitted in pool order and each class is
/// capped at `min(|members|, |nonmembers|)`, which balances the result.
pub fn build_attack_dataset(shadows: &[Shadow], shadow_pool: &Dataset) -> Result<AttackDataset> {
    if shadows.is_empty() {
        return Err(Error::invalid("no shadow models"));
    }
    let mut values = Vec::new();
    let mut membership = Vec::new();
    let mut origin = Vec::new();
    let mut width = None;
    for (s, shadow) in shadows.iter().enumerate() {
        let conf = shadow.net.query_batch(shadow_pool.features())?;
        let cap = shadow.members.len().min(shadow.nonmembers.len());
        let mut is_member = vec![None; shadow_pool.len()];
        for &i in &shadow.members {
            is_member[i] = Some(true);
        }
        for &i in &shadow.nonmembers {
            is_member[i] = Some(false);
        }
        let (mut taken_in, mut taken_out) = (0, 0);
        for (i, tag) in is_member.into_iter().enumerate() {
            let Some(member) = tag else { continue };
            let taken = if member { &mut taken_in } else { &mut taken_out };
            if *taken == cap {
                continue;
            }
            *taken += 1;
            let f = extract_features(&conf[i]);
            width = Some(f.len());
            values.extend(f);
            membership.push(member);
            origin.push((s, i));
        }
    }
    let features = Matrix::from_vec(membership.len(), width.unwrap_or(0), values)?;
    let mut data = AttackDataset::new(features, membership)?;
    data.origin = origin;
    Ok(data)
}

/// Fraction of rows of `data` whose membership `attack` predicts correctly.
pub fn attack_accuracy(attack: &AttackModel, data: &AttackDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty attack dataset"));
    }
    let mut correct = 0;
    for (row, &m) in data.features().iter_rows().zip(data.membership()) {
        correct += usize::from(attack.predict_member(row)? == m);
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Attack outcome on a balanced member / non-member evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiaReport {
    pub attack_accuracy: f64,
    pub member_mean_confidence: f64,
    pub nonmember_mean_confidence: f64,
    /// Total evaluated samples (members plus non-members).
    pub n_eval: usize,
}

impl MiaReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Score `attack` against `target` on the split's evaluation subsets.
pub fn evaluate_mia(
    attack: &AttackModel,
    target: &impl ConfidenceOracle,
    split: &MembershipSplit,
    dataset: &Dataset,
) -> Result<MiaReport> {
    if split.member_eval.is_empty() || split.nonmember_eval.is_empty() {
        return Err(Error::invalid("empty membership evaluation split"));
    }
    if split.member_eval.len() != split.nonmember_eval.len() {
        return Err(Error::invalid("membership evaluation split is unbalanced"));
    }
    let score = |indices: &[usize], member: bool| -> Result<(usize, f64)> {
        let conf = target.query_batch(&dataset.features().select_rows(indices))?;
        let mut correct = 0;
        let mut conf_sum = 0.0;
        for c in &conf {
            let f = extract_features(c);
            if attack.predict_member(&f)? == member {
                correct += 1;
            }
            conf_sum += f[0];
        }
        Ok((correct, conf_sum / conf.len() as f64))
    };
    let (tp, member_conf) = score(&split.member_eval, true)?;
    let (tn, nonmember_conf) = score(&split.nonmember_eval, false)?;
    let n_eval = split.member_eval.len() + split.nonmember_eval.len();
    Ok(MiaReport {
        attack_accuracy: (tp + tn) as f64 / n_eval as f64,
        member_mean_confidence: member_conf,
        nonmember_mean_confidence: nonmember_conf,
        n_eval,
    })
}
