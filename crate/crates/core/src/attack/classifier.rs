use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AttackDataset;
use crate::error::{Error, Result};
use crate::seed;

const EPOCHS: usize = 2000;

/// Logistic regression over standardized attack features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticAttack {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LogisticAttack {
    fn logit(&self, features: &[f64]) -> f64 {
        let mut z = self.bias;
        for (((x, w), m), s) in features.iter().zip(&self.weights).zip(&self.mean).zip(&self.scale) {
            z += w * (x - m) / s;
        }
        z
    }

    /// Probability that the sample is a member.
    pub fn member_probability(&self, features: &[f64]) -> f64 {
        1.0 / (1.0 + (-self.logit(features)).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackModel {
    ShadowClassifier(LogisticAttack),
    /// Member iff the top confidence is at least `tau`.
    Threshold { tau: f64 },
}

impl AttackModel {
    pub fn feature_dim(&self) -> Option<usize> {
        match self {
            AttackModel::ShadowClassifier(m) => Some(m.weights.len()),
            AttackModel::Threshold { .. } => None,
        }
    }

    /// `features` are sorted confidences, as produced by `extract_features`.
    pub fn predict_member(&self, features: &[f64]) -> Result<bool> {
        match self {
            AttackModel::ShadowClassifier(m) => {
                if features.len() != m.weights.len() {
                    return Err(Error::shape(format!(
                        "attack expects {} features, got {}",
                        m.weights.len(),
                        features.len()
                    )));
                }
                Ok(m.logit(features) >= 0.0)
            }
            AttackModel::Threshold { tau } => {
                let top = features
                    .first()
                    .ok_or_else(|| Error::invalid("empty feature vector"))?;
                Ok(*top >= *tau)
            }
        }
    }
}

/// Full-batch gradient descent on the mean logistic loss for a fixed epoch
/// budget. Features are standardized with the training mean and standard
/// deviation; `seed` drives the small random initial weights.
pub fn train_attack(data: &AttackDataset, seed: u64) -> Result<AttackModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train an attack on an empty dataset"));
    }
    let n = data.len();
    let d = data.feature_dim();
    let x = data.features();
    let y: Vec<f64> = data.membership().iter().map(|&m| f64::from(u8::from(m))).collect();

    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for row in x.iter_rows() {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    for s in &mut scale {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let z: Vec<Vec<f64>> = x
        .iter_rows()
        .map(|row| row.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();

    let mut rng = seed::rng(seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut w: Vec<f64> = (0..d).map(|_| init.sample(&mut rng)).collect();
    let mut b = 0.0;
    // standardized features bound the loss curvature by (d + 1) / 4
    let lr = 2.0 / (d as f64 + 1.0);
    let mut gw = vec![0.0; d];
    for _ in 0..EPOCHS {
        gw.fill(0.0);
        let mut gb = 0.0;
        for (zi, yi) in z.iter().zip(&y) {
            let logit = b + zi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = 1.0 / (1.0 + (-logit).exp()) - yi;
            gb += err;
            for (g, a) in gw.iter_mut().zip(zi) {
                *g += err * a;
            }
        }
        b -= lr * gb / n as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g / n as f64;
        }
    }
    Ok(AttackModel::ShadowClassifier(LogisticAttack {
        weights: w,
        bias: b,
        mean,
        scale,
    }))
}

/// Pick `tau` among the observed top confidences to maximise balanced
/// accuracy of "member iff top confidence >= tau"; ties go to the smallest
/// `tau`.
pub fn calibrate_threshold(data: &AttackDataset) -> Result<AttackModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot calibrate on an empty dataset"));
    }
    if data.feature_dim() == 0 {
        return Err(Error::invalid("attack features are empty"));
    }
    let mut scored: Vec<(f64, bool)> = data
        .features()
        .iter_rows()
        .map(|r| r[0])
        .zip(data.membership().iter().copied())
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let members = scored.iter().filter(|s| s.1).count() as f64;
    let nonmembers = scored.len() as f64 - members;

    // sweep tau upward over distinct values; below index i everything is
    // predicted non-member
    let (mut members_below, mut nonmembers_below) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, scored[0].0);
    let mut i = 0;
    while i < scored.len() {
        let tau = scored[i].0;
        let tpr = (members - members_below) / members;
        let tnr = nonmembers_below / nonmembers;
        let acc = 0.5 * (tpr + tnr);
        if acc > best.0 {
            best = (acc, tau);
        }
        while i < scored.len() && scored[i].0 == tau {
            if scored[i].1 {
                members_below += 1.0;
            } else {
                nonmembers_below += 1.0;
            }
            i += 1;
        }
    }
    Ok(AttackModel::Threshold { tau: best.1 })
}
