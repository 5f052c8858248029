use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Class means with minimum pairwise distance `separation`.
///
/// With at least as many features as classes the means are scaled basis
/// vectors, so every pair sits exactly `separation` apart. Otherwise they
/// are spread on a circle in the first two features (or a line in 1-D) with
/// adjacent means `separation` apart.
fn class_means(n_features: usize, n_classes: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut means = vec![vec![0.0; n_features]; n_classes];
    if n_features >= n_classes {
        let scale = separation / std::f64::consts::SQRT_2;
        for (k, mean) in means.iter_mut().enumerate() {
            mean[k] = scale;
        }
    } else if n_features == 1 {
        for (k, mean) in means.iter_mut().enumerate() {
            mean[0] = k as f64 * separation;
        }
    } else {
        let step = std::f64::consts::TAU / n_classes as f64;
        let radius = separation / (2.0 * (step / 2.0).sin());
        for (k, mean) in means.iter_mut().enumerate() {
            mean[0] = radius * (step * k as f64).cos();
            mean[1] = radius * (step * k as f64).sin();
        }
    }
    means
}

/// Isotropic unit-variance Gaussian blobs, one per class.
///
/// Sample `i` has label `i mod n_classes`, so class counts differ by at most
/// one. Raw coordinates are mapped into `[0, 1]` with a single global
/// min-max affine transform, which keeps the blobs isotropic; the
/// separation is measured before that transform.
pub fn generate_synthetic(
    n_samples: usize,
    n_features: usize,
    n_classes: usize,
    class_separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if n_features == 0 {
        return Err(Error::invalid("need at least one feature"));
    }
    if n_samples < n_classes {
        return Err(Error::invalid(format!(
            "{n_samples} samples cannot cover {n_classes} classes"
        )));
    }
    if !(class_separation > 0.0 && class_separation.is_finite()) {
        return Err(Error::invalid("class_separation must be a positive finite number"));
    }

    let means = class_means(n_features, n_classes, class_separation);
    let mut rng = seed::rng(seed);
    let mut raw = Vec::with_capacity(n_samples * n_features);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let label = i % n_classes;
        labels.push(label);
        for &mu in &means[label] {
            let z: f64 = StandardNormal.sample(&mut rng);
            raw.push(mu + z);
        }
    }

    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in &mut raw {
        *v = if span > 0.0 {
            ((*v - lo) / span).clamp(0.0, 1.0)
        } else {
            0.5
        };
    }
    let features = Matrix::from_vec(n_samples, n_features, raw)?;
    Dataset::new(
        features,
        labels,
        n_classes,
        format!("blobs-{n_samples}x{n_features}-c{n_classes}-s{class_separation}"),
    )
}
