//! Small fully-connected classifier trained with mini-batch SGD.
//!
//! Hidden layers use ReLU, the output layer is linear and read through a
//! softmax. The objective is mean softmax cross-entropy.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointFormat,
};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// One affine layer: `weights` is `out x in`, `bias` has length `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least input and output dims, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::invalid(format!("layer dims must be positive: {layer_dims:?}")));
    }
    Ok(())
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape(format!(
                    "layer {k}: bias length {} but {} outputs",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if k > 0 && layers[k - 1].out_dim() != layer.in_dim() {
                return Err(Error::shape(format!(
                    "layer {k} expects {} inputs but layer {} emits {}",
                    layer.in_dim(),
                    k - 1,
                    layers[k - 1].out_dim()
                )));
            }
        }
        let net = DenseNet { layers };
        if net.params().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer {
                weights: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(DenseNet { layers })
    }

    /// Rebuild a network from [`DenseNet::flatten`] output.
    pub fn from_flat(layer_dims: &[usize], params: &[f64]) -> Result<Self> {
        let mut net = DenseNet::zeros(layer_dims)?;
        if params.len() != net.num_params() {
            return Err(Error::shape(format!(
                "{} values for a network with {} parameters",
                params.len(),
                net.num_params()
            )));
        }
        for (dst, &src) in net.params_mut().zip(params) {
            *dst = src;
        }
        DenseNet::from_layers(net.layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim()];
        dims.extend(self.layers.iter().map(Layer::out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Parameters in checkpoint order: per layer, weights row-major then bias.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params().collect()
    }

    pub fn same_shape(&self, other: &DenseNet) -> bool {
        self.layer_dims() == other.layer_dims()
    }

    /// Logits for every row of `batch`.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "batch has {} features, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut acts = self.activations(batch);
        Ok(acts.pop().expect("at least one layer"))
    }

    /// Outputs of every layer; hidden layers are post-ReLU, the last is logits.
    fn activations(&self, input: &Matrix) -> Vec<Matrix> {
        let last = self.layers.len() - 1;
        let mut acts: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let prev = if k == 0 { input } else { &acts[k - 1] };
            let mut out = Matrix::zeros(prev.rows(), layer.out_dim());
            for s in 0..prev.rows() {
                let x = prev.row(s);
                let y = out.row_mut(s);
                for (o, yo) in y.iter_mut().enumerate() {
                    let w = layer.weights.row(o);
                    let mut z = layer.bias[o];
                    for (wi, xi) in w.iter().zip(x) {
                        z += wi * xi;
                    }
                    *yo = if k < last && z <= 0.0 { 0.0 } else { z };
                }
            }
            acts.push(out);
        }
        acts
    }

    fn sgd_step(&mut self, grads: &DenseNet, learning_rate: f64) {
        for (p, g) in self.params_mut().zip(grads.params()) {
            *p -= learning_rate * g;
        }
    }
}

/// He-style initialization: weights `~ N(0, 2 / fan_in)`, biases zero.
pub fn init_params(layer_dims: &[usize], seed: u64) -> Result<DenseNet> {
    check_dims(layer_dims)?;
    let mut rng = seed::rng(seed);
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    for w in layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
            .map_err(|e| Error::invalid(e.to_string()))?;
        let data = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
        layers.push(Layer {
            weights: Matrix::from_vec(fan_out, fan_in, data)?,
            bias: vec![0.0; fan_out],
        });
    }
    Ok(DenseNet { layers })
}

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector(Vec<f64>);

impl ConfidenceVector {
    /// Wrap an existing probability vector, checking entries and total.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("confidence entries must lie in [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("confidences sum to {total}, not 1")));
        }
        Ok(ConfidenceVector(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Predicted class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> ConfidenceVector {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    ConfidenceVector(exps.into_iter().map(|e| e / total).collect())
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

fn check_labels(labels: &[usize], classes: usize, rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape(format!("{rows} rows but {} labels", labels.len())));
    }
    if let Some(y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {y} outside [0, {classes})")));
    }
    Ok(())
}

/// Mean cross-entropy of `softmax(forward(batch))` and its exact gradient.
pub fn loss_and_grad(net: &DenseNet, batch: &Matrix, labels: &[usize]) -> Result<(f64, DenseNet)> {
    if batch.rows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if batch.cols() != net.input_dim() {
        return Err(Error::shape(format!(
            "batch has {} features, network expects {}",
            batch.cols(),
            net.input_dim()
        )));
    }
    check_labels(labels, net.num_classes(), batch.rows())?;
    let mut grads = DenseNet::zeros(&net.layer_dims())?;
    let loss = backprop(net, batch, labels, &mut grads);
    Ok((loss, grads))
}

/// Writes (not accumulates) the gradient into `grads`; returns the loss.
fn backprop(net: &DenseNet, batch: &Matrix, labels: &[usize], grads: &mut DenseNet) -> f64 {
    let n = batch.rows();
    let scale = 1.0 / n as f64;
    let acts = net.activations(batch);
    let logits = &acts[acts.len() - 1];

    let mut loss = 0.0;
    let mut delta = Matrix::zeros(n, net.num_classes());
    for s in 0..n {
        let z = logits.row(s);
        let lse = log_sum_exp(z);
        loss += lse - z[labels[s]];
        let d = delta.row_mut(s);
        for (c, dc) in d.iter_mut().enumerate() {
            *dc = (z[c] - lse).exp() * scale;
        }
        d[labels[s]] -= scale;
    }

    for k in (0..net.layers.len()).rev() {
        let layer = &net.layers[k];
        let prev = if k == 0 { batch } else { &acts[k - 1] };
        let g = &mut grads.layers[k];
        g.weights.as_mut_slice().fill(0.0);
        g.bias.fill(0.0);
        for s in 0..n {
            let d = delta.row(s);
            let x = prev.row(s);
            for (o, &dv) in d.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                g.bias[o] += dv;
                for (gw, xi) in g.weights.row_mut(o).iter_mut().zip(x) {
                    *gw += dv * xi;
                }
            }
        }
        if k > 0 {
            let mut next = Matrix::zeros(n, layer.in_dim());
            for s in 0..n {
                let d = delta.row(s);
                let a = prev.row(s);
                let out = next.row_mut(s);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for ((oi, wi), ai) in out.iter_mut().zip(layer.weights.row(o)).zip(a) {
                        if *ai > 0.0 {
                            *oi += dv * wi;
                        }
                    }
                }
            }
            delta = next;
        }
    }
    loss * scale
}

/// Local-update hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            local_epochs: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::invalid("local_epochs must be at least 1"));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }
}

/// `cfg.local_epochs` passes of mini-batch SGD over `data`. Batch order is
/// reshuffled every epoch from a single stream seeded by `cfg.seed`; the
/// last batch of an epoch may be short.
pub fn train_local(net: &DenseNet, data: &Dataset, cfg: &TrainConfig) -> Result<DenseNet> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if data.num_features() != net.input_dim() {
        return Err(Error::shape(format!(
            "data has {} features, network expects {}",
            data.num_features(),
            net.input_dim()
        )));
    }
    check_labels(data.labels(), net.num_classes(), data.len())?;

    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut params = net.clone();
    let mut grads = DenseNet::zeros(&net.layer_dims())?;
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.features().select_rows(chunk);
            labels.clear();
            labels.extend(chunk.iter().map(|&i| data.labels()[i]));
            backprop(&params, &batch, &labels, &mut grads);
            params.sgd_step(&grads, cfg.learning_rate);
        }
    }
    Ok(params)
}

/// Black-box query surface: confidence vectors only.
pub trait ConfidenceOracle {
    fn num_classes(&self) -> usize;

    fn query_batch(&self, batch: &Matrix) -> Result<Vec<ConfidenceVector>>;

    fn query(&self, sample: &[f64]) -> Result<ConfidenceVector> {
        let m = Matrix::from_vec(1, sample.len(), sample.to_vec())?;
        Ok(self.query_batch(&m)?.remove(0))
    }
}

impl ConfidenceOracle for DenseNet {
    fn num_classes(&self) -> usize {
        DenseNet::num_classes(self)
    }

    fn query_batch(&self, batch: &Matrix) -> Result<Vec<ConfidenceVector>> {
        let logits = self.forward(batch)?;
        Ok(logits.iter_rows().map(softmax).collect())
    }
}

pub fn predict_confidence(net: &DenseNet, sample: &[f64]) -> Result<ConfidenceVector> {
    net.query(sample)
}

/// Predicted labels (argmax of confidence, lowest index on ties).
pub fn predict(net: &DenseNet, batch: &Matrix) -> Result<Vec<usize>> {
    Ok(net.query_batch(batch)?.iter().map(ConfidenceVector::argmax).collect())
}

pub fn accuracy(net: &DenseNet, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("accuracy of an empty dataset"));
    }
    let preds = predict(net, data.features())?;
    let correct = preds.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / data.len() as f64)
}

/// Mean cross-entropy over a whole dataset.
pub fn mean_loss(net: &DenseNet, data: &Dataset) -> Result<f64> {
    let logits = net.forward(data.features())?;
    let total: f64 = logits
        .iter_rows()
        .zip(data.labels())
        .map(|(z, &y)| log_sum_exp(z) - z[y])
        .sum();
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use proptest::prelude::*;

    /// Straight-line forward pass used as an independent oracle.
    fn naive_forward(net: &DenseNet, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n_layers = net.layers().len();
        for (k, l) in net.layers().iter().enumerate() {
            let mut out = Vec::new();
            for o in 0..l.out_dim() {
                let mut z = l.bias[o];
                for i in 0..l.in_dim() {
                    z += l.weights.get(o, i) * a[i];
                }
                out.push(if k + 1 < n_layers { z.max(0.0) } else { z });
            }
            a = out;
        }
        a
    }

    fn numeric_loss(net: &DenseNet, x: &Matrix, y: &[usize]) -> f64 {
        let mut total = 0.0;
        for (s, &label) in y.iter().enumerate() {
            let z = naive_forward(net, x.row(s));
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - z[label];
        }
        total / y.len() as f64
    }

    fn random_batch(rows: usize, cols: usize, classes: usize, seed: u64) -> (Matrix, Vec<usize>) {
        use rand::Rng;
        let mut rng = seed::rng(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels = (0..rows).map(|_| rng.random_range(0..classes)).collect();
        (Matrix::from_vec(rows, cols, data).unwrap(), labels)
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_params(&[4, 3], 9).unwrap(), init_params(&[4, 3], 9).unwrap());
        assert_ne!(init_params(&[4, 3], 9).unwrap(), init_params(&[4, 3], 10).unwrap());
    }

    #[test]
    fn init_shapes() {
        let net = init_params(&[4, 8, 3], 0).unwrap();
        let l = net.layers();
        assert_eq!((l[0].weights.rows(), l[0].weights.cols()), (8, 4));
        assert_eq!((l[1].weights.rows(), l[1].weights.cols()), (3, 8));
        assert_eq!((l[0].bias.len(), l[1].bias.len()), (8, 3));
        assert!(l.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(net.layer_dims(), vec![4, 8, 3]);
    }

    #[test]
    fn init_first_layer_mean_and_variance() {
        let net = init_params(&[784, 64, 10], 0).unwrap();
        let w = net.layers()[0].weights.as_slice();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 2.0 / 784.0).abs() < 0.1 * 2.0 / 784.0, "var {var}");
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(init_params(&[], 0).is_err());
        assert!(init_params(&[4], 0).is_err());
        assert!(init_params(&[4, 0, 2], 0).is_err());
    }

    #[test]
    fn zero_net_gives_zero_logits() {
        let net = DenseNet::zeros(&[3, 5, 4]).unwrap();
        let (x, _) = random_batch(6, 3, 4, 1);
        assert!(net.forward(&x).unwrap().as_slice().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn single_layer_by_hand() {
        let net = DenseNet::from_layers(vec![Layer {
            weights: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.5, 2.0]).unwrap(),
            bias: vec![0.25, -1.0],
        }])
        .unwrap();
        let x = Matrix::from_vec(1, 2, vec![3.0, -2.0]).unwrap();
        // [1*3 + 0*(-2) + 0.25, 0.5*3 + 2*(-2) - 1]
        assert_eq!(net.forward(&x).unwrap().as_slice(), &[3.25, -3.5]);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let net = init_params(&[5, 7, 6, 3], 4).unwrap();
        let (x, _) = random_batch(20, 5, 3, 2);
        let logits = net.forward(&x).unwrap();
        for s in 0..20 {
            let expect = naive_forward(&net, x.row(s));
            for (a, b) in logits.row(s).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = init_params(&[3, 2], 0).unwrap();
        assert!(matches!(net.forward(&Matrix::zeros(1, 4)), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        assert!(p.probs().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = softmax(&[1000.0, 0.0]);
        assert!((p.probs()[0] - 1.0).abs() < 1e-12 && p.probs()[1] < 1e-300);
        // e^k / (e + e^2 + e^3)
        let p = softmax(&[1.0, 2.0, 3.0]);
        let expect = [0.09003, 0.24473, 0.66524];
        for (a, b) in p.probs().iter().zip(expect) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn confidence_vector_validation() {
        assert!(ConfidenceVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ConfidenceVector::new(vec![0.5, 0.6]).is_err());
        assert!(ConfidenceVector::new(vec![1.5, -0.5]).is_err());
        assert_eq!(ConfidenceVector::new(vec![0.4, 0.2, 0.4]).unwrap().argmax(), 0);
    }

    #[test]
    fn uniform_output_loss_is_ln_c() {
        let net = DenseNet::zeros(&[3, 4, 5]).unwrap();
        let (x, y) = random_batch(7, 3, 5, 0);
        let (loss, _) = loss_and_grad(&net, &x, &y).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let eps = 1e-4;
        for trial in 0..10 {
            let net = init_params(&[3, 4, 2], 100 + trial).unwrap();
            let (x, y) = random_batch(5, 3, 2, 200 + trial);
            let (_, grads) = loss_and_grad(&net, &x, &y).unwrap();
            let flat = net.flatten();
            let dims = net.layer_dims();
            for (i, analytic) in grads.params().enumerate() {
                let mut plus = flat.clone();
                plus[i] += eps;
                let mut minus = flat.clone();
                minus[i] -= eps;
                let numeric = (numeric_loss(&DenseNet::from_flat(&dims, &plus).unwrap(), &x, &y)
                    - numeric_loss(&DenseNet::from_flat(&dims, &minus).unwrap(), &x, &y))
                    / (2.0 * eps);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                assert!(rel < 1e-5, "trial {trial} param {i}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn duplicated_batch_leaves_loss_and_grad_unchanged() {
        let net = init_params(&[3, 4, 2], 5).unwrap();
        let (x, y) = random_batch(6, 3, 2, 6);
        let rows: Vec<usize> = (0..6).chain(0..6).collect();
        let x2 = x.select_rows(&rows);
        let y2: Vec<usize> = rows.iter().map(|&i| y[i]).collect();
        let (l1, g1) = loss_and_grad(&net, &x, &y).unwrap();
        let (l2, g2) = loss_and_grad(&net, &x2, &y2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.params().zip(g2.params()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_and_grad_errors() {
        let net = init_params(&[3, 2], 0).unwrap();
        assert!(loss_and_grad(&net, &Matrix::zeros(0, 3), &[]).is_err());
        assert!(matches!(
            loss_and_grad(&net, &Matrix::zeros(2, 4), &[0, 1]),
            Err(Error::Shape(_))
        ));
        assert!(loss_and_grad(&net, &Matrix::zeros(2, 3), &[0, 2]).is_err());
    }

    #[test]
    fn vanishing_learning_rate_is_null_update() {
        let data = generate_synthetic(64, 3, 2, 4.0, 1).unwrap();
        let net = init_params(&[3, 8, 2], 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-12,
            ..TrainConfig::default()
        };
        let out = train_local(&net, &data, &cfg).unwrap();
        for (a, b) in out.params().zip(net.params()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn train_local_is_deterministic_and_pure() {
        let data = generate_synthetic(100, 4, 3, 3.0, 3).unwrap();
        let net = init_params(&[4, 16, 3], 1).unwrap();
        let before = net.clone();
        let cfg = TrainConfig {
            local_epochs: 3,
            seed: 77,
            ..TrainConfig::default()
        };
        let a = train_local(&net, &data, &cfg).unwrap();
        let b = train_local(&net, &data, &cfg).unwrap();
        assert_eq!(net, before);
        let bits = |n: &DenseNet| n.params().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&net));
    }

    #[test]
    fn separable_blobs_reach_full_training_accuracy() {
        let data = generate_synthetic(200, 2, 2, 10.0, 7).unwrap();
        let net = init_params(&[2, 32, 2], 0).unwrap();
        let cfg = TrainConfig {
            local_epochs: 50,
            ..TrainConfig::default()
        };
        let trained = train_local(&net, &data, &cfg).unwrap();
        assert!(accuracy(&trained, &data).unwrap() >= 0.99);
    }

    #[test]
    fn loss_decreases_each_epoch_until_small() {
        let data = generate_synthetic(200, 2, 2, 10.0, 7).unwrap();
        let mut net = init_params(&[2, 32, 2], 0).unwrap();
        let mut prev = mean_loss(&net, &data).unwrap();
        for epoch in 0..400 {
            if prev < 0.05 {
                return;
            }
            let cfg = TrainConfig::default().with_seed(epoch);
            net = train_local(&net, &data, &cfg).unwrap();
            let loss = mean_loss(&net, &data).unwrap();
            assert!(loss < prev, "epoch {epoch}: {loss} >= {prev}");
            prev = loss;
        }
        panic!("loss still {prev} after 400 epochs");
    }

    #[test]
    fn zero_net_predicts_uniform_and_lowest_class() {
        let net = DenseNet::zeros(&[2, 4]).unwrap();
        let p = predict_confidence(&net, &[0.3, 0.9]).unwrap();
        assert_eq!(p.probs(), &[0.25; 4]);
        assert_eq!(p.argmax(), 0);
        let data = generate_synthetic(40, 2, 4, 1.0, 0).unwrap();
        let all_zero = data.subset(&(0..40).step_by(4).collect::<Vec<_>>());
        assert_eq!(accuracy(&net, &all_zero).unwrap(), 1.0);
    }

    #[test]
    fn untrained_symmetric_net_is_at_chance() {
        let data = generate_synthetic(1000, 2, 2, 0.5, 3).unwrap();
        // random labels relative to a fixed constant prediction
        let net = DenseNet::zeros(&[2, 2]).unwrap();
        let acc = accuracy(&net, &data).unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "{acc}");
    }

    #[test]
    fn accuracy_matches_recount() {
        let data = generate_synthetic(57, 3, 3, 1.5, 8).unwrap();
        let net = init_params(&[3, 5, 3], 3).unwrap();
        let mut correct = 0;
        for i in 0..data.len() {
            let (x, y) = data.sample(i);
            let z = naive_forward(&net, x);
            let mut best = 0;
            for c in 1..z.len() {
                if z[c] > z[best] {
                    best = c;
                }
            }
            correct += usize::from(best == y);
        }
        assert_eq!(accuracy(&net, &data).unwrap(), correct as f64 / 57.0);
    }

    #[test]
    fn trained_model_is_more_confident_on_members() {
        let pool = generate_synthetic(400, 10, 3, 2.0, 21).unwrap();
        let members = pool.subset(&(0..100).collect::<Vec<_>>());
        let held_out = pool.subset(&(100..400).collect::<Vec<_>>());
        let net = init_params(&[10, 64, 3], 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 10,
            local_epochs: 200,
            seed: 5,
        };
        let net = train_local(&net, &members, &cfg).unwrap();
        let mean_max = |d: &Dataset| {
            let c = net.query_batch(d.features()).unwrap();
            c.iter().map(ConfidenceVector::max).sum::<f64>() / c.len() as f64
        };
        assert!(mean_max(&members) > mean_max(&held_out));
    }

    #[test]
    fn train_local_rejects_bad_inputs() {
        let data = generate_synthetic(10, 2, 2, 1.0, 0).unwrap();
        let net = init_params(&[3, 2], 0).unwrap();
        assert!(train_local(&net, &data, &TrainConfig::default()).is_err());
        let net = init_params(&[2, 2], 0).unwrap();
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train_local(&net, &data, &bad).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_monotone(
            logits in prop::collection::vec(-50.0f64..50.0, 2..8),
            bump in 0.01f64..5.0,
            which in 0usize..8,
        ) {
            let p = softmax(&logits);
            prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let k = which % logits.len();
            let mut raised = logits.clone();
            raised[k] += bump;
            let q = softmax(&raised);
            // saturated probabilities can round to the same double
            prop_assert!(q.probs()[k] > p.probs()[k] || p.probs()[k] > 1.0 - 1e-12);
        }

        #[test]
        fn flatten_round_trips(seed: u64, hidden in 1usize..6) {
            let net = init_params(&[3, hidden, 2], seed).unwrap();
            let back = DenseNet::from_flat(&net.layer_dims(), &net.flatten()).unwrap();
            prop_assert_eq!(back, net);
        }
    }
}
