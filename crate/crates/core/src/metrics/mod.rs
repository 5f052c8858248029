//! Diagnostics: client agreement, confidence histograms, generalization gap
//! and rank correlation.

mod spearman;

pub use spearman::{spearman, Spearman};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ConfidenceOracle, ConfidenceVector, DenseNet};

/// For samples the global model classifies correctly: how many clients
/// predict the same label as the global model.
///
/// `counts[k]` is the number of such samples on which exactly `k` of the `n`
/// clients agree, i.e. agreement fraction `k / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementProfile {
    pub n_clients: usize,
    pub fractions: Vec<f64>,
    pub counts: Vec<usize>,
}

impl AgreementProfile {
    pub fn mean_agreement(&self) -> Option<f64> {
        if self.fractions.is_empty() {
            None
        } else {
            Some(self.fractions.iter().sum::<f64>() / self.fractions.len() as f64)
        }
    }

    /// Bin `k` spans `[k/n, (k+1)/n)`; the last bin is the single value 1.
    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let n = self.n_clients as f64;
        let lo = k as f64 / n;
        (lo, ((k + 1) as f64 / n).min(1.0))
    }

    /// Append `bin_lo,bin_hi,population,count` rows.
    pub fn write_csv_rows(&self, population: &str, out: &mut String) {
        for (k, &count) in self.counts.iter().enumerate() {
            let (lo, hi) = self.bin_edges(k);
            let _ = writeln!(out, "{lo},{hi},{population},{count}");
        }
    }
}

pub fn agreement_profile(
    client_nets: &[DenseNet],
    global_net: &DenseNet,
    data: &Dataset,
) -> Result<AgreementProfile> {
    if client_nets.is_empty() {
        return Err(Error::invalid("agreement needs at least one client"));
    }
    if let Some(k) = client_nets.iter().position(|c| !c.same_shape(global_net)) {
        return Err(Error::shape(format!(
            "client {k} has dims {:?}, global has {:?}",
            client_nets[k].layer_dims(),
            global_net.layer_dims()
        )));
    }
    let predict = |net: &DenseNet| -> Result<Vec<usize>> {
        Ok(net
            .query_batch(data.features())?
            .iter()
            .map(ConfidenceVector::argmax)
            .collect())
    };
    let global = predict(global_net)?;
    let clients = client_nets.iter().map(predict).collect::<Result<Vec<_>>>()?;

    let n = client_nets.len();
    let mut counts = vec![0; n + 1];
    let mut fractions = Vec::new();
    for (s, (&g, &y)) in global.iter().zip(data.labels()).enumerate() {
        if g != y {
            continue;
        }
        let agree = clients.iter().filter(|c| c[s] == g).count();
        counts[agree] += 1;
        fractions.push(agree as f64 / n as f64);
    }
    Ok(AgreementProfile {
        n_clients: n,
        fractions,
        counts,
    })
}

pub const CONFIDENCE_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    TrainCorrect,
    TrainIncorrect,
    TestCorrect,
    TestIncorrect,
}

impl Population {
    pub const ALL: [Population; 4] = [
        Population::TrainCorrect,
        Population::TrainIncorrect,
        Population::TestCorrect,
        Population::TestIncorrect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Population::TrainCorrect => "train_correct",
            Population::TrainIncorrect => "train_incorrect",
            Population::TestCorrect => "test_correct",
            Population::TestIncorrect => "test_incorrect",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCounts {
    pub counts: Vec<usize>,
    pub total: usize,
    pub confidence_sum: f64,
}

impl PopulationCounts {
    pub fn mean_confidence(&self) -> Option<f64> {
        (self.total > 0).then(|| self.confidence_sum / self.total as f64)
    }
}

/// Max-softmax confidence in 20 uniform bins over `[0, 1]`, split by data
/// split and prediction correctness. A confidence of exactly 1 lands in the
/// last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHistogram {
    pub populations: Vec<PopulationCounts>,
}

impl ConfidenceHistogram {
    pub fn bin_index(confidence: f64) -> usize {
        ((confidence * CONFIDENCE_BINS as f64) as usize).min(CONFIDENCE_BINS - 1)
    }

    pub fn bin_edges(k: usize) -> (f64, f64) {
        let w = CONFIDENCE_BINS as f64;
        (k as f64 / w, (k + 1) as f64 / w)
    }

    pub fn population(&self, p: Population) -> &PopulationCounts {
        &self.populations[p.index()]
    }

    pub fn write_csv_rows(&self, out: &mut String) {
        for p in Population::ALL {
            for (k, &count) in self.population(p).counts.iter().enumerate() {
                let (lo, hi) = Self::bin_edges(k);
                let _ = writeln!(out, "{lo},{hi},{},{count}", p.as_str());
            }
        }
    }
}

pub fn confidence_histograms(net: &DenseNet, train: &Dataset, test: &Dataset) -> Result<ConfidenceHistogram> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("histograms need nonempty train and test splits"));
    }
    let mut populations = vec![
        PopulationCounts {
            counts: vec![0; CONFIDENCE_BINS],
            total: 0,
            confidence_sum: 0.0,
        };
        4
    ];
    for (data, correct_pop, wrong_pop) in [
        (train, Population::TrainCorrect, Population::TrainIncorrect),
        (test, Population::TestCorrect, Population::TestIncorrect),
    ] {
        for (conf, &y) in net.query_batch(data.features())?.iter().zip(data.labels()) {
            let pop = if conf.argmax() == y { correct_pop } else { wrong_pop };
            let top = conf.max();
            let slot = &mut populations[pop.index()];
            slot.counts[ConfidenceHistogram::bin_index(top)] += 1;
            slot.total += 1;
            slot.confidence_sum += top;
        }
    }
    Ok(ConfidenceHistogram { populations })
}

pub fn generalization_gap(train_acc: f64, test_acc: f64) -> Result<f64> {
    for (name, v) in [("train_acc", train_acc), ("test_acc", test_acc)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok(train_acc - test_acc)
}
