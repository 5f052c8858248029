//! Single-client selection schemes. Each returns the id of the client whose
//! model the server keeps for the next round.

use serde::{Deserialize, Serialize};

use super::ClientState;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax, ConfidenceOracle, ConfidenceVector};

/// Which reference samples count as "correct" when scoring a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectnessMask {
    /// Prediction equals the true label.
    #[default]
    Truth,
    /// Prediction equals the clients' majority vote (ties to the lowest label).
    Agreement,
}

impl CorrectnessMask {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrectnessMask::Truth => "truth",
            CorrectnessMask::Agreement => "agreement",
        }
    }
}

impl std::str::FromStr for CorrectnessMask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truth" => Ok(CorrectnessMask::Truth),
            "agreement" => Ok(CorrectnessMask::Agreement),
            _ => Err(format!("unknown mask {s:?}; expected truth or agreement")),
        }
    }
}

pub fn select_first(clients: &[ClientState]) -> Result<usize> {
    if clients.is_empty() {
        return Err(Error::invalid("no clients to select from"));
    }
    Ok(0)
}

pub fn select_round_robin(round: usize, n_clients: usize) -> Result<usize> {
    if n_clients == 0 {
        return Err(Error::invalid("round robin over zero clients"));
    }
    Ok(round % n_clients)
}

fn check(clients: &[ClientState], reference: &Dataset) -> Result<()> {
    if clients.is_empty() {
        return Err(Error::invalid("no clients to select from"));
    }
    if reference.is_empty() {
        return Err(Error::invalid("empty reference set"));
    }
    Ok(())
}

/// Highest score wins; equal scores go to the lowest client id.
fn best(scores: &[f64]) -> usize {
    argmax(scores)
}

fn confidences(clients: &[ClientState], reference: &Dataset) -> Result<Vec<Vec<ConfidenceVector>>> {
    clients
        .iter()
        .map(|c| c.params.query_batch(reference.features()))
        .collect()
}

/// Client with the highest mean max-softmax confidence on `reference`.
pub fn select_most_confident(clients: &[ClientState], reference: &Dataset) -> Result<usize> {
    check(clients, reference)?;
    let scores: Vec<f64> = confidences(clients, reference)?
        .iter()
        .map(|conf| conf.iter().map(ConfidenceVector::max).sum::<f64>() / conf.len() as f64)
        .collect();
    Ok(best(&scores))
}

/// [`select_correct_confident_with`] using true labels.
pub fn select_correct_confident(clients: &[ClientState], reference: &Dataset) -> Result<usize> {
    select_correct_confident_with(clients, reference, CorrectnessMask::Truth)
}

/// Client with the highest mean max-softmax confidence over the reference
/// samples it gets "right" under `mask`. A client with no such samples
/// scores 0.
pub fn select_correct_confident_with(
    clients: &[ClientState],
    reference: &Dataset,
    mask: CorrectnessMask,
) -> Result<usize> {
    check(clients, reference)?;
    let conf = confidences(clients, reference)?;
    let targets: Vec<usize> = match mask {
        CorrectnessMask::Truth => reference.labels().to_vec(),
        CorrectnessMask::Agreement => (0..reference.len())
            .map(|s| {
                let mut votes = vec![0usize; reference.num_classes()];
                for client in &conf {
                    votes[client[s].argmax()] += 1;
                }
                let mut winner = 0;
                for (c, &v) in votes.iter().enumerate() {
                    if v > votes[winner] {
                        winner = c;
                    }
                }
                winner
            })
            .collect(),
    };
    let scores: Vec<f64> = conf
        .iter()
        .map(|client| {
            let (sum, count) = client
                .iter()
                .zip(&targets)
                .filter(|(c, &t)| c.argmax() == t)
                .fold((0.0, 0usize), |(s, n), (c, _)| (s + c.max(), n + 1));
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect();
    Ok(best(&scores))
}
