//! Round-based federated training.
//!
//! Every round the global parameters are broadcast to all clients, each
//! client runs [`train_local`] on its disjoint shard, and the server either
//! averages the results (FedAvg) or keeps exactly one client's model
//! according to a selection scheme.

mod select;

pub use select::{
    select_correct_confident, select_correct_confident_with, select_first, select_most_confident,
    select_round_robin, CorrectnessMask,
};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::model::{accuracy, init_params, train_local, DenseNet, TrainConfig};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    FedAvg,
    First,
    RoundRobin,
    MostConfident,
    CorrectConfident,
}

impl AggregationStrategy {
    pub const ALL: [AggregationStrategy; 5] = [
        AggregationStrategy::FedAvg,
        AggregationStrategy::First,
        AggregationStrategy::RoundRobin,
        AggregationStrategy::MostConfident,
        AggregationStrategy::CorrectConfident,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationStrategy::FedAvg => "fedavg",
            AggregationStrategy::First => "first",
            AggregationStrategy::RoundRobin => "round_robin",
            AggregationStrategy::MostConfident => "most_confident",
            AggregationStrategy::CorrectConfident => "correct_confident",
        }
    }

    /// Whether the server keeps a single client's model instead of averaging.
    pub fn is_selection(self) -> bool {
        self != AggregationStrategy::FedAvg
    }

    fn needs_reference(self) -> bool {
        matches!(
            self,
            AggregationStrategy::MostConfident | AggregationStrategy::CorrectConfident
        )
    }
}

impl fmt::Display for AggregationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AggregationStrategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown strategy {s:?}; expected one of fedavg, first, round_robin, most_confident, correct_confident"
                )
            })
    }
}

/// A client's identity, its shard (indices into the client pool) and its
/// parameters after this round's local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub client_id: usize,
    pub shard: Vec<usize>,
    pub params: DenseNet,
}

/// Per-round snapshot. `round` is zero-based. The privacy fields are left
/// empty by the federation loop and filled in by whoever evaluates the
/// attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub strategy: AggregationStrategy,
    pub selected_client: Option<usize>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub mia_accuracy: Option<f64>,
    pub mean_member_confidence: Option<f64>,
    pub mean_nonmember_confidence: Option<f64>,
}

/// Size-weighted mean of client parameters.
///
/// The mean is accumulated as `p_0 + sum_i w_i (p_i - p_0)` over clients in
/// the given (client id) order, with `w_i = size_i / total`. A single client
/// or identical inputs therefore come back unchanged.
pub fn fedavg_aggregate(client_params: &[DenseNet], client_sizes: &[usize]) -> Result<DenseNet> {
    let first = client_params
        .first()
        .ok_or_else(|| Error::invalid("no client parameters to aggregate"))?;
    if client_params.len() != client_sizes.len() {
        return Err(Error::shape(format!(
            "{} parameter sets but {} sizes",
            client_params.len(),
            client_sizes.len()
        )));
    }
    if client_sizes.contains(&0) {
        return Err(Error::invalid("client sizes must be positive"));
    }
    if let Some(k) = client_params.iter().position(|p| !p.same_shape(first)) {
        return Err(Error::shape(format!(
            "client {k} has dims {:?}, client 0 has {:?}",
            client_params[k].layer_dims(),
            first.layer_dims()
        )));
    }
    let total: usize = client_sizes.iter().sum();
    let mut out = first.clone();
    for (params, &size) in client_params.iter().zip(client_sizes).skip(1) {
        let w = size as f64 / total as f64;
        for ((acc, p), p0) in out.params_mut().zip(params.params()).zip(first.params()) {
            *acc += w * (p - p0);
        }
    }
    Ok(out)
}

/// Everything that parameterises a federated run apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub layer_dims: Vec<usize>,
    pub n_clients: usize,
    pub rounds: usize,
    pub strategy: AggregationStrategy,
    pub correct_mask: CorrectnessMask,
    /// `train.seed` is ignored; client seeds come from `seed`.
    pub train: TrainConfig,
    pub seed: u64,
    /// Train clients on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl FederationConfig {
    /// Training config for `client` in `round`.
    pub fn client_train_config(&self, round: usize, client: usize) -> TrainConfig {
        self.train
            .with_seed(derive_seed(self.seed, "client", &[round as u64, client as u64]))
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, "init", &[])
    }
}

/// Data seen by a federation: the client pool the plan indexes into, the
/// server's reference set for confidence-based selection, and a test set.
#[derive(Debug, Clone)]
pub struct FederatedData {
    pub pool: Dataset,
    pub plan: PartitionPlan,
    pub reference: Option<Dataset>,
    pub test: Dataset,
}

impl FederatedData {
    fn validate(&self, cfg: &FederationConfig) -> Result<()> {
        if self.plan.source_size() != self.pool.len() {
            return Err(Error::invalid(format!(
                "plan covers {} samples but the pool has {}",
                self.plan.source_size(),
                self.pool.len()
            )));
        }
        if self.plan.n_clients() != cfg.n_clients {
            return Err(Error::invalid(format!(
                "plan has {} clients, config asks for {}",
                self.plan.n_clients(),
                cfg.n_clients
            )));
        }
        if cfg.strategy.needs_reference() && self.reference.as_ref().is_none_or(Dataset::is_empty) {
            return Err(Error::invalid(format!(
                "strategy {} needs a nonempty reference set",
                cfg.strategy
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub global: DenseNet,
    pub record: RoundRecord,
    pub clients: Vec<ClientState>,
}

fn train_clients(
    global: &DenseNet,
    shards: &[(Vec<usize>, Dataset)],
    cfg: &FederationConfig,
    round: usize,
) -> Result<Vec<ClientState>> {
    let train_one = |(client_id, (shard, data)): (usize, &(Vec<usize>, Dataset))| {
        let params = train_local(global, data, &cfg.client_train_config(round, client_id))?;
        Ok(ClientState {
            client_id,
            shard: shard.clone(),
            params,
        })
    };
    if cfg.parallel {
        shards.par_iter().enumerate().map(train_one).collect()
    } else {
        shards.iter().enumerate().map(train_one).collect()
    }
}

fn aggregate(
    clients: &[ClientState],
    cfg: &FederationConfig,
    round: usize,
    reference: Option<&Dataset>,
) -> Result<(DenseNet, Option<usize>)> {
    let reference = || reference.ok_or_else(|| Error::invalid("reference set required"));
    let chosen = match cfg.strategy {
        AggregationStrategy::FedAvg => {
            let params: Vec<DenseNet> = clients.iter().map(|c| c.params.clone()).collect();
            let sizes: Vec<usize> = clients.iter().map(|c| c.shard.len()).collect();
            return Ok((fedavg_aggregate(&params, &sizes)?, None));
        }
        AggregationStrategy::First => select_first(clients)?,
        AggregationStrategy::RoundRobin => select_round_robin(round, clients.len())?,
        AggregationStrategy::MostConfident => select_most_confident(clients, reference()?)?,
        AggregationStrategy::CorrectConfident => {
            select_correct_confident_with(clients, reference()?, cfg.correct_mask)?
        }
    };
    Ok((clients[chosen].params.clone(), Some(chosen)))
}

fn round_with_shards(
    global: &DenseNet,
    shards: &[(Vec<usize>, Dataset)],
    data: &FederatedData,
    cfg: &FederationConfig,
    round: usize,
) -> Result<RoundOutput> {
    let clients = train_clients(global, shards, cfg, round)?;
    let (new_global, selected_client) = aggregate(&clients, cfg, round, data.reference.as_ref())?;
    let record = RoundRecord {
        round,
        strategy: cfg.strategy,
        selected_client,
        train_accuracy: accuracy(&new_global, &data.pool)?,
        test_accuracy: accuracy(&new_global, &data.test)?,
        mia_accuracy: None,
        mean_member_confidence: None,
        mean_nonmember_confidence: None,
    };
    Ok(RoundOutput {
        global: new_global,
        record,
        clients,
    })
}

fn client_shards(data: &FederatedData) -> Vec<(Vec<usize>, Dataset)> {
    data.plan
        .assignments()
        .iter()
        .map(|shard| (shard.clone(), data.pool.subset(shard)))
        .collect()
}

/// One synchronous round starting from `global`.
pub fn run_round(
    global: &DenseNet,
    data: &FederatedData,
    cfg: &FederationConfig,
    round: usize,
) -> Result<RoundOutput> {
    data.validate(cfg)?;
    round_with_shards(global, &client_shards(data), data, cfg, round)
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub records: Vec<RoundRecord>,
    pub initial: DenseNet,
    pub global: DenseNet,
    /// Client states from the last round (empty when `rounds == 0`).
    pub clients: Vec<ClientState>,
}

pub fn run_federation(cfg: &FederationConfig, data: &FederatedData) -> Result<FederationOutcome> {
    run_federation_with(cfg, data, |_, _| Ok(()))
}

/// Like [`run_federation`], calling `observe` after every round with the
/// round's output so the caller can annotate the record (e.g. with attack
/// results) before it is stored.
pub fn run_federation_with<F>(
    cfg: &FederationConfig,
    data: &FederatedData,
    mut observe: F,
) -> Result<FederationOutcome>
where
    F: FnMut(&mut RoundRecord, &RoundOutputView<'_>) -> Result<()>,
{
    data.validate(cfg)?;
    let initial = init_params(&cfg.layer_dims, cfg.init_seed())?;
    if data.pool.num_features() != initial.input_dim() || data.pool.num_classes() != initial.num_classes() {
        return Err(Error::shape(format!(
            "layer dims {:?} do not fit data with {} features and {} classes",
            cfg.layer_dims,
            data.pool.num_features(),
            data.pool.num_classes()
        )));
    }
    let shards = client_shards(data);
    let mut global = initial.clone();
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut clients = Vec::new();
    for round in 0..cfg.rounds {
        let out = round_with_shards(&global, &shards, data, cfg, round)?;
        let mut record = out.record;
        observe(
            &mut record,
            &RoundOutputView {
                global: &out.global,
                clients: &out.clients,
            },
        )?;
        records.push(record);
        global = out.global;
        clients = out.clients;
    }
    Ok(FederationOutcome {
        records,
        initial,
        global,
        clients,
    })
}

/// Read-only view handed to round observers.
pub struct RoundOutputView<'a> {
    pub global: &'a DenseNet,
    pub clients: &'a [ClientState],
}
