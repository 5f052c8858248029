use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, DatasetSpec, ExperimentConfig};
use super::output::{atomic_write, push_round_row, rounds_csv, to_json_bytes, ROUNDS_HEADER};
use super::TOOL_VERSION;
use crate::attack::{
    build_attack_dataset, calibrate_threshold, evaluate_mia, train_attack, train_shadows, AttackModel, MiaReport,
};
use crate::data::{generate_synthetic, load_idx, partition, read_csv_file, Dataset, MembershipSplit};
use crate::error::{Error, Result};
use crate::federation::{run_federation_with, FederatedData, FederationConfig, RoundRecord};
use crate::metrics::{agreement_profile, confidence_histograms, AgreementProfile, ConfidenceHistogram};
use crate::model::{init_params, save_checkpoint, CheckpointFormat, DenseNet, TrainConfig};
use crate::seed::{self, derive_seed};

/// Execution knobs that do not change results.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Train clients (and shadows) on the rayon pool.
    pub parallel: bool,
    /// Overrides each config's `output_dir`.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            parallel: true,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

/// Everything one config produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub records: Vec<RoundRecord>,
    /// Shadow attack against the untrained initial model.
    pub initial_mia: MiaReport,
    /// Shadow attack against the final global model.
    pub final_mia: MiaReport,
    /// Threshold baseline against the final global model.
    pub threshold_mia: MiaReport,
    pub threshold_tau: f64,
    /// Absent when `rounds == 0`.
    pub agreement_train: Option<AgreementProfile>,
    pub agreement_test: Option<AgreementProfile>,
    pub confidence: ConfidenceHistogram,
}

impl RunResult {
    pub fn config_hash(&self) -> &str {
        &self.provenance.config_hash
    }

    pub fn final_record(&self) -> Option<&RoundRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub runs: Vec<RunResult>,
}

impl SweepResult {
    /// All round rows, ordered by (n_clients, strategy, seed, config hash, round).
    pub fn merged_rounds_csv(&self) -> String {
        let mut runs: Vec<&RunResult> = self.runs.iter().collect();
        runs.sort_by(|a, b| {
            (a.config.n_clients, a.config.strategy, a.config.seed, a.config_hash()).cmp(&(
                b.config.n_clients,
                b.config.strategy,
                b.config.seed,
                b.config_hash(),
            ))
        });
        let mut out = String::new();
        out.push_str(ROUNDS_HEADER);
        out.push('\n');
        for run in runs {
            for r in &run.records {
                push_round_row(&mut out, run.config_hash(), run.config.n_clients, r);
            }
        }
        out
    }
}

/// The full dataset plus disjoint row sets for every role.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub all: Dataset,
    /// Rows dealt to clients (the members).
    pub client_rows: Vec<usize>,
    /// Server reference rows used by confidence-based selection.
    pub reference_rows: Vec<usize>,
    /// Non-members for attack evaluation.
    pub holdout_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub shadow_rows: Vec<usize>,
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.dataset {
        DatasetSpec::Synthetic {
            features,
            classes,
            separation,
            seed,
        } => generate_synthetic(
            config.split.total(),
            *features,
            *classes,
            *separation,
            seed.unwrap_or_else(|| derive_seed(config.seed, "dataset", &[])),
        ),
        DatasetSpec::Idx { images, labels } => load_idx(images, labels),
        DatasetSpec::Csv { path } => read_csv_file(path),
    }
}

/// Load the dataset and carve it into client, reference, holdout, test and
/// shadow rows with one seeded shuffle.
pub fn prepare_data(config: &ExperimentConfig) -> Result<ExperimentData> {
    let all = load_dataset(config)?;
    let split = &config.split;
    if all.len() < split.total() {
        return Err(ConfigError::Range {
            key: "split".into(),
            message: format!("splits need {} samples, dataset has {}", split.total(), all.len()),
        }
        .into());
    }
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut seed::rng(derive_seed(config.seed, "layout", &[])));
    let mut take = |n: usize| -> Vec<usize> {
        let mut rows: Vec<usize> = order.drain(..n).collect();
        rows.sort_unstable();
        rows
    };
    let reference_rows = take(split.reference_size());
    let client_rows = take(split.client_pool());
    let holdout_rows = take(split.holdout);
    let test_rows = take(split.test);
    let shadow_rows = take(split.shadow_pool);
    Ok(ExperimentData {
        all,
        client_rows,
        reference_rows,
        holdout_rows,
        test_rows,
        shadow_rows,
    })
}

fn layer_dims(config: &ExperimentConfig, data: &Dataset) -> Vec<usize> {
    let mut dims = vec![data.num_features()];
    dims.extend(&config.hidden);
    dims.push(data.num_classes());
    dims
}

struct Attacks {
    shadow: AttackModel,
    threshold: AttackModel,
}

fn build_attacks(config: &ExperimentConfig, data: &ExperimentData, dims: &[usize]) -> Result<Attacks> {
    let pool = data.all.subset(&data.shadow_rows);
    let cfg = TrainConfig {
        learning_rate: config.train.learning_rate,
        batch_size: config.train.batch_size,
        local_epochs: config.attack.shadow_epochs,
        seed: 0,
    };
    let shadows = train_shadows(
        &pool,
        config.attack.k_shadows,
        dims,
        &cfg,
        derive_seed(config.seed, "shadows", &[]),
    )?;
    let attack_data = build_attack_dataset(&shadows, &pool)?;
    Ok(Attacks {
        shadow: train_attack(&attack_data, derive_seed(config.seed, "attack", &[]))?,
        threshold: calibrate_threshold(&attack_data)?,
    })
}

/// Run one config in memory. With `checkpoint_dir`, the global model after
/// every round is saved there as `round_<k>.ckpt`.
pub fn execute(config: &ExperimentConfig, options: &RunOptions, checkpoint_dir: Option<&Path>) -> Result<RunResult> {
    config.validate()?;
    let hash = config.config_hash();
    let data = prepare_data(config)?;
    let dims = layer_dims(config, &data.all);

    let attacks = build_attacks(config, &data, &dims).map_err(|e| e.context("training shadow attack"))?;
    let split = MembershipSplit::from_pools(
        data.client_rows.clone(),
        data.holdout_rows.clone(),
        config.attack.eval_size,
        derive_seed(config.seed, "mia-eval", &[]),
    )?;

    let pool = data.all.subset(&data.client_rows);
    let test = data.all.subset(&data.test_rows);
    let fed_data = FederatedData {
        plan: partition(pool.len(), config.n_clients, derive_seed(config.seed, "partition", &[]))?,
        pool: pool.clone(),
        reference: (!data.reference_rows.is_empty()).then(|| data.all.subset(&data.reference_rows)),
        test: test.clone(),
    };
    let fed_cfg = FederationConfig {
        layer_dims: dims.clone(),
        n_clients: config.n_clients,
        rounds: config.rounds,
        strategy: config.strategy,
        correct_mask: config.correct_mask,
        train: TrainConfig {
            learning_rate: config.train.learning_rate,
            batch_size: config.train.batch_size,
            local_epochs: config.train.local_epochs,
            seed: 0,
        },
        seed: config.seed,
        parallel: options.parallel,
    };

    let cadence = config.attack.cadence;
    let last = config.rounds.saturating_sub(1);
    let outcome = run_federation_with(&fed_cfg, &fed_data, |record, view| {
        if (record.round + 1) % cadence == 0 || record.round == last {
            let report = evaluate_mia(&attacks.shadow, view.global, &split, &data.all)?;
            record.mia_accuracy = Some(report.attack_accuracy);
            record.mean_member_confidence = Some(report.member_mean_confidence);
            record.mean_nonmember_confidence = Some(report.nonmember_mean_confidence);
        }
        if let Some(dir) = checkpoint_dir {
            let path = dir.join(format!("round_{}.ckpt", record.round));
            save_checkpoint(view.global, &path, CheckpointFormat::Binary)?;
        }
        Ok(())
    })
    .map_err(|e| e.context(format!("config {hash}")))?;

    let initial: DenseNet = init_params(&dims, fed_cfg.init_seed())?;
    debug_assert_eq!(initial, outcome.initial);
    let initial_mia = evaluate_mia(&attacks.shadow, &outcome.initial, &split, &data.all)?;
    let final_mia = evaluate_mia(&attacks.shadow, &outcome.global, &split, &data.all)?;
    let threshold_mia = evaluate_mia(&attacks.threshold, &outcome.global, &split, &data.all)?;
    let threshold_tau = match attacks.threshold {
        AttackModel::Threshold { tau } => tau,
        AttackModel::ShadowClassifier(_) => unreachable!("calibrate_threshold returns a threshold"),
    };

    let (agreement_train, agreement_test) = if outcome.clients.is_empty() {
        (None, None)
    } else {
        let nets: Vec<DenseNet> = outcome.clients.iter().map(|c| c.params.clone()).collect();
        (
            Some(agreement_profile(&nets, &outcome.global, &pool)?),
            Some(agreement_profile(&nets, &outcome.global, &test)?),
        )
    };
    let confidence = confidence_histograms(&outcome.global, &pool, &test)?;

    Ok(RunResult {
        provenance: Provenance {
            config_hash: hash,
            seed: config.seed,
            tool_version: TOOL_VERSION.into(),
        },
        config: config.clone(),
        records: outcome.records,
        initial_mia,
        final_mia,
        threshold_mia,
        threshold_tau,
        agreement_train,
        agreement_test,
        confidence,
    })
}

#[derive(Serialize)]
struct AttackJson<'a> {
    config_hash: &'a str,
    seed: u64,
    tool_version: &'a str,
    shadow: &'a MiaReport,
    threshold: &'a MiaReport,
    threshold_tau: f64,
    initial_model: &'a MiaReport,
}

fn hash_line(hash: &str) -> String {
    format!("# config_hash={hash}\n")
}

/// Write a run's files under `<out_dir>/<config-hash>/` and return that
/// directory.
pub fn write_run(run: &RunResult, out_dir: &Path) -> Result<PathBuf> {
    let hash = run.config_hash();
    let dir = out_dir.join(hash);
    atomic_write(
        &dir.join("rounds.csv"),
        rounds_csv(hash, run.config.n_clients, &run.records).as_bytes(),
    )?;
    let attack = AttackJson {
        config_hash: hash,
        seed: run.provenance.seed,
        tool_version: &run.provenance.tool_version,
        shadow: &run.final_mia,
        threshold: &run.threshold_mia,
        threshold_tau: run.threshold_tau,
        initial_model: &run.initial_mia,
    };
    atomic_write(&dir.join("attack.json"), &to_json_bytes(&attack)?)?;
    atomic_write(
        &dir.join("config.cfg"),
        format!("{}{}", hash_line(hash), run.config.to_config_string()).as_bytes(),
    )?;
    atomic_write(&dir.join("result.json"), &to_json_bytes(run)?)?;

    let mut agreement = hash_line(hash);
    agreement.push_str("bin_lo,bin_hi,population,count\n");
    if let (Some(train), Some(test)) = (&run.agreement_train, &run.agreement_test) {
        train.write_csv_rows("train", &mut agreement);
        test.write_csv_rows("test", &mut agreement);
    }
    atomic_write(&dir.join("figures").join("agreement.csv"), agreement.as_bytes())?;

    let mut confidence = hash_line(hash);
    confidence.push_str("bin_lo,bin_hi,population,count\n");
    run.confidence.write_csv_rows(&mut confidence);
    atomic_write(&dir.join("figures").join("confidence.csv"), confidence.as_bytes())?;
    Ok(dir)
}

fn output_dir(config: &ExperimentConfig, options: &RunOptions) -> PathBuf {
    options.output_dir.clone().unwrap_or_else(|| config.output_dir.clone())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<SweepResult> {
    run_experiment_with(config, &RunOptions::default())
}

/// Run one config and write its output directory.
pub fn run_experiment_with(config: &ExperimentConfig, options: &RunOptions) -> Result<SweepResult> {
    let out = output_dir(config, options);
    let ckpt_dir = config.checkpoints.then(|| out.join(config.config_hash()).join("checkpoints"));
    if let Some(dir) = &ckpt_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let run = execute(config, options, ckpt_dir.as_deref())?;
    write_run(&run, &out)?;
    Ok(SweepResult { runs: vec![run] })
}

fn check_compatible(configs: &[ExperimentConfig]) -> Result<()> {
    let first = configs
        .first()
        .ok_or_else(|| ConfigError::Incompatible("empty sweep".into()))?;
    for c in &configs[1..] {
        let field = if c.dataset != first.dataset {
            Some("dataset")
        } else if c.split != first.split {
            Some("split")
        } else if c.hidden != first.hidden {
            Some("model.hidden")
        } else {
            None
        };
        if let Some(field) = field {
            return Err(ConfigError::Incompatible(format!(
                "{} and {} differ in {field}",
                first.config_hash(),
                c.config_hash()
            ))
            .into());
        }
    }
    let mut hashes: Vec<String> = configs.iter().map(ExperimentConfig::config_hash).collect();
    hashes.sort();
    if let Some(w) = hashes.windows(2).find(|w| w[0] == w[1]) {
        return Err(ConfigError::Incompatible(format!("config {} appears twice", w[0])).into());
    }
    Ok(())
}

pub fn run_sweep(configs: &[ExperimentConfig]) -> Result<SweepResult> {
    run_sweep_with(configs, &RunOptions::default())
}

/// Run compatible configs (concurrently when `options.parallel`), write each
/// run directory plus `sweep_rounds.csv` in the first config's output dir.
pub fn run_sweep_with(configs: &[ExperimentConfig], options: &RunOptions) -> Result<SweepResult> {
    check_compatible(configs)?;
    for c in configs {
        c.validate()?;
    }
    let one = |c: &ExperimentConfig| -> Result<RunResult> {
        let mut r = run_experiment_with(c, options)?;
        Ok(r.runs.remove(0))
    };
    let runs: Vec<RunResult> = if options.parallel {
        configs.par_iter().map(one).collect::<Result<_>>()?
    } else {
        configs.iter().map(one).collect::<Result<_>>()?
    };
    let sweep = SweepResult { runs };
    let out = output_dir(&configs[0], options);
    atomic_write(&out.join("sweep_rounds.csv"), sweep.merged_rounds_csv().as_bytes())?;
    Ok(sweep)
}
