//! Experiment configuration files.
//!
//! Flat `key = value` lines. `#` starts a comment, blank lines are ignored
//! and dotted keys group related settings. Unknown and duplicate keys are
//! errors. Required keys: `dataset.kind`, `n_clients`, `rounds`.
//!
//! ```text
//! # five-client FedAvg on Gaussian blobs
//! seed = 3
//! n_clients = 5
//! rounds = 60
//! strategy = fedavg            # fedavg | first | round_robin | most_confident | correct_confident
//! output_dir = results
//! checkpoints = false          # write <run>/checkpoints/round_<k>.ckpt
//!
//! dataset.kind = synthetic     # synthetic | idx | csv
//! dataset.features = 20
//! dataset.classes = 4
//! dataset.separation = 2
//! # dataset.seed = 11          # default: derived from `seed`
//! # dataset.images / dataset.labels   (idx)
//! # dataset.path                      (csv)
//!
//! split.train = 400            # member pool, including the server reference set
//! split.reference_fraction = 0.1
//! split.holdout = 400          # non-members for attack evaluation
//! split.test = 1000
//! split.shadow_pool = 800
//!
//! model.hidden = 64            # comma separated hidden widths; empty for none
//! train.learning_rate = 0.05
//! train.batch_size = 32
//! train.local_epochs = 1
//! selection.correct_mask = truth   # truth | agreement
//!
//! attack.k_shadows = 4
//! attack.eval_size = 200       # per population
//! attack.cadence = 1           # evaluate every m rounds (and always the last)
//! attack.shadow_epochs = 60
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::federation::{AggregationStrategy, CorrectnessMask};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("`{key}`: cannot parse {value:?}: {message}")]
    BadValue {
        key: String,
        value: String,
        message: String,
    },

    #[error("`{key}` out of range: {message}")]
    Range { key: String, message: String },

    #[error("`{key}`: file {} does not exist", path.display())]
    MissingFile { key: String, path: PathBuf },

    #[error("cannot read config {}: {message}", path.display())]
    Unreadable { path: PathBuf, message: String },

    #[error("incompatible sweep configs: {0}")]
    Incompatible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic {
        features: usize,
        classes: usize,
        separation: f64,
        seed: Option<u64>,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub reference_fraction: f64,
    pub holdout: usize,
    pub test: usize,
    pub shadow_pool: usize,
}

impl SplitSizes {
    pub fn reference_size(&self) -> usize {
        (self.train as f64 * self.reference_fraction).round() as usize
    }

    /// Samples dealt to clients.
    pub fn client_pool(&self) -> usize {
        self.train - self.reference_size()
    }

    pub fn total(&self) -> usize {
        self.train + self.holdout + self.test + self.shadow_pool
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSettings {
    pub k_shadows: usize,
    pub eval_size: usize,
    pub cadence: usize,
    pub shadow_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_clients: usize,
    pub rounds: usize,
    pub strategy: AggregationStrategy,
    pub output_dir: PathBuf,
    pub checkpoints: bool,
    pub dataset: DatasetSpec,
    pub split: SplitSizes,
    pub hidden: Vec<usize>,
    pub train: TrainSettings,
    pub correct_mask: CorrectnessMask,
    pub attack: AttackSettings,
}

impl ExperimentConfig {
    /// A synthetic-blob config with every default filled in.
    pub fn synthetic(n_clients: usize, rounds: usize) -> Self {
        ExperimentConfig {
            seed: 0,
            n_clients,
            rounds,
            strategy: AggregationStrategy::FedAvg,
            output_dir: PathBuf::from("results"),
            checkpoints: false,
            dataset: DatasetSpec::Synthetic {
                features: 20,
                classes: 4,
                separation: 2.0,
                seed: None,
            },
            split: SplitSizes {
                train: 400,
                reference_fraction: 0.1,
                holdout: 400,
                test: 1000,
                shadow_pool: 800,
            },
            hidden: vec![64],
            train: TrainSettings {
                learning_rate: 0.05,
                batch_size: 32,
                local_epochs: 1,
            },
            correct_mask: CorrectnessMask::Truth,
            attack: AttackSettings {
                k_shadows: 4,
                eval_size: 200,
                cadence: 1,
                shadow_epochs: 60,
            },
        }
    }

    /// Canonical text form: every key, fixed order. `parse_config` of this
    /// text yields an equal config.
    pub fn to_config_string(&self) -> String {
        let mut out = self.hashed_body();
        let _ = writeln!(out, "output_dir = {}", self.output_dir.display());
        out
    }

    /// Everything except `output_dir`, which does not affect results.
    fn hashed_body(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(o, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("n_clients", self.n_clients.to_string());
        kv("rounds", self.rounds.to_string());
        kv("strategy", self.strategy.to_string());
        kv("checkpoints", self.checkpoints.to_string());
        match &self.dataset {
            DatasetSpec::Synthetic {
                features,
                classes,
                separation,
                seed,
            } => {
                kv("dataset.kind", "synthetic".into());
                kv("dataset.features", features.to_string());
                kv("dataset.classes", classes.to_string());
                kv("dataset.separation", separation.to_string());
                if let Some(s) = seed {
                    kv("dataset.seed", s.to_string());
                }
            }
            DatasetSpec::Idx { images, labels } => {
                kv("dataset.kind", "idx".into());
                kv("dataset.images", images.display().to_string());
                kv("dataset.labels", labels.display().to_string());
            }
            DatasetSpec::Csv { path } => {
                kv("dataset.kind", "csv".into());
                kv("dataset.path", path.display().to_string());
            }
        }
        kv("split.train", self.split.train.to_string());
        kv("split.reference_fraction", self.split.reference_fraction.to_string());
        kv("split.holdout", self.split.holdout.to_string());
        kv("split.test", self.split.test.to_string());
        kv("split.shadow_pool", self.split.shadow_pool.to_string());
        kv(
            "model.hidden",
            self.hidden.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        );
        kv("train.learning_rate", self.train.learning_rate.to_string());
        kv("train.batch_size", self.train.batch_size.to_string());
        kv("train.local_epochs", self.train.local_epochs.to_string());
        kv("selection.correct_mask", self.correct_mask.as_str().into());
        kv("attack.k_shadows", self.attack.k_shadows.to_string());
        kv("attack.eval_size", self.attack.eval_size.to_string());
        kv("attack.cadence", self.attack.cadence.to_string());
        kv("attack.shadow_epochs", self.attack.shadow_epochs.to_string());
        o
    }

    /// First 16 hex digits of SHA-256 over the canonical text minus
    /// `output_dir`.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.hashed_body().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Range and cross-field checks.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |key: &str, message: String| ConfigError::Range {
            key: key.into(),
            message,
        };
        if self.n_clients == 0 {
            return Err(range("n_clients", "must be at least 1".into()));
        }
        if let DatasetSpec::Synthetic {
            features,
            classes,
            separation,
            ..
        } = &self.dataset
        {
            if *features == 0 {
                return Err(range("dataset.features", "must be at least 1".into()));
            }
            if *classes < 2 {
                return Err(range("dataset.classes", "must be at least 2".into()));
            }
            if !(*separation > 0.0 && separation.is_finite()) {
                return Err(range("dataset.separation", "must be positive".into()));
            }
        }
        if !(0.0..1.0).contains(&self.split.reference_fraction) {
            return Err(range("split.reference_fraction", "must lie in [0, 1)".into()));
        }
        if self.split.client_pool() < self.n_clients {
            return Err(range(
                "split.train",
                format!(
                    "{} client samples cannot be shared by {} clients",
                    self.split.client_pool(),
                    self.n_clients
                ),
            ));
        }
        if matches!(
            self.strategy,
            AggregationStrategy::MostConfident | AggregationStrategy::CorrectConfident
        ) && self.split.reference_size() == 0
        {
            return Err(range(
                "split.reference_fraction",
                format!("strategy {} needs a nonempty reference set", self.strategy),
            ));
        }
        if self.split.test == 0 {
            return Err(range("split.test", "must be at least 1".into()));
        }
        if self.split.shadow_pool < 4 {
            return Err(range("split.shadow_pool", "must be at least 4".into()));
        }
        if self.hidden.contains(&0) {
            return Err(range("model.hidden", "widths must be positive".into()));
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return Err(range("train.learning_rate", "must be positive".into()));
        }
        if self.train.batch_size == 0 {
            return Err(range("train.batch_size", "must be at least 1".into()));
        }
        if self.train.local_epochs == 0 {
            return Err(range("train.local_epochs", "must be at least 1".into()));
        }
        if self.attack.k_shadows == 0 {
            return Err(range("attack.k_shadows", "must be at least 1".into()));
        }
        if self.attack.eval_size == 0 {
            return Err(range("attack.eval_size", "must be at least 1".into()));
        }
        if self.attack.eval_size > self.split.holdout || self.attack.eval_size > self.split.client_pool() {
            return Err(range(
                "attack.eval_size",
                format!(
                    "{} exceeds the member ({}) or holdout ({}) population",
                    self.attack.eval_size,
                    self.split.client_pool(),
                    self.split.holdout
                ),
            ));
        }
        if self.attack.cadence == 0 {
            return Err(range("attack.cadence", "must be at least 1".into()));
        }
        if self.attack.shadow_epochs == 0 {
            return Err(range("attack.shadow_epochs", "must be at least 1".into()));
        }
        Ok(())
    }

    /// Check that referenced data files exist.
    pub fn check_files(&self) -> Result<(), ConfigError> {
        let files: Vec<(&str, &Path)> = match &self.dataset {
            DatasetSpec::Synthetic { .. } => vec![],
            DatasetSpec::Idx { images, labels } => {
                vec![("dataset.images", images.as_path()), ("dataset.labels", labels.as_path())]
            }
            DatasetSpec::Csv { path } => vec![("dataset.path", path.as_path())],
        };
        for (key, path) in files {
            if !path.exists() {
                return Err(ConfigError::MissingFile {
                    key: key.into(),
                    path: path.to_path_buf(),
                });
            }
        }
        Ok(())
    }
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "n_clients",
    "rounds",
    "strategy",
    "output_dir",
    "checkpoints",
    "dataset.kind",
    "dataset.features",
    "dataset.classes",
    "dataset.separation",
    "dataset.seed",
    "dataset.images",
    "dataset.labels",
    "dataset.path",
    "split.train",
    "split.reference_fraction",
    "split.holdout",
    "split.test",
    "split.shadow_pool",
    "model.hidden",
    "train.learning_rate",
    "train.batch_size",
    "train.local_epochs",
    "selection.correct_mask",
    "attack.k_shadows",
    "attack.eval_size",
    "attack.cadence",
    "attack.shadow_epochs",
];

struct Entries {
    values: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key).map(|(_, v)| v)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(value) => value.parse().map(Some).map_err(|e: T::Err| ConfigError::BadValue {
                key: key.into(),
                value,
                message: e.to_string(),
            }),
        }
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key)?.ok_or_else(|| ConfigError::MissingKey(key.into()))
    }

    /// A key that only applies to another dataset kind.
    fn reject(&mut self, key: &str, kind: &str) -> Result<(), ConfigError> {
        match self.values.remove(key) {
            Some((line, _)) => Err(ConfigError::Syntax {
                line,
                message: format!("`{key}` does not apply to dataset.kind = {kind}"),
            }),
            None => Ok(()),
        }
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, found {content:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("invalid key {key:?}"),
            });
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.into(),
            });
        }
        if values.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.into(),
            });
        }
    }
    Ok(Entries { values })
}

fn parse_hidden(value: &str) -> Result<Vec<usize>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|t| {
            t.trim().parse::<usize>().map_err(|e| ConfigError::BadValue {
                key: "model.hidden".into(),
                value: value.into(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parse and validate a config. Does not touch the filesystem; see
/// [`ExperimentConfig::check_files`] and [`load_config`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut e = tokenize(text)?;
    let defaults = ExperimentConfig::synthetic(1, 0);

    let kind: String = e.required("dataset.kind")?;
    let dataset = match kind.as_str() {
        "synthetic" => {
            let DatasetSpec::Synthetic {
                features,
                classes,
                separation,
                ..
            } = defaults.dataset
            else {
                unreachable!("defaults are synthetic")
            };
            for k in ["dataset.images", "dataset.labels", "dataset.path"] {
                e.reject(k, &kind)?;
            }
            DatasetSpec::Synthetic {
                features: e.parse_or("dataset.features", features)?,
                classes: e.parse_or("dataset.classes", classes)?,
                separation: e.parse_or("dataset.separation", separation)?,
                seed: e.parse("dataset.seed")?,
            }
        }
        "idx" => {
            for k in ["dataset.features", "dataset.classes", "dataset.separation", "dataset.seed", "dataset.path"] {
                e.reject(k, &kind)?;
            }
            DatasetSpec::Idx {
                images: e.required::<PathBuf>("dataset.images")?,
                labels: e.required::<PathBuf>("dataset.labels")?,
            }
        }
        "csv" => {
            for k in ["dataset.features", "dataset.classes", "dataset.separation", "dataset.seed", "dataset.images", "dataset.labels"] {
                e.reject(k, &kind)?;
            }
            DatasetSpec::Csv {
                path: e.required::<PathBuf>("dataset.path")?,
            }
        }
        other => {
            return Err(ConfigError::BadValue {
                key: "dataset.kind".into(),
                value: other.into(),
                message: "expected synthetic, idx or csv".into(),
            })
        }
    };

    let hidden = match e.take("model.hidden") {
        Some(v) => parse_hidden(&v)?,
        None => defaults.hidden.clone(),
    };

    let config = ExperimentConfig {
        seed: e.parse_or("seed", defaults.seed)?,
        n_clients: e.required("n_clients")?,
        rounds: e.required("rounds")?,
        strategy: e.parse_or("strategy", defaults.strategy)?,
        output_dir: e.parse_or("output_dir", defaults.output_dir.clone())?,
        checkpoints: e.parse_or("checkpoints", defaults.checkpoints)?,
        dataset,
        split: SplitSizes {
            train: e.parse_or("split.train", defaults.split.train)?,
            reference_fraction: e.parse_or("split.reference_fraction", defaults.split.reference_fraction)?,
            holdout: e.parse_or("split.holdout", defaults.split.holdout)?,
            test: e.parse_or("split.test", defaults.split.test)?,
            shadow_pool: e.parse_or("split.shadow_pool", defaults.split.shadow_pool)?,
        },
        hidden,
        train: TrainSettings {
            learning_rate: e.parse_or("train.learning_rate", defaults.train.learning_rate)?,
            batch_size: e.parse_or("train.batch_size", defaults.train.batch_size)?,
            local_epochs: e.parse_or("train.local_epochs", defaults.train.local_epochs)?,
        },
        correct_mask: e.parse_or("selection.correct_mask", defaults.correct_mask)?,
        attack: AttackSettings {
            k_shadows: e.parse_or("attack.k_shadows", defaults.attack.k_shadows)?,
            eval_size: e.parse_or("attack.eval_size", defaults.attack.eval_size)?,
            cadence: e.parse_or("attack.cadence", defaults.attack.cadence)?,
            shadow_epochs: e.parse_or("attack.shadow_epochs", defaults.attack.shadow_epochs)?,
        },
    };
    debug_assert!(e.values.is_empty(), "unconsumed keys: {:?}", e.values.keys());
    config.validate()?;
    Ok(config)
}

/// Read, parse and validate a config file, including file existence checks.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let config = parse_config(&text)?;
    config.check_files()?;
    Ok(config)
}
