use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{RunResult, SweepResult};
use super::output::{atomic_write, opt, to_json_bytes};
use super::TOOL_VERSION;
use crate::error::{Error, Result};
use crate::federation::AggregationStrategy;
use crate::metrics::spearman;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config_hash: String,
    pub strategy: AggregationStrategy,
    pub n_clients: usize,
    pub seed: u64,
    pub rounds: usize,
    pub final_train_acc: Option<f64>,
    pub final_test_acc: Option<f64>,
    pub final_gap: Option<f64>,
    pub final_mia_acc: f64,
    pub threshold_mia_acc: f64,
    pub initial_mia_acc: f64,
    /// Spearman rho between the test-accuracy and MIA-accuracy trajectories
    /// over rounds where the attack was evaluated. `None` with fewer than
    /// three such rounds.
    pub spearman_test_mia: Option<f64>,
    pub spearman_degenerate: bool,
    pub mean_agreement_train: Option<f64>,
    pub mean_agreement_test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub tool_version: String,
    pub configs: Vec<ConfigSummary>,
}

fn summarize(run: &RunResult) -> Result<ConfigSummary> {
    let (tests, mias): (Vec<f64>, Vec<f64>) = run
        .records
        .iter()
        .filter_map(|r| r.mia_accuracy.map(|m| (r.test_accuracy, m)))
        .unzip();
    let (rho, degenerate) = if tests.len() >= 3 {
        let s = spearman(&tests, &mias)?;
        (Some(s.rho), s.degenerate)
    } else {
        (None, false)
    };
    let last = run.final_record();
    Ok(ConfigSummary {
        config_hash: run.config_hash().into(),
        strategy: run.config.strategy,
        n_clients: run.config.n_clients,
        seed: run.config.seed,
        rounds: run.config.rounds,
        final_train_acc: last.map(|r| r.train_accuracy),
        final_test_acc: last.map(|r| r.test_accuracy),
        final_gap: last.map(|r| r.train_accuracy - r.test_accuracy),
        final_mia_acc: run.final_mia.attack_accuracy,
        threshold_mia_acc: run.threshold_mia.attack_accuracy,
        initial_mia_acc: run.initial_mia.attack_accuracy,
        spearman_test_mia: rho,
        spearman_degenerate: degenerate,
        mean_agreement_train: run.agreement_train.as_ref().and_then(|a| a.mean_agreement()),
        mean_agreement_test: run.agreement_test.as_ref().and_then(|a| a.mean_agreement()),
    })
}

fn sorted_runs(result: &SweepResult) -> Vec<&RunResult> {
    let mut runs: Vec<&RunResult> = result.runs.iter().collect();
    runs.sort_by(|a, b| {
        (a.config.n_clients, a.config.strategy, a.config.seed, a.config_hash()).cmp(&(
            b.config.n_clients,
            b.config.strategy,
            b.config.seed,
            b.config_hash(),
        ))
    });
    runs
}

fn hashes_line(runs: &[&RunResult]) -> String {
    let hashes: Vec<&str> = runs.iter().map(|r| r.config_hash()).collect();
    format!("# config_hashes={}\n", hashes.join(","))
}

fn trajectories_csv(runs: &[&RunResult]) -> String {
    let mut out = String::from("config_hash,strategy,n_clients,seed,round,train_acc,test_acc,gap,mia_acc\n");
    for run in runs {
        for r in &run.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                run.config_hash(),
                r.strategy,
                run.config.n_clients,
                run.config.seed,
                r.round,
                r.train_accuracy,
                r.test_accuracy,
                r.train_accuracy - r.test_accuracy,
                opt(r.mia_accuracy),
            );
        }
    }
    out
}

/// Test accuracy and gap per round for every seed, followed by a `mean`
/// row per (n_clients, strategy, round) averaged over the seeds that reached
/// that round.
fn convergence_csv(runs: &[&RunResult]) -> String {
    let mut out = hashes_line(runs);
    out.push_str("n_clients,strategy,seed,round,test_acc,gap\n");
    let mut groups: BTreeMap<(usize, AggregationStrategy), Vec<&RunResult>> = BTreeMap::new();
    for run in runs {
        groups.entry((run.config.n_clients, run.config.strategy)).or_default().push(run);
    }
    for ((n, strategy), group) in &groups {
        for run in group {
            for r in &run.records {
                let _ = writeln!(
                    out,
                    "{n},{strategy},{},{},{},{}",
                    run.config.seed,
                    r.round,
                    r.test_accuracy,
                    r.train_accuracy - r.test_accuracy
                );
            }
        }
        let max_rounds = group.iter().map(|r| r.records.len()).max().unwrap_or(0);
        for round in 0..max_rounds {
            let rows: Vec<_> = group.iter().filter_map(|r| r.records.get(round)).collect();
            let k = rows.len() as f64;
            let test = rows.iter().map(|r| r.test_accuracy).sum::<f64>() / k;
            let gap = rows.iter().map(|r| r.train_accuracy - r.test_accuracy).sum::<f64>() / k;
            let _ = writeln!(out, "{n},{strategy},mean,{round},{test},{gap}");
        }
    }
    out
}

fn agreement_csv(runs: &[&RunResult]) -> String {
    let mut out = hashes_line(runs);
    out.push_str("config_hash,bin_lo,bin_hi,population,count\n");
    for run in runs {
        for (name, profile) in [("train", &run.agreement_train), ("test", &run.agreement_test)] {
            if let Some(p) = profile {
                let mut rows = String::new();
                p.write_csv_rows(name, &mut rows);
                for line in rows.lines() {
                    let _ = writeln!(out, "{},{line}", run.config_hash());
                }
            }
        }
    }
    out
}

fn confidence_csv(runs: &[&RunResult]) -> String {
    let mut out = hashes_line(runs);
    out.push_str("config_hash,bin_lo,bin_hi,population,count\n");
    for run in runs {
        let mut rows = String::new();
        run.confidence.write_csv_rows(&mut rows);
        for line in rows.lines() {
            let _ = writeln!(out, "{},{line}", run.config_hash());
        }
    }
    out
}

/// Write `summary.json` and `figures/{trajectories,convergence,agreement,confidence}.csv`
/// under `dir`. Output depends only on `result`.
pub fn write_report(result: &SweepResult, dir: &Path) -> Result<ReportSummary> {
    if result.runs.is_empty() {
        return Err(Error::invalid("cannot report an empty result"));
    }
    let runs = sorted_runs(result);
    let summary = ReportSummary {
        tool_version: TOOL_VERSION.into(),
        configs: runs.iter().map(|r| summarize(r)).collect::<Result<_>>()?,
    };
    atomic_write(&dir.join("summary.json"), &to_json_bytes(&summary)?)?;
    let figures = dir.join("figures");
    atomic_write(&figures.join("trajectories.csv"), trajectories_csv(&runs).as_bytes())?;
    atomic_write(&figures.join("convergence.csv"), convergence_csv(&runs).as_bytes())?;
    atomic_write(&figures.join("agreement.csv"), agreement_csv(&runs).as_bytes())?;
    atomic_write(&figures.join("confidence.csv"), confidence_csv(&runs).as_bytes())?;
    Ok(summary)
}

/// Collect `result.json` files from `dir` (a single run directory) or from
/// its immediate subdirectories (a sweep output directory).
pub fn load_results(dir: &Path) -> Result<SweepResult> {
    let read = |path: &Path| -> Result<RunResult> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))
    };
    let single = dir.join("result.json");
    if single.is_file() {
        return Ok(SweepResult {
            runs: vec![read(&single)?],
        });
    }
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path().join("result.json");
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!("no result.json under {}", dir.display())));
    }
    Ok(SweepResult {
        runs: paths.iter().map(|p| read(p)).collect::<Result<_>>()?,
    })
}
