//! End-to-end acceptance checks. Each test writes one `PASS`/`FAIL` line to
//! stderr (bypassing output capture) and then asserts.

use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use fedmia::attack::{build_attack_dataset, calibrate_threshold, evaluate_mia, train_attack, train_shadows};
use fedmia::data::{generate_synthetic, partition, MembershipSplit};
use fedmia::federation::{run_federation, AggregationStrategy, FederatedData, FederationConfig};
use fedmia::harness::{parse_config, run_experiment_with, run_sweep_with, ExperimentConfig, RunOptions, RunResult};
use fedmia::metrics::{spearman, Population};
use fedmia::model::{accuracy, init_params, loss_and_grad, train_local, DenseNet, TrainConfig};
use fedmia::seed::{derive_seed, rng};
use fedmia::Matrix;
use rand::Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{verdict}] criterion {id:>2} {name}: {detail}");
}

fn config(text: &str) -> ExperimentConfig {
    parse_config(text).expect("acceptance config parses")
}

fn variants(base: &ExperimentConfig, ns: &[usize], seeds: &[u64], strategies: &[AggregationStrategy]) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for &n in ns {
        for &strategy in strategies {
            for &seed in seeds {
                let mut c = base.clone();
                c.n_clients = n;
                c.seed = seed;
                c.strategy = strategy;
                out.push(c);
            }
        }
    }
    out
}

fn sweep(configs: &[ExperimentConfig], dir: &Path) -> Vec<RunResult> {
    let options = RunOptions {
        parallel: true,
        output_dir: Some(dir.to_path_buf()),
    };
    run_sweep_with(configs, &options).expect("sweep runs").runs
}

fn find<'a>(runs: &'a [RunResult], n: usize, strategy: AggregationStrategy, seed: u64) -> &'a RunResult {
    runs.iter()
        .find(|r| r.config.n_clients == n && r.config.strategy == strategy && r.config.seed == seed)
        .expect("run present")
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const FIG1_NS: [usize; 3] = [2, 5, 10];

/// Overfit-prone blobs: few members per class, many noisy dimensions.
const OVERFIT_PRONE: &str = "
dataset.kind = synthetic
dataset.features = 50
dataset.classes = 10
dataset.separation = 4
n_clients = 2
rounds = 60
split.train = 220
split.reference_fraction = 0.1
split.holdout = 400
split.test = 1000
split.shadow_pool = 800
model.hidden = 64
train.learning_rate = 0.1
train.batch_size = 16
train.local_epochs = 5
attack.k_shadows = 4
attack.eval_size = 198
attack.cadence = 1
attack.shadow_epochs = 40
";

struct Fig1 {
    _dir: tempfile::TempDir,
    runs: Vec<RunResult>,
}

fn fig1() -> &'static Fig1 {
    static CELL: OnceLock<Fig1> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let configs = variants(&config(OVERFIT_PRONE), &FIG1_NS, &SEEDS, &[AggregationStrategy::FedAvg]);
        let runs = sweep(&configs, dir.path());
        Fig1 { _dir: dir, runs }
    })
}

// ---------------------------------------------------------------- 1

fn oracle_loss(net: &DenseNet, x: &Matrix, y: &[usize]) -> f64 {
    let layers = net.layers();
    let mut total = 0.0;
    for (s, &label) in y.iter().enumerate() {
        let mut a: Vec<f64> = x.row(s).to_vec();
        for (k, layer) in layers.iter().enumerate() {
            let mut z: Vec<f64> = (0..layer.out_dim())
                .map(|o| layer.bias[o] + (0..layer.in_dim()).map(|i| layer.weights.get(o, i) * a[i]).sum::<f64>())
                .collect();
            if k + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - a[label];
    }
    total / y.len() as f64
}

#[test]
fn criterion_01_gradient_correctness() {
    let dims = [3, 4, 2];
    let eps = 1e-4;
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n_params = 3 * 4 + 4 + 4 * 2 + 2;
        let params: Vec<f64> = (0..n_params).map(|_| r.random_range(-1.0..1.0)).collect();
        let net = DenseNet::from_flat(&dims, &params).unwrap();
        let rows = r.random_range(1..9);
        let x = Matrix::from_vec(rows, 3, (0..rows * 3).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let y: Vec<usize> = (0..rows).map(|_| r.random_range(0..2)).collect();
        let (loss, grad) = loss_and_grad(&net, &x, &y).unwrap();
        assert!((loss - oracle_loss(&net, &x, &y)).abs() < 1e-12);
        for (i, analytic) in grad.flatten().into_iter().enumerate() {
            let mut plus = params.clone();
            plus[i] += eps;
            let mut minus = params.clone();
            minus[i] -= eps;
            let numeric = (oracle_loss(&DenseNet::from_flat(&dims, &plus).unwrap(), &x, &y)
                - oracle_loss(&DenseNet::from_flat(&dims, &minus).unwrap(), &x, &y))
                / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    let pass = worst <= 1e-5;
    report(1, "gradient correctness", pass, &format!("max relative error {worst:.2e} over 100 nets (tolerance 1e-5)"));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_single_client_is_centralized() {
    let data = generate_synthetic(300, 8, 3, 2.0, 5).unwrap();
    let test = generate_synthetic(200, 8, 3, 2.0, 6).unwrap();
    let cfg = FederationConfig {
        layer_dims: vec![8, 16, 3],
        n_clients: 1,
        rounds: 20,
        strategy: AggregationStrategy::FedAvg,
        correct_mask: Default::default(),
        train: TrainConfig {
            learning_rate: 0.05,
            batch_size: 16,
            local_epochs: 2,
            seed: 0,
        },
        seed: 77,
        parallel: true,
    };
    let fed = FederatedData {
        plan: partition(data.len(), 1, 3).unwrap(),
        pool: data.clone(),
        reference: None,
        test,
    };
    let outcome = run_federation(&cfg, &fed).unwrap();

    let mut central = init_params(&cfg.layer_dims, derive_seed(cfg.seed, "init", &[])).unwrap();
    for round in 0..cfg.rounds {
        let seed = derive_seed(cfg.seed, "client", &[round as u64, 0]);
        central = train_local(&central, &data, &cfg.train.with_seed(seed)).unwrap();
    }
    let same = outcome
        .global
        .flatten()
        .iter()
        .zip(central.flatten())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    report(2, "n=1 FedAvg equals centralized training", same, "20 rounds, bitwise parameter comparison");
    assert!(same);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_chance_level_on_untrained_target() {
    let dims = [20, 64, 4];
    let all = generate_synthetic(2000, 20, 4, 2.0, 31).unwrap();
    let members: Vec<usize> = (0..600).collect();
    let nonmembers: Vec<usize> = (600..1200).collect();
    let split = MembershipSplit::from_pools(members, nonmembers, 500, 8).unwrap();
    let pool = all.subset(&(1200..2000).collect::<Vec<_>>());
    let cfg = TrainConfig {
        learning_rate: 0.2,
        batch_size: 16,
        local_epochs: 200,
        seed: 0,
    };
    let shadows = train_shadows(&pool, 4, &dims, &cfg, 9).unwrap();
    let attack_data = build_attack_dataset(&shadows, &pool).unwrap();
    let target = init_params(&dims, 123).unwrap();
    let shadow = evaluate_mia(&train_attack(&attack_data, 0).unwrap(), &target, &split, &all).unwrap();
    let threshold = evaluate_mia(&calibrate_threshold(&attack_data).unwrap(), &target, &split, &all).unwrap();
    let pass = shadow.n_eval == 1000
        && threshold.n_eval == 1000
        && (shadow.attack_accuracy - 0.5).abs() <= 0.05
        && (threshold.attack_accuracy - 0.5).abs() <= 0.05;
    report(
        3,
        "chance-level attacks on an untrained target",
        pass,
        &format!(
            "shadow {:.3}, threshold {:.3}, n_eval {} (need 0.5 +- 0.05)",
            shadow.attack_accuracy, threshold.attack_accuracy, shadow.n_eval
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_membership_signal_on_overfit_target() {
    let dims = [20, 64, 4];
    let all = generate_synthetic(1400, 20, 4, 2.0, 12).unwrap();
    let members: Vec<usize> = (0..200).collect();
    let nonmembers: Vec<usize> = (200..600).collect();
    let split = MembershipSplit::from_pools(members.clone(), nonmembers.clone(), 200, 4).unwrap();
    let pool = all.subset(&(600..1400).collect::<Vec<_>>());
    let cfg = TrainConfig {
        learning_rate: 0.2,
        batch_size: 16,
        local_epochs: 600,
        seed: 0,
    };
    let target = train_local(&init_params(&dims, 1).unwrap(), &all.subset(&members), &cfg).unwrap();
    let train_acc = accuracy(&target, &all.subset(&members)).unwrap();
    let test_acc = accuracy(&target, &all.subset(&nonmembers)).unwrap();
    let shadows = train_shadows(&pool, 4, &dims, &cfg, 5).unwrap();
    let attack = train_attack(&build_attack_dataset(&shadows, &pool).unwrap(), 0).unwrap();
    let r = evaluate_mia(&attack, &target, &split, &all).unwrap();
    let pass = train_acc >= 0.99
        && test_acc <= 0.85
        && r.attack_accuracy >= 0.60
        && r.member_mean_confidence > r.nonmember_mean_confidence;
    report(
        4,
        "membership signal on an overfit target",
        pass,
        &format!(
            "train {train_acc:.3}, test {test_acc:.3}, attack {:.3}, confidence member {:.3} vs non-member {:.3}",
            r.attack_accuracy, r.member_mean_confidence, r.nonmember_mean_confidence
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

fn run_rho(run: &RunResult) -> f64 {
    let (test, mia): (Vec<f64>, Vec<f64>) = run
        .records
        .iter()
        .filter_map(|r| r.mia_accuracy.map(|m| (r.test_accuracy, m)))
        .unzip();
    assert_eq!(test.len(), run.config.rounds, "attack evaluated every round");
    spearman(&test, &mia).unwrap().rho
}

#[test]
fn criterion_05_accuracy_privacy_correlation() {
    let runs = &fig1().runs;
    let mut pass = true;
    let mut detail = Vec::new();
    for n in FIG1_NS {
        let rhos: Vec<f64> = SEEDS
            .iter()
            .map(|&s| run_rho(find(runs, n, AggregationStrategy::FedAvg, s)))
            .collect();
        let hits = rhos.iter().filter(|&&r| r >= 0.5).count();
        pass &= hits >= 4;
        let list: Vec<String> = rhos.iter().map(|r| format!("{r:.2}")).collect();
        detail.push(format!("n={n}: rho [{}] {hits}/5", list.join(", ")));
    }
    report(5, "accuracy-privacy correlation", pass, &detail.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_client_count_not_monotone() {
    let runs = &fig1().runs;
    let mut increasing = 0;
    let mut decreasing = 0;
    let mut detail = Vec::new();
    for &s in &SEEDS {
        let m: Vec<f64> = FIG1_NS
            .iter()
            .map(|&n| find(runs, n, AggregationStrategy::FedAvg, s).final_mia.attack_accuracy)
            .collect();
        if m.windows(2).all(|w| w[0] < w[1]) {
            increasing += 1;
        }
        if m.windows(2).all(|w| w[0] > w[1]) {
            decreasing += 1;
        }
        detail.push(format!("seed {s}: {:.3}/{:.3}/{:.3}", m[0], m[1], m[2]));
    }
    let pass = increasing < SEEDS.len() && decreasing < SEEDS.len();
    report(
        6,
        "final MIA not monotone in client count",
        pass,
        &format!(
            "{} (strictly increasing in {increasing}/5 seeds, decreasing in {decreasing}/5)",
            detail.join(", ")
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

const OVER_CAPACITY: &str = "
dataset.kind = synthetic
dataset.features = 50
dataset.classes = 10
dataset.separation = 4
n_clients = 2
rounds = 60
split.train = 560
split.reference_fraction = 0.1
split.holdout = 400
split.test = 1000
split.shadow_pool = 800
model.hidden = 256
train.learning_rate = 0.1
train.batch_size = 16
train.local_epochs = 5
attack.k_shadows = 4
attack.eval_size = 400
attack.cadence = 60
attack.shadow_epochs = 40
";

#[test]
fn criterion_07_more_clients_converge_slower_and_overfit_less() {
    let dir = tempfile::tempdir().unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let configs = variants(&config(OVER_CAPACITY), &[2, 10, 50], &seeds, &[AggregationStrategy::FedAvg]);
    let runs = sweep(&configs, dir.path());
    let mean = |n: usize, f: &dyn Fn(&RunResult) -> f64| {
        seeds.iter().map(|&s| f(find(&runs, n, AggregationStrategy::FedAvg, s))).sum::<f64>() / seeds.len() as f64
    };
    let at10 = |r: &RunResult| r.records[9].test_accuracy;
    let gap = |r: &RunResult| {
        let last = r.final_record().unwrap();
        last.train_accuracy - last.test_accuracy
    };
    let (a2, a10, a50) = (mean(2, &at10), mean(10, &at10), mean(50, &at10));
    let (g2, g10, g50) = (mean(2, &gap), mean(10, &gap), mean(50, &gap));
    let pass = a2 - a50 >= 0.02 && g50 <= g2;
    report(
        7,
        "regularization effect of client count",
        pass,
        &format!(
            "round-10 test acc n=2 {a2:.3}, n=10 {a10:.3}, n=50 {a50:.3}; final gap n=2 {g2:.3}, n=10 {g10:.3}, n=50 {g50:.3}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

const WELL_SEPARATED: &str = "
dataset.kind = synthetic
dataset.features = 50
dataset.classes = 10
dataset.separation = 5
n_clients = 5
rounds = 60
split.train = 300
split.reference_fraction = 0.1
split.holdout = 400
split.test = 1000
split.shadow_pool = 800
model.hidden = 64
train.learning_rate = 0.1
train.batch_size = 16
train.local_epochs = 5
attack.k_shadows = 4
attack.eval_size = 270
attack.cadence = 60
attack.shadow_epochs = 40
";

#[test]
fn criterion_08_selection_trades_accuracy_for_privacy() {
    let dir = tempfile::tempdir().unwrap();
    let configs = variants(&config(WELL_SEPARATED), &[5], &SEEDS, &AggregationStrategy::ALL);
    let runs = sweep(&configs, dir.path());
    let mean = |strategy: AggregationStrategy, f: &dyn Fn(&RunResult) -> f64| {
        SEEDS.iter().map(|&s| f(find(&runs, 5, strategy, s))).sum::<f64>() / SEEDS.len() as f64
    };
    let test = |r: &RunResult| r.final_record().unwrap().test_accuracy;
    let mia = |r: &RunResult| r.final_mia.attack_accuracy;
    let fed_test = mean(AggregationStrategy::FedAvg, &test);
    let fed_mia = mean(AggregationStrategy::FedAvg, &mia);
    let mut pass = true;
    let mut best_drop = f64::NEG_INFINITY;
    let mut detail = vec![format!("fedavg test {fed_test:.3} mia {fed_mia:.3}")];
    for strategy in AggregationStrategy::ALL.into_iter().filter(|s| s.is_selection()) {
        let (t, m) = (mean(strategy, &test), mean(strategy, &mia));
        pass &= t <= fed_test + 0.005 && m <= fed_mia + 0.02;
        best_drop = best_drop.max(fed_mia - m);
        detail.push(format!("{strategy} test {t:.3} mia {m:.3}"));
    }
    pass &= best_drop >= 0.03;
    detail.push(format!("largest MIA drop {best_drop:.3}"));
    report(8, "selection schemes trade accuracy for privacy", pass, &detail.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_agreement_higher_on_members() {
    let runs = &fig1().runs;
    let mut pass = true;
    let mut detail = Vec::new();
    for &s in &SEEDS {
        let run = find(runs, 5, AggregationStrategy::FedAvg, s);
        let train = run.agreement_train.as_ref().unwrap().mean_agreement().unwrap();
        let test = run.agreement_test.as_ref().unwrap().mean_agreement().unwrap();
        pass &= train - test >= 0.05;
        detail.push(format!("seed {s}: {train:.3} vs {test:.3}"));
    }
    report(9, "client agreement shift (n=5)", pass, &detail.join(", "));
    assert!(pass);
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_correct_predictions_more_confident() {
    let runs = &fig1().runs;
    let mut pass = true;
    let mut compared = 0;
    let mut vacuous = 0;
    let mut min_margin = f64::INFINITY;
    for run in runs {
        for (correct, incorrect) in [
            (Population::TrainCorrect, Population::TrainIncorrect),
            (Population::TestCorrect, Population::TestIncorrect),
        ] {
            let c = run.confidence.population(correct).mean_confidence();
            let i = run.confidence.population(incorrect).mean_confidence();
            match (c, i) {
                (Some(c), Some(i)) => {
                    compared += 1;
                    min_margin = min_margin.min(c - i);
                    pass &= c > i;
                }
                _ => vacuous += 1,
            }
        }
    }
    pass &= compared > 0;
    report(
        10,
        "correct predictions more confident than incorrect",
        pass,
        &format!(
            "{compared} split comparisons over {} final models, smallest margin {min_margin:.3}; {vacuous} splits had no incorrect (or no correct) predictions",
            runs.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 11

fn rounds_csv_bytes(config: &ExperimentConfig, parallel: bool, dir: &Path) -> Vec<u8> {
    let options = RunOptions {
        parallel,
        output_dir: Some(dir.to_path_buf()),
    };
    let result = run_experiment_with(config, &options).unwrap();
    std::fs::read(dir.join(result.runs[0].config_hash()).join("rounds.csv")).unwrap()
}

#[test]
fn criterion_11_determinism() {
    let base = fig1();
    let mut checked = Vec::new();
    let mut pass = true;
    let mut selection = config(WELL_SEPARATED);
    selection.strategy = AggregationStrategy::CorrectConfident;
    selection.rounds = 20;
    let fig1_cfg = find(&base.runs, 5, AggregationStrategy::FedAvg, 0).config.clone();
    for cfg in [fig1_cfg, selection] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = tempfile::tempdir().unwrap();
        let on = rounds_csv_bytes(&cfg, true, a.path());
        let on_again = rounds_csv_bytes(&cfg, true, b.path());
        let off = rounds_csv_bytes(&cfg, false, c.path());
        pass &= on == on_again && on == off;
        checked.push(format!("{} ({} bytes)", cfg.strategy, on.len()));
    }
    let original = fig1().runs.iter().find(|r| r.config.n_clients == 5 && r.config.seed == 0).unwrap();
    let sweep_csv = fedmia::harness::rounds_csv(original.config_hash(), 5, &original.records);
    let rerun = {
        let d = tempfile::tempdir().unwrap();
        rounds_csv_bytes(&original.config, false, d.path())
    };
    pass &= sweep_csv.as_bytes() == rerun.as_slice();
    report(
        11,
        "byte-identical rounds.csv, parallel on and off",
        pass,
        &format!("{} plus the concurrent-sweep run vs a serial rerun", checked.join(", ")),
    );
    assert!(pass);
}
