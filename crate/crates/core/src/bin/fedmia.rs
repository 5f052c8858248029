use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedmia::data::{generate_synthetic, write_csv};
use fedmia::harness::{
    atomic_write, load_config, load_results, run_experiment_with, run_sweep_with, write_report, ConfigError,
    RunOptions,
};
use fedmia::Error;

#[derive(Parser)]
#[command(name = "fedmia", version, about = "Federated learning runs with membership-inference auditing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        /// Train clients on one thread.
        #[arg(long)]
        serial: bool,
        /// Override the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every `*.cfg` in a directory and write the report.
    Sweep {
        config_dir: PathBuf,
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate summary.json and figure CSVs from a result directory.
    Report { result_dir: PathBuf },
    /// Write a Gaussian-blob dataset as CSV.
    Synth {
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        features: usize,
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        sep: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_paths(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let unreadable = |e: std::io::Error| {
        Error::from(ConfigError::Unreadable {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })
    };
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(unreadable)? {
        let path = entry.map_err(unreadable)?.path();
        if path.extension().is_some_and(|e| e == "cfg") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(ConfigError::Incompatible(format!("no .cfg files in {}", dir.display())).into());
    }
    Ok(paths)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, serial, out } => {
            let cfg = load_config(&config)?;
            let options = RunOptions {
                parallel: !serial,
                output_dir: out,
            };
            let result = run_experiment_with(&cfg, &options)?;
            let dir = options.output_dir.unwrap_or(cfg.output_dir).join(result.runs[0].config_hash());
            println!("{}", dir.display());
        }
        Command::Sweep { config_dir, serial, out } => {
            let configs = config_paths(&config_dir)?
                .iter()
                .map(|p| load_config(p).map_err(|e| Error::from(e).context(p.display().to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let options = RunOptions {
                parallel: !serial,
                output_dir: out,
            };
            let result = run_sweep_with(&configs, &options)?;
            let dir = options.output_dir.unwrap_or_else(|| configs[0].output_dir.clone());
            write_report(&result, &dir)?;
            println!("{}", dir.display());
        }
        Command::Report { result_dir } => {
            let result = load_results(&result_dir)?;
            write_report(&result, &result_dir)?;
        }
        Command::Synth {
            samples,
            features,
            classes,
            sep,
            seed,
            out,
        } => {
            let data = generate_synthetic(samples, features, classes, sep, seed)?;
            atomic_write(&out, write_csv(&data).as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
