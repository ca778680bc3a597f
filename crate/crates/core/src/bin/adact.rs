//! Command-line front end: train runs from TOML configs, check gradients,
//! compare finished runs, dump activation shapes, and generate synthetic
//! datasets.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use adact::config::parse_config;
use adact::data::synth_cifar10_bytes;
use adact::experiment::{
    compare, format_compare_table, run_experiment, shapes_from_checkpoint, CompareMetric,
};
use adact::gradcheck::standard_suite;
use adact::tensor::Rng;
use adact::Error;

#[derive(Parser)]
#[command(
    name = "adact",
    version,
    about = "Train and analyze small networks with adaptive activation functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training experiment from a TOML config.
    Train {
        /// Experiment description (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Check analytic gradients against finite differences across every
    /// model preset and activation kind.
    Gradcheck {
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Rank finished run directories by a metric.
    Compare {
        /// "area" (loss-curve area, lower is better) or "final_acc".
        #[arg(long, default_value = "area")]
        metric: String,
        /// Run directories (at least two).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Print the activation shapes stored in a checkpoint as CSV.
    Shapes {
        /// Checkpoint written by a training run.
        checkpoint: PathBuf,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic 10-class image dataset in CIFAR-10 binary
    /// layout (3073-byte records).
    GenData {
        /// Number of records.
        #[arg(long, default_value_t = 6000)]
        n: usize,
        /// Generator seed.
        #[arg(long)]
        seed: u64,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

/// Wraps an I/O error with the path it concerns; bare `io::Error`s name
/// neither file nor operation, which makes CLI failures unactionable.
fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    }
}

/// Writes an output file, creating missing parent directories first so users
/// can point `--out` at fresh paths.
fn write_output(path: &Path, contents: impl AsRef<[u8]>) -> adact::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(with_path(parent))?;
    }
    fs::write(path, contents).map_err(with_path(path))
}

fn run(cli: Cli) -> adact::Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            epochs,
        } => {
            let text = fs::read_to_string(&config).map_err(with_path(&config))?;
            let mut cfg = parse_config(&text)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(epochs) = epochs {
                cfg.epochs = epochs;
            }
            let summary = run_experiment(&cfg)?;
            println!("run_dir={}", summary.run_dir.display());
            println!("final_accuracy={}", summary.final_accuracy);
            if let Some(area) = summary.convergence_area {
                println!("convergence_area={area}");
            }
        }
        Command::Gradcheck { tolerance } => {
            let suite = standard_suite()?;
            for check in &suite.checks {
                println!(
                    "{}: max rel err {:.3e} over {} coords ({} skipped)",
                    check.label, check.max_rel_err, check.coords, check.skipped
                );
            }
            println!(
                "overall: max rel err {:.3e} over {} coords in {} configs ({} skipped)",
                suite.max_rel_err,
                suite.total_coords,
                suite.configs(),
                suite.total_skipped
            );
            if suite.max_rel_err > tolerance {
                return Err(Error::Numeric(format!(
                    "max relative error {:.3e} exceeds tolerance {tolerance:.3e}",
                    suite.max_rel_err
                )));
            }
        }
        Command::Compare { metric, runs } => {
            let rows = compare(&runs, CompareMetric::parse(&metric)?)?;
            print!("{}", format_compare_table(&rows));
        }
        Command::Shapes { checkpoint, out } => {
            let csv = shapes_from_checkpoint(&checkpoint)?;
            match out {
                Some(path) => write_output(&path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::GenData { n, seed, out } => {
            let bytes = synth_cifar10_bytes(n, &mut Rng::new(seed));
            write_output(&out, &bytes)?;
            println!(
                "wrote {n} records ({} bytes) to {}",
                bytes.len(),
                out.display()
            );
        }
    }
    Ok(())
}
