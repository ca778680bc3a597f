//! Experiment orchestration: takes a resolved [`ExperimentConfig`], produces
//! a self-describing run directory, and compares finished runs.
//!
//! A run directory contains:
//!
//! * `config.toml` — the resolved configuration, echoed before training
//!   starts so even a crashed run is reproducible;
//! * `run.csv` — one row per epoch: `epoch,loss,acc,lr`, then the
//!   `(a, b, c, d)` of every parameterized activation site;
//! * `deltas.csv` — one row per weight layer per epoch: mean absolute
//!   weight increment plus the raw increments of the first tracked weights;
//! * `shapes.csv` — `(z, f(z))` samples of each parameterized activation
//!   after training;
//! * `model.ckpt` — the trained model;
//! * `summary.txt` — final accuracy and convergence area as `key=value`
//!   lines.
//!
//! CSV rows are appended and flushed as each epoch completes, so a run that
//! diverges at epoch `k` still leaves `k - 1` complete rows behind. Floats
//! are written with the shortest round-trip formatting, which makes outputs
//! byte-identical across runs of the same configuration.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::data::{self, Dataset};
use crate::error::{io_at, Error, Result};
use crate::model::{Model, ModelSpec};
use crate::tensor::Rng;
use crate::train::{
    self, activation_shape_trace, convergence_area, default_shape_grid, ConvergenceCurve,
    RunRecord, TrainConfig,
};

/// What a finished (or attempted) run reports back.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub final_accuracy: f64,
    /// Trapezoid area under the `(epoch, train loss)` curve; `None` for
    /// single-epoch runs, where no curve exists.
    pub convergence_area: Option<f64>,
    pub records: Vec<RunRecord>,
}

/// Loads or generates the configured dataset and splits it into train/test.
pub fn load_dataset(cfg: &ExperimentConfig, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    let full = match &cfg.dataset {
        DatasetConfig::Synthetic { kind, train, test } => {
            data::make_synthetic(kind, train + test, rng)?
        }
        DatasetConfig::Cifar10 { paths, .. } => data::load_cifar10_bin(paths)?,
        DatasetConfig::Idx { images, labels, .. } => data::load_idx(images, labels)?,
    };
    data::subset(
        &full,
        cfg.dataset.train_size(),
        cfg.dataset.test_size(),
        rng,
    )
}

/// Builds the configured model for a dataset's shape and class count.
pub fn build_model(cfg: &ExperimentConfig, train_ds: &Dataset, rng: &mut Rng) -> Result<Model> {
    let mut spec = ModelSpec::preset(
        &cfg.preset,
        train_ds.sample_shape(),
        train_ds.classes(),
        cfg.activation,
    )?;
    spec.freeze_activation = cfg.freeze_activation;
    Model::init(&spec, rng)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Renders `shapes.csv` content (`layer,z,f_z`) for a model's parameterized
/// activation sites.
pub fn shapes_csv(model: &Model, grid: &[f64]) -> Result<String> {
    let mut out = String::from("layer,z,f_z\n");
    for trace in activation_shape_trace(model, grid)? {
        for (z, fz) in &trace.samples {
            out.push_str(&format!("{},{},{}\n", trace.name, fmt(*z), fmt(*fz)));
        }
    }
    Ok(out)
}

/// Runs one experiment end to end, writing the run directory described in
/// the module docs. Training failures (e.g. divergence) propagate as errors
/// *after* all completed epochs have been flushed to disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidArg("a run needs at least one epoch".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let (train_ds, test_ds) = load_dataset(cfg, &mut rng)?;
    let mut model = build_model(cfg, &train_ds, &mut rng)?;
    let census = model.census();
    log::info!(
        "run {}: {} train / {} test samples, {} weights + {} activation params",
        cfg.out.display(),
        train_ds.len(),
        test_ds.len(),
        census.weights,
        census.activation
    );

    let schedule = cfg.schedule.resolve(cfg.epochs)?;
    let mut tcfg = TrainConfig::new(cfg.epochs, cfg.batch, schedule, cfg.optimizer);
    tcfg.tracked_layers = cfg.tracked_layers.clone();
    tcfg.tracked_k = cfg.tracked_k;

    fs::create_dir_all(&cfg.out).map_err(|e| io_at(&cfg.out, e))?;
    let echo_path = cfg.out.join("config.toml");
    fs::write(&echo_path, cfg.to_toml()).map_err(|e| io_at(&echo_path, e))?;

    let run_csv_path = cfg.out.join("run.csv");
    let mut run_csv = File::create(&run_csv_path).map_err(|e| io_at(&run_csv_path, e))?;
    let mut header = String::from("epoch,loss,acc,lr");
    for site in model.adaptive_sites() {
        for p in ["a", "b", "c", "d"] {
            header.push_str(&format!(",{}_{p}", site.name));
        }
    }
    writeln!(run_csv, "{header}")?;
    run_csv.flush()?;

    let deltas_csv_path = cfg.out.join("deltas.csv");
    let mut deltas_csv = File::create(&deltas_csv_path).map_err(|e| io_at(&deltas_csv_path, e))?;
    let mut dheader = String::from("epoch,layer,mean_abs_dw");
    for i in 0..cfg.tracked_k {
        dheader.push_str(&format!(",dw{i}"));
    }
    writeln!(deltas_csv, "{dheader}")?;
    deltas_csv.flush()?;

    let train_result =
        train::train_with(&mut model, &train_ds, &test_ds, &tcfg, &mut rng, |record| {
            let mut row = format!(
                "{},{},{},{}",
                record.epoch,
                fmt(record.train_loss),
                fmt(record.test_accuracy),
                fmt(record.lr)
            );
            for site in &record.sites {
                for p in site.params {
                    row.push_str(&format!(",{}", fmt(p)));
                }
            }
            writeln!(run_csv, "{row}")?;
            run_csv.flush()?;

            for delta in &record.deltas {
                let mut drow = format!("{},{},{}", record.epoch, delta.layer, fmt(delta.mean_abs));
                for i in 0..cfg.tracked_k {
                    drow.push(',');
                    if let Some(v) = delta.tracked.get(i) {
                        drow.push_str(&fmt(*v));
                    }
                }
                writeln!(deltas_csv, "{drow}")?;
            }
            deltas_csv.flush()?;
            Ok(())
        });
    let records = train_result?;

    let shapes_path = cfg.out.join("shapes.csv");
    fs::write(&shapes_path, shapes_csv(&model, &default_shape_grid())?)
        .map_err(|e| io_at(&shapes_path, e))?;
    model.save(&cfg.out.join("model.ckpt"), cfg.seed)?;

    let final_accuracy = records
        .last()
        .map(|r| r.test_accuracy)
        .expect("epochs >= 1 checked above");
    let area = if records.len() >= 2 {
        Some(convergence_area(&ConvergenceCurve::from_records(
            &records,
        )?)?)
    } else {
        None
    };

    let mut summary = format!("final_accuracy={}\n", fmt(final_accuracy));
    if let Some(a) = area {
        summary.push_str(&format!("convergence_area={}\n", fmt(a)));
    }
    summary.push_str(&format!("epochs={}\n", records.len()));
    let summary_path = cfg.out.join("summary.txt");
    fs::write(&summary_path, &summary).map_err(|e| io_at(&summary_path, e))?;
    log::info!(
        "run {} finished: final accuracy {final_accuracy:.4}, convergence area {}",
        cfg.out.display(),
        area.map_or("n/a".to_string(), |a| format!("{a:.4}"))
    );

    Ok(RunSummary {
        run_dir: cfg.out.clone(),
        final_accuracy,
        convergence_area: area,
        records,
    })
}

/// What [`compare`] ranks runs by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareMetric {
    /// Area under the training-loss curve; lower converges faster.
    Area,
    /// Test accuracy at the last epoch; higher is better.
    FinalAcc,
}

impl CompareMetric {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "area" => Ok(CompareMetric::Area),
            "final_acc" => Ok(CompareMetric::FinalAcc),
            other => Err(Error::Compare(format!(
                "unknown metric \"{other}\" (expected area or final_acc)"
            ))),
        }
    }
}

/// One run's standing in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub name: String,
    pub area: Option<f64>,
    pub final_accuracy: f64,
    pub epochs: usize,
}

fn parse_run_csv(text: &str, name: &str) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Compare(format!("{name}: run.csv is empty")))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[..4] != ["epoch", "loss", "acc", "lr"] {
        return Err(Error::Compare(format!(
            "{name}: run.csv header must start with epoch,loss,acc,lr (got \"{header}\")"
        )));
    }
    let mut epochs = Vec::new();
    let mut losses = Vec::new();
    let mut accs = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Compare(format!(
                "{name}: row {} has {} fields, header has {}",
                i + 1,
                fields.len(),
                cols.len()
            )));
        }
        let bad = |what: &str, v: &str| {
            Error::Compare(format!("{name}: row {} has a bad {what} \"{v}\"", i + 1))
        };
        epochs.push(
            fields[0]
                .parse::<usize>()
                .map_err(|_| bad("epoch", fields[0]))?,
        );
        losses.push(
            fields[1]
                .parse::<f64>()
                .map_err(|_| bad("loss", fields[1]))?,
        );
        accs.push(
            fields[2]
                .parse::<f64>()
                .map_err(|_| bad("acc", fields[2]))?,
        );
    }
    Ok((epochs, losses, accs))
}

/// Reads each run directory's `run.csv` and ranks them by `metric` — area
/// ascending, final accuracy descending — with ties broken by run name.
/// Runs must cover the same epochs; anything else is a comparison error.
pub fn compare(run_dirs: &[PathBuf], metric: CompareMetric) -> Result<Vec<CompareRow>> {
    if run_dirs.len() < 2 {
        return Err(Error::Compare(format!(
            "need at least two run directories, got {}",
            run_dirs.len()
        )));
    }
    let mut parsed = Vec::new();
    for dir in run_dirs {
        let name = dir.display().to_string();
        let path = dir.join("run.csv");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Compare(format!("{name}: cannot read run.csv: {e}")))?;
        let (epochs, losses, accs) = parse_run_csv(&text, &name)?;
        if epochs.is_empty() {
            return Err(Error::Compare(format!("{name}: run.csv has no epochs")));
        }
        parsed.push((name, epochs, losses, accs));
    }

    let reference = &parsed[0].1;
    for (name, epochs, _, _) in &parsed[1..] {
        if epochs != reference {
            return Err(Error::Compare(format!(
                "epoch ranges differ: {} covers {} epochs, {} covers {}",
                parsed[0].0,
                reference.len(),
                name,
                epochs.len()
            )));
        }
    }
    if metric == CompareMetric::Area && reference.len() < 2 {
        return Err(Error::Compare(
            "area needs at least two epochs per run".into(),
        ));
    }

    let mut rows: Vec<CompareRow> = parsed
        .into_iter()
        .map(|(name, epochs, losses, accs)| {
            let area = if epochs.len() >= 2 {
                let points = epochs
                    .iter()
                    .zip(&losses)
                    .map(|(&e, &l)| (e as f64, l))
                    .collect();
                Some(convergence_area(&ConvergenceCurve::new(points)?)?)
            } else {
                None
            };
            Ok(CompareRow {
                name,
                area,
                final_accuracy: *accs.last().expect("non-empty checked above"),
                epochs: epochs.len(),
            })
        })
        .collect::<Result<_>>()?;

    rows.sort_by(|x, y| {
        let primary = match metric {
            CompareMetric::Area => x
                .area
                .unwrap_or(f64::INFINITY)
                .total_cmp(&y.area.unwrap_or(f64::INFINITY)),
            CompareMetric::FinalAcc => y.final_accuracy.total_cmp(&x.final_accuracy),
        };
        primary.then_with(|| x.name.cmp(&y.name))
    });
    Ok(rows)
}

/// Renders compare results as an aligned text table.
pub fn format_compare_table(rows: &[CompareRow]) -> String {
    let name_w = rows
        .iter()
        .map(|r| r.name.len())
        .chain(std::iter::once("run".len()))
        .max()
        .unwrap_or(3);
    let mut out = format!("{:<name_w$}  {:>14}  {:>10}\n", "run", "area", "final_acc");
    for r in rows {
        let area = r.area.map_or("n/a".to_string(), |a| format!("{a:.6}"));
        out.push_str(&format!(
            "{:<name_w$}  {:>14}  {:>10.6}\n",
            r.name, area, r.final_accuracy
        ));
    }
    out
}

/// Reads a checkpoint and renders its activation shapes as CSV.
pub fn shapes_from_checkpoint(path: &Path) -> Result<String> {
    let (model, _seed) = Model::load(path)?;
    shapes_csv(&model, &default_shape_grid())
}
