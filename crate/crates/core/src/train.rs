//! The training loop and its instrumentation: per-epoch records (loss,
//! accuracy, activation parameters, weight increments), the convergence-area
//! metric, activation shape traces, and the finite-difference gradient
//! oracle the test suite leans on.
//!
//! Determinism contract: given equal (model init, data, config, PRNG state)
//! the emitted records are bitwise identical. The only stochastic input is
//! the per-epoch shuffle, drawn from the caller's PRNG; every reduction in
//! the pipeline runs in a fixed order.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{accuracy, cross_entropy_batch, predictions};
use crate::model::{Model, SiteInfo};
use crate::optim::{LrSchedule, Optimizer, OptimizerConfig};
use crate::tensor::{Rng, Tensor};

/// How far an activation scale may shrink before the run logs a warning:
/// `|a|` below this collapses the effective learning rate of the layer
/// upstream (it scales as `lr * a`), and `|b|` below it collapses the
/// output scale of the smooth kinds.
const SCALE_WARN_THRESHOLD: f64 = 1e-3;

/// Training-run settings. `schedule.total_epochs()` must cover `epochs`.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerConfig,
    /// Weight layers whose individual increments are tracked (by snapshot
    /// name, e.g. `dense0`). `None` picks the first, middle, and last.
    pub tracked_layers: Option<Vec<String>>,
    /// How many weights per tracked layer get their raw increment recorded.
    pub tracked_k: usize,
}

impl TrainConfig {
    pub fn new(
        epochs: usize,
        batch: usize,
        schedule: LrSchedule,
        optimizer: OptimizerConfig,
    ) -> Self {
        TrainConfig {
            epochs,
            batch,
            schedule,
            optimizer,
            tracked_layers: None,
            tracked_k: 4,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidArg("batch size must be positive".into()));
        }
        if self.epochs > self.schedule.total_epochs() {
            return Err(Error::Schedule(format!(
                "{} epochs requested but the schedule covers {}",
                self.epochs,
                self.schedule.total_epochs()
            )));
        }
        Ok(())
    }
}

/// Weight-increment statistics of one layer between two successive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDelta {
    pub layer: String,
    /// Mean of `|w_curr - w_prev|` over every weight in the layer.
    pub mean_abs: f64,
    /// Raw increments of the layer's first tracked weights (flat order);
    /// empty for untracked layers.
    pub tracked: Vec<f64>,
}

/// Everything recorded about one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's training samples.
    pub train_loss: f64,
    pub test_accuracy: f64,
    /// Learning rate used this epoch.
    pub lr: f64,
    /// Snapshot of every parameterized activation site.
    pub sites: Vec<SiteInfo>,
    /// Per weight-layer increments vs the previous epoch.
    pub deltas: Vec<LayerDelta>,
}

/// Compares two weight snapshots layer by layer. `tracked` names the layers
/// whose first `k` flat weights get raw increments recorded.
pub fn weight_increment(
    prev: &[(String, Tensor)],
    curr: &[(String, Tensor)],
    tracked: &[String],
    k: usize,
) -> Result<Vec<LayerDelta>> {
    if prev.len() != curr.len() {
        return Err(Error::Dim(format!(
            "snapshots hold {} vs {} layers",
            prev.len(),
            curr.len()
        )));
    }
    prev.iter()
        .zip(curr.iter())
        .map(|((pn, pt), (cn, ct))| {
            if pn != cn || pt.shape() != ct.shape() {
                return Err(Error::Dim(format!(
                    "snapshot layers disagree: {pn} {:?} vs {cn} {:?}",
                    pt.shape(),
                    ct.shape()
                )));
            }
            let sum_abs: f64 = pt
                .data()
                .iter()
                .zip(ct.data())
                .map(|(p, c)| (c - p).abs())
                .sum();
            let tracked_vals = if tracked.iter().any(|t| t == pn) {
                pt.data()
                    .iter()
                    .zip(ct.data())
                    .take(k)
                    .map(|(p, c)| c - p)
                    .collect()
            } else {
                Vec::new()
            };
            Ok(LayerDelta {
                layer: pn.clone(),
                mean_abs: sum_abs / pt.len() as f64,
                tracked: tracked_vals,
            })
        })
        .collect()
}

/// First, middle, and last entries of the weight-layer name list.
pub fn default_tracked_layers(snapshot: &[(String, Tensor)]) -> Vec<String> {
    let n = snapshot.len();
    if n == 0 {
        return Vec::new();
    }
    let mut picks = vec![0, n / 2, n - 1];
    picks.dedup();
    picks.into_iter().map(|i| snapshot[i].0.clone()).collect()
}

/// Runs `cfg.epochs` of mini-batch training, returning one record per epoch.
/// The model is updated in place. Any non-finite loss aborts with an error
/// naming the epoch and batch.
pub fn train(
    model: &mut Model,
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<RunRecord>> {
    train_with(model, train_ds, test_ds, cfg, rng, |_| Ok(()))
}

/// [`train`] with a per-epoch callback, invoked as soon as each record is
/// complete. Callers that persist records incrementally (e.g. CSV writers)
/// keep everything written so far when a later epoch diverges.
pub fn train_with(
    model: &mut Model,
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
    rng: &mut Rng,
    mut on_record: impl FnMut(&RunRecord) -> Result<()>,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    check_data(model, train_ds, "train")?;
    check_data(model, test_ds, "test")?;
    if train_ds.is_empty() || test_ds.is_empty() {
        return Err(Error::InvalidArg(
            "training needs non-empty train and test sets".into(),
        ));
    }

    let mut prev_snapshot = model.weight_snapshot();
    let tracked = match &cfg.tracked_layers {
        Some(names) => {
            for name in names {
                if !prev_snapshot.iter().any(|(n, _)| n == name) {
                    return Err(Error::InvalidArg(format!(
                        "tracked layer \"{name}\" not in model (have: {})",
                        prev_snapshot
                            .iter()
                            .map(|(n, _)| n.as_str())
                            .collect::<Vec<_>>()
                            .join(", ")
                    )));
                }
            }
            names.clone()
        }
        None => default_tracked_layers(&prev_snapshot),
    };

    let mut optimizer = Optimizer::new(cfg.optimizer)?;
    let n = train_ds.len();
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = cfg.schedule.rate_at(epoch - 1)?;
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let mut step = || -> Result<f64> {
                let batch = train_ds.gather(chunk)?;
                let logits = model.forward(batch.images())?;
                let (loss, dlogits) = cross_entropy_batch(&logits, batch.labels())?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("loss is {loss}")));
                }
                let grads = model.backward(&dlogits)?;
                optimizer.step(lr, &mut model.param_slices_mut(), &grads.as_slices())?;
                Ok(loss)
            };
            let loss = step().map_err(|e| {
                Error::Numeric(format!("training failed at epoch {epoch}, batch {bi}: {e}"))
            })?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / n as f64;

        let test_accuracy = evaluate(model, test_ds, cfg.batch)?;
        let sites = model.adaptive_sites();
        warn_on_collapsed_scales(epoch, &sites);
        let curr_snapshot = model.weight_snapshot();
        let deltas = weight_increment(&prev_snapshot, &curr_snapshot, &tracked, cfg.tracked_k)?;
        prev_snapshot = curr_snapshot;

        let record = RunRecord {
            epoch,
            train_loss,
            test_accuracy,
            lr,
            sites,
            deltas,
        };
        on_record(&record)?;
        records.push(record);
    }
    Ok(records)
}

/// Batched inference accuracy over a dataset.
pub fn evaluate(model: &Model, ds: &Dataset, batch: usize) -> Result<f64> {
    let indices: Vec<usize> = (0..ds.len()).collect();
    let mut preds = Vec::with_capacity(ds.len());
    for chunk in indices.chunks(batch.max(1)) {
        let part = ds.gather(chunk)?;
        let logits = model.infer(part.images())?;
        preds.extend(predictions(&logits)?);
    }
    accuracy(&preds, ds.labels())
}

fn check_data(model: &Model, ds: &Dataset, role: &str) -> Result<()> {
    let spec = model.spec();
    if ds.sample_shape() != spec.input_shape {
        return Err(Error::Dim(format!(
            "{role} data samples are {:?}, model expects {:?}",
            ds.sample_shape(),
            spec.input_shape
        )));
    }
    if ds.classes() != spec.classes {
        return Err(Error::Dim(format!(
            "{role} data has {} classes, model expects {}",
            ds.classes(),
            spec.classes
        )));
    }
    Ok(())
}

fn warn_on_collapsed_scales(epoch: usize, sites: &[SiteInfo]) {
    for s in sites {
        let [a, b, ..] = s.params;
        if a.abs() < SCALE_WARN_THRESHOLD {
            log::warn!(
                "epoch {epoch}: site {} has |a| = {:.3e}; the upstream effective \
                 learning rate (lr * a) has nearly collapsed",
                s.name,
                a.abs()
            );
        }
        if s.kind.is_adaptive()
            && s.kind != crate::activation::ActivationKind::AReLU
            && b.abs() < SCALE_WARN_THRESHOLD
        {
            log::warn!(
                "epoch {epoch}: site {} has |b| = {:.3e}; its output scale has \
                 nearly collapsed",
                s.name,
                b.abs()
            );
        }
    }
}

/// An ordered, finite `(epoch, loss)` curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurve {
    points: Vec<(f64, f64)>,
}

impl ConvergenceCurve {
    /// Epochs must be strictly increasing and losses finite.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidArg(format!(
                    "curve epochs not strictly increasing at {} -> {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(e, l)) = points
            .iter()
            .find(|(e, l)| !e.is_finite() || !l.is_finite())
        {
            return Err(Error::Numeric(format!(
                "curve point ({e}, {l}) is not finite"
            )));
        }
        Ok(ConvergenceCurve { points })
    }

    /// Builds the training-loss curve of a record stream.
    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        Self::new(
            records
                .iter()
                .map(|r| (r.epoch as f64, r.train_loss))
                .collect(),
        )
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Trapezoidal integral of loss over the epoch axis — the smaller the area,
/// the faster the convergence.
pub fn convergence_area(curve: &ConvergenceCurve) -> Result<f64> {
    let p = curve.points();
    if p.len() < 2 {
        return Err(Error::InvalidArg(format!(
            "convergence area needs at least 2 points, got {}",
            p.len()
        )));
    }
    Ok(p.windows(2)
        .map(|w| 0.5 * (w[1].1 + w[0].1) * (w[1].0 - w[0].0))
        .sum())
}

/// The default activation-trace grid: [-5, 5] in steps of 0.1 (101 points).
pub fn default_shape_grid() -> Vec<f64> {
    (0..101).map(|i| -5.0 + 0.1 * i as f64).collect()
}

/// Samples the transfer function of each *parameterized* activation site
/// (adaptive or PReLU) on `grid`. A model with only fixed activations yields
/// an empty list — not an error.
pub fn activation_shape_trace(model: &Model, grid: &[f64]) -> Result<Vec<crate::model::SiteTrace>> {
    Ok(model
        .shape_trace(grid)?
        .into_iter()
        .filter(|t| t.kind.learnable_param_count() > 0)
        .collect())
}

/// Central-difference gradient of `loss` at `params`: coordinate `i` gets
/// `(loss(p + h e_i) - loss(p - h e_i)) / 2h`. The loss must be pure.
pub fn finite_diff_grad(
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
    params: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArg(format!(
            "step h must be positive, got {h}"
        )));
    }
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let p0 = params[i];
        work[i] = p0 + h;
        let up = loss(&work)?;
        work[i] = p0 - h;
        let down = loss(&work)?;
        work[i] = p0;
        let g = (up - down) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::Numeric(format!(
                "finite difference at coordinate {i} is {g} (loss {up} / {down})"
            )));
        }
        grad.push(g);
    }
    Ok(grad)
}
