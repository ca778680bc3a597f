//! First-order optimizers and the piecewise-constant learning-rate schedule.
//!
//! Five update rules, all operating on flat parameter groups (a group is one
//! layer's weights, biases, or activation scalars):
//!
//! ```text
//! SGD:      w -= lr * g
//! Momentum: v = mu*v + g;               w -= lr * v
//! AdaGrad:  G += g^2;                   w -= lr * g / (sqrt(G) + eps)
//! AdaDelta: Eg = rho*Eg + (1-rho)*g^2
//!           delta = -sqrt(Ex + eps) / sqrt(Eg + eps) * g
//!           Ex = rho*Ex + (1-rho)*delta^2
//!           w += delta
//! Adam:     m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
//!           w -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
//! ```
//!
//! AdaDelta derives every step size from its own running statistics — it has
//! no learning-rate knob, so any scheduled rate is ignored (a notice is
//! logged once at construction). The others take `lr` from the schedule each
//! epoch.
//!
//! State buffers are allocated lazily on the first [`Optimizer::step`] and
//! from then on must always match the parameter group layout; a mismatch is a
//! contract violation, not a silent reallocation.

use crate::error::{Error, Result};

/// Which update rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    AdaGrad,
    AdaDelta,
    Adam,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::AdaGrad => "adagrad",
            OptimizerKind::AdaDelta => "adadelta",
            OptimizerKind::Adam => "adam",
        }
    }

    /// Parses the names accepted in configs (inverse of [`Self::name`]).
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sgd" => OptimizerKind::Sgd,
            "momentum" => OptimizerKind::Momentum,
            "adagrad" => OptimizerKind::AdaGrad,
            "adadelta" => OptimizerKind::AdaDelta,
            "adam" => OptimizerKind::Adam,
            other => {
                return Err(Error::InvalidArg(format!(
                    "unknown optimizer \"{other}\" (expected one of sgd, momentum, adagrad, \
                     adadelta, adam)"
                )))
            }
        })
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters; [`Default`] gives the standard values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Momentum coefficient (Momentum only).
    pub momentum: f64,
    /// Decay of both running averages (AdaDelta only).
    pub rho: f64,
    /// First/second moment decays (Adam only).
    pub beta1: f64,
    pub beta2: f64,
    /// Denominator fuzz for the adaptive rules.
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            momentum: 0.9,
            rho: 0.95,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::InvalidArg(format!(
                    "optimizer {name} must lie in [0, 1), got {v}"
                )));
            }
            Ok(())
        };
        unit("momentum", self.momentum)?;
        unit("rho", self.rho)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidArg(format!(
                "optimizer eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant learning-rate schedule: a list of `(epochs, rate)`
/// stages covering the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    stages: Vec<(usize, f64)>,
}

impl LrSchedule {
    /// Builds a schedule from explicit stages. Every stage must have a
    /// positive span and a positive, finite rate.
    pub fn new(stages: Vec<(usize, f64)>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Schedule("schedule has no stages".into()));
        }
        for (i, &(span, rate)) in stages.iter().enumerate() {
            if span == 0 {
                return Err(Error::Schedule(format!("stage {i} has zero epochs")));
            }
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::Schedule(format!(
                    "stage {i} rate {rate} must be positive and finite"
                )));
            }
        }
        Ok(Self { stages })
    }

    /// One rate for the whole run.
    pub fn constant(epochs: usize, rate: f64) -> Result<Self> {
        Self::new(vec![(epochs, rate)])
    }

    /// The default three-stage decay: rate 1e-3 until epoch `n/3`, 1e-4
    /// until `2n/3`, then 1e-5 (integer-division boundaries). Stages that
    /// round to zero epochs are dropped.
    pub fn thirds(epochs: usize) -> Result<Self> {
        if epochs == 0 {
            return Err(Error::Schedule(
                "schedule must cover at least one epoch".into(),
            ));
        }
        let b1 = epochs / 3;
        let b2 = 2 * epochs / 3;
        let spans = [(b1, 1e-3), (b2 - b1, 1e-4), (epochs - b2, 1e-5)];
        Self::new(spans.into_iter().filter(|&(n, _)| n > 0).collect())
    }

    /// Total number of epochs the schedule covers.
    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|&(n, _)| n).sum()
    }

    /// Rate in force at `epoch` (0-based). Asking past the end is an error:
    /// the schedule defines the run length, so an out-of-range epoch means
    /// the caller's loop and config disagree.
    pub fn rate_at(&self, epoch: usize) -> Result<f64> {
        let mut start = 0;
        for &(span, rate) in &self.stages {
            if epoch < start + span {
                return Ok(rate);
            }
            start += span;
        }
        Err(Error::Schedule(format!(
            "epoch {epoch} is outside the schedule ({} epochs)",
            self.total_epochs()
        )))
    }

    pub fn stages(&self) -> &[(usize, f64)] {
        &self.stages
    }
}

/// Per-group optimizer state. Which vectors are in use depends on the kind;
/// unused ones stay empty.
#[derive(Debug, Clone)]
struct Slot {
    /// Momentum velocity / AdaDelta update average / Adam first moment.
    first: Vec<f64>,
    /// AdaGrad sum / AdaDelta gradient average / Adam second moment.
    second: Vec<f64>,
}

/// A stateful optimizer instance. One per training run.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    slots: Option<Vec<Slot>>,
    /// Completed steps (drives Adam's bias correction).
    t: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind == OptimizerKind::AdaDelta {
            log::info!(
                "adadelta derives step sizes from gradient statistics; provided learning \
                 rates are ignored"
            );
        }
        Ok(Self {
            cfg,
            slots: None,
            t: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.cfg.kind
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Applies one update to every parameter group.
    ///
    /// `params[i]` and `grads[i]` must have identical lengths, and the group
    /// layout must not change between steps (state buffers are keyed to it).
    /// Gradients must be finite; `lr` must be finite and non-negative.
    pub fn step(&mut self, lr: f64, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidArg(format!(
                "learning rate {lr} must be finite and non-negative"
            )));
        }
        if params.len() != grads.len() {
            return Err(Error::Dim(format!(
                "{} parameter groups vs {} gradient groups",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
            if p.len() != g.len() {
                return Err(Error::Dim(format!(
                    "group {i}: {} parameters vs {} gradients",
                    p.len(),
                    g.len()
                )));
            }
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "group {i} contains non-finite gradient {bad}"
                )));
            }
        }

        let kind = self.cfg.kind;
        let slots = self.slots.get_or_insert_with(|| {
            params
                .iter()
                .map(|p| {
                    let (first, second) = match kind {
                        OptimizerKind::Sgd => (0, 0),
                        OptimizerKind::Momentum => (p.len(), 0),
                        OptimizerKind::AdaGrad => (0, p.len()),
                        OptimizerKind::AdaDelta | OptimizerKind::Adam => (p.len(), p.len()),
                    };
                    Slot {
                        first: vec![0.0; first],
                        second: vec![0.0; second],
                    }
                })
                .collect()
        });
        if slots.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer was initialized with {} parameter groups, now given {}",
                slots.len(),
                params.len()
            )));
        }
        for (i, (slot, p)) in slots.iter().zip(params.iter()).enumerate() {
            let expect = slot.first.len().max(slot.second.len());
            if kind != OptimizerKind::Sgd && expect != p.len() {
                return Err(Error::Contract(format!(
                    "group {i} changed size: state has {expect} entries, parameters {}",
                    p.len()
                )));
            }
        }

        self.t += 1;
        let cfg = &self.cfg;
        for (slot, (p, g)) in slots.iter_mut().zip(params.iter_mut().zip(grads.iter())) {
            match kind {
                OptimizerKind::Sgd => {
                    for (w, &gi) in p.iter_mut().zip(g.iter()) {
                        *w -= lr * gi;
                    }
                }
                OptimizerKind::Momentum => {
                    for ((w, v), &gi) in p.iter_mut().zip(slot.first.iter_mut()).zip(g.iter()) {
                        *v = cfg.momentum * *v + gi;
                        *w -= lr * *v;
                    }
                }
                OptimizerKind::AdaGrad => {
                    for ((w, acc), &gi) in p.iter_mut().zip(slot.second.iter_mut()).zip(g.iter()) {
                        *acc += gi * gi;
                        *w -= lr * gi / (acc.sqrt() + cfg.eps);
                    }
                }
                OptimizerKind::AdaDelta => {
                    for (((w, eg), ex), &gi) in p
                        .iter_mut()
                        .zip(slot.second.iter_mut())
                        .zip(slot.first.iter_mut())
                        .zip(g.iter())
                    {
                        *eg = cfg.rho * *eg + (1.0 - cfg.rho) * gi * gi;
                        let delta = -((*ex + cfg.eps).sqrt() / (*eg + cfg.eps).sqrt()) * gi;
                        *ex = cfg.rho * *ex + (1.0 - cfg.rho) * delta * delta;
                        *w += delta;
                    }
                }
                OptimizerKind::Adam => {
                    let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
                    let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
                    for (((w, m), v), &gi) in p
                        .iter_mut()
                        .zip(slot.first.iter_mut())
                        .zip(slot.second.iter_mut())
                        .zip(g.iter())
                    {
                        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
                        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
                        let mh = *m / bc1;
                        let vh = *v / bc2;
                        *w -= lr * mh / (vh.sqrt() + cfg.eps);
                    }
                }
            }
        }
        for (i, p) in params.iter().enumerate() {
            if let Some(bad) = p.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "group {i} contains non-finite parameter {bad} after update"
                )));
            }
        }
        Ok(())
    }

    /// Completed update steps.
    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}
