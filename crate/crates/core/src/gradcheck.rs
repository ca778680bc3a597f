//! Whole-model gradient verification: analytic backpropagation vs central
//! finite differences over seeded random configurations of every preset and
//! activation kind.
//!
//! Piecewise-linear kinds (ReLU family) and max pooling make finite
//! differences invalid near their branch boundaries. Two measures keep the
//! check sound without weakening it:
//!
//! - Configs are drawn best-of-N by max-pool tie margin, so pooling argmaxes
//!   are stable under the probe step.
//! - Every coordinate is probed at both `h` and `h/2`. Away from kinks the
//!   two central differences agree to O(h^2); a crossed kink makes them
//!   disagree loudly, and the coordinate is excluded as polluted. The
//!   exclusion budget is capped, and configs that cannot contain kinks
//!   (smooth activations, no pooling) must exclude nothing. A wrong analytic
//!   gradient cannot hide behind this: both probes agree with each other and
//!   still expose it.
//!
//! Within each parameter group, probed coordinates are an evenly spread,
//! endpoint-including sample — every group (weights, biases, activation
//! scalars) of every layer is always represented.
//!
//! Activation parameters are drawn randomly per configuration rather than
//! left at their defaults. Besides widening coverage, this is load-bearing:
//! the piecewise-linear default (1, 0, 0, 0) maps every negative
//! preactivation to exactly 0, filling pool windows with exact ties whose
//! resolution flips between the two probe directions — a kink at the base
//! point itself, invisible to the h-vs-h/2 consistency test. Random scales
//! make such ties measure-zero. (The default-parameter degeneracies have
//! their own dedicated exact-equality tests elsewhere.)

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::loss::cross_entropy_batch;
use crate::model::{Model, ModelSpec};
use crate::tensor::{Rng, Tensor};

/// One gradient-check configuration: a model spec plus probe settings.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub spec: ModelSpec,
    pub batch: usize,
    pub seed: u64,
    /// Central-difference step (criterion value: 1e-4).
    pub h: f64,
    /// Max allowed relative error (criterion value: 1e-4).
    pub tolerance: f64,
    /// At most this many probed coordinates per parameter group.
    pub max_coords_per_group: usize,
}

/// Result of checking one configuration.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub label: String,
    /// Coordinates compared against the analytic gradient.
    pub coords: usize,
    /// Coordinates excluded as kink-polluted (h vs h/2 disagreement).
    pub skipped: usize,
    pub max_rel_err: f64,
    /// Where the worst error sat, e.g. `group 3 (bias) coord 17`.
    pub worst: String,
}

/// Aggregate over a suite of configurations.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub checks: Vec<CheckOutcome>,
    pub max_rel_err: f64,
    pub total_coords: usize,
    pub total_skipped: usize,
}

impl SuiteOutcome {
    pub fn configs(&self) -> usize {
        self.checks.len()
    }
}

/// Smallest max-pool win margin anywhere in the net for input `x`
/// (`f64::INFINITY` when nothing pools). A small margin means a pooling
/// argmax could flip under perturbation.
fn pool_margin(layers: &[Layer], x: &Tensor) -> Result<(f64, Tensor)> {
    let mut margin = f64::INFINITY;
    let mut cur = x.clone();
    for layer in layers {
        if let Layer::Residual(r) = layer {
            let (m, _) = pool_margin(&r.body, &cur)?;
            margin = margin.min(m);
        } else if let Layer::MaxPool(_) = layer {
            let s = cur.shape();
            let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
            let data = cur.data();
            for bi in 0..b {
                for ci in 0..c {
                    let plane = &data[(bi * c + ci) * h * w..];
                    for i in 0..h / 2 {
                        for j in 0..w / 2 {
                            let vals = [
                                plane[2 * i * w + 2 * j],
                                plane[2 * i * w + 2 * j + 1],
                                plane[(2 * i + 1) * w + 2 * j],
                                plane[(2 * i + 1) * w + 2 * j + 1],
                            ];
                            let mut top = f64::NEG_INFINITY;
                            let mut second = f64::NEG_INFINITY;
                            for v in vals {
                                if v > top {
                                    second = top;
                                    top = v;
                                } else if v > second {
                                    second = v;
                                }
                            }
                            margin = margin.min(top - second);
                        }
                    }
                }
            }
        }
        cur = layer.infer(&cur)?;
    }
    Ok((margin, cur))
}

/// Replaces every activation-parameter group with seeded draws: scales near
/// but off 1, shifts near but off 0 (second slope of the two-branch kind
/// kept small and positive, mimicking its regime without exact ties).
fn randomize_activation_params(
    model: &mut Model,
    kind: ActivationKind,
    rng: &mut Rng,
) -> Result<()> {
    let descs = model.param_descs();
    for (g, d) in descs.iter().enumerate() {
        if d.role != crate::layers::ParamRole::Activation {
            continue;
        }
        let vals: Vec<f64> = match d.len {
            4 => {
                let second_slope = if kind == ActivationKind::AReLU {
                    rng.uniform(0.05, 0.5)?
                } else {
                    rng.uniform(0.7, 1.3)?
                };
                vec![
                    rng.uniform(0.7, 1.3)?,
                    second_slope,
                    rng.uniform(-0.3, 0.3)?,
                    rng.uniform(-0.3, 0.3)?,
                ]
            }
            1 => vec![rng.uniform(0.1, 0.4)?],
            other => {
                return Err(Error::Contract(format!(
                    "activation group of unexpected size {other}"
                )))
            }
        };
        model.param_slices_mut()[g].copy_from_slice(&vals);
    }
    Ok(())
}

/// Evenly spread sample of `count` coordinates from `0..len`, always
/// including both endpoints.
fn spread_indices(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..count).map(|j| j * len / count).collect();
    idx.push(len - 1);
    idx.dedup();
    idx
}

/// Can this configuration contain any derivative kink?
fn may_have_kinks(spec: &ModelSpec) -> bool {
    fn pools(layers: &[crate::model::LayerDesc]) -> bool {
        layers.iter().any(|l| match l {
            crate::model::LayerDesc::MaxPool2 => true,
            crate::model::LayerDesc::Residual { body } => pools(body),
            _ => false,
        })
    }
    let kinked_kind = matches!(
        spec.activation,
        ActivationKind::ReLU
            | ActivationKind::LReLU { .. }
            | ActivationKind::PReLU
            | ActivationKind::AReLU
    );
    kinked_kind || pools(&spec.layers)
}

/// Checks one configuration: builds a seeded model and batch, backpropagates
/// once, then probes sampled coordinates of every parameter group with
/// central differences at `h` and `h/2`.
pub fn check_model(cfg: &CheckConfig) -> Result<CheckOutcome> {
    cfg.spec.validate()?;
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !positive(cfg.h)
        || !positive(cfg.tolerance)
        || cfg.batch == 0
        || cfg.max_coords_per_group == 0
    {
        return Err(Error::InvalidArg(
            "gradient check needs positive h, tolerance, batch, and coordinate budget".into(),
        ));
    }

    // Draw candidate (model, batch) pairs; keep the one with the widest
    // pooling margin so probe steps cannot flip an argmax.
    let mut best: Option<(Model, Tensor, Vec<usize>, f64)> = None;
    for attempt in 0..16u64 {
        let mut rng = Rng::new(cfg.seed.wrapping_mul(1000).wrapping_add(attempt));
        let mut model = Model::init(&cfg.spec, &mut rng)?;
        randomize_activation_params(&mut model, cfg.spec.activation, &mut rng)?;
        let mut shape = vec![cfg.batch];
        shape.extend(cfg.spec.input_shape.iter());
        let x = rng.rand_uniform(shape, -1.0, 1.0)?;
        let labels: Vec<usize> = (0..cfg.batch)
            .map(|_| rng.gen_range(cfg.spec.classes))
            .collect();
        let (margin, _) = pool_margin(model.layers(), &x)?;
        let better = match &best {
            Some((.., m)) => margin > *m,
            None => true,
        };
        if better {
            let done = margin > 1e-2; // comfortably clear; stop early
            best = Some((model, x, labels, margin));
            if done {
                break;
            }
        }
    }
    let (mut model, x, labels, _) = best.expect("at least one candidate");

    let label = format!("{}/{}/seed{}", cfg.spec.name, cfg.spec.activation, cfg.seed);
    let loss_of = |model: &Model| -> Result<f64> {
        let logits = model.infer(&x)?;
        Ok(cross_entropy_batch(&logits, &labels)?.0)
    };

    // Analytic gradients from one training-mode pass.
    let logits = model.forward(&x)?;
    let (_, dlogits) = cross_entropy_batch(&logits, &labels)?;
    let analytic = model.backward(&dlogits)?;
    let descs = model.param_descs();

    let mut coords = 0usize;
    let mut skipped = 0usize;
    let mut max_rel_err = 0.0f64;
    let mut worst = String::from("none");

    for (g, desc) in descs.iter().enumerate() {
        let picks = spread_indices(desc.len, cfg.max_coords_per_group);
        for i in picks {
            let base = model.param_slices_mut()[g][i];
            let mut fd_at = |step: f64| -> Result<f64> {
                model.param_slices_mut()[g][i] = base + step;
                let up = loss_of(&model)?;
                model.param_slices_mut()[g][i] = base - step;
                let down = loss_of(&model)?;
                model.param_slices_mut()[g][i] = base;
                Ok((up - down) / (2.0 * step))
            };
            let fd1 = fd_at(cfg.h)?;
            let fd2 = fd_at(cfg.h / 2.0)?;
            // A kink inside the probe interval breaks the O(h^2) agreement.
            if (fd1 - fd2).abs() > 1e-6 * fd1.abs().max(fd2.abs()).max(1.0) {
                skipped += 1;
                continue;
            }
            let a = analytic.groups[g][i];
            let rel = (a - fd2).abs() / a.abs().max(fd2.abs()).max(1e-6);
            coords += 1;
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = format!("group {g} ({:?}) coord {i}", descs[g].role);
            }
        }
    }

    if !may_have_kinks(&cfg.spec) && skipped > 0 {
        return Err(Error::Numeric(format!(
            "{label}: {skipped} coordinates probed inconsistently in a kink-free \
             configuration — the finite-difference probe itself is broken"
        )));
    }
    if skipped * 5 > (coords + skipped) {
        return Err(Error::Numeric(format!(
            "{label}: {skipped} of {} coordinates kink-polluted — margins too \
             tight to certify this configuration",
            coords + skipped
        )));
    }
    if coords == 0 {
        return Err(Error::Numeric(format!("{label}: no coordinates survived")));
    }

    Ok(CheckOutcome {
        label,
        coords,
        skipped,
        max_rel_err,
        worst,
    })
}

/// All nine activation kinds.
pub fn all_kinds() -> Vec<ActivationKind> {
    vec![
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::ReLU,
        ActivationKind::lrelu(),
        ActivationKind::Swish,
        ActivationKind::PReLU,
        ActivationKind::ASigmoid,
        ActivationKind::ATanh,
        ActivationKind::AReLU,
    ]
}

/// The standard verification suite: every activation kind on every preset,
/// multiple seeds each — 108 configurations (9 kinds x (5 + 4 + 3) seeds),
/// small inputs, h = 1e-4, tolerance 1e-4.
pub fn standard_suite() -> Result<SuiteOutcome> {
    let mut checks = Vec::new();
    for (pi, (preset, reps, batch)) in [
        ("mlp-2", 5u64, 2),
        ("cnn-mini", 4, 1),
        ("cnn-mini-res", 3, 1),
    ]
    .iter()
    .enumerate()
    {
        let input_shape = if *preset == "mlp-2" {
            vec![1, 4, 1]
        } else {
            vec![3, 8, 8]
        };
        for (ki, kind) in all_kinds().into_iter().enumerate() {
            let spec = ModelSpec::preset(preset, input_shape.clone(), 3, kind)?;
            for rep in 0..*reps {
                let cfg = CheckConfig {
                    spec: spec.clone(),
                    batch: *batch,
                    seed: (pi as u64) * 1000 + (ki as u64) * 10 + rep,
                    h: 1e-4,
                    tolerance: 1e-4,
                    max_coords_per_group: 24,
                };
                checks.push(check_model(&cfg)?);
            }
        }
    }
    let max_rel_err = checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    let total_coords = checks.iter().map(|c| c.coords).sum();
    let total_skipped = checks.iter().map(|c| c.skipped).sum();
    Ok(SuiteOutcome {
        checks,
        max_rel_err,
        total_coords,
        total_skipped,
    })
}
