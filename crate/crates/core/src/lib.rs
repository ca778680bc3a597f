//! Training engine for neural networks with *adaptive* activation functions.
//!
//! An adaptive activation wraps a base nonlinearity `f` in four per-layer
//! learnable scalars `(a, b, c, d)`:
//!
//! ```text
//! g(z) = b * f(a*z + c) + d        (sigmoid / tanh bases)
//! g(z) = max(a*z + c, b*z + d)     (piecewise-linear base)
//! ```
//!
//! The inner pair `(a, c)` rescales and shifts the input, the outer pair
//! `(b, d)` rescales and shifts the output, and all four train by gradient
//! descent alongside the weights. Particular settings recover the classic
//! functions exactly (for example the piecewise-linear form at
//! `(1, 0, 0, 0)` is plain ReLU), so a network can start at a known baseline
//! and deform its nonlinearities only if that lowers the loss.
//!
//! The crate is self-contained: dense/convolutional layers, softmax
//! cross-entropy, five first-order optimizers, deterministic data pipelines,
//! and an experiment driver that writes CSV traces suitable for plotting.
//! Everything runs in `f64` on a single thread with fixed reduction order, so
//! a given seed reproduces a run bit for bit.
//!
//! Entry points:
//! - [`tensor::Tensor`] / [`tensor::Rng`] — storage and seeded randomness.
//! - [`activation`] — the activation family and its gradients.
//! - [`model::Model`] — network assembly, forward/backward, checkpoints.
//! - [`optim::Optimizer`] — SGD, momentum, AdaGrad, AdaDelta, Adam.
//! - [`train::train`] — the epoch loop with per-epoch instrumentation.
//! - [`experiment::run_experiment`] — config-driven runs producing CSV files.

pub mod activation;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
