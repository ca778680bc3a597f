//! The activation family: fixed nonlinearities, their adaptive versions, and
//! all gradients.
//!
//! An adaptive activation owns four per-layer scalars `(a, b, c, d)`:
//!
//! ```text
//! ASigmoid(z) = b * sigmoid(a*z + c) + d
//! ATanh(z)    = b * tanh(a*z + c) + d
//! AReLU(z)    = max(a*z + c, b*z + d)
//! ```
//!
//! `(a, c)` transform the input, `(b, d)` the output. The defaults recover
//! the classic function exactly — `(1, 1, 0, 0)` for the smooth kinds,
//! `(1, 0, 0, 0)` for `AReLU` — so adaptive networks start from the same
//! place as their fixed baselines and only deviate where gradients push them.
//!
//! Because the scalars are shared by every element flowing through a layer,
//! their gradients are sums over elements; [`adaptive_backward`] accumulates
//! those sums in ascending element order (bit-reproducibility) and returns
//! them alongside the input gradient.
//!
//! Conventions pinned here and relied on by tests elsewhere:
//! - derivative of `ReLU`/`LReLU` at exactly 0 is the negative-side slope
//!   (0 and `slope` respectively);
//! - `AReLU` takes branch `a*z + c` on ties, which keeps its gradient equal
//!   to the `PReLU` gradient at 0 when parameters match;
//! - sigmoid uses the two-branch overflow-free form;
//! - `Swish` is `z * sigmoid(z)` (unit slope scale);
//! - `PReLU` has one learnable scalar (its slope, initialized to 0.25).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default initial slope for the learnable `PReLU` parameter.
pub const PRELU_INIT_SLOPE: f64 = 0.25;

/// Default slope for the fixed leaky ReLU.
pub const LRELU_DEFAULT_SLOPE: f64 = 0.01;

/// Which nonlinearity a layer applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    ReLU,
    /// Leaky ReLU with a fixed negative-side slope.
    LReLU {
        slope: f64,
    },
    /// `z * sigmoid(z)`.
    Swish,
    /// Piecewise-linear with one learnable negative-side slope.
    PReLU,
    ASigmoid,
    ATanh,
    AReLU,
}

impl ActivationKind {
    /// Leaky ReLU at the default slope.
    pub fn lrelu() -> Self {
        ActivationKind::LReLU {
            slope: LRELU_DEFAULT_SLOPE,
        }
    }

    /// Checks structural parameters (currently just the LReLU slope).
    pub fn validate(&self) -> Result<()> {
        if let ActivationKind::LReLU { slope } = self {
            if !(slope.is_finite() && *slope > 0.0) {
                return Err(Error::InvalidArg(format!(
                    "LReLU slope must be finite and positive, got {slope}"
                )));
            }
        }
        Ok(())
    }

    /// True for the four-parameter adaptive kinds.
    pub fn is_adaptive(&self) -> bool {
        matches!(
            self,
            ActivationKind::ASigmoid | ActivationKind::ATanh | ActivationKind::AReLU
        )
    }

    /// True for kinds with no learnable state.
    pub fn is_fixed(&self) -> bool {
        !self.is_adaptive() && !matches!(self, ActivationKind::PReLU)
    }

    /// Number of learnable scalars a layer of this kind owns.
    pub fn learnable_param_count(&self) -> usize {
        match self {
            _ if self.is_adaptive() => 4,
            ActivationKind::PReLU => 1,
            _ => 0,
        }
    }

    /// Initial `(a, b, c, d)` for kinds with learnable state.
    ///
    /// The defaults make the adaptive function coincide with its classic
    /// counterpart at step 0. `PReLU` is represented by the same quadruple
    /// `(slope, 1, 0, 0)` (only the slope trains).
    pub fn default_params(&self) -> Option<AdaptiveParams> {
        let p = match self {
            ActivationKind::ASigmoid | ActivationKind::ATanh => {
                AdaptiveParams::new(1.0, 1.0, 0.0, 0.0)
            }
            ActivationKind::AReLU => AdaptiveParams::new(1.0, 0.0, 0.0, 0.0),
            ActivationKind::PReLU => AdaptiveParams::new(PRELU_INIT_SLOPE, 1.0, 0.0, 0.0),
            _ => return None,
        };
        Some(p.expect("default params are finite"))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::ReLU => "relu",
            ActivationKind::LReLU { .. } => "lrelu",
            ActivationKind::Swish => "swish",
            ActivationKind::PReLU => "prelu",
            ActivationKind::ASigmoid => "asigmoid",
            ActivationKind::ATanh => "atanh",
            ActivationKind::AReLU => "arelu",
        }
    }

    /// Parses the names accepted in configs (inverse of [`Self::name`]).
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sigmoid" => ActivationKind::Sigmoid,
            "tanh" => ActivationKind::Tanh,
            "relu" => ActivationKind::ReLU,
            "lrelu" => ActivationKind::lrelu(),
            "swish" => ActivationKind::Swish,
            "prelu" => ActivationKind::PReLU,
            "asigmoid" => ActivationKind::ASigmoid,
            "atanh" => ActivationKind::ATanh,
            "arelu" => ActivationKind::AReLU,
            other => {
                return Err(Error::InvalidArg(format!(
                    "unknown activation \"{other}\" (expected one of sigmoid, tanh, relu, \
                     lrelu, swish, prelu, asigmoid, atanh, arelu)"
                )))
            }
        })
    }
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The four learnable scalars of an adaptive activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl AdaptiveParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let p = Self { a, b, c, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "adaptive parameter {name} = {v} is not finite"
                )));
            }
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        if s.len() != 4 {
            return Err(Error::Dim(format!(
                "adaptive parameters need 4 values, got {}",
                s.len()
            )));
        }
        Self::new(s[0], s[1], s[2], s[3])
    }
}

/// Gradients of a loss w.r.t. the four adaptive scalars, summed over all
/// elements that passed through the activation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdaptiveGrad {
    pub da: f64,
    pub db: f64,
    pub dc: f64,
    pub dd: f64,
}

impl AdaptiveGrad {
    pub fn to_array(self) -> [f64; 4] {
        [self.da, self.db, self.dc, self.dd]
    }
}

/// Numerically safe logistic function.
///
/// Split at 0 so the exponential argument is never positive: `exp` then
/// underflows to 0 in the tails instead of overflowing to infinity.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn fixed_scalar(kind: &ActivationKind, x: f64) -> f64 {
    match *kind {
        ActivationKind::Sigmoid => sigmoid(x),
        ActivationKind::Tanh => x.tanh(),
        ActivationKind::ReLU => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        ActivationKind::LReLU { slope } => {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        }
        ActivationKind::Swish => x * sigmoid(x),
        _ => unreachable!("fixed_scalar called on parameterized kind"),
    }
}

fn fixed_deriv_scalar(kind: &ActivationKind, x: f64) -> f64 {
    match *kind {
        ActivationKind::Sigmoid => {
            let s = sigmoid(x);
            s * (1.0 - s)
        }
        ActivationKind::Tanh => {
            let t = x.tanh();
            1.0 - t * t
        }
        ActivationKind::ReLU => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::LReLU { slope } => {
            if x > 0.0 {
                1.0
            } else {
                slope
            }
        }
        ActivationKind::Swish => {
            // d/dx x*s(x) = s(x) + x*s(x)*(1 - s(x))
            let s = sigmoid(x);
            s + x * s * (1.0 - s)
        }
        _ => unreachable!("fixed_deriv_scalar called on parameterized kind"),
    }
}

/// Applies a fixed (parameter-free) activation elementwise.
pub fn fixed_forward(kind: &ActivationKind, z: &Tensor) -> Result<Tensor> {
    kind.validate()?;
    if !kind.is_fixed() {
        return Err(Error::InvalidArg(format!(
            "{kind} has learnable parameters; use adaptive_forward or prelu_forward"
        )));
    }
    z.map(|x| fixed_scalar(kind, x))
}

/// Pointwise derivative `f'(z)` of a fixed activation.
pub fn fixed_deriv(kind: &ActivationKind, z: &Tensor) -> Result<Tensor> {
    kind.validate()?;
    if !kind.is_fixed() {
        return Err(Error::InvalidArg(format!(
            "{kind} has learnable parameters; use adaptive_backward or prelu_backward"
        )));
    }
    z.map(|x| fixed_deriv_scalar(kind, x))
}

fn require_adaptive(kind: &ActivationKind) -> Result<()> {
    if !kind.is_adaptive() {
        return Err(Error::InvalidArg(format!("{kind} is not an adaptive kind")));
    }
    Ok(())
}

/// Applies an adaptive activation with parameters `p` elementwise.
pub fn adaptive_forward(kind: &ActivationKind, p: &AdaptiveParams, z: &Tensor) -> Result<Tensor> {
    require_adaptive(kind)?;
    p.validate()?;
    match kind {
        ActivationKind::ASigmoid => z.map(|x| p.b * sigmoid(p.a * x + p.c) + p.d),
        ActivationKind::ATanh => z.map(|x| p.b * (p.a * x + p.c).tanh() + p.d),
        // Ties take the first branch; with parameters (1, 0, 0, 0) both
        // branches are 0 at z = 0 and the result matches ReLU's 0 exactly.
        ActivationKind::AReLU => z.map(|x| {
            let b1 = p.a * x + p.c;
            let b2 = p.b * x + p.d;
            if b1 >= b2 {
                b1
            } else {
                b2
            }
        }),
        _ => unreachable!(),
    }
}

/// Backward pass of an adaptive activation.
///
/// Given `upstream[i] = dL/dy[i]` for `y = g(z)`, returns `dL/dz` (same shape)
/// and the four parameter gradients summed over elements in ascending order.
///
/// For the smooth kinds with `u = a*z + c`:
///
/// ```text
/// dL/dz[i] = upstream[i] * b * f'(u[i]) * a
/// dL/da    = sum_i upstream[i] * b * f'(u[i]) * z[i]
/// dL/db    = sum_i upstream[i] * f(u[i])
/// dL/dc    = sum_i upstream[i] * b * f'(u[i])
/// dL/dd    = sum_i upstream[i]
/// ```
///
/// For `AReLU` each element routes its gradient to whichever branch won the
/// max (ties to the first): branch `a*z + c` feeds `(da, dc)`, branch
/// `b*z + d` feeds `(db, dd)`.
pub fn adaptive_backward(
    kind: &ActivationKind,
    p: &AdaptiveParams,
    z: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, AdaptiveGrad)> {
    require_adaptive(kind)?;
    p.validate()?;
    if z.shape() != upstream.shape() {
        return Err(Error::Dim(format!(
            "activation backward: input shape {:?} vs upstream shape {:?}",
            z.shape(),
            upstream.shape()
        )));
    }
    let mut dz = vec![0.0; z.len()];
    let mut g = AdaptiveGrad::default();
    match kind {
        ActivationKind::ASigmoid | ActivationKind::ATanh => {
            let smooth: fn(f64) -> (f64, f64) = match kind {
                ActivationKind::ASigmoid => |u| {
                    let s = sigmoid(u);
                    (s, s * (1.0 - s))
                },
                _ => |u| {
                    let t = u.tanh();
                    (t, 1.0 - t * t)
                },
            };
            for (i, (&x, &up)) in z.data().iter().zip(upstream.data().iter()).enumerate() {
                let u = p.a * x + p.c;
                let (f, fp) = smooth(u);
                let core = up * p.b * fp;
                dz[i] = core * p.a;
                g.da += core * x;
                g.db += up * f;
                g.dc += core;
                g.dd += up;
            }
        }
        ActivationKind::AReLU => {
            for (i, (&x, &up)) in z.data().iter().zip(upstream.data().iter()).enumerate() {
                let b1 = p.a * x + p.c;
                let b2 = p.b * x + p.d;
                if b1 >= b2 {
                    dz[i] = up * p.a;
                    g.da += up * x;
                    g.dc += up;
                } else {
                    dz[i] = up * p.b;
                    g.db += up * x;
                    g.dd += up;
                }
            }
        }
        _ => unreachable!(),
    }
    let dz = Tensor::new(z.shape().to_vec(), dz)?;
    for (name, v) in [("da", g.da), ("db", g.db), ("dc", g.dc), ("dd", g.dd)] {
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "adaptive backward produced non-finite {name} = {v}"
            )));
        }
    }
    Ok((dz, g))
}

/// `PReLU` forward: `z` if positive, `slope * z` otherwise.
pub fn prelu_forward(slope: f64, z: &Tensor) -> Result<Tensor> {
    if !slope.is_finite() {
        return Err(Error::Numeric(format!("PReLU slope {slope} is not finite")));
    }
    z.map(|x| if x > 0.0 { x } else { slope * x })
}

/// `PReLU` backward: returns `dL/dz` and the scalar slope gradient
/// `dL/dslope = sum over non-positive inputs of upstream * z`.
pub fn prelu_backward(slope: f64, z: &Tensor, upstream: &Tensor) -> Result<(Tensor, f64)> {
    if !slope.is_finite() {
        return Err(Error::Numeric(format!("PReLU slope {slope} is not finite")));
    }
    if z.shape() != upstream.shape() {
        return Err(Error::Dim(format!(
            "PReLU backward: input shape {:?} vs upstream shape {:?}",
            z.shape(),
            upstream.shape()
        )));
    }
    let mut dz = vec![0.0; z.len()];
    let mut dslope = 0.0;
    for (i, (&x, &up)) in z.data().iter().zip(upstream.data().iter()).enumerate() {
        if x > 0.0 {
            dz[i] = up;
        } else {
            dz[i] = up * slope;
            dslope += up * x;
        }
    }
    if !dslope.is_finite() {
        return Err(Error::Numeric(format!(
            "PReLU backward produced non-finite slope gradient {dslope}"
        )));
    }
    Ok((Tensor::new(z.shape().to_vec(), dz)?, dslope))
}

/// Classic function a parameter quadruple coincides with, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpecialCase {
    /// `(1, 0, 0, 0)`: `max(z, 0)`.
    ReLU,
    /// `(s, 1, 0, 0)` with `s != 1`: `max(s*z, z)`, a PReLU for `s <= 1`.
    PReLU { slope: f64 },
    /// Anything else.
    General,
}

/// Recognizes `AReLU` parameter settings that reduce to classic functions.
///
/// Matching is exact (bit equality): the point is to certify identities, not
/// to fuzzy-match nearby parameters.
pub fn classify_special_case(p: &AdaptiveParams) -> SpecialCase {
    if p.b == 0.0 && p.c == 0.0 && p.d == 0.0 && p.a == 1.0 {
        SpecialCase::ReLU
    } else if p.b == 1.0 && p.c == 0.0 && p.d == 0.0 {
        SpecialCase::PReLU { slope: p.a }
    } else {
        SpecialCase::General
    }
}
