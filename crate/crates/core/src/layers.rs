//! Individual network layers: dense, convolution, activation, pooling,
//! flatten, and residual blocks.
//!
//! Layers follow a strict forward/backward contract enforced with pass
//! stamps. [`Layer::forward`] caches whatever the gradient needs and tags the
//! cache with the model's pass counter; [`Layer::backward`] only accepts the
//! matching stamp, so a backward without a fresh forward (or against a stale
//! one) fails loudly instead of producing silently wrong gradients.
//! [`Layer::infer`] never touches the cache and works through `&self`.
//!
//! Gradient reductions — weight-gradient matmuls, bias sums, pooling
//! scatters — all run in ascending sample/index order, keeping every result
//! bit-reproducible for a fixed seed.
//!
//! Layouts: dense activations are `[batch, features]`; image tensors are
//! `[batch, channels, height, width]`. Dense weights are `[outputs, inputs]`;
//! convolution kernels `[out_c, in_c, kh, kw]` with zero padding and square
//! geometry. Convolutions use im2col so both directions reduce to the matmul
//! kernels in [`crate::tensor`] (patch columns are rebuilt in backward rather
//! than cached; they are cheap relative to the matmuls and dominate memory
//! otherwise).

use crate::activation::{
    adaptive_backward, adaptive_forward, fixed_deriv, fixed_forward, prelu_backward, prelu_forward,
    ActivationKind, AdaptiveParams,
};
use crate::error::{Error, Result};
use crate::tensor::{matmul_into, matmul_nt_accum, matmul_nt_into, matmul_tn_accum, Tensor};

/// What a parameter group is, for reporting and the parameter census.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    /// Learnable activation scalars (adaptive quadruple or PReLU slope).
    Activation,
}

/// Shape/role description of one trainable parameter group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDesc {
    pub role: ParamRole,
    pub len: usize,
}

/// Fully connected layer computing `y = x * W^T + b`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// `[outputs, inputs]`.
    pub w: Tensor,
    /// `[outputs]`.
    pub b: Tensor,
    cache: Option<(Tensor, u64)>,
}

impl DenseLayer {
    pub fn new(w: Tensor, b: Tensor) -> Result<Self> {
        let (out, _) = match w.shape() {
            &[o, i] if o > 0 && i > 0 => (o, i),
            other => {
                return Err(Error::Dim(format!(
                    "dense weights must be [outputs, inputs], got {other:?}"
                )))
            }
        };
        if b.shape() != [out] {
            return Err(Error::Dim(format!(
                "dense bias shape {:?} does not match {out} outputs",
                b.shape()
            )));
        }
        Ok(Self { w, b, cache: None })
    }

    fn run(&self, x: &Tensor) -> Result<Tensor> {
        let (out, inp) = (self.w.shape()[0], self.w.shape()[1]);
        let batch = match x.shape() {
            &[n, i] if i == inp => n,
            other => {
                return Err(Error::Dim(format!(
                    "dense layer with {inp} inputs got activations shaped {other:?}"
                )))
            }
        };
        let mut y = Tensor::zeros(vec![batch, out])?;
        matmul_nt_into(x.data(), self.w.data(), y.data_mut(), batch, inp, out);
        let bias = self.b.data();
        for row in y.data_mut().chunks_exact_mut(out) {
            for (v, &bv) in row.iter_mut().zip(bias.iter()) {
                *v += bv;
            }
        }
        y.check_finite("dense forward")?;
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor, pass: u64) -> Result<Tensor> {
        let y = self.run(x)?;
        self.cache = Some((x.clone(), pass));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, pass: u64) -> Result<(Tensor, Vec<Vec<f64>>)> {
        let (x, stamp) = self
            .cache
            .take()
            .ok_or_else(|| Error::Contract("dense backward without forward".into()))?;
        if stamp != pass {
            return Err(Error::Contract(format!(
                "dense backward pass {pass} does not match cached forward pass {stamp}"
            )));
        }
        let (out, inp) = (self.w.shape()[0], self.w.shape()[1]);
        let batch = x.shape()[0];
        if dy.shape() != [batch, out] {
            return Err(Error::Dim(format!(
                "dense backward expected upstream [{batch}, {out}], got {:?}",
                dy.shape()
            )));
        }

        // dW = dY^T * X: the k dimension is the batch, so per-weight sums run
        // over samples in ascending order.
        let mut dw = vec![0.0; out * inp];
        matmul_tn_accum(dy.data(), x.data(), &mut dw, out, batch, inp);
        let mut db = vec![0.0; out];
        for row in dy.data().chunks_exact(out) {
            for (acc, &v) in db.iter_mut().zip(row.iter()) {
                *acc += v;
            }
        }
        let mut dx = Tensor::zeros(vec![batch, inp])?;
        matmul_into(dy.data(), self.w.data(), dx.data_mut(), batch, out, inp);
        dx.check_finite("dense backward")?;
        Ok((dx, vec![dw, db]))
    }
}

/// 2-D convolution with square kernels and zero padding.
#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    /// `[out_c, in_c, kh, kw]`.
    pub kernels: Tensor,
    /// `[out_c]`.
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
    cache: Option<(Tensor, u64)>,
}

impl Conv2dLayer {
    pub fn new(kernels: Tensor, bias: Tensor, stride: usize, pad: usize) -> Result<Self> {
        let out_c = match kernels.shape() {
            &[o, i, kh, kw] if o > 0 && i > 0 && kh > 0 && kw > 0 => o,
            other => {
                return Err(Error::Dim(format!(
                    "conv kernels must be [out_c, in_c, kh, kw], got {other:?}"
                )))
            }
        };
        if bias.shape() != [out_c] {
            return Err(Error::Dim(format!(
                "conv bias shape {:?} does not match {out_c} output channels",
                bias.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArg("conv stride must be positive".into()));
        }
        Ok(Self {
            kernels,
            bias,
            stride,
            pad,
            cache: None,
        })
    }

    /// Output spatial size for an input of `h x w`, or an error when the
    /// geometry doesn't tile cleanly.
    pub fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = (self.kernels.shape()[2], self.kernels.shape()[3]);
        let span_h = (h + 2 * self.pad).checked_sub(kh);
        let span_w = (w + 2 * self.pad).checked_sub(kw);
        match (span_h, span_w) {
            (Some(sh), Some(sw)) if sh % self.stride == 0 && sw % self.stride == 0 => {
                Ok((sh / self.stride + 1, sw / self.stride + 1))
            }
            _ => Err(Error::Dim(format!(
                "conv geometry: {h}x{w} input, {kh}x{kw} kernel, stride {}, pad {} \
                 does not tile evenly",
                self.stride, self.pad
            ))),
        }
    }

    /// Gathers the patch matrix `[in_c*kh*kw, oh*ow]` for one sample.
    /// Rows iterate `(channel, kernel row, kernel col)` in ascending order —
    /// the same order the kernel tensor is laid out in, which makes the
    /// forward matmul's inner loop a faithful ascending reduction.
    #[allow(clippy::too_many_arguments)]
    fn im2col(
        &self,
        x: &[f64],
        c_in: usize,
        h: usize,
        w: usize,
        oh: usize,
        ow: usize,
        cols: &mut [f64],
    ) {
        let (kh, kw) = (self.kernels.shape()[2], self.kernels.shape()[3]);
        let l = oh * ow;
        let mut row = 0;
        for c in 0..c_in {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for kr in 0..kh {
                for kc in 0..kw {
                    let dst = &mut cols[row * l..(row + 1) * l];
                    let mut idx = 0;
                    for or in 0..oh {
                        // Input row for this output row, shifted by padding.
                        let ir = (or * self.stride + kr) as isize - self.pad as isize;
                        for oc in 0..ow {
                            let ic = (oc * self.stride + kc) as isize - self.pad as isize;
                            dst[idx] =
                                if ir >= 0 && (ir as usize) < h && ic >= 0 && (ic as usize) < w {
                                    plane[ir as usize * w + ic as usize]
                                } else {
                                    0.0
                                };
                            idx += 1;
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Scatters patch-matrix gradients back to input-image gradients
    /// (transpose of [`Self::im2col`], fixed ascending loop order).
    #[allow(clippy::too_many_arguments)]
    fn col2im(
        &self,
        dcols: &[f64],
        c_in: usize,
        h: usize,
        w: usize,
        oh: usize,
        ow: usize,
        dx: &mut [f64],
    ) {
        let (kh, kw) = (self.kernels.shape()[2], self.kernels.shape()[3]);
        let l = oh * ow;
        let mut row = 0;
        for c in 0..c_in {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for kr in 0..kh {
                for kc in 0..kw {
                    let src = &dcols[row * l..(row + 1) * l];
                    let mut idx = 0;
                    for or in 0..oh {
                        let ir = (or * self.stride + kr) as isize - self.pad as isize;
                        for oc in 0..ow {
                            let ic = (oc * self.stride + kc) as isize - self.pad as isize;
                            if ir >= 0 && (ir as usize) < h && ic >= 0 && (ic as usize) < w {
                                plane[ir as usize * w + ic as usize] += src[idx];
                            }
                            idx += 1;
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn geometry(&self, x: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize)> {
        let in_c = self.kernels.shape()[1];
        let (batch, h, w) = match x.shape() {
            &[n, c, h, w] if c == in_c => (n, h, w),
            other => {
                return Err(Error::Dim(format!(
                    "conv layer with {in_c} input channels got activations shaped {other:?}"
                )))
            }
        };
        let (oh, ow) = self.out_size(h, w)?;
        Ok((batch, h, w, oh, ow, in_c))
    }

    fn run(&self, x: &Tensor) -> Result<Tensor> {
        let (batch, h, w, oh, ow, in_c) = self.geometry(x)?;
        let out_c = self.kernels.shape()[0];
        let (kh, kw) = (self.kernels.shape()[2], self.kernels.shape()[3]);
        let kdim = in_c * kh * kw;
        let l = oh * ow;

        let mut y = Tensor::zeros(vec![batch, out_c, oh, ow])?;
        let mut cols = vec![0.0; kdim * l];
        for b in 0..batch {
            let xb = &x.data()[b * in_c * h * w..(b + 1) * in_c * h * w];
            self.im2col(xb, in_c, h, w, oh, ow, &mut cols);
            let yb = &mut y.data_mut()[b * out_c * l..(b + 1) * out_c * l];
            matmul_into(self.kernels.data(), &cols, yb, out_c, kdim, l);
            for (o, plane) in yb.chunks_exact_mut(l).enumerate() {
                let bias = self.bias.data()[o];
                plane.iter_mut().for_each(|v| *v += bias);
            }
        }
        y.check_finite("conv forward")?;
        Ok(y)
    }

    fn forward(&mut self, x: &Tensor, pass: u64) -> Result<Tensor> {
        let y = self.run(x)?;
        self.cache = Some((x.clone(), pass));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, pass: u64) -> Result<(Tensor, Vec<Vec<f64>>)> {
        let (x, stamp) = self
            .cache
            .take()
            .ok_or_else(|| Error::Contract("conv backward without forward".into()))?;
        if stamp != pass {
            return Err(Error::Contract(format!(
                "conv backward pass {pass} does not match cached forward pass {stamp}"
            )));
        }
        let (batch, h, w, oh, ow, in_c) = self.geometry(&x)?;
        let out_c = self.kernels.shape()[0];
        let (kh, kw) = (self.kernels.shape()[2], self.kernels.shape()[3]);
        let kdim = in_c * kh * kw;
        let l = oh * ow;
        if dy.shape() != [batch, out_c, oh, ow] {
            return Err(Error::Dim(format!(
                "conv backward expected upstream [{batch}, {out_c}, {oh}, {ow}], got {:?}",
                dy.shape()
            )));
        }

        let mut dk = vec![0.0; out_c * kdim];
        let mut db = vec![0.0; out_c];
        let mut dx = Tensor::zeros(vec![batch, in_c, h, w])?;
        let mut cols = vec![0.0; kdim * l];
        let mut dcols = vec![0.0; kdim * l];
        // Samples in ascending order; each adds its contribution to dk/db.
        for b in 0..batch {
            let xb = &x.data()[b * in_c * h * w..(b + 1) * in_c * h * w];
            let dyb = &dy.data()[b * out_c * l..(b + 1) * out_c * l];
            self.im2col(xb, in_c, h, w, oh, ow, &mut cols);
            // dK += dY_b * cols^T
            matmul_nt_accum(dyb, &cols, &mut dk, out_c, l, kdim);
            for (acc, plane) in db.iter_mut().zip(dyb.chunks_exact(l)) {
                for &v in plane {
                    *acc += v;
                }
            }
            // dcols = K^T * dY_b, then scatter back to image layout.
            dcols.iter_mut().for_each(|v| *v = 0.0);
            matmul_tn_accum(self.kernels.data(), dyb, &mut dcols, kdim, out_c, l);
            let dxb = &mut dx.data_mut()[b * in_c * h * w..(b + 1) * in_c * h * w];
            self.col2im(&dcols, in_c, h, w, oh, ow, dxb);
        }
        dx.check_finite("conv backward")?;
        Ok((dx, vec![dk, db]))
    }
}

/// Nonlinearity site. Owns the learnable scalars when the kind has any:
/// `[a, b, c, d]` for the adaptive kinds, `[slope]` for PReLU, empty
/// otherwise. `trainable` gates whether those scalars are exposed to the
/// optimizer (a frozen adaptive site keeps its values forever).
#[derive(Debug, Clone)]
pub struct ActivationLayer {
    pub kind: ActivationKind,
    pub params: Vec<f64>,
    pub trainable: bool,
    cache: Option<(Tensor, u64)>,
}

impl ActivationLayer {
    pub fn new(kind: ActivationKind, trainable: bool) -> Result<Self> {
        kind.validate()?;
        let params = match kind.default_params() {
            Some(p) if kind.is_adaptive() => p.to_array().to_vec(),
            Some(p) => vec![p.a], // PReLU: just the slope
            None => Vec::new(),
        };
        let trainable = trainable && !params.is_empty();
        Ok(Self {
            kind,
            params,
            trainable,
            cache: None,
        })
    }

    /// Current parameters in `(a, b, c, d)` form; PReLU reports
    /// `(slope, 1, 0, 0)`, fixed kinds `None`.
    pub fn quadruple(&self) -> Option<AdaptiveParams> {
        match self.kind {
            k if k.is_adaptive() => AdaptiveParams::from_slice(&self.params).ok(),
            ActivationKind::PReLU => AdaptiveParams::new(self.params[0], 1.0, 0.0, 0.0).ok(),
            _ => None,
        }
    }

    /// Applies the activation to a tensor without caching.
    pub fn apply(&self, z: &Tensor) -> Result<Tensor> {
        match self.kind {
            k if k.is_adaptive() => {
                adaptive_forward(&k, &AdaptiveParams::from_slice(&self.params)?, z)
            }
            ActivationKind::PReLU => prelu_forward(self.params[0], z),
            k => fixed_forward(&k, z),
        }
    }

    fn forward(&mut self, z: &Tensor, pass: u64) -> Result<Tensor> {
        let y = self.apply(z)?;
        self.cache = Some((z.clone(), pass));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, pass: u64) -> Result<(Tensor, Vec<Vec<f64>>)> {
        let (z, stamp) = self
            .cache
            .take()
            .ok_or_else(|| Error::Contract("activation backward without forward".into()))?;
        if stamp != pass {
            return Err(Error::Contract(format!(
                "activation backward pass {pass} does not match cached forward pass {stamp}"
            )));
        }
        match self.kind {
            k if k.is_adaptive() => {
                let p = AdaptiveParams::from_slice(&self.params)?;
                let (dz, g) = adaptive_backward(&k, &p, &z, dy)?;
                let grads = if self.trainable {
                    vec![g.to_array().to_vec()]
                } else {
                    Vec::new()
                };
                Ok((dz, grads))
            }
            ActivationKind::PReLU => {
                let (dz, dslope) = prelu_backward(self.params[0], &z, dy)?;
                let grads = if self.trainable {
                    vec![vec![dslope]]
                } else {
                    Vec::new()
                };
                Ok((dz, grads))
            }
            k => {
                let deriv = fixed_deriv(&k, &z)?;
                Ok((dy.zip(&deriv, |u, d| u * d)?, Vec::new()))
            }
        }
    }
}

/// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped
/// (floor semantics). Ties within a window keep the first element in
/// row-major window order, so the gradient routing is deterministic.
#[derive(Debug, Clone, Default)]
struct PoolCache {
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
    pass: u64,
}

#[derive(Debug, Clone, Default)]
pub struct MaxPoolLayer {
    cache: Option<PoolCache>,
}

impl MaxPoolLayer {
    fn run(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let (batch, c, h, w) = match x.shape() {
            &[n, c, h, w] if h >= 2 && w >= 2 => (n, c, h, w),
            other => {
                return Err(Error::Dim(format!(
                    "max pool needs [batch, c, h>=2, w>=2] input, got {other:?}"
                )))
            }
        };
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Tensor::zeros(vec![batch, c, oh, ow])?;
        let mut argmax = vec![0usize; y.len()];
        let xd = x.data();
        let yd = y.data_mut();
        let mut out = 0;
        for b in 0..batch {
            for ch in 0..c {
                let base = (b * c + ch) * h * w;
                for oi in 0..oh {
                    for oj in 0..ow {
                        let i0 = base + (2 * oi) * w + 2 * oj;
                        // Window scan order (0,0),(0,1),(1,0),(1,1);
                        // strict > keeps the first maximum.
                        let mut best_idx = i0;
                        let mut best = xd[i0];
                        for &cand in &[i0 + 1, i0 + w, i0 + w + 1] {
                            if xd[cand] > best {
                                best = xd[cand];
                                best_idx = cand;
                            }
                        }
                        yd[out] = best;
                        argmax[out] = best_idx;
                        out += 1;
                    }
                }
            }
        }
        Ok((y, argmax))
    }

    fn forward(&mut self, x: &Tensor, pass: u64) -> Result<Tensor> {
        let (y, argmax) = self.run(x)?;
        self.cache = Some(PoolCache {
            argmax,
            in_shape: x.shape().to_vec(),
            pass,
        });
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, pass: u64) -> Result<Tensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Contract("max pool backward without forward".into()))?;
        if cache.pass != pass {
            return Err(Error::Contract(format!(
                "max pool backward pass {pass} does not match cached forward pass {}",
                cache.pass
            )));
        }
        if dy.len() != cache.argmax.len() {
            return Err(Error::Dim(format!(
                "max pool backward got {} upstream elements, expected {}",
                dy.len(),
                cache.argmax.len()
            )));
        }
        let mut dx = Tensor::zeros(cache.in_shape.clone())?;
        let dxd = dx.data_mut();
        for (&src, &g) in cache.argmax.iter().zip(dy.data().iter()) {
            dxd[src] += g;
        }
        Ok(dx)
    }
}

/// Reshapes `[batch, ...]` to `[batch, prod(...)]`; backward restores the
/// original shape. Values are untouched.
#[derive(Debug, Clone, Default)]
pub struct FlattenLayer {
    cache: Option<(Vec<usize>, u64)>,
}

impl FlattenLayer {
    fn out_shape(x: &Tensor) -> Result<Vec<usize>> {
        if x.rank() < 2 {
            return Err(Error::Dim(format!(
                "flatten needs a batch dimension, got shape {:?}",
                x.shape()
            )));
        }
        let batch = x.shape()[0];
        let rest: usize = x.shape()[1..].iter().product();
        Ok(vec![batch, rest])
    }

    fn forward(&mut self, x: &Tensor, pass: u64) -> Result<Tensor> {
        let y = x.reshape(Self::out_shape(x)?)?;
        self.cache = Some((x.shape().to_vec(), pass));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, pass: u64) -> Result<Tensor> {
        let (shape, stamp) = self
            .cache
            .take()
            .ok_or_else(|| Error::Contract("flatten backward without forward".into()))?;
        if stamp != pass {
            return Err(Error::Contract(format!(
                "flatten backward pass {pass} does not match cached forward pass {stamp}"
            )));
        }
        dy.reshape(shape)
    }
}

/// Identity-skip block: `y = x + body(x)`. The body must preserve shape.
#[derive(Debug, Clone)]
pub struct ResidualLayer {
    pub body: Vec<Layer>,
}

impl ResidualLayer {
    fn forward(&mut self, x: &Tensor, pass: u64) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &mut self.body {
            cur = layer.forward(&cur, pass)?;
        }
        if cur.shape() != x.shape() {
            return Err(Error::Dim(format!(
                "residual body changed shape {:?} -> {:?}",
                x.shape(),
                cur.shape()
            )));
        }
        x.zip(&cur, |a, b| a + b)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.body {
            cur = layer.infer(&cur)?;
        }
        if cur.shape() != x.shape() {
            return Err(Error::Dim(format!(
                "residual body changed shape {:?} -> {:?}",
                x.shape(),
                cur.shape()
            )));
        }
        x.zip(&cur, |a, b| a + b)
    }

    fn backward(&mut self, dy: &Tensor, pass: u64) -> Result<(Tensor, Vec<Vec<f64>>)> {
        let mut cur = dy.clone();
        // Body layers' gradients, collected in forward order.
        let mut grads: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.body.len()];
        for (i, layer) in self.body.iter_mut().enumerate().rev() {
            let (dx, g) = layer.backward(&cur, pass)?;
            grads[i] = g;
            cur = dx;
        }
        let dx = cur.zip(dy, |a, b| a + b)?;
        Ok((dx, grads.into_iter().flatten().collect()))
    }
}

/// A network layer. Dispatches to the concrete implementations above.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    Conv2d(Conv2dLayer),
    Activation(ActivationLayer),
    MaxPool(MaxPoolLayer),
    Flatten(FlattenLayer),
    Residual(ResidualLayer),
}

impl Layer {
    /// Training-mode forward: caches for backward, stamped with `pass`.
    pub fn forward(&mut self, x: &Tensor, pass: u64) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(x, pass),
            Layer::Conv2d(l) => l.forward(x, pass),
            Layer::Activation(l) => l.forward(x, pass),
            Layer::MaxPool(l) => l.forward(x, pass),
            Layer::Flatten(l) => l.forward(x, pass),
            Layer::Residual(l) => l.forward(x, pass),
        }
    }

    /// Pure forward: no caches touched, usable through `&self`.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.run(x),
            Layer::Conv2d(l) => l.run(x),
            Layer::Activation(l) => l.apply(x),
            Layer::MaxPool(l) => l.run(x).map(|(y, _)| y),
            Layer::Flatten(_) => x.reshape(FlattenLayer::out_shape(x)?),
            Layer::Residual(l) => l.infer(x),
        }
    }

    /// Backward against the cache from the matching `forward` call. Returns
    /// the input gradient and this layer's parameter-group gradients in the
    /// same order as [`Layer::param_slices_mut`]. The cache is consumed.
    pub fn backward(&mut self, dy: &Tensor, pass: u64) -> Result<(Tensor, Vec<Vec<f64>>)> {
        match self {
            Layer::Dense(l) => l.backward(dy, pass),
            Layer::Conv2d(l) => l.backward(dy, pass),
            Layer::Activation(l) => l.backward(dy, pass),
            Layer::MaxPool(l) => l.backward(dy, pass).map(|dx| (dx, Vec::new())),
            Layer::Flatten(l) => l.backward(dy, pass).map(|dx| (dx, Vec::new())),
            Layer::Residual(l) => l.backward(dy, pass),
        }
    }

    /// Mutable views of the trainable parameter groups, canonical order:
    /// weights before biases, activation scalars as one group.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(l) => vec![l.w.data_mut(), l.b.data_mut()],
            Layer::Conv2d(l) => vec![l.kernels.data_mut(), l.bias.data_mut()],
            Layer::Activation(l) if l.trainable => vec![&mut l.params[..]],
            Layer::Residual(l) => l
                .body
                .iter_mut()
                .flat_map(|b| b.param_slices_mut())
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Role/size descriptions matching [`Layer::param_slices_mut`].
    pub fn param_descs(&self) -> Vec<ParamDesc> {
        match self {
            Layer::Dense(l) => vec![
                ParamDesc {
                    role: ParamRole::Weight,
                    len: l.w.len(),
                },
                ParamDesc {
                    role: ParamRole::Bias,
                    len: l.b.len(),
                },
            ],
            Layer::Conv2d(l) => vec![
                ParamDesc {
                    role: ParamRole::Weight,
                    len: l.kernels.len(),
                },
                ParamDesc {
                    role: ParamRole::Bias,
                    len: l.bias.len(),
                },
            ],
            Layer::Activation(l) if l.trainable => vec![ParamDesc {
                role: ParamRole::Activation,
                len: l.params.len(),
            }],
            Layer::Residual(l) => l.body.iter().flat_map(|b| b.param_descs()).collect(),
            _ => Vec::new(),
        }
    }

    /// Mutable views of *all* persistent state (trainable or not) — what a
    /// checkpoint must capture. Frozen activation scalars are included.
    pub fn state_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(l) => vec![l.w.data_mut(), l.b.data_mut()],
            Layer::Conv2d(l) => vec![l.kernels.data_mut(), l.bias.data_mut()],
            Layer::Activation(l) if !l.params.is_empty() => vec![&mut l.params[..]],
            Layer::Residual(l) => l
                .body
                .iter_mut()
                .flat_map(|b| b.state_slices_mut())
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv",
            Layer::Activation(_) => "activation",
            Layer::MaxPool(_) => "maxpool",
            Layer::Flatten(_) => "flatten",
            Layer::Residual(_) => "residual",
        }
    }
}
