//! Network assembly: model specifications, presets, initialization, the
//! forward/backward drivers, and checkpointing.
//!
//! A [`ModelSpec`] is a validated, serializable description — input shape,
//! class count, which activation fills the nonlinearity slots, and an ordered
//! list of layer descriptors. [`Model::init`] turns it into live layers with
//! Glorot-uniform weights drawn from the caller's seeded PRNG, so the same
//! seed always produces the same network.
//!
//! Three presets cover the experiment grid:
//!
//! - `mlp-2`: Flatten, Dense(in, 64), act, Dense(64, 64), act,
//!   Dense(64, classes) — two activation sites.
//! - `cnn-mini`: three Conv(3x3, same-pad)+act+MaxPool stages with 16/32/64
//!   channels, then Flatten, Dense(-, 64), Dense(64, classes) — three
//!   activation sites.
//! - `cnn-mini-res`: `cnn-mini` with an identity-skip block
//!   `x + Conv64(act(x))`... precisely `x + body(x)`, body = Conv(64, 64,
//!   same) + act — inserted after the last pool, four activation sites.
//!
//! Checkpoints store the spec, the originating seed, and every `f64` of layer
//! state bit-exactly in a little-endian binary format; loading reconstructs
//! an identical model.

use std::path::Path;

use crate::activation::ActivationKind;
use crate::error::{io_at, Error, Result};
use crate::layers::{
    ActivationLayer, Conv2dLayer, DenseLayer, FlattenLayer, Layer, MaxPoolLayer, ParamDesc,
    ParamRole, ResidualLayer,
};
use crate::tensor::{Rng, Tensor};

/// One layer in a [`ModelSpec`]. Sizes are explicit so a spec is
/// self-contained and checkable without running anything.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerDesc {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    /// A nonlinearity site; the spec's activation kind fills it.
    Activation,
    /// 2x2 max pooling, stride 2.
    MaxPool2,
    Flatten,
    /// Identity-skip block `y = x + body(x)`; the body must preserve shape.
    Residual {
        body: Vec<LayerDesc>,
    },
}

/// Per-sample shape flowing between layers during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleShape {
    Img(usize, usize, usize),
    Flat(usize),
}

impl std::fmt::Display for SampleShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleShape::Img(c, h, w) => write!(f, "[{c}, {h}, {w}]"),
            SampleShape::Flat(n) => write!(f, "[{n}]"),
        }
    }
}

/// A complete, validated model description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Preset name or "custom"; informational.
    pub name: String,
    /// Per-sample input shape `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub classes: usize,
    /// The kind used at every `Activation` slot.
    pub activation: ActivationKind,
    /// When set, learnable activation scalars keep their initial values and
    /// are hidden from the optimizer.
    pub freeze_activation: bool,
    pub layers: Vec<LayerDesc>,
}

impl ModelSpec {
    /// Two-hidden-layer MLP with 64-unit layers.
    pub fn mlp2(input_shape: Vec<usize>, classes: usize, activation: ActivationKind) -> Self {
        let inputs: usize = input_shape.iter().product();
        ModelSpec {
            name: "mlp-2".into(),
            input_shape,
            classes,
            activation,
            freeze_activation: false,
            layers: vec![
                LayerDesc::Flatten,
                LayerDesc::Dense {
                    inputs,
                    outputs: 64,
                },
                LayerDesc::Activation,
                LayerDesc::Dense {
                    inputs: 64,
                    outputs: 64,
                },
                LayerDesc::Activation,
                LayerDesc::Dense {
                    inputs: 64,
                    outputs: classes,
                },
            ],
        }
    }

    fn cnn_stages(input_shape: &[usize]) -> (Vec<LayerDesc>, usize) {
        let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
        let mut layers = Vec::new();
        let mut in_c = c;
        for out_c in [16usize, 32, 64] {
            layers.push(LayerDesc::Conv2d {
                in_channels: in_c,
                out_channels: out_c,
                kernel: 3,
                stride: 1,
                pad: 1,
            });
            layers.push(LayerDesc::Activation);
            layers.push(LayerDesc::MaxPool2);
            in_c = out_c;
        }
        let flat = 64 * (h / 8) * (w / 8);
        (layers, flat)
    }

    fn cnn_head(flat: usize, classes: usize) -> Vec<LayerDesc> {
        vec![
            LayerDesc::Flatten,
            LayerDesc::Dense {
                inputs: flat,
                outputs: 64,
            },
            LayerDesc::Dense {
                inputs: 64,
                outputs: classes,
            },
        ]
    }

    /// Three conv/pool stages (16, 32, 64 channels) and a dense head.
    pub fn cnn_mini(input_shape: Vec<usize>, classes: usize, activation: ActivationKind) -> Self {
        let (mut layers, flat) = Self::cnn_stages(&input_shape);
        layers.extend(Self::cnn_head(flat, classes));
        ModelSpec {
            name: "cnn-mini".into(),
            input_shape,
            classes,
            activation,
            freeze_activation: false,
            layers,
        }
    }

    /// `cnn-mini` plus one identity-skip conv block after the last pool.
    pub fn cnn_mini_res(
        input_shape: Vec<usize>,
        classes: usize,
        activation: ActivationKind,
    ) -> Self {
        let (mut layers, flat) = Self::cnn_stages(&input_shape);
        layers.push(LayerDesc::Residual {
            body: vec![
                LayerDesc::Conv2d {
                    in_channels: 64,
                    out_channels: 64,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                },
                LayerDesc::Activation,
            ],
        });
        layers.extend(Self::cnn_head(flat, classes));
        ModelSpec {
            name: "cnn-mini-res".into(),
            input_shape,
            classes,
            activation,
            freeze_activation: false,
            layers,
        }
    }

    /// Builds a preset by name.
    pub fn preset(
        name: &str,
        input_shape: Vec<usize>,
        classes: usize,
        activation: ActivationKind,
    ) -> Result<Self> {
        let spec = match name {
            "mlp-2" => Self::mlp2(input_shape, classes, activation),
            "cnn-mini" => Self::cnn_mini(input_shape, classes, activation),
            "cnn-mini-res" => Self::cnn_mini_res(input_shape, classes, activation),
            other => {
                return Err(Error::Spec(format!(
                    "unknown preset \"{other}\" (expected mlp-2, cnn-mini, or cnn-mini-res)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A hand-assembled spec (named "custom"); validated before use.
    pub fn custom(
        input_shape: Vec<usize>,
        classes: usize,
        activation: ActivationKind,
        layers: Vec<LayerDesc>,
    ) -> Result<Self> {
        let spec = ModelSpec {
            name: "custom".into(),
            input_shape,
            classes,
            activation,
            freeze_activation: false,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks internal consistency: shapes must chain from the input to a
    /// flat `[classes]` output.
    pub fn validate(&self) -> Result<()> {
        if self.input_shape.len() != 3 || self.input_shape.contains(&0) {
            return Err(Error::Spec(format!(
                "input shape must be [channels, height, width] with positive extents, \
                 got {:?}",
                self.input_shape
            )));
        }
        if self.classes < 2 {
            return Err(Error::Spec(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        self.activation
            .validate()
            .map_err(|e| Error::Spec(e.to_string()))?;
        if self.layers.is_empty() {
            return Err(Error::Spec("model has no layers".into()));
        }
        let start = SampleShape::Img(
            self.input_shape[0],
            self.input_shape[1],
            self.input_shape[2],
        );
        let end = walk_shapes(&self.layers, start)?;
        if end != SampleShape::Flat(self.classes) {
            return Err(Error::Spec(format!(
                "model output is {end}, expected [{}] (one logit per class)",
                self.classes
            )));
        }
        Ok(())
    }

    /// Number of nonlinearity slots (recursing into residual bodies).
    pub fn activation_sites(&self) -> usize {
        fn count(layers: &[LayerDesc]) -> usize {
            layers
                .iter()
                .map(|l| match l {
                    LayerDesc::Activation => 1,
                    LayerDesc::Residual { body } => count(body),
                    _ => 0,
                })
                .sum()
        }
        count(&self.layers)
    }
}

/// Walks descriptors, validating each transition.
fn walk_shapes(layers: &[LayerDesc], start: SampleShape) -> Result<SampleShape> {
    let mut shape = start;
    for (i, desc) in layers.iter().enumerate() {
        shape = match (desc, shape) {
            (LayerDesc::Dense { inputs, outputs }, SampleShape::Flat(n)) => {
                if n != *inputs {
                    return Err(Error::Spec(format!(
                        "layer {i}: dense expects {inputs} inputs but receives [{n}]"
                    )));
                }
                if *outputs == 0 {
                    return Err(Error::Spec(format!("layer {i}: dense has zero outputs")));
                }
                SampleShape::Flat(*outputs)
            }
            (LayerDesc::Dense { .. }, s @ SampleShape::Img(..)) => {
                return Err(Error::Spec(format!(
                    "layer {i}: dense needs flat input but receives {s}; add a flatten"
                )))
            }
            (
                LayerDesc::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                },
                SampleShape::Img(c, h, w),
            ) => {
                if c != *in_channels {
                    return Err(Error::Spec(format!(
                        "layer {i}: conv expects {in_channels} channels but receives {c}"
                    )));
                }
                if *out_channels == 0 || *kernel == 0 || *stride == 0 {
                    return Err(Error::Spec(format!(
                        "layer {i}: conv sizes must be positive"
                    )));
                }
                let span_h = (h + 2 * pad).checked_sub(*kernel);
                let span_w = (w + 2 * pad).checked_sub(*kernel);
                match (span_h, span_w) {
                    (Some(sh), Some(sw)) if sh % stride == 0 && sw % stride == 0 => {
                        SampleShape::Img(*out_channels, sh / stride + 1, sw / stride + 1)
                    }
                    _ => {
                        return Err(Error::Spec(format!(
                            "layer {i}: conv geometry does not tile {h}x{w} with kernel \
                             {kernel}, stride {stride}, pad {pad}"
                        )))
                    }
                }
            }
            (LayerDesc::Conv2d { .. }, s @ SampleShape::Flat(_)) => {
                return Err(Error::Spec(format!(
                    "layer {i}: conv needs image input but receives {s}"
                )))
            }
            (LayerDesc::Activation, s) => s,
            (LayerDesc::MaxPool2, SampleShape::Img(c, h, w)) => {
                if h < 2 || w < 2 {
                    return Err(Error::Spec(format!(
                        "layer {i}: max pool needs at least 2x2 input, got {h}x{w}"
                    )));
                }
                SampleShape::Img(c, h / 2, w / 2)
            }
            (LayerDesc::MaxPool2, s @ SampleShape::Flat(_)) => {
                return Err(Error::Spec(format!(
                    "layer {i}: max pool needs image input but receives {s}"
                )))
            }
            (LayerDesc::Flatten, SampleShape::Img(c, h, w)) => SampleShape::Flat(c * h * w),
            (LayerDesc::Flatten, s @ SampleShape::Flat(_)) => s,
            (LayerDesc::Residual { body }, s) => {
                let out = walk_shapes(body, s)?;
                if out != s {
                    return Err(Error::Spec(format!(
                        "layer {i}: residual body maps {s} to {out}; it must preserve shape"
                    )));
                }
                s
            }
        };
    }
    Ok(shape)
}

/// Gradients for every trainable parameter group, ordered exactly like
/// [`Model::param_slices_mut`].
#[derive(Debug, Clone)]
pub struct GradSet {
    pub groups: Vec<Vec<f64>>,
}

impl GradSet {
    pub fn as_slices(&self) -> Vec<&[f64]> {
        self.groups.iter().map(|g| g.as_slice()).collect()
    }
}

/// Learnable-parameter counts for a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCensus {
    /// Weights and biases of dense/conv layers.
    pub weights: usize,
    /// Activation scalars visible to the optimizer (4 per adaptive site,
    /// 1 per PReLU site; 0 when frozen or fixed).
    pub activation: usize,
    pub total: usize,
}

/// Name, kind, and current `(a, b, c, d)` of one parameterized activation
/// site (PReLU reported as `(slope, 1, 0, 0)`).
#[derive(Debug, Clone, PartialEq)]
pub struct SiteInfo {
    pub name: String,
    pub kind: ActivationKind,
    pub params: [f64; 4],
}

/// Transfer-function samples of one activation site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTrace {
    pub name: String,
    pub kind: ActivationKind,
    /// `(z, f(z))` pairs.
    pub samples: Vec<(f64, f64)>,
}

/// A live network: spec plus initialized layers.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<Layer>,
    pass: u64,
    /// True while the latest forward still awaits its backward.
    forward_live: bool,
}

impl Model {
    /// Builds and initializes a model: Glorot-uniform weights
    /// (`limit = sqrt(6 / (fan_in + fan_out))`), zero biases, baseline
    /// activation parameters. Weight draws consume the PRNG in layer order,
    /// row-major within each tensor.
    pub fn init(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut layers = build_layers(&spec.layers, spec)?;
        init_weights(&mut layers, rng)?;
        Ok(Model {
            spec: spec.clone(),
            layers,
            pass: 0,
            forward_live: false,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let want = &self.spec.input_shape;
        match x.shape() {
            [b, rest @ ..] if *b > 0 && rest == want.as_slice() => Ok(*b),
            other => Err(Error::Dim(format!(
                "model expects input [batch, {}, {}, {}], got {other:?}",
                want[0], want[1], want[2]
            ))),
        }
    }

    /// Training-mode forward pass over a `[batch, c, h, w]` tensor; returns
    /// `[batch, classes]` logits and arms the layer caches for one backward.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.pass += 1;
        self.forward_live = true;
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, self.pass)?;
        }
        Ok(cur)
    }

    /// Pure forward pass: touches no caches, works through `&self`.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    /// Backpropagates `dL/dlogits` from the most recent [`Self::forward`],
    /// producing gradients for every trainable group. Consumes the caches:
    /// each forward supports exactly one backward.
    pub fn backward(&mut self, dlogits: &Tensor) -> Result<GradSet> {
        if !self.forward_live {
            return Err(Error::Contract(
                "backward requires a forward pass first (inference passes don't count)".into(),
            ));
        }
        self.forward_live = false;
        if dlogits.rank() != 2 || dlogits.shape()[1] != self.spec.classes {
            return Err(Error::Dim(format!(
                "backward expects [batch, {}] logit gradients, got {:?}",
                self.spec.classes,
                dlogits.shape()
            )));
        }
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        let mut cur = dlogits.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let (dx, grads) = layer.backward(&cur, self.pass)?;
            per_layer[i] = grads;
            cur = dx;
        }
        Ok(GradSet {
            groups: per_layer.into_iter().flatten().collect(),
        })
    }

    /// Mutable views of all trainable parameter groups, forward layer order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_slices_mut())
            .collect()
    }

    /// Role/size descriptors aligned with [`Self::param_slices_mut`].
    pub fn param_descs(&self) -> Vec<ParamDesc> {
        self.layers.iter().flat_map(|l| l.param_descs()).collect()
    }

    /// Counts trainable parameters by role.
    pub fn census(&self) -> ParamCensus {
        let mut weights = 0;
        let mut activation = 0;
        for d in self.param_descs() {
            match d.role {
                ParamRole::Weight | ParamRole::Bias => weights += d.len,
                ParamRole::Activation => activation += d.len,
            }
        }
        ParamCensus {
            weights,
            activation,
            total: weights + activation,
        }
    }

    /// Clones of every weight tensor (dense `W`, conv kernels — biases
    /// excluded), named `dense0`, `conv1`, ... in forward order.
    pub fn weight_snapshot(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        let mut dense_i = 0;
        let mut conv_i = 0;
        visit_layers(&self.layers, &mut |layer| match layer {
            Layer::Dense(l) => {
                out.push((format!("dense{dense_i}"), l.w.clone()));
                dense_i += 1;
            }
            Layer::Conv2d(l) => {
                out.push((format!("conv{conv_i}"), l.kernels.clone()));
                conv_i += 1;
            }
            _ => {}
        });
        out
    }

    /// Parameterized activation sites (adaptive or PReLU), named `act0`,
    /// `act1`, ... in forward order. Frozen sites are included — their
    /// parameters are still model state, just not trained.
    pub fn adaptive_sites(&self) -> Vec<SiteInfo> {
        let mut out = Vec::new();
        let mut i = 0;
        visit_layers(&self.layers, &mut |layer| {
            if let Layer::Activation(l) = layer {
                if let Some(q) = l.quadruple() {
                    out.push(SiteInfo {
                        name: format!("act{i}"),
                        kind: l.kind,
                        params: q.to_array(),
                    });
                }
                i += 1;
            }
        });
        out
    }

    /// Samples every activation site's current transfer function on `grid`.
    pub fn shape_trace(&self, grid: &[f64]) -> Result<Vec<SiteTrace>> {
        let z = Tensor::from_vec(grid.to_vec())?;
        let mut sites = Vec::new();
        let mut i = 0;
        let mut err = None;
        visit_layers(&self.layers, &mut |layer| {
            if let Layer::Activation(l) = layer {
                if err.is_none() {
                    match l.apply(&z) {
                        Ok(y) => sites.push(SiteTrace {
                            name: format!("act{i}"),
                            kind: l.kind,
                            samples: grid.iter().copied().zip(y.data().iter().copied()).collect(),
                        }),
                        Err(e) => err = Some(e),
                    }
                }
                i += 1;
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(sites),
        }
    }

    /// Saves spec, seed, and all state to a checkpoint file.
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        std::fs::write(path, self.to_bytes(seed)).map_err(|e| io_at(path, e))?;
        Ok(())
    }

    /// Restores a model and its originating seed from [`Self::save`] output.
    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let bytes = std::fs::read(path).map_err(|e| io_at(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn state_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.state_slices_mut())
            .collect()
    }

    fn to_bytes(&self, seed: u64) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        write_u32(&mut out, CHECKPOINT_VERSION);
        write_u64(&mut out, seed);
        write_spec(&mut out, &self.spec);
        // State groups: a cloned model hands out the same slice layout.
        let mut me = self.clone();
        let slices = me.state_slices_mut();
        write_u64(&mut out, slices.len() as u64);
        for s in slices {
            write_u64(&mut out, s.len() as u64);
            for v in s.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<(Self, u64)> {
        let mut r = ByteReader::new(bytes);
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let seed = r.u64()?;
        let spec = read_spec(&mut r)?;
        spec.validate()
            .map_err(|e| Error::Checkpoint(format!("embedded spec invalid: {e}")))?;
        let mut model = Model {
            layers: build_layers(&spec.layers, &spec)?,
            spec,
            pass: 0,
            forward_live: false,
        };
        let groups = r.u64()? as usize;
        {
            let slices = model.state_slices_mut();
            if groups != slices.len() {
                return Err(Error::Checkpoint(format!(
                    "state has {groups} groups, model needs {}",
                    slices.len()
                )));
            }
            for s in slices {
                let len = r.u64()? as usize;
                if len != s.len() {
                    return Err(Error::Checkpoint(format!(
                        "state group of {len} values does not match expected {}",
                        s.len()
                    )));
                }
                for v in s.iter_mut() {
                    *v = r.f64()?;
                }
            }
        }
        if !r.done() {
            return Err(Error::Checkpoint("trailing bytes after state".into()));
        }
        for (i, s) in model.clone().state_slices_mut().iter().enumerate() {
            if let Some(bad) = s.iter().find(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!(
                    "state group {i} contains non-finite value {bad}"
                )));
            }
        }
        Ok((model, seed))
    }
}

/// Depth-first layer visitor (recurses into residual bodies in place).
fn visit_layers<'a>(layers: &'a [Layer], f: &mut impl FnMut(&'a Layer)) {
    for layer in layers {
        if let Layer::Residual(r) = layer {
            visit_layers(&r.body, f);
        } else {
            f(layer);
        }
    }
}

fn build_layers(descs: &[LayerDesc], spec: &ModelSpec) -> Result<Vec<Layer>> {
    let trainable = !spec.freeze_activation;
    descs
        .iter()
        .map(|desc| {
            Ok(match desc {
                LayerDesc::Dense { inputs, outputs } => Layer::Dense(DenseLayer::new(
                    Tensor::zeros(vec![*outputs, *inputs])?,
                    Tensor::zeros(vec![*outputs])?,
                )?),
                LayerDesc::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => Layer::Conv2d(Conv2dLayer::new(
                    Tensor::zeros(vec![*out_channels, *in_channels, *kernel, *kernel])?,
                    Tensor::zeros(vec![*out_channels])?,
                    *stride,
                    *pad,
                )?),
                LayerDesc::Activation => {
                    Layer::Activation(ActivationLayer::new(spec.activation, trainable)?)
                }
                LayerDesc::MaxPool2 => Layer::MaxPool(MaxPoolLayer::default()),
                LayerDesc::Flatten => Layer::Flatten(FlattenLayer::default()),
                LayerDesc::Residual { body } => Layer::Residual(ResidualLayer {
                    body: build_layers(body, spec)?,
                }),
            })
        })
        .collect()
}

/// Fills weight tensors with Glorot-uniform draws; biases stay zero.
fn init_weights(layers: &mut [Layer], rng: &mut Rng) -> Result<()> {
    for layer in layers {
        match layer {
            Layer::Dense(l) => {
                let (out, inp) = (l.w.shape()[0], l.w.shape()[1]);
                let limit = (6.0 / (inp + out) as f64).sqrt();
                l.w = rng.rand_uniform(vec![out, inp], -limit, limit)?;
            }
            Layer::Conv2d(l) => {
                let s = l.kernels.shape().to_vec();
                let (oc, ic, kh, kw) = (s[0], s[1], s[2], s[3]);
                let fan_in = ic * kh * kw;
                let fan_out = oc * kh * kw;
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                l.kernels = rng.rand_uniform(s, -limit, limit)?;
            }
            Layer::Residual(r) => init_weights(&mut r.body, rng)?,
            _ => {}
        }
    }
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8] = b"ADNN";
const CHECKPOINT_VERSION: u32 = 1;

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    write_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

fn write_activation(out: &mut Vec<u8>, kind: &ActivationKind) {
    let (tag, aux) = match kind {
        ActivationKind::Sigmoid => (0u8, 0.0),
        ActivationKind::Tanh => (1, 0.0),
        ActivationKind::ReLU => (2, 0.0),
        ActivationKind::LReLU { slope } => (3, *slope),
        ActivationKind::Swish => (4, 0.0),
        ActivationKind::PReLU => (5, 0.0),
        ActivationKind::ASigmoid => (6, 0.0),
        ActivationKind::ATanh => (7, 0.0),
        ActivationKind::AReLU => (8, 0.0),
    };
    out.push(tag);
    out.extend_from_slice(&aux.to_le_bytes());
}

fn write_descs(out: &mut Vec<u8>, descs: &[LayerDesc]) {
    write_u64(out, descs.len() as u64);
    for d in descs {
        match d {
            LayerDesc::Dense { inputs, outputs } => {
                out.push(0);
                write_u64(out, *inputs as u64);
                write_u64(out, *outputs as u64);
            }
            LayerDesc::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                out.push(1);
                for v in [in_channels, out_channels, kernel, stride, pad] {
                    write_u64(out, *v as u64);
                }
            }
            LayerDesc::Activation => out.push(2),
            LayerDesc::MaxPool2 => out.push(3),
            LayerDesc::Flatten => out.push(4),
            LayerDesc::Residual { body } => {
                out.push(5);
                write_descs(out, body);
            }
        }
    }
}

fn write_spec(out: &mut Vec<u8>, spec: &ModelSpec) {
    write_str(out, &spec.name);
    write_u64(out, spec.input_shape.len() as u64);
    for &d in &spec.input_shape {
        write_u64(out, d as u64);
    }
    write_u64(out, spec.classes as u64);
    write_activation(out, &spec.activation);
    out.push(spec.freeze_activation as u8);
    write_descs(out, &spec.layers);
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} overflows usize")))
    }

    fn str(&mut self) -> Result<String> {
        let len = self.usize()?;
        if len > 1 << 20 {
            return Err(Error::Checkpoint(format!(
                "string length {len} implausible"
            )));
        }
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid utf-8 string".into()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn read_activation(r: &mut ByteReader) -> Result<ActivationKind> {
    let tag = r.u8()?;
    let aux = r.f64()?;
    Ok(match tag {
        0 => ActivationKind::Sigmoid,
        1 => ActivationKind::Tanh,
        2 => ActivationKind::ReLU,
        3 => ActivationKind::LReLU { slope: aux },
        4 => ActivationKind::Swish,
        5 => ActivationKind::PReLU,
        6 => ActivationKind::ASigmoid,
        7 => ActivationKind::ATanh,
        8 => ActivationKind::AReLU,
        other => return Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
    })
}

fn read_descs(r: &mut ByteReader, depth: usize) -> Result<Vec<LayerDesc>> {
    if depth > 8 {
        return Err(Error::Checkpoint("residual nesting too deep".into()));
    }
    let count = r.usize()?;
    if count > 10_000 {
        return Err(Error::Checkpoint(format!(
            "layer count {count} implausible"
        )));
    }
    (0..count)
        .map(|_| {
            Ok(match r.u8()? {
                0 => LayerDesc::Dense {
                    inputs: r.usize()?,
                    outputs: r.usize()?,
                },
                1 => LayerDesc::Conv2d {
                    in_channels: r.usize()?,
                    out_channels: r.usize()?,
                    kernel: r.usize()?,
                    stride: r.usize()?,
                    pad: r.usize()?,
                },
                2 => LayerDesc::Activation,
                3 => LayerDesc::MaxPool2,
                4 => LayerDesc::Flatten,
                5 => LayerDesc::Residual {
                    body: read_descs(r, depth + 1)?,
                },
                other => return Err(Error::Checkpoint(format!("unknown layer tag {other}"))),
            })
        })
        .collect()
}

fn read_spec(r: &mut ByteReader) -> Result<ModelSpec> {
    let name = r.str()?;
    let rank = r.usize()?;
    if rank != 3 {
        return Err(Error::Checkpoint(format!(
            "input shape rank {rank}, expected 3"
        )));
    }
    let input_shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let classes = r.usize()?;
    let activation = read_activation(r)?;
    let freeze_activation = match r.u8()? {
        0 => false,
        1 => true,
        other => {
            return Err(Error::Checkpoint(format!("bad freeze flag {other}")));
        }
    };
    let layers = read_descs(r, 0)?;
    Ok(ModelSpec {
        name,
        input_shape,
        classes,
        activation,
        freeze_activation,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::cross_entropy_batch;

    fn gaussian_input(batch: usize, dim: usize, rng: &mut Rng) -> Tensor {
        rng.rand_uniform(vec![batch, 1, dim, 1], -1.0, 1.0).unwrap()
    }

    // Hand-computed parameter counts:
    //   mlp-2 on [1,3,1] x 3 classes: (3*64+64) + (64*64+64) + (64*3+3) = 4611
    //   cnn-mini on [3,32,32] x 10:   448 + 4640 + 18496 + 65600 + 650 = 89834
    //   cnn-mini-res adds conv(64,64): + 36928 = 126762
    #[test]
    fn census_matches_hand_counts() {
        let mut rng = Rng::new(1);
        let spec = ModelSpec::mlp2(vec![1, 3, 1], 3, ActivationKind::ASigmoid);
        let m = Model::init(&spec, &mut rng).unwrap();
        assert_eq!(
            m.census(),
            ParamCensus {
                weights: 4611,
                activation: 8, // 2 sites x 4 scalars
                total: 4619
            }
        );

        let spec = ModelSpec::cnn_mini(vec![3, 32, 32], 10, ActivationKind::PReLU);
        let m = Model::init(&spec, &mut rng).unwrap();
        assert_eq!(
            m.census(),
            ParamCensus {
                weights: 89834,
                activation: 3, // 3 PReLU slopes
                total: 89837
            }
        );
        assert_eq!(m.spec().activation_sites(), 3);

        let spec = ModelSpec::cnn_mini_res(vec![3, 32, 32], 10, ActivationKind::AReLU);
        let m = Model::init(&spec, &mut rng).unwrap();
        assert_eq!(
            m.census(),
            ParamCensus {
                weights: 126762,
                activation: 16, // 4 sites x 4 scalars
                total: 126778
            }
        );
        assert_eq!(m.spec().activation_sites(), 4);

        // Fixed activations contribute nothing.
        let spec = ModelSpec::mlp2(vec![1, 3, 1], 3, ActivationKind::ReLU);
        let m = Model::init(&spec, &mut rng).unwrap();
        assert_eq!(m.census().activation, 0);

        // Freezing hides activation scalars from the optimizer.
        let mut spec = ModelSpec::mlp2(vec![1, 3, 1], 3, ActivationKind::AReLU);
        spec.freeze_activation = true;
        let m = Model::init(&spec, &mut rng).unwrap();
        assert_eq!(m.census().activation, 0);
        assert_eq!(m.adaptive_sites().len(), 2); // still reported as state
    }

    #[test]
    fn glorot_init_bounds_and_determinism() {
        let spec = ModelSpec::mlp2(vec![1, 6, 1], 3, ActivationKind::Tanh);
        let m1 = Model::init(&spec, &mut Rng::new(42)).unwrap();
        let m2 = Model::init(&spec, &mut Rng::new(42)).unwrap();
        let m3 = Model::init(&spec, &mut Rng::new(43)).unwrap();

        let w1 = m1.weight_snapshot();
        let w2 = m2.weight_snapshot();
        let w3 = m3.weight_snapshot();
        assert_eq!(
            w1.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
            ["dense0", "dense1", "dense2"]
        );
        for ((_, a), (_, b)) in w1.iter().zip(w2.iter()) {
            assert_eq!(a, b); // same seed, same bits
        }
        assert!(w1.iter().zip(w3.iter()).any(|((_, a), (_, b))| a != b));

        // Layer 0: fan_in 6, fan_out 64 -> limit sqrt(6/70).
        let limit = (6.0f64 / 70.0).sqrt();
        assert!(w1[0].1.data().iter().all(|w| w.abs() < limit));
        // Some draws should be reasonably close to the limit.
        assert!(w1[0].1.data().iter().any(|w| w.abs() > 0.5 * limit));

        // Biases are zero.
        if let Layer::Dense(l) = &m1.layers()[1] {
            assert!(l.b.data().iter().all(|&b| b == 0.0));
        } else {
            panic!("layer 1 should be dense");
        }
    }

    #[test]
    fn forward_shapes_for_presets() {
        let mut rng = Rng::new(7);
        let spec = ModelSpec::mlp2(vec![1, 5, 1], 4, ActivationKind::AReLU);
        let mut m = Model::init(&spec, &mut rng).unwrap();
        let x = gaussian_input(3, 5, &mut rng);
        let y = m.forward(&x).unwrap();
        assert_eq!(y.shape(), &[3, 4]);

        // CNN presets on a small 16x16 image to keep the test quick.
        for build in [ModelSpec::cnn_mini, ModelSpec::cnn_mini_res] {
            let spec = build(vec![3, 16, 16], 5, ActivationKind::ATanh);
            let mut m = Model::init(&spec, &mut rng).unwrap();
            let x = rng.rand_uniform(vec![2, 3, 16, 16], 0.0, 1.0).unwrap();
            let y = m.forward(&x).unwrap();
            assert_eq!(y.shape(), &[2, 5]);
            let y2 = m.infer(&x).unwrap();
            assert_eq!(y.data(), y2.data());
        }
    }

    #[test]
    fn input_validation() {
        let mut rng = Rng::new(7);
        let spec = ModelSpec::mlp2(vec![1, 5, 1], 4, ActivationKind::ReLU);
        let mut m = Model::init(&spec, &mut rng).unwrap();
        let bad = Tensor::zeros(vec![2, 1, 4, 1]).unwrap();
        assert!(matches!(m.forward(&bad), Err(Error::Dim(_))));
        let bad = Tensor::zeros(vec![1, 5, 1]).unwrap(); // no batch axis
        assert!(matches!(m.infer(&bad), Err(Error::Dim(_))));
    }

    #[test]
    fn backward_contract_and_alignment() {
        let mut rng = Rng::new(9);
        let spec = ModelSpec::mlp2(vec![1, 4, 1], 3, ActivationKind::ASigmoid);
        let mut m = Model::init(&spec, &mut rng).unwrap();
        let x = gaussian_input(2, 4, &mut rng);

        let dl = Tensor::zeros(vec![2, 3]).unwrap();
        // Backward before any forward.
        assert!(matches!(m.backward(&dl), Err(Error::Contract(_))));
        // Inference doesn't arm caches.
        let _ = m.infer(&x).unwrap();
        assert!(matches!(m.backward(&dl), Err(Error::Contract(_))));

        let logits = m.forward(&x).unwrap();
        let (_, dlogits) = cross_entropy_batch(&logits, &[0, 1]).unwrap();
        let grads = m.backward(&dlogits).unwrap();
        // One grad group per trainable param group, same lengths.
        let descs = m.param_descs();
        assert_eq!(grads.groups.len(), descs.len());
        for (g, d) in grads.groups.iter().zip(descs.iter()) {
            assert_eq!(g.len(), d.len);
        }
        // 3 dense layers x 2 groups + 2 adaptive sites.
        assert_eq!(grads.groups.len(), 8);

        // Double backward without a fresh forward.
        assert!(matches!(m.backward(&dlogits), Err(Error::Contract(_))));
    }

    #[test]
    fn residual_preset_grads_flow() {
        let mut rng = Rng::new(11);
        let spec = ModelSpec::cnn_mini_res(vec![3, 8, 8], 3, ActivationKind::AReLU);
        let mut m = Model::init(&spec, &mut rng).unwrap();
        let x = rng.rand_uniform(vec![2, 3, 8, 8], 0.0, 1.0).unwrap();
        let logits = m.forward(&x).unwrap();
        let (_, dlogits) = cross_entropy_batch(&logits, &[0, 2]).unwrap();
        let grads = m.backward(&dlogits).unwrap();
        // 4 convs x 2 + 2 dense x 2 + 4 adaptive sites = 16 groups.
        assert_eq!(grads.groups.len(), 16);
        // The residual conv's kernel gradient is group index... easier by
        // size: exactly one group has 64*64*9 entries.
        assert_eq!(grads.groups.iter().filter(|g| g.len() == 36864).count(), 1);
        // Every group must carry some signal.
        for (i, g) in grads.groups.iter().enumerate() {
            assert!(g.iter().any(|&v| v != 0.0), "group {i} is all zeros");
        }
    }

    #[test]
    fn spec_validation_catches_inconsistencies() {
        // Dense chain mismatch.
        let bad = ModelSpec::custom(
            vec![1, 4, 1],
            3,
            ActivationKind::ReLU,
            vec![
                LayerDesc::Flatten,
                LayerDesc::Dense {
                    inputs: 5,
                    outputs: 3,
                },
            ],
        );
        assert!(matches!(bad, Err(Error::Spec(_))));

        // Dense on image input.
        let bad = ModelSpec::custom(
            vec![1, 4, 4],
            3,
            ActivationKind::ReLU,
            vec![LayerDesc::Dense {
                inputs: 16,
                outputs: 3,
            }],
        );
        assert!(matches!(bad, Err(Error::Spec(_))));

        // Conv channel mismatch.
        let bad = ModelSpec::custom(
            vec![3, 8, 8],
            2,
            ActivationKind::ReLU,
            vec![LayerDesc::Conv2d {
                in_channels: 4,
                out_channels: 8,
                kernel: 3,
                stride: 1,
                pad: 1,
            }],
        );
        assert!(matches!(bad, Err(Error::Spec(_))));

        // Output isn't [classes].
        let bad = ModelSpec::custom(
            vec![1, 4, 1],
            3,
            ActivationKind::ReLU,
            vec![
                LayerDesc::Flatten,
                LayerDesc::Dense {
                    inputs: 4,
                    outputs: 7,
                },
            ],
        );
        assert!(matches!(bad, Err(Error::Spec(_))));

        // Residual body that changes shape.
        let bad = ModelSpec::custom(
            vec![3, 8, 8],
            2,
            ActivationKind::ReLU,
            vec![LayerDesc::Residual {
                body: vec![LayerDesc::MaxPool2],
            }],
        );
        assert!(matches!(bad, Err(Error::Spec(_))));

        // Pooling a 1-pixel image.
        let bad = ModelSpec::custom(
            vec![3, 1, 1],
            2,
            ActivationKind::ReLU,
            vec![LayerDesc::MaxPool2],
        );
        assert!(matches!(bad, Err(Error::Spec(_))));

        assert!(ModelSpec::preset("mlp-9", vec![1, 3, 1], 3, ActivationKind::ReLU).is_err());
        assert!(ModelSpec::mlp2(vec![1, 3, 1], 1, ActivationKind::ReLU)
            .validate()
            .is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let dir = std::env::temp_dir().join(format!("ckpt-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");

        let mut rng = Rng::new(31);
        let mut spec = ModelSpec::cnn_mini_res(vec![3, 8, 8], 3, ActivationKind::AReLU);
        spec.freeze_activation = true; // frozen scalars must persist too
        let m = Model::init(&spec, &mut rng).unwrap();
        m.save(&path, 31).unwrap();

        let (loaded, seed) = Model::load(&path).unwrap();
        assert_eq!(seed, 31);
        assert_eq!(loaded.spec(), m.spec());
        for ((n1, t1), (n2, t2)) in m
            .weight_snapshot()
            .iter()
            .zip(loaded.weight_snapshot().iter())
        {
            assert_eq!(n1, n2);
            assert_eq!(t1, t2);
        }
        assert_eq!(m.adaptive_sites(), loaded.adaptive_sites());

        // Same predictions, bit for bit.
        let x = rng.rand_uniform(vec![2, 3, 8, 8], 0.0, 1.0).unwrap();
        assert_eq!(m.infer(&x).unwrap(), loaded.infer(&x).unwrap());

        // Corruption is rejected.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(Model::load(&path), Err(Error::Checkpoint(_))));

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(Model::load(&path), Err(Error::Checkpoint(_))));

        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn shape_trace_samples_every_site() {
        let mut rng = Rng::new(5);
        let spec = ModelSpec::mlp2(vec![1, 3, 1], 3, ActivationKind::AReLU);
        let m = Model::init(&spec, &mut rng).unwrap();
        let grid: Vec<f64> = (0..101).map(|i| -5.0 + 0.1 * i as f64).collect();
        let traces = m.shape_trace(&grid).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].name, "act0");
        assert_eq!(traces[0].samples.len(), 101);
        // At init AReLU is exactly ReLU: f(-5) = 0, f(5) = 5.
        assert_eq!(traces[0].samples[0].1, 0.0);
        let last = traces[0].samples.last().unwrap();
        assert!((last.1 - last.0).abs() < 1e-12);

        // Fixed kinds trace too (their shape never changes but the samples
        // document it).
        let spec = ModelSpec::mlp2(vec![1, 3, 1], 3, ActivationKind::Tanh);
        let m = Model::init(&spec, &mut rng).unwrap();
        let traces = m.shape_trace(&grid).unwrap();
        assert_eq!(traces.len(), 2);
        assert!(m.adaptive_sites().is_empty());
    }
}
