//! Minimal Siamese CNN: per-patch forward/backward, dense inference,
//! SGD with an exponentially decaying learning rate, and checkpoints.

pub mod checkpoint;
pub mod dense;
pub mod kernels;
pub mod sgd;

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Point};
use kernels::Tensor3;

pub use dense::forward_dense;
pub use sgd::{LrSchedule, Sgd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    MaxPool,
    Tanh,
}

impl LayerKind {
    pub fn code(self) -> u32 {
        match self {
            LayerKind::Conv => 0,
            LayerKind::MaxPool => 1,
            LayerKind::Tanh => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(LayerKind::Conv),
            1 => Some(LayerKind::MaxPool),
            2 => Some(LayerKind::Tanh),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel_size: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerSpec {
    pub fn conv(kernel_size: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            kernel_size,
            stride: 1,
            in_channels,
            out_channels,
        }
    }

    pub fn maxpool(size: usize, channels: usize) -> Self {
        Self {
            kind: LayerKind::MaxPool,
            kernel_size: size,
            stride: size,
            in_channels: channels,
            out_channels: channels,
        }
    }

    pub fn tanh(channels: usize) -> Self {
        Self {
            kind: LayerKind::Tanh,
            kernel_size: 1,
            stride: 1,
            in_channels: channels,
            out_channels: channels,
        }
    }

    fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_size * self.kernel_size
    }
}

/// Builds the conv / tanh / pool stack of the reference architecture with
/// arbitrary kernel sizes and channel widths. `kernels` and `channels`
/// list the six conv layers; pooling follows conv 1 and conv 3.
///
/// Pooling is placed before the tanh of its block. Max pooling commutes
/// with the monotone tanh, so the output is the same as tanh-then-pool
/// while tanh runs on a quarter of the values.
fn reference_layout(in_channels: usize, kernels: [usize; 6], channels: [usize; 6]) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut c = in_channels;
    for (i, (&k, &out)) in kernels.iter().zip(&channels).enumerate() {
        layers.push(LayerSpec::conv(k, c, out));
        c = out;
        if i == 0 || i == 2 {
            layers.push(LayerSpec::maxpool(2, c));
        }
        layers.push(LayerSpec::tanh(out));
    }
    layers
}

/// Full-size architecture: 56×56 patches, 256-dimensional features.
pub fn full_architecture(in_channels: usize) -> Vec<LayerSpec> {
    reference_layout(in_channels, [5, 5, 5, 5, 5, 1], [64, 80, 160, 256, 512, 256])
}

/// Desk-scale default: same layer sequence on 32×32 patches with a quarter
/// of the channels (64-dimensional features).
pub fn desk_architecture(in_channels: usize) -> Vec<LayerSpec> {
    reference_layout(in_channels, [5, 3, 3, 3, 3, 1], [16, 20, 40, 64, 128, 64])
}

/// Small 16×16 variant used for quick experiments and tests.
pub fn compact_architecture(in_channels: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(5, in_channels, 8),
        LayerSpec::maxpool(2, 8),
        LayerSpec::tanh(8),
        LayerSpec::conv(3, 8, 16),
        LayerSpec::maxpool(2, 16),
        LayerSpec::tanh(16),
        LayerSpec::conv(2, 16, 32),
        LayerSpec::tanh(32),
        LayerSpec::conv(1, 32, 16),
        LayerSpec::tanh(16),
    ]
}

/// Checks the layer list and returns `(receptive_field, in_channels,
/// feature_dim)`.
pub fn validate_layers(layers: &[LayerSpec]) -> Result<(usize, usize, usize)> {
    let first_conv = layers
        .iter()
        .find(|l| l.kind == LayerKind::Conv)
        .ok_or_else(|| Error::Architecture("no conv layer".into()))?;
    if layers.last().map(|l| l.kind) != Some(LayerKind::Tanh) {
        return Err(Error::Architecture("last layer must be Tanh".into()));
    }
    let mut channels = first_conv.in_channels;
    for (i, l) in layers.iter().enumerate() {
        if l.in_channels != channels {
            return Err(Error::Architecture(format!(
                "layer {i}: expects {} input channels, previous layer gives {channels}",
                l.in_channels
            )));
        }
        match l.kind {
            LayerKind::Conv => {
                if l.kernel_size == 0 || l.stride != 1 || l.out_channels == 0 {
                    return Err(Error::Architecture(format!(
                        "layer {i}: conv needs kernel >= 1, stride 1 and output channels"
                    )));
                }
            }
            LayerKind::MaxPool => {
                if l.kernel_size == 0 || l.stride != l.kernel_size || l.out_channels != l.in_channels {
                    return Err(Error::Architecture(format!(
                        "layer {i}: maxpool stride must equal its kernel size"
                    )));
                }
            }
            LayerKind::Tanh => {
                if l.out_channels != l.in_channels {
                    return Err(Error::Architecture(format!("layer {i}: tanh changes channels")));
                }
            }
        }
        channels = l.out_channels;
    }
    let mut size = 1usize;
    for l in layers.iter().rev() {
        size = match l.kind {
            LayerKind::Conv => size + l.kernel_size - 1,
            LayerKind::MaxPool => size * l.stride,
            LayerKind::Tanh => size,
        };
    }
    Ok((size, first_conv.in_channels, channels))
}

/// Weights `[out, in, k, k]` and biases of one conv layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvBlock {
    fn zeros_like(spec: &LayerSpec) -> Self {
        Self {
            weight: vec![0.0; spec.out_channels * spec.fan_in()],
            bias: vec![0.0; spec.out_channels],
        }
    }
}

/// Parameters of the feature network `D(p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    layers: Vec<LayerSpec>,
    blocks: Vec<ConvBlock>,
    receptive_field: usize,
    in_channels: usize,
    feature_dim: usize,
}

impl NetworkParams {
    /// Assembles parameters from explicit blocks, checking every shape.
    pub fn from_blocks(layers: Vec<LayerSpec>, blocks: Vec<ConvBlock>) -> Result<Self> {
        let (receptive_field, in_channels, feature_dim) = validate_layers(&layers)?;
        let convs: Vec<&LayerSpec> = layers.iter().filter(|l| l.kind == LayerKind::Conv).collect();
        if convs.len() != blocks.len() {
            return Err(Error::Shape(format!(
                "{} conv layers but {} parameter blocks",
                convs.len(),
                blocks.len()
            )));
        }
        for (i, (spec, block)) in convs.iter().zip(&blocks).enumerate() {
            let want = ConvBlock::zeros_like(spec);
            if want.weight.len() != block.weight.len() || want.bias.len() != block.bias.len() {
                return Err(Error::Shape(format!("conv block {i} does not match its layer")));
            }
            if !block.weight.iter().chain(&block.bias).all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument(format!("conv block {i} holds non-finite values")));
            }
        }
        Ok(Self {
            layers,
            blocks,
            receptive_field,
            in_channels,
            feature_dim,
        })
    }

    /// All-zero parameters.
    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        let blocks = layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv)
            .map(ConvBlock::zeros_like)
            .collect();
        Self::from_blocks(layers, blocks)
    }

    /// Uniform init in `±sqrt(3 / fan_in)` (unit-variance preserving for
    /// unit-variance inputs), zero biases. Deterministic per seed.
    pub fn init(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs: Vec<LayerSpec> = params.conv_specs().copied().collect();
        for (spec, block) in convs.iter().zip(&mut params.blocks) {
            let a = (3.0 / spec.fan_in() as f64).sqrt();
            for w in &mut block.weight {
                *w = rng.random_range(-a..a);
            }
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn blocks(&self) -> &[ConvBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ConvBlock] {
        &mut self.blocks
    }

    pub fn receptive_field(&self) -> usize {
        self.receptive_field
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(|b| b.weight.len() + b.bias.len()).sum()
    }

    fn conv_specs(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.kind == LayerKind::Conv)
    }

    fn patch_tensor(&self, patch: &[f64]) -> Result<Tensor3> {
        let rf = self.receptive_field;
        if patch.len() != self.in_channels * rf * rf {
            return Err(Error::Shape(format!(
                "patch has {} values, network expects {}x{}x{}",
                patch.len(),
                self.in_channels,
                rf,
                rf
            )));
        }
        Ok(Tensor3::from_vec(self.in_channels, rf, rf, patch.to_vec()))
    }

    /// Feature vector `D(p)` of one patch (`[channels, rf, rf]` row-major).
    pub fn forward(&self, patch: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.patch_tensor(patch)?;
        let mut conv = 0;
        for l in &self.layers {
            x = match l.kind {
                LayerKind::Conv => {
                    let b = &self.blocks[conv];
                    conv += 1;
                    kernels::conv_forward(&x, &b.weight, &b.bias, l.kernel_size, 1)
                }
                LayerKind::MaxPool => kernels::maxpool_forward(&x, l.kernel_size, l.stride, 1).0,
                LayerKind::Tanh => {
                    kernels::tanh_inplace(&mut x);
                    x
                }
            };
        }
        Ok(x.data)
    }

    /// Forward pass that keeps the activations needed by [`Self::backward`].
    pub fn forward_cached(&self, patch: &[f64]) -> Result<ForwardCache> {
        let mut x = self.patch_tensor(patch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut argmax = Vec::with_capacity(self.layers.len());
        let mut conv = 0;
        for l in &self.layers {
            let next = match l.kind {
                LayerKind::Conv => {
                    let b = &self.blocks[conv];
                    conv += 1;
                    argmax.push(None);
                    kernels::conv_forward(&x, &b.weight, &b.bias, l.kernel_size, 1)
                }
                LayerKind::MaxPool => {
                    let (out, idx) = kernels::maxpool_forward(&x, l.kernel_size, l.stride, 1);
                    argmax.push(Some(idx));
                    out
                }
                LayerKind::Tanh => {
                    argmax.push(None);
                    kernels::tanh_inplace(&mut x);
                    let shape = Tensor3::empty_like(&x);
                    std::mem::replace(&mut x, shape)
                }
            };
            inputs.push(x);
            x = next;
        }
        Ok(ForwardCache {
            inputs,
            argmax,
            output: x,
        })
    }

    /// Feature vector of the window centered at `center` (clamped at the
    /// image edge).
    pub fn forward_at(&self, image: &Image, center: Point) -> Result<Vec<f64>> {
        self.forward(&image.window(center, self.receptive_field))
    }

    /// Backpropagates `grad_feature = dLoss/dD(p)` through one branch and
    /// accumulates parameter gradients into `grads`.
    pub fn accumulate_backward(
        &self,
        cache: &ForwardCache,
        grad_feature: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.inputs.len() != self.layers.len() || cache.output.data.len() != self.feature_dim {
            return Err(Error::Shape("cached activations do not belong to this network".into()));
        }
        if grad_feature.len() != self.feature_dim {
            return Err(Error::Shape(format!(
                "feature gradient has {} entries, expected {}",
                grad_feature.len(),
                self.feature_dim
            )));
        }
        if grads.blocks.len() != self.blocks.len() {
            return Err(Error::Shape("gradient buffer does not match network".into()));
        }
        if grad_feature.iter().all(|&g| g == 0.0) {
            return Ok(());
        }
        let out = &cache.output;
        let mut grad = Tensor3::from_vec(out.channels, out.height, out.width, grad_feature.to_vec());
        let mut conv = self.blocks.len();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            grad = match l.kind {
                LayerKind::Conv => {
                    conv -= 1;
                    let block = &self.blocks[conv];
                    let g = &mut grads.blocks[conv];
                    let grad_in = kernels::conv_backward(
                        input,
                        &block.weight,
                        l.kernel_size,
                        &grad,
                        &mut g.weight,
                        &mut g.bias,
                        conv > 0,
                    );
                    match grad_in {
                        Some(gi) => gi,
                        None => break,
                    }
                }
                LayerKind::MaxPool => {
                    let idx = cache.argmax[i]
                        .as_ref()
                        .ok_or_else(|| Error::Shape("missing pooling indices".into()))?;
                    kernels::maxpool_backward(&grad, idx, (input.channels, input.height, input.width))
                }
                LayerKind::Tanh => {
                    let output = if i + 1 < cache.inputs.len() {
                        &cache.inputs[i + 1]
                    } else {
                        &cache.output
                    };
                    kernels::tanh_backward(output, &grad)
                }
            };
        }
        Ok(())
    }

    /// [`Self::forward_cached`] for several patches, sharing the matrix
    /// products of each layer.
    pub fn forward_batch(&self, patches: &[&[f64]]) -> Result<Vec<ForwardCache>> {
        let mut xs = patches.iter().map(|p| self.patch_tensor(p)).collect::<Result<Vec<_>>>()?;
        let mut caches: Vec<ForwardCache> = (0..patches.len())
            .map(|_| ForwardCache {
                inputs: Vec::with_capacity(self.layers.len()),
                argmax: Vec::with_capacity(self.layers.len()),
                output: Tensor3::zeros(0, 0, 0),
            })
            .collect();
        if patches.is_empty() {
            return Ok(caches);
        }
        let mut conv = 0;
        for l in &self.layers {
            let next: Vec<Tensor3> = match l.kind {
                LayerKind::Conv => {
                    let b = &self.blocks[conv];
                    conv += 1;
                    let refs: Vec<&Tensor3> = xs.iter().collect();
                    caches.iter_mut().for_each(|c| c.argmax.push(None));
                    kernels::conv_forward_batch(&refs, &b.weight, &b.bias, l.kernel_size)
                }
                LayerKind::MaxPool => xs
                    .iter()
                    .zip(caches.iter_mut())
                    .map(|(x, c)| {
                        let (out, idx) = kernels::maxpool_forward(x, l.kernel_size, l.stride, 1);
                        c.argmax.push(Some(idx));
                        out
                    })
                    .collect(),
                LayerKind::Tanh => xs
                    .iter_mut()
                    .zip(caches.iter_mut())
                    .map(|(x, c)| {
                        c.argmax.push(None);
                        kernels::tanh_inplace(x);
                        let shape = Tensor3::empty_like(x);
                        std::mem::replace(x, shape)
                    })
                    .collect(),
            };
            for (c, x) in caches.iter_mut().zip(std::mem::replace(&mut xs, next)) {
                c.inputs.push(x);
            }
        }
        for (c, x) in caches.iter_mut().zip(xs) {
            c.output = x;
        }
        Ok(caches)
    }

    /// [`Self::accumulate_backward`] for several caches at once.
    pub fn accumulate_backward_batch(
        &self,
        caches: &[&ForwardCache],
        grad_features: &[&[f64]],
        grads: &mut Gradients,
    ) -> Result<()> {
        if caches.len() != grad_features.len() {
            return Err(Error::Shape("one feature gradient per cache required".into()));
        }
        if grads.blocks.len() != self.blocks.len() {
            return Err(Error::Shape("gradient buffer does not match network".into()));
        }
        let mut items = Vec::with_capacity(caches.len());
        for (cache, g) in caches.iter().zip(grad_features) {
            if cache.inputs.len() != self.layers.len() || cache.output.data.len() != self.feature_dim {
                return Err(Error::Shape("cached activations do not belong to this network".into()));
            }
            if g.len() != self.feature_dim {
                return Err(Error::Shape(format!(
                    "feature gradient has {} entries, expected {}",
                    g.len(),
                    self.feature_dim
                )));
            }
            if g.iter().any(|&v| v != 0.0) {
                items.push((*cache, *g));
            }
        }
        if items.is_empty() {
            return Ok(());
        }
        let mut grad: Vec<Tensor3> = items
            .iter()
            .map(|(c, g)| Tensor3::from_vec(c.output.channels, c.output.height, c.output.width, g.to_vec()))
            .collect();
        let mut conv = self.blocks.len();
        for (i, l) in self.layers.iter().enumerate().rev() {
            grad = match l.kind {
                LayerKind::Conv => {
                    conv -= 1;
                    let block = &self.blocks[conv];
                    let g = &mut grads.blocks[conv];
                    let inputs: Vec<&Tensor3> = items.iter().map(|(c, _)| &c.inputs[i]).collect();
                    match kernels::conv_backward_batch(
                        &inputs,
                        &block.weight,
                        l.kernel_size,
                        &grad,
                        &mut g.weight,
                        &mut g.bias,
                        conv > 0,
                    ) {
                        Some(gi) => gi,
                        None => break,
                    }
                }
                LayerKind::MaxPool => items
                    .iter()
                    .zip(&grad)
                    .map(|((c, _), g)| {
                        let input = &c.inputs[i];
                        let idx = c.argmax[i]
                            .as_ref()
                            .ok_or_else(|| Error::Shape("missing pooling indices".into()))?;
                        Ok(kernels::maxpool_backward(g, idx, (input.channels, input.height, input.width)))
                    })
                    .collect::<Result<_>>()?,
                LayerKind::Tanh => items
                    .iter()
                    .zip(&grad)
                    .map(|((c, _), g)| {
                        let output = if i + 1 < c.inputs.len() { &c.inputs[i + 1] } else { &c.output };
                        kernels::tanh_backward(output, g)
                    })
                    .collect(),
            };
        }
        Ok(())
    }

    /// Siamese backward pass: gradients of both branches are summed since
    /// the two branches share weights.
    pub fn backward(
        &self,
        pair: (&ForwardCache, &ForwardCache),
        grad_first: &[f64],
        grad_second: &[f64],
    ) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_backward(pair.0, grad_first, &mut grads)?;
        self.accumulate_backward(pair.1, grad_second, &mut grads)?;
        Ok(grads)
    }

    /// Flattened view of every parameter, weights before biases per block.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.weight.iter().chain(&b.bias).copied())
            .collect()
    }

    pub fn set_flat(&mut self, index: usize, value: f64) {
        let mut i = index;
        for b in &mut self.blocks {
            if i < b.weight.len() {
                b.weight[i] = value;
                return;
            }
            i -= b.weight.len();
            if i < b.bias.len() {
                b.bias[i] = value;
                return;
            }
            i -= b.bias.len();
        }
        panic!("parameter index {index} out of range");
    }
}

/// Activations of one forward pass. Shared between the positive and the
/// negative pair of the same anchor patch.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Tensor3>,
    argmax: Vec<Option<Vec<u32>>>,
    output: Tensor3,
}

impl ForwardCache {
    pub fn feature(&self) -> &[f64] {
        &self.output.data
    }

    /// Winning indices of every max-pool layer.
    pub fn pool_argmax(&self) -> impl Iterator<Item = &[u32]> {
        self.argmax.iter().flatten().map(|v| v.as_slice())
    }
}

pub type SharedCache = Rc<ForwardCache>;

/// Parameter gradients, shaped like [`NetworkParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<ConvBlock>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            blocks: params.conv_specs().map(ConvBlock::zeros_like).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.blocks {
            b.weight.iter_mut().chain(b.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.weight.iter().chain(&b.bias).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.weight.iter().chain(&b.bias).all(|&v| v == 0.0))
    }
}
