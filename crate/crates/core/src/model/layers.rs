//! Building blocks of the encoder and decoder, each exposing its weights
//! as named tensors for initialisation, counting and serialisation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{Activation, NoiseShape};
use super::Result;
use crate::tensor::{
    conv1d, layer_norm, leaky_relu, linear, local_windowed_attention, snake, transposed_conv1d,
    AttentionParams, ConvKind, ConvSpec, FrameTensor, LayerNorm, Linear, TensorError,
};

/// Kernel width of residual-unit and bottleneck convolutions.
pub(crate) const KERNEL: usize = 7;
pub(crate) const DILATIONS: [usize; 3] = [1, 3, 9];

/// How a freshly built tensor is filled by random initialisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Zeros,
    Ones,
    Normal { std: f32 },
}

/// Read-only view of a named parameter tensor.
#[derive(Debug)]
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f32],
}

pub(crate) struct TensorSlot<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f32],
    pub init: Init,
}

impl TensorSlot<'_> {
    pub fn fill_random(&mut self, rng: &mut ChaCha8Rng) {
        match self.init {
            Init::Zeros => self.data.fill(0.0),
            Init::Ones => self.data.fill(1.0),
            Init::Normal { std } => {
                for v in self.data.iter_mut() {
                    *v = rng.sample::<f32, _>(StandardNormal) * std;
                }
            }
        }
    }
}

pub(crate) trait Params {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>);
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorSlot<'a>>);
}

fn fan_in_std(fan_in: usize) -> f32 {
    1.0 / (fan_in.max(1) as f32).sqrt()
}

pub(crate) fn linear_views<'a>(l: &'a Linear, prefix: &str, out: &mut Vec<TensorView<'a>>) {
    out.push(TensorView {
        name: format!("{prefix}.weight"),
        shape: vec![l.out_dim, l.in_dim],
        data: &l.weight,
    });
    if let Some(b) = &l.bias {
        out.push(TensorView {
            name: format!("{prefix}.bias"),
            shape: vec![l.out_dim],
            data: b,
        });
    }
}

pub(crate) fn linear_slots<'a>(l: &'a mut Linear, prefix: &str, out: &mut Vec<TensorSlot<'a>>) {
    let (in_dim, out_dim) = (l.in_dim, l.out_dim);
    out.push(TensorSlot {
        name: format!("{prefix}.weight"),
        shape: vec![out_dim, in_dim],
        data: &mut l.weight,
        init: Init::Normal {
            std: fan_in_std(in_dim),
        },
    });
    if let Some(b) = &mut l.bias {
        out.push(TensorSlot {
            name: format!("{prefix}.bias"),
            shape: vec![out_dim],
            data: b,
            init: Init::Zeros,
        });
    }
}

/// What a convolution does inside the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvRole {
    /// Audio -> first hidden channels.
    Embedding,
    /// Dilated filter inside a residual unit.
    ResidualFilter,
    /// Kernel-1 channel mixer inside a residual unit.
    ResidualMix,
    /// Strided encoder convolution.
    Downsample,
    /// Strided transposed decoder convolution.
    Upsample,
    /// Filter applied at the latent rate on either side of the bottleneck.
    BottleneckFilter,
    /// Kernel-1 channel mixer at the decoder input.
    BottleneckMix,
    /// Hidden channels -> audio.
    OutputProjection,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv {
    pub spec: ConvSpec,
    pub kind: ConvKind,
    pub role: ConvRole,
}

impl Conv {
    pub fn new(spec: ConvSpec, kind: ConvKind, role: ConvRole) -> Self {
        Self { spec, kind, role }
    }

    pub fn forward(&self, x: &FrameTensor) -> Result<FrameTensor> {
        Ok(match self.kind {
            ConvKind::Forward => conv1d(x, &self.spec)?,
            ConvKind::Transposed => transposed_conv1d(x, &self.spec)?,
        })
    }

    fn fan_in(&self) -> usize {
        let s = &self.spec;
        let per_group = s.in_channels / s.groups;
        match self.kind {
            ConvKind::Forward => per_group * s.kernel_size,
            ConvKind::Transposed => (per_group * s.kernel_size / s.stride).max(1),
        }
    }
}

impl Params for Conv {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        out.push(TensorView {
            name: format!("{prefix}.weight"),
            shape: self.spec.weight_shape(self.kind).to_vec(),
            data: &self.spec.weight,
        });
        if let Some(b) = &self.spec.bias {
            out.push(TensorView {
                name: format!("{prefix}.bias"),
                shape: vec![self.spec.out_channels],
                data: b,
            });
        }
    }

    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorSlot<'a>>) {
        let std = fan_in_std(self.fan_in());
        let shape = self.spec.weight_shape(self.kind).to_vec();
        let out_channels = self.spec.out_channels;
        out.push(TensorSlot {
            name: format!("{prefix}.weight"),
            shape,
            data: &mut self.spec.weight,
            init: Init::Normal { std },
        });
        if let Some(b) = &mut self.spec.bias {
            out.push(TensorSlot {
                name: format!("{prefix}.bias"),
                shape: vec![out_channels],
                data: b,
                init: Init::Zeros,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ActivationLayer {
    Snake { alpha: Vec<f32> },
    LeakyRelu { slope: f32 },
}

impl ActivationLayer {
    pub fn new(kind: Activation, channels: usize) -> Self {
        match kind {
            Activation::Snake => ActivationLayer::Snake {
                alpha: vec![1.0; channels],
            },
            Activation::LeakyRelu { slope } => ActivationLayer::LeakyRelu { slope },
        }
    }

    pub fn forward(&self, x: &FrameTensor) -> Result<FrameTensor> {
        Ok(match self {
            ActivationLayer::Snake { alpha } => snake(x, alpha)?,
            ActivationLayer::LeakyRelu { slope } => leaky_relu(x, *slope),
        })
    }
}

impl Params for ActivationLayer {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        if let ActivationLayer::Snake { alpha } = self {
            out.push(TensorView {
                name: format!("{prefix}.alpha"),
                shape: vec![alpha.len()],
                data: alpha,
            });
        }
    }

    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorSlot<'a>>) {
        if let ActivationLayer::Snake { alpha } = self {
            out.push(TensorSlot {
                name: format!("{prefix}.alpha"),
                shape: vec![alpha.len()],
                data: alpha,
                init: Init::Ones,
            });
        }
    }
}

/// Filter, activation, kernel-1 mix and a skip connection.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ResidualUnit {
    act1: ActivationLayer,
    filter: Conv,
    act2: ActivationLayer,
    mix: Conv,
}

impl ResidualUnit {
    pub fn new(channels: usize, dilation: usize, activation: Activation, depthwise: bool) -> Self {
        let pad = (KERNEL - 1) * dilation / 2;
        let filter = if depthwise {
            ConvSpec::depthwise(channels, KERNEL)
        } else {
            ConvSpec::new(channels, channels, KERNEL)
        };
        Self {
            act1: ActivationLayer::new(activation, channels),
            filter: Conv::new(
                filter.with_dilation(dilation).with_padding(pad, pad),
                ConvKind::Forward,
                ConvRole::ResidualFilter,
            ),
            act2: ActivationLayer::new(activation, channels),
            mix: Conv::new(
                ConvSpec::new(channels, channels, 1),
                ConvKind::Forward,
                ConvRole::ResidualMix,
            ),
        }
    }

    pub fn forward(&self, x: &FrameTensor) -> Result<FrameTensor> {
        let h = self.act1.forward(x)?;
        let h = self.filter.forward(&h)?;
        let h = self.act2.forward(&h)?;
        let mut y = self.mix.forward(&h)?;
        y.add_assign(x)?;
        Ok(y)
    }

    pub fn convs<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Conv)>) {
        out.push((format!("{prefix}.filter"), &self.filter));
        out.push((format!("{prefix}.mix"), &self.mix));
    }
}

impl Params for ResidualUnit {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        self.act1.views(&format!("{prefix}.act1"), out);
        self.filter.views(&format!("{prefix}.filter"), out);
        self.act2.views(&format!("{prefix}.act2"), out);
        self.mix.views(&format!("{prefix}.mix"), out);
    }

    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorSlot<'a>>) {
        self.act1.slots(&format!("{prefix}.act1"), out);
        self.filter.slots(&format!("{prefix}.filter"), out);
        self.act2.slots(&format!("{prefix}.act2"), out);
        self.mix.slots(&format!("{prefix}.mix"), out);
    }
}

/// Kernel `2s`, stride `s`, padding `ceil(s/2)` left and `floor(s/2)` right:
/// maps `L` frames to exactly `L / s` (down) or `L * s` (up).
pub(crate) fn resampling_spec(in_channels: usize, out_channels: usize, stride: usize) -> ConvSpec {
    ConvSpec::new(in_channels, out_channels, 2 * stride)
        .with_stride(stride)
        .with_padding(stride.div_ceil(2), stride / 2)
}

/// Pre-norm attention with a skip connection.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AttentionBlock {
    norm: LayerNorm,
    params: AttentionParams,
    window: usize,
}

impl AttentionBlock {
    pub fn new(channels: usize, window: usize) -> Self {
        Self {
            norm: LayerNorm::new(channels),
            params: AttentionParams::zeros(channels, channels),
            window,
        }
    }

    pub fn forward(&self, x: &FrameTensor) -> Result<FrameTensor> {
        let h = layer_norm(x, &self.norm)?;
        let mut y = local_windowed_attention(&h, &self.params, self.window)?;
        y.add_assign(x)?;
        Ok(y)
    }
}

impl Params for AttentionBlock {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        let c = self.norm.gamma.len();
        out.push(TensorView {
            name: format!("{prefix}.norm.gamma"),
            shape: vec![c],
            data: &self.norm.gamma,
        });
        out.push(TensorView {
            name: format!("{prefix}.norm.beta"),
            shape: vec![c],
            data: &self.norm.beta,
        });
        linear_views(&self.params.query, &format!("{prefix}.query"), out);
        linear_views(&self.params.key, &format!("{prefix}.key"), out);
        linear_views(&self.params.value, &format!("{prefix}.value"), out);
        linear_views(&self.params.output, &format!("{prefix}.output"), out);
    }

    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorSlot<'a>>) {
        let c = self.norm.gamma.len();
        out.push(TensorSlot {
            name: format!("{prefix}.norm.gamma"),
            shape: vec![c],
            data: &mut self.norm.gamma,
            init: Init::Ones,
        });
        out.push(TensorSlot {
            name: format!("{prefix}.norm.beta"),
            shape: vec![c],
            data: &mut self.norm.beta,
            init: Init::Zeros,
        });
        linear_slots(&mut self.params.query, &format!("{prefix}.query"), out);
        linear_slots(&mut self.params.key, &format!("{prefix}.key"), out);
        linear_slots(&mut self.params.value, &format!("{prefix}.value"), out);
        linear_slots(&mut self.params.output, &format!("{prefix}.output"), out);
    }
}

/// Weights of a noise block: a pointwise `C -> C` map without bias.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlockParams {
    pub scale_proj: Linear,
}

impl NoiseBlockParams {
    pub fn zeros(channels: usize) -> Self {
        Self {
            scale_proj: Linear::zeros(channels, channels, false),
        }
    }
}

/// Gaussian draws fed to [`noise_block`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseDraw<'a> {
    /// `eps = 0`: the block is the identity.
    Zero,
    /// One value per frame, broadcast over channels.
    PerFrame(&'a [f32]),
    /// One value per frame and channel, frame-major.
    PerElement(&'a [f32]),
}

/// `x + scale_proj(x) * eps`.
pub fn noise_block(
    x: &FrameTensor,
    params: &NoiseBlockParams,
    eps: NoiseDraw<'_>,
) -> Result<FrameTensor> {
    let c = x.channels();
    if params.scale_proj.in_dim != c || params.scale_proj.out_dim != c {
        return Err(TensorError::ChannelMismatch {
            expected: params.scale_proj.in_dim,
            actual: c,
        }
        .into());
    }
    let expected = match eps {
        NoiseDraw::Zero => return Ok(x.clone()),
        NoiseDraw::PerFrame(e) => (e, x.frames()),
        NoiseDraw::PerElement(e) => (e, x.frames() * c),
    };
    if expected.0.len() != expected.1 {
        return Err(TensorError::DimensionMismatch(format!(
            "{} noise values for {} draws",
            expected.0.len(),
            expected.1
        ))
        .into());
    }
    let h = linear(x, &params.scale_proj)?;
    let mut y = x.clone();
    for t in 0..x.frames() {
        let hr = h.row(t);
        let yr = y.row_mut(t);
        match eps {
            NoiseDraw::PerFrame(e) => {
                for (v, s) in yr.iter_mut().zip(hr) {
                    *v += s * e[t];
                }
            }
            NoiseDraw::PerElement(e) => {
                for ((v, s), n) in yr.iter_mut().zip(hr).zip(&e[t * c..(t + 1) * c]) {
                    *v += s * n;
                }
            }
            NoiseDraw::Zero => unreachable!(),
        }
    }
    Ok(y)
}

/// Draws the `eps` for one noise block.
pub(crate) fn draw_noise(
    rng: &mut ChaCha8Rng,
    shape: NoiseShape,
    frames: usize,
    channels: usize,
) -> Vec<f32> {
    let n = match shape {
        NoiseShape::PerFrame => frames,
        NoiseShape::PerElement => frames * channels,
    };
    (0..n)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

impl Params for NoiseBlockParams {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        linear_views(&self.scale_proj, &format!("{prefix}.scale_proj"), out);
    }

    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorSlot<'a>>) {
        linear_slots(&mut self.scale_proj, &format!("{prefix}.scale_proj"), out);
    }
}
