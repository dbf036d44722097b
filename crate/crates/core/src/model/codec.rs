use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{CodecConfig, NoiseShape};
use super::layers::{
    draw_noise, linear_slots, linear_views, noise_block, resampling_spec, ActivationLayer,
    AttentionBlock, Conv, ConvRole, Init, NoiseBlockParams, NoiseDraw, Params, ResidualUnit,
    TensorSlot, TensorView, DILATIONS, KERNEL,
};
use super::{weights, ModelError, Result};
use crate::audio::AudioBuffer;
use crate::msrvq::{self, Codebook, MultiScaleCodes, QuantizerLevel};
use crate::tensor::{tanh, ConvKind, ConvSpec, FrameTensor, Linear};

/// Where a codec's weights come from.
#[derive(Debug, Clone)]
pub enum CodecInit<'a> {
    /// Seeded random initialisation.
    Random { seed: u64 },
    /// A weight file; its embedded config must equal the requested one.
    Weights(&'a Path),
}

/// Decoder noise source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Off,
    Seeded(u64),
}

/// Placement facts about one convolution, for introspection.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerInfo {
    pub name: String,
    pub role: ConvRole,
    pub kernel_size: usize,
    pub stride: usize,
    pub depthwise: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderBlock {
    units: Vec<ResidualUnit>,
    act: ActivationLayer,
    down: Conv,
}

#[derive(Debug, Clone, PartialEq)]
struct Encoder {
    embed: Conv,
    blocks: Vec<EncoderBlock>,
    attention: Option<AttentionBlock>,
    out: Conv,
}

#[derive(Debug, Clone, PartialEq)]
struct DecoderBlock {
    act: ActivationLayer,
    up: Conv,
    noise: Option<NoiseBlockParams>,
    units: Vec<ResidualUnit>,
}

#[derive(Debug, Clone, PartialEq)]
struct Decoder {
    input: Vec<Conv>,
    attention: Option<AttentionBlock>,
    blocks: Vec<DecoderBlock>,
    act: ActivationLayer,
    out: Conv,
}

fn bottleneck_filter(channels: usize, depthwise: bool) -> Conv {
    let spec = if depthwise {
        ConvSpec::depthwise(channels, KERNEL)
    } else {
        ConvSpec::new(channels, channels, KERNEL)
    };
    Conv::new(
        spec.with_padding(KERNEL / 2, KERNEL / 2),
        ConvKind::Forward,
        ConvRole::BottleneckFilter,
    )
}

impl Encoder {
    fn new(cfg: &CodecConfig) -> Self {
        let mut channels = cfg.base_channels;
        let embed = Conv::new(
            ConvSpec::new(1, channels, KERNEL).with_padding(KERNEL / 2, KERNEL / 2),
            ConvKind::Forward,
            ConvRole::Embedding,
        );
        let blocks = cfg
            .encoder_rates
            .iter()
            .map(|&rate| {
                let next = channels * cfg.channel_growth;
                let block = EncoderBlock {
                    units: DILATIONS
                        .iter()
                        .map(|&d| ResidualUnit::new(channels, d, cfg.activation, cfg.depthwise))
                        .collect(),
                    act: ActivationLayer::new(cfg.activation, channels),
                    down: Conv::new(
                        resampling_spec(channels, next, rate),
                        ConvKind::Forward,
                        ConvRole::Downsample,
                    ),
                };
                channels = next;
                block
            })
            .collect();
        Self {
            embed,
            blocks,
            attention: cfg
                .attention_enabled
                .then(|| AttentionBlock::new(channels, cfg.attention_window)),
            out: bottleneck_filter(channels, cfg.depthwise),
        }
    }

    fn forward(&self, x: &FrameTensor) -> Result<FrameTensor> {
        let mut h = self.embed.forward(x)?;
        for block in &self.blocks {
            for unit in &block.units {
                h = unit.forward(&h)?;
            }
            h = block.down.forward(&block.act.forward(&h)?)?;
        }
        if let Some(attn) = &self.attention {
            h = attn.forward(&h)?;
        }
        self.out.forward(&h)
    }

    fn convs<'a>(&'a self, out: &mut Vec<(String, &'a Conv)>) {
        out.push(("encoder.embed".into(), &self.embed));
        for (b, block) in self.blocks.iter().enumerate() {
            for (u, unit) in block.units.iter().enumerate() {
                unit.convs(&format!("encoder.blocks.{b}.units.{u}"), out);
            }
            out.push((format!("encoder.blocks.{b}.down"), &block.down));
        }
        out.push(("encoder.out".into(), &self.out));
    }
}

impl Params for Encoder {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        self.embed.views(&format!("{prefix}.embed"), out);
        for (b, block) in self.blocks.iter().enumerate() {
            for (u, unit) in block.units.iter().enumerate() {
                unit.views(&format!("{prefix}.blocks.{b}.units.{u}"), out);
            }
            block.act.views(&format!("{prefix}.blocks.{b}.act"), out);
            block.down.views(&format!("{prefix}.blocks.{b}.down"), out);
        }
        if let Some(attn) = &self.attention {
            attn.views(&format!("{prefix}.attention"), out);
        }
        self.out.views(&format!("{prefix}.out"), out);
    }

    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorSlot<'a>>) {
        self.embed.slots(&format!("{prefix}.embed"), out);
        for (b, block) in self.blocks.iter_mut().enumerate() {
            for (u, unit) in block.units.iter_mut().enumerate() {
                unit.slots(&format!("{prefix}.blocks.{b}.units.{u}"), out);
            }
            block.act.slots(&format!("{prefix}.blocks.{b}.act"), out);
            block.down.slots(&format!("{prefix}.blocks.{b}.down"), out);
        }
        if let Some(attn) = &mut self.attention {
            attn.slots(&format!("{prefix}.attention"), out);
        }
        self.out.slots(&format!("{prefix}.out"), out);
    }
}

impl Decoder {
    fn new(cfg: &CodecConfig) -> Self {
        let mut channels = cfg.latent_channels();
        let input = if cfg.depthwise {
            vec![
                bottleneck_filter(channels, true),
                Conv::new(
                    ConvSpec::new(channels, channels, 1),
                    ConvKind::Forward,
                    ConvRole::BottleneckMix,
                ),
            ]
        } else {
            vec![bottleneck_filter(channels, false)]
        };
        let attention = cfg
            .attention_enabled
            .then(|| AttentionBlock::new(channels, cfg.attention_window));
        let blocks = cfg
            .decoder_rates
            .iter()
            .map(|&rate| {
                let next = channels / cfg.channel_growth;
                let block = DecoderBlock {
                    act: ActivationLayer::new(cfg.activation, channels),
                    up: Conv::new(
                        resampling_spec(channels, next, rate),
                        ConvKind::Transposed,
                        ConvRole::Upsample,
                    ),
                    noise: cfg.noise_enabled.then(|| NoiseBlockParams::zeros(next)),
                    units: DILATIONS
                        .iter()
                        .map(|&d| ResidualUnit::new(next, d, cfg.activation, cfg.depthwise))
                        .collect(),
                };
                channels = next;
                block
            })
            .collect();
        Self {
            input,
            attention,
            blocks,
            act: ActivationLayer::new(cfg.activation, channels),
            out: Conv::new(
                ConvSpec::new(channels, 1, KERNEL).with_padding(KERNEL / 2, KERNEL / 2),
                ConvKind::Forward,
                ConvRole::OutputProjection,
            ),
        }
    }

    fn forward(
        &self,
        z: &FrameTensor,
        mut rng: Option<&mut ChaCha8Rng>,
        shape: NoiseShape,
    ) -> Result<FrameTensor> {
        let mut h = z.clone();
        for conv in &self.input {
            h = conv.forward(&h)?;
        }
        if let Some(attn) = &self.attention {
            h = attn.forward(&h)?;
        }
        for block in &self.blocks {
            h = block.up.forward(&block.act.forward(&h)?)?;
            if let Some(noise) = &block.noise {
                h = match rng.as_deref_mut() {
                    Some(rng) => {
                        let eps = draw_noise(rng, shape, h.frames(), h.channels());
                        let draw = match shape {
                            NoiseShape::PerFrame => NoiseDraw::PerFrame(&eps),
                            NoiseShape::PerElement => NoiseDraw::PerElement(&eps),
                        };
                        noise_block(&h, noise, draw)?
                    }
                    None => noise_block(&h, noise, NoiseDraw::Zero)?,
                };
            }
            for unit in &block.units {
                h = unit.forward(&h)?;
            }
        }
        let h = self.out.forward(&self.act.forward(&h)?)?;
        Ok(tanh(&h))
    }

    fn convs<'a>(&'a self, out: &mut Vec<(String, &'a Conv)>) {
        for (i, conv) in self.input.iter().enumerate() {
            out.push((format!("decoder.input.{i}"), conv));
        }
        for (b, block) in self.blocks.iter().enumerate() {
            out.push((format!("decoder.blocks.{b}.up"), &block.up));
            for (u, unit) in block.units.iter().enumerate() {
                unit.convs(&format!("decoder.blocks.{b}.units.{u}"), out);
            }
        }
        out.push(("decoder.out".into(), &self.out));
    }
}

impl Params for Decoder {
    fn views<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        for (i, conv) in self.input.iter().enumerate() {
            conv.views(&format!("{prefix}.input.{i}"), out);
        }
        if let Some(attn) = &self.attention {
            attn.views(&format!("{prefix}.attention"), out);
        }
        for (b, block) in self.blocks.iter().enumerate() {
            block.act.views(&format!("{prefix}.blocks.{b}.act"), out);
            block.up.views(&format!("{prefix}.blocks.{b}.up"), out);
            if let Some(noise) = &block.noise {
                noise.views(&format!("{prefix}.blocks.{b}.noise"), out);
            }
            for (u, unit) in block.units.iter().enumerate() {
                unit.views(&format!("{prefix}.blocks.{b}.units.{u}"), out);
            }
        }
        self.act.views(&format!("{prefix}.act"), out);
        self.out.views(&format!("{prefix}.out"), out);
    }

    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorSlot<'a>>) {
        for (i, conv) in self.input.iter_mut().enumerate() {
            conv.slots(&format!("{prefix}.input.{i}"), out);
        }
        if let Some(attn) = &mut self.attention {
            attn.slots(&format!("{prefix}.attention"), out);
        }
        for (b, block) in self.blocks.iter_mut().enumerate() {
            block.act.slots(&format!("{prefix}.blocks.{b}.act"), out);
            block.up.slots(&format!("{prefix}.blocks.{b}.up"), out);
            if let Some(noise) = &mut block.noise {
                noise.slots(&format!("{prefix}.blocks.{b}.noise"), out);
            }
            for (u, unit) in block.units.iter_mut().enumerate() {
                unit.slots(&format!("{prefix}.blocks.{b}.units.{u}"), out);
            }
        }
        self.act.slots(&format!("{prefix}.act"), out);
        self.out.slots(&format!("{prefix}.out"), out);
    }
}

/// Encoder, multi-scale quantizer and decoder built from one
/// [`CodecConfig`]. Immutable once built; encode and decode take `&self`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codec {
    config: CodecConfig,
    encoder: Encoder,
    quantizer: Vec<QuantizerLevel>,
    decoder: Decoder,
}

impl Codec {
    pub fn build(config: CodecConfig, init: CodecInit<'_>) -> Result<Self> {
        match init {
            CodecInit::Random { seed } => Self::random(config, seed),
            CodecInit::Weights(path) => {
                let codec = weights::load_weights(path)?;
                if codec.config != config {
                    return Err(ModelError::ConfigMismatch);
                }
                Ok(codec)
            }
        }
    }

    /// Seeded random initialisation: bit-identical for equal seeds.
    pub fn random(config: CodecConfig, seed: u64) -> Result<Self> {
        let mut codec = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for mut slot in codec.slots() {
            slot.fill_random(&mut rng);
        }
        codec.sync_shared_projections();
        Ok(codec)
    }

    /// The graph for `config` with zero weights, unit gains and unit Snake
    /// parameters.
    pub(crate) fn zeroed(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        let latent = config.latent_channels();
        let quantizer = config
            .vq_strides
            .iter()
            .map(|&stride| {
                let mut cb = Codebook::new(
                    vec![0.0; config.codebook_size * config.codeword_dim],
                    config.codeword_dim,
                    Linear::zeros(latent, config.codeword_dim, false),
                    Linear::zeros(config.codeword_dim, latent, false),
                )?;
                cb.l2_normalize = config.normalize_codes;
                QuantizerLevel::new(stride, cb)
            })
            .collect::<msrvq::Result<Vec<_>>>()?;
        Ok(Self {
            encoder: Encoder::new(&config),
            decoder: Decoder::new(&config),
            quantizer,
            config,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn quantizer(&self) -> &[QuantizerLevel] {
        &self.quantizer
    }

    /// Replaces the quantizer levels, e.g. with trained codebooks. Strides,
    /// sizes and channel counts must match the config.
    pub fn set_quantizer(&mut self, levels: Vec<QuantizerLevel>) -> Result<()> {
        let latent = self.config.latent_channels();
        let fits = levels.len() == self.config.levels()
            && levels.iter().zip(&self.config.vq_strides).all(|(l, &s)| {
                l.stride == s
                    && l.codebook.size() == self.config.codebook_size
                    && l.codebook.dim() == self.config.codeword_dim
                    && l.codebook.channels() == latent
                    && l.codebook.in_proj.bias.is_none()
                    && l.codebook.out_proj.bias.is_none()
            });
        if !fits {
            return Err(ModelError::InvalidConfig(
                "quantizer levels do not match the codec config".into(),
            ));
        }
        self.quantizer = levels;
        for level in &mut self.quantizer {
            level.codebook.l2_normalize = self.config.normalize_codes;
        }
        self.sync_shared_projections();
        Ok(())
    }

    /// Samples after right-padding `len` samples to a whole number of
    /// blocks of `hop * lcm(strides)`.
    pub fn padded_length(&self, len: usize) -> usize {
        let block = self.config.block_samples();
        len.div_ceil(block) * block
    }

    fn check_audio(&self, audio: &AudioBuffer) -> Result<()> {
        if audio.sample_rate != self.config.sample_rate {
            return Err(ModelError::SampleRateMismatch {
                expected: self.config.sample_rate,
                actual: audio.sample_rate,
            });
        }
        if audio.is_empty() {
            return Err(ModelError::EmptyAudio);
        }
        if !audio.is_finite() {
            return Err(ModelError::NonFiniteAudio);
        }
        Ok(())
    }

    /// Pads and runs the encoder, returning the continuous latent.
    pub fn encode_latent(&self, audio: &AudioBuffer) -> Result<FrameTensor> {
        self.check_audio(audio)?;
        let mut samples = audio.samples.clone();
        samples.resize(self.padded_length(samples.len()), 0.0);
        let latent = self.encoder.forward(&FrameTensor::from_mono(samples))?;
        debug_assert_eq!(
            latent.frames() * self.config.hop(),
            self.padded_length(audio.len())
        );
        Ok(latent)
    }

    pub fn encode(&self, audio: &AudioBuffer) -> Result<MultiScaleCodes> {
        let latent = self.encode_latent(audio)?;
        Ok(msrvq::quantize(&latent, &self.quantizer)?.codes)
    }

    /// Runs the decoder on a latent of `T` frames, yielding `T * hop`
    /// samples.
    pub fn decode_latent(&self, latent: &FrameTensor, noise: NoiseMode) -> Result<AudioBuffer> {
        let mut rng = match noise {
            NoiseMode::Off => None,
            NoiseMode::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        let y = self
            .decoder
            .forward(latent, rng.as_mut(), self.config.noise_shape)?;
        Ok(AudioBuffer::new(self.config.sample_rate, y.into_data()))
    }

    pub fn decode(&self, codes: &MultiScaleCodes, noise: NoiseMode) -> Result<AudioBuffer> {
        if codes.frames == 0 {
            return Err(ModelError::EmptyAudio);
        }
        let latent = msrvq::dequantize(codes, &self.quantizer)?;
        self.decode_latent(&latent, noise)
    }

    /// Exact number of scalar weights, codebooks and projections included.
    pub fn count_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Every weight tensor in serialisation order.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        self.encoder.views("encoder", &mut out);
        for (i, level) in self.quantizer.iter().enumerate() {
            let cb = &level.codebook;
            out.push(TensorView {
                name: format!("quantizer.levels.{i}.codebook"),
                shape: vec![cb.size(), cb.dim()],
                data: cb.entries(),
            });
            if let Some(prefix) = self.projection_prefix(i) {
                linear_views(&cb.in_proj, &format!("{prefix}.in_proj"), &mut out);
                linear_views(&cb.out_proj, &format!("{prefix}.out_proj"), &mut out);
            }
        }
        self.decoder.views("decoder", &mut out);
        out
    }

    pub(crate) fn slots(&mut self) -> Vec<TensorSlot<'_>> {
        let prefixes: Vec<_> = (0..self.quantizer.len())
            .map(|i| self.projection_prefix(i))
            .collect();
        let mut out = Vec::new();
        self.encoder.slots("encoder", &mut out);
        for (i, level) in self.quantizer.iter_mut().enumerate() {
            let (size, dim) = (level.codebook.size(), level.codebook.dim());
            let (entries, in_proj, out_proj) = level.codebook.parts_mut();
            out.push(TensorSlot {
                name: format!("quantizer.levels.{i}.codebook"),
                shape: vec![size, dim],
                data: entries,
                init: Init::Normal { std: 1.0 },
            });
            if let Some(prefix) = &prefixes[i] {
                linear_slots(in_proj, &format!("{prefix}.in_proj"), &mut out);
                linear_slots(out_proj, &format!("{prefix}.out_proj"), &mut out);
            }
        }
        self.decoder.slots("decoder", &mut out);
        out
    }

    fn projection_prefix(&self, level: usize) -> Option<String> {
        match (self.config.share_projections, level) {
            (false, i) => Some(format!("quantizer.levels.{i}")),
            (true, 0) => Some("quantizer.shared".into()),
            (true, _) => None,
        }
    }

    /// With shared projections, copies level 0's pair to every level.
    pub(crate) fn sync_shared_projections(&mut self) {
        if !self.config.share_projections {
            return;
        }
        if let Some((first, rest)) = self.quantizer.split_first_mut() {
            for level in rest {
                level.codebook.in_proj = first.codebook.in_proj.clone();
                level.codebook.out_proj = first.codebook.out_proj.clone();
            }
        }
    }

    /// Every convolution with its role and whether it is depthwise.
    pub fn conv_layers(&self) -> Vec<ConvLayerInfo> {
        let mut convs = Vec::new();
        self.encoder.convs(&mut convs);
        self.decoder.convs(&mut convs);
        convs
            .into_iter()
            .map(|(name, conv)| ConvLayerInfo {
                name,
                role: conv.role,
                kernel_size: conv.spec.kernel_size,
                stride: conv.spec.stride,
                depthwise: conv.spec.is_depthwise(),
            })
            .collect()
    }

    pub fn save_weights(&self, path: &Path) -> Result<()> {
        weights::save_weights(self, path)
    }

    pub fn load_weights(path: &Path) -> Result<Self> {
        weights::load_weights(path)
    }
}
