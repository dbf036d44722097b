use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `x + sin^2(alpha x) / alpha` with a learned `alpha` per channel.
    Snake,
    LeakyRelu {
        slope: f32,
    },
}

/// Shape of the Gaussian draws used by decoder noise blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseShape {
    /// One draw per frame, broadcast over channels.
    PerFrame,
    /// An independent draw for every frame and channel.
    PerElement,
}

/// Full hyper-parameter set of a codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub sample_rate: u32,
    pub encoder_rates: Vec<usize>,
    pub decoder_rates: Vec<usize>,
    /// Temporal stride of each quantizer level, coarsest first.
    pub vq_strides: Vec<usize>,
    pub codebook_size: usize,
    pub codeword_dim: usize,
    /// Channels after the encoder embedding.
    pub base_channels: usize,
    /// Channel multiplier per encoder stage (divisor per decoder stage).
    pub channel_growth: usize,
    pub attention_enabled: bool,
    pub attention_window: usize,
    pub noise_enabled: bool,
    pub noise_shape: NoiseShape,
    pub activation: Activation,
    /// Use depthwise filters in the residual and bottleneck convolutions.
    pub depthwise: bool,
    /// Compare L2-normalised vectors during codebook lookup.
    pub normalize_codes: bool,
    /// One projection pair for every quantizer level instead of one per
    /// level.
    pub share_projections: bool,
}

impl CodecConfig {
    /// Samples per latent frame.
    pub fn hop(&self) -> usize {
        self.encoder_rates.iter().product()
    }

    pub fn levels(&self) -> usize {
        self.vq_strides.len()
    }

    /// Least common multiple of the quantizer strides.
    pub fn stride_lcm(&self) -> usize {
        self.vq_strides.iter().fold(1, |a, &b| lcm(a, b))
    }

    /// Audio is padded to a multiple of this many samples before encoding.
    pub fn block_samples(&self) -> usize {
        self.hop() * self.stride_lcm()
    }

    /// Channel count of the latent sequence.
    pub fn latent_channels(&self) -> usize {
        self.base_channels * self.channel_growth.pow(self.encoder_rates.len() as u32)
    }

    /// Bits needed to store one token, `ceil(log2 K)`.
    pub fn bits_per_token(&self) -> u32 {
        if self.codebook_size <= 1 {
            0
        } else {
            usize::BITS - (self.codebook_size - 1).leading_zeros()
        }
    }

    /// Tokens per second emitted by every level.
    pub fn token_rates(&self) -> Vec<f64> {
        let frame_rate = f64::from(self.sample_rate) / self.hop() as f64;
        self.vq_strides
            .iter()
            .map(|&w| frame_rate / w as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.sample_rate == 0 {
            return bad("sample rate must be positive");
        }
        if self.encoder_rates.is_empty() || self.encoder_rates.contains(&0) {
            return bad("encoder rates must be a non-empty list of positive factors");
        }
        if self.decoder_rates.len() != self.encoder_rates.len() || self.decoder_rates.contains(&0) {
            return bad("decoder needs one positive rate per encoder stage");
        }
        if self.decoder_rates.iter().product::<usize>() != self.hop() {
            return bad("decoder rates must multiply to the encoder hop");
        }
        if self.vq_strides.is_empty() || self.vq_strides.contains(&0) {
            return bad("quantizer strides must be a non-empty list of positive factors");
        }
        if self.codebook_size == 0 || self.codebook_size > 1 << 31 {
            return bad("codebook size must be in 1..=2^31");
        }
        if self.codeword_dim == 0 || self.base_channels == 0 || self.channel_growth == 0 {
            return bad("codeword dim, base channels and channel growth must be positive");
        }
        if self.attention_enabled && self.attention_window == 0 {
            return bad("attention window must be positive");
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !slope.is_finite() {
                return bad("leaky ReLU slope must be finite");
            }
        }
        Ok(())
    }

    /// Canonical serialised form, used in weight files and for hashing.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// First eight bytes (little-endian) of the SHA-256 of the canonical
    /// JSON.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_canonical_json().as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(head)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Named configurations reproducing the published model shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    General44k,
    General32k,
    Speech24k,
    AblationSingleScale,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::General44k,
        Preset::General32k,
        Preset::Speech24k,
        Preset::AblationSingleScale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::General44k => "general-44k",
            Preset::General32k => "general-32k",
            Preset::Speech24k => "speech-24k",
            Preset::AblationSingleScale => "ablation-single-scale",
        }
    }

    /// Stable identifier written into bitstream headers; 0 means "custom".
    pub fn id(self) -> u8 {
        match self {
            Preset::General44k => 1,
            Preset::General32k => 2,
            Preset::Speech24k => 3,
            Preset::AblationSingleScale => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.id() == id)
    }

    pub fn config(self) -> CodecConfig {
        let general = CodecConfig {
            sample_rate: 44_100,
            encoder_rates: vec![2, 3, 8, 8],
            decoder_rates: vec![8, 8, 3, 2],
            vq_strides: vec![8, 4, 2, 1],
            codebook_size: 4096,
            codeword_dim: 8,
            base_channels: 32,
            channel_growth: 2,
            attention_enabled: true,
            attention_window: 32,
            noise_enabled: true,
            noise_shape: NoiseShape::PerFrame,
            activation: Activation::Snake,
            depthwise: true,
            normalize_codes: false,
            share_projections: false,
        };
        match self {
            Preset::General44k => general,
            Preset::General32k => CodecConfig {
                sample_rate: 32_000,
                ..general
            },
            Preset::Speech24k => CodecConfig {
                sample_rate: 24_000,
                encoder_rates: vec![2, 4, 8, 8],
                decoder_rates: vec![8, 8, 4, 2],
                vq_strides: vec![4, 2, 1],
                attention_enabled: false,
                ..general
            },
            Preset::AblationSingleScale => CodecConfig {
                encoder_rates: vec![2, 4, 8, 8],
                decoder_rates: vec![8, 8, 4, 2],
                vq_strides: vec![1, 1, 1],
                ..general
            },
        }
    }

    /// The preset whose configuration equals `config`, if any.
    pub fn detect(config: &CodecConfig) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| &p.config() == config)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown preset '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_arithmetic() {
        let g = Preset::General44k.config();
        assert_eq!(g.hop(), 384);
        assert_eq!(g.levels(), 4);
        assert_eq!(g.stride_lcm(), 8);
        assert_eq!(g.bits_per_token(), 12);
        assert_eq!(g.latent_channels(), 512);
        let s = Preset::Speech24k.config();
        assert_eq!(s.hop(), 512);
        assert_eq!(s.levels(), 3);
        assert!(!s.attention_enabled);
        let a = Preset::AblationSingleScale.config();
        assert_eq!(a.hop(), 512);
        assert_eq!(a.stride_lcm(), 1);
        for p in Preset::ALL {
            p.config().validate().unwrap();
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            assert_eq!(Preset::from_id(p.id()), Some(p));
            assert_eq!(Preset::detect(&p.config()), Some(p));
        }
    }

    #[test]
    fn bits_per_token_is_ceil_log2() {
        let mut c = Preset::General44k.config();
        for (k, b) in [
            (1, 0),
            (2, 1),
            (3, 2),
            (4, 2),
            (4095, 12),
            (4096, 12),
            (4097, 13),
        ] {
            c.codebook_size = k;
            assert_eq!(c.bits_per_token(), b, "K = {k}");
        }
    }

    #[test]
    fn validation_catches_rate_mismatch() {
        let mut c = Preset::General44k.config();
        c.decoder_rates = vec![8, 8, 2, 2];
        assert!(c.validate().is_err());
        let mut c = Preset::General44k.config();
        c.vq_strides = vec![];
        assert!(c.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = Preset::General44k.config();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.base_channels = 4;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let parsed: CodecConfig = serde_json::from_str(&a.to_canonical_json()).unwrap();
        assert_eq!(parsed, a);
    }
}
