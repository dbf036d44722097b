//! Packed token stream.
//!
//! Header, all integers little-endian:
//!
//! ```text
//! magic "MSBS"            4
//! version u16             2
//! preset id u8            1   0 = custom config
//! bits per token u8       1
//! config hash u64         8
//! sample rate u32         4
//! hop length u32          4
//! original samples u64    8
//! latent frames u32       4
//! level count u8          1
//! strides u32 x levels    4 each
//! ```
//!
//! The payload follows: every level in order, coarsest first, each token as
//! `bits_per_token` bits, most significant bit first. The last byte is
//! zero-padded.

use thiserror::Error;

use crate::model::{CodecConfig, Preset};
use crate::msrvq::MultiScaleCodes;

pub const MAGIC: [u8; 4] = *b"MSBS";
pub const VERSION: u16 = 1;
const FIXED_HEADER_BYTES: usize = 37;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitstreamError {
    #[error("not a token stream (bad magic)")]
    BadMagic,
    #[error("unsupported stream version {0}")]
    UnsupportedVersion(u16),
    #[error("stream ends at byte {offset} but {needed} bytes are required")]
    Underrun { offset: usize, needed: usize },
    #[error("corrupt stream: nonzero padding bits in the final byte")]
    NonZeroPadding,
    #[error("corrupt stream: {0} bytes after the payload")]
    TrailingBytes(usize),
    #[error("token {token} at level {level} does not fit in {bits} bits")]
    TokenOverflow { level: usize, token: u32, bits: u8 },
    #[error("header does not match codes: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, BitstreamError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitstreamHeader {
    /// [`Preset::id`], or 0 when the config is not a preset.
    pub preset_id: u8,
    pub bits_per_token: u8,
    /// [`CodecConfig::fingerprint`] of the encoding config.
    pub config_hash: u64,
    pub sample_rate: u32,
    pub hop_length: u32,
    /// Samples before padding; decoders trim to this.
    pub original_sample_count: u64,
    /// Latent frames `T`.
    pub frames: u32,
    pub strides: Vec<u32>,
}

impl BitstreamHeader {
    pub fn new(config: &CodecConfig, frames: usize, original_sample_count: usize) -> Self {
        Self {
            preset_id: Preset::detect(config).map_or(0, Preset::id),
            bits_per_token: config.bits_per_token() as u8,
            config_hash: config.fingerprint(),
            sample_rate: config.sample_rate,
            hop_length: config.hop() as u32,
            original_sample_count: original_sample_count as u64,
            frames: frames as u32,
            strides: config.vq_strides.iter().map(|&s| s as u32).collect(),
        }
    }

    pub fn preset(&self) -> Option<Preset> {
        Preset::from_id(self.preset_id)
    }

    pub fn header_bytes(&self) -> usize {
        FIXED_HEADER_BYTES + 4 * self.strides.len()
    }

    /// Tokens at each level, `T / W_i`.
    pub fn level_lengths(&self) -> Vec<usize> {
        self.strides
            .iter()
            .map(|&w| self.frames as usize / w as usize)
            .collect()
    }

    pub fn payload_bits(&self) -> u64 {
        u64::from(self.bits_per_token) * self.level_lengths().iter().sum::<usize>() as u64
    }

    pub fn payload_bytes(&self) -> usize {
        self.payload_bits().div_ceil(8) as usize
    }

    /// Tokens per second at each level.
    pub fn token_rates(&self) -> Vec<f64> {
        let frame_rate = f64::from(self.sample_rate) / f64::from(self.hop_length);
        self.strides
            .iter()
            .map(|&w| frame_rate / f64::from(w))
            .collect()
    }

    pub fn bitrate(&self) -> f64 {
        f64::from(self.bits_per_token) * self.token_rates().iter().sum::<f64>()
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(BitstreamError::Inconsistent(m));
        if self.bits_per_token > 32 {
            return bad(format!("{} bits per token", self.bits_per_token));
        }
        if self.strides.is_empty() || self.strides.len() > u8::MAX as usize {
            return bad(format!("{} levels", self.strides.len()));
        }
        if self.hop_length == 0 || self.sample_rate == 0 {
            return bad("zero hop length or sample rate".into());
        }
        for (i, &w) in self.strides.iter().enumerate() {
            if w == 0 || !self.frames.is_multiple_of(w) {
                return bad(format!(
                    "level {i} stride {w} does not divide {} frames",
                    self.frames
                ));
            }
        }
        let capacity = u64::from(self.frames) * u64::from(self.hop_length);
        if self.original_sample_count > capacity {
            return bad(format!(
                "{} original samples exceed {} decoded samples",
                self.original_sample_count, capacity
            ));
        }
        Ok(())
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.preset_id);
        out.push(self.bits_per_token);
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&self.hop_length.to_le_bytes());
        out.extend_from_slice(&self.original_sample_count.to_le_bytes());
        out.extend_from_slice(&self.frames.to_le_bytes());
        out.push(self.strides.len() as u8);
        for w in &self.strides {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }

    fn read(bytes: &[u8]) -> Result<Self> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(BitstreamError::Underrun {
                    offset: bytes.len(),
                    needed: n,
                })
            } else {
                Ok(())
            }
        };
        need(MAGIC.len())?;
        if bytes[..4] != MAGIC {
            return Err(BitstreamError::BadMagic);
        }
        need(6)?;
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(BitstreamError::UnsupportedVersion(version));
        }
        need(FIXED_HEADER_BYTES)?;
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let levels = bytes[36] as usize;
        need(FIXED_HEADER_BYTES + 4 * levels)?;
        Ok(Self {
            preset_id: bytes[6],
            bits_per_token: bytes[7],
            config_hash: u64_at(8),
            sample_rate: u32_at(16),
            hop_length: u32_at(20),
            original_sample_count: u64_at(24),
            frames: u32_at(32),
            strides: (0..levels)
                .map(|i| u32_at(FIXED_HEADER_BYTES + 4 * i))
                .collect(),
        })
    }
}

/// Writes bits most significant first.
struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    filled: u32,
}

impl BitWriter {
    fn push(&mut self, value: u32, bits: u32) {
        if bits == 0 {
            return;
        }
        self.acc = (self.acc << bits) | u64::from(value);
        self.filled += bits;
        while self.filled >= 8 {
            self.filled -= 8;
            self.out.push((self.acc >> self.filled) as u8);
        }
        self.acc &= (1u64 << self.filled) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.out.push((self.acc << (8 - self.filled)) as u8);
        }
        self.out
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u64,
    filled: u32,
}

impl BitReader<'_> {
    fn pull(&mut self, bits: u32) -> u32 {
        if bits == 0 {
            return 0;
        }
        while self.filled < bits {
            self.acc = (self.acc << 8) | u64::from(self.bytes[self.pos]);
            self.pos += 1;
            self.filled += 8;
        }
        self.filled -= bits;
        let v = (self.acc >> self.filled) & ((1u64 << bits) - 1);
        self.acc &= (1u64 << self.filled) - 1;
        v as u32
    }
}

/// Serialises `codes` under `header`.
pub fn pack(codes: &MultiScaleCodes, header: &BitstreamHeader) -> Result<Vec<u8>> {
    header.check()?;
    if codes.frames != header.frames as usize {
        return Err(BitstreamError::Inconsistent(format!(
            "codes have {} frames, header says {}",
            codes.frames, header.frames
        )));
    }
    if codes.levels.len() != header.strides.len() {
        return Err(BitstreamError::Inconsistent(format!(
            "codes have {} levels, header says {}",
            codes.levels.len(),
            header.strides.len()
        )));
    }
    for (i, (tokens, len)) in codes.levels.iter().zip(header.level_lengths()).enumerate() {
        if tokens.len() != len {
            return Err(BitstreamError::Inconsistent(format!(
                "level {i} has {} tokens, expected {len}",
                tokens.len()
            )));
        }
    }
    let bits = u32::from(header.bits_per_token);
    let limit = 1u64 << bits;
    let mut out = Vec::with_capacity(header.header_bytes() + header.payload_bytes());
    header.write(&mut out);
    let mut w = BitWriter {
        out,
        acc: 0,
        filled: 0,
    };
    for (level, tokens) in codes.levels.iter().enumerate() {
        for &token in tokens {
            if u64::from(token) >= limit {
                return Err(BitstreamError::TokenOverflow {
                    level,
                    token,
                    bits: header.bits_per_token,
                });
            }
            w.push(token, bits);
        }
    }
    Ok(w.finish())
}

/// Parses a stream produced by [`pack`].
pub fn unpack(bytes: &[u8]) -> Result<(MultiScaleCodes, BitstreamHeader)> {
    let header = BitstreamHeader::read(bytes)?;
    header.check()?;
    let start = header.header_bytes();
    let end = start + header.payload_bytes();
    if bytes.len() < end {
        return Err(BitstreamError::Underrun {
            offset: bytes.len(),
            needed: end,
        });
    }
    if bytes.len() > end {
        return Err(BitstreamError::TrailingBytes(bytes.len() - end));
    }
    let pad = (8 - header.payload_bits() % 8) % 8;
    if pad > 0 && bytes[end - 1] & ((1u8 << pad) - 1) != 0 {
        return Err(BitstreamError::NonZeroPadding);
    }
    let bits = u32::from(header.bits_per_token);
    let mut r = BitReader {
        bytes: &bytes[start..end],
        pos: 0,
        acc: 0,
        filled: 0,
    };
    let levels = header
        .level_lengths()
        .into_iter()
        .map(|len| (0..len).map(|_| r.pull(bits)).collect())
        .collect();
    let codes = MultiScaleCodes {
        frames: header.frames as usize,
        levels,
    };
    Ok((codes, header))
}

/// Raw token bitrate of `config` in bits per second:
/// `B * sum_i sample_rate / (hop * W_i)`.
pub fn bitrate(config: &CodecConfig) -> f64 {
    f64::from(config.bits_per_token()) * config.token_rates().iter().sum::<f64>()
}

/// `984 bps` below 1 kbps, otherwise kbps with one decimal (`2.6 kbps`).
pub fn format_bitrate(bps: f64) -> String {
    if bps.round() < 1000.0 {
        format!("{:.0} bps", bps)
    } else {
        format!("{:.1} kbps", bps / 1000.0)
    }
}
