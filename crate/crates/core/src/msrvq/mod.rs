//! Multi-scale residual vector quantization.
//!
//! Level `i` average-pools the running residual by its stride `W_i`,
//! projects each pooled frame into codeword space, picks the nearest
//! codeword, projects back, repeats the result `W_i` times to return to the
//! latent frame rate and subtracts it from the residual. With every stride
//! equal to one this is plain residual vector quantization.

mod train;
mod usage;

pub use train::{train_codebooks_ema, EmaOptions, TrainedCodebooks};
pub use usage::{codebook_usage, LevelUsage};

use thiserror::Error;

use crate::tensor::{avg_pool, linear, nn_upsample, FrameTensor, Linear, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("vector has dimension {actual}, codebook expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error("{frames} latent frames are not divisible by stride {stride} of level {level}")]
    NotDivisible {
        level: usize,
        frames: usize,
        stride: usize,
    },
    #[error("token {token} at level {level} is out of range for {size} codewords")]
    TokenOutOfRange {
        level: usize,
        token: u32,
        size: usize,
    },
    #[error("level {level} holds {actual} tokens, expected {expected}")]
    LevelLength {
        level: usize,
        expected: usize,
        actual: usize,
    },
    #[error("codes have {actual} levels, quantizer has {expected}")]
    LevelCount { expected: usize, actual: usize },
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, QuantizeError>;

/// Shape of one quantizer level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelConfig {
    /// Temporal downsample factor `W_i`.
    pub stride: usize,
    /// Number of codewords `K`.
    pub codebook_size: usize,
    /// Codeword dimension `D`.
    pub codeword_dim: usize,
}

/// `K x D` codeword table with its `C -> D` input and `D -> C` output
/// projections.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Vec<f32>,
    size: usize,
    dim: usize,
    pub in_proj: Linear,
    pub out_proj: Linear,
    /// Compare L2-normalised vectors during lookup.
    pub l2_normalize: bool,
}

impl Codebook {
    pub fn new(entries: Vec<f32>, dim: usize, in_proj: Linear, out_proj: Linear) -> Result<Self> {
        if dim == 0 || entries.is_empty() {
            return Err(QuantizeError::EmptyCodebook);
        }
        if !entries.len().is_multiple_of(dim) {
            return Err(QuantizeError::InvalidCodebook(format!(
                "{} values do not form rows of dimension {dim}",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(QuantizeError::InvalidCodebook("non-finite codeword".into()));
        }
        in_proj.validate()?;
        out_proj.validate()?;
        if in_proj.out_dim != dim || out_proj.in_dim != dim || in_proj.in_dim != out_proj.out_dim {
            return Err(QuantizeError::InvalidCodebook(format!(
                "projections {}->{} / {}->{} do not fit codeword dimension {dim}",
                in_proj.in_dim, in_proj.out_dim, out_proj.in_dim, out_proj.out_dim
            )));
        }
        Ok(Self {
            size: entries.len() / dim,
            entries,
            dim,
            in_proj,
            out_proj,
            l2_normalize: false,
        })
    }

    /// A codebook whose projections are the identity on `dim` channels.
    pub fn with_identity(entries: Vec<f32>, dim: usize) -> Result<Self> {
        Self::new(entries, dim, Linear::identity(dim), Linear::identity(dim))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Latent channel count `C` seen by the projections.
    pub fn channels(&self) -> usize {
        self.in_proj.in_dim
    }

    pub fn entries(&self) -> &[f32] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f32] {
        &mut self.entries
    }

    /// Mutable access to the entries and both projections at once.
    pub fn parts_mut(&mut self) -> (&mut [f32], &mut Linear, &mut Linear) {
        (&mut self.entries, &mut self.in_proj, &mut self.out_proj)
    }

    pub fn entry(&self, index: usize) -> &[f32] {
        &self.entries[index * self.dim..(index + 1) * self.dim]
    }
}

/// One cascade stage: a stride and the codebook used at that rate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerLevel {
    pub stride: usize,
    pub codebook: Codebook,
}

impl QuantizerLevel {
    pub fn new(stride: usize, codebook: Codebook) -> Result<Self> {
        if stride == 0 {
            return Err(TensorError::ZeroFactor.into());
        }
        Ok(Self { stride, codebook })
    }

    pub fn config(&self) -> LevelConfig {
        LevelConfig {
            stride: self.stride,
            codebook_size: self.codebook.size(),
            codeword_dim: self.codebook.dim(),
        }
    }
}

/// Token sequences of every level for a latent of `frames` frames; level
/// `i` holds `frames / W_i` tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MultiScaleCodes {
    pub frames: usize,
    pub levels: Vec<Vec<u32>>,
}

impl MultiScaleCodes {
    pub fn total_tokens(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn level_lengths(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }
}

/// Output of [`quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub codes: MultiScaleCodes,
    pub z_hat: FrameTensor,
    pub residual: FrameTensor,
}

fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalized(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
    v.iter().map(|x| x / norm).collect()
}

/// Index of the codeword closest to `v` in squared Euclidean distance.
/// Ties go to the lowest index.
pub fn lookup_nearest(v: &[f32], codebook: &Codebook) -> Result<u32> {
    if codebook.size() == 0 {
        return Err(QuantizeError::EmptyCodebook);
    }
    if v.len() != codebook.dim() {
        return Err(QuantizeError::DimensionMismatch {
            expected: codebook.dim(),
            actual: v.len(),
        });
    }
    let mut best = (0usize, f32::INFINITY);
    if codebook.l2_normalize {
        let v = normalized(v);
        for k in 0..codebook.size() {
            let d = squared_distance(&v, &normalized(codebook.entry(k)));
            if d < best.1 {
                best = (k, d);
            }
        }
    } else {
        for k in 0..codebook.size() {
            let d = squared_distance(v, codebook.entry(k));
            if d < best.1 {
                best = (k, d);
            }
        }
    }
    Ok(best.0 as u32)
}

fn check_level(z: &FrameTensor, index: usize, level: &QuantizerLevel) -> Result<()> {
    if level.stride == 0 {
        return Err(TensorError::ZeroFactor.into());
    }
    if !z.frames().is_multiple_of(level.stride) {
        return Err(QuantizeError::NotDivisible {
            level: index,
            frames: z.frames(),
            stride: level.stride,
        });
    }
    if level.codebook.channels() != z.channels() {
        return Err(TensorError::ChannelMismatch {
            expected: level.codebook.channels(),
            actual: z.channels(),
        }
        .into());
    }
    Ok(())
}

/// Maps tokens of one level back to the latent frame rate:
/// `nn_upsample(out_proj(entries[tokens]), stride)`.
fn reconstruct_level(tokens: &[u32], level: &QuantizerLevel) -> Result<FrameTensor> {
    let cb = &level.codebook;
    let mut gathered = Vec::with_capacity(tokens.len() * cb.dim());
    for &tok in tokens {
        gathered.extend_from_slice(cb.entry(tok as usize));
    }
    let coarse = FrameTensor::new(tokens.len(), cb.dim(), gathered)?;
    Ok(nn_upsample(&linear(&coarse, &cb.out_proj)?, level.stride)?)
}

/// Runs the multi-scale residual cascade over the latent `z`.
///
/// Returns the tokens, the reconstruction `z_hat = sum(q_i)` and the final
/// residual `z - z_hat`.
pub fn quantize(z: &FrameTensor, levels: &[QuantizerLevel]) -> Result<Quantized> {
    for (i, level) in levels.iter().enumerate() {
        check_level(z, i, level)?;
    }
    let mut residual = z.clone();
    let mut z_hat = FrameTensor::zeros(z.frames(), z.channels());
    let mut codes = MultiScaleCodes {
        frames: z.frames(),
        levels: Vec::with_capacity(levels.len()),
    };
    for level in levels {
        let pooled = avg_pool(&residual, level.stride)?;
        let projected = linear(&pooled, &level.codebook.in_proj)?;
        let tokens = (0..projected.frames())
            .map(|t| lookup_nearest(projected.row(t), &level.codebook))
            .collect::<Result<Vec<_>>>()?;
        let q = reconstruct_level(&tokens, level)?;
        residual.sub_assign(&q)?;
        z_hat.add_assign(&q)?;
        codes.levels.push(tokens);
    }
    Ok(Quantized {
        codes,
        z_hat,
        residual,
    })
}

/// Checks level count, level lengths and token ranges of `codes`.
pub fn validate_codes(codes: &MultiScaleCodes, levels: &[QuantizerLevel]) -> Result<()> {
    if codes.levels.len() != levels.len() {
        return Err(QuantizeError::LevelCount {
            expected: levels.len(),
            actual: codes.levels.len(),
        });
    }
    for (i, (tokens, level)) in codes.levels.iter().zip(levels).enumerate() {
        if level.stride == 0 || !codes.frames.is_multiple_of(level.stride) {
            return Err(QuantizeError::NotDivisible {
                level: i,
                frames: codes.frames,
                stride: level.stride,
            });
        }
        let expected = codes.frames / level.stride;
        if tokens.len() != expected {
            return Err(QuantizeError::LevelLength {
                level: i,
                expected,
                actual: tokens.len(),
            });
        }
        if let Some(&token) = tokens
            .iter()
            .find(|&&t| t as usize >= level.codebook.size())
        {
            return Err(QuantizeError::TokenOutOfRange {
                level: i,
                token,
                size: level.codebook.size(),
            });
        }
    }
    Ok(())
}

/// Sum over levels of the upsampled, projected codewords named by `codes`.
pub fn dequantize(codes: &MultiScaleCodes, levels: &[QuantizerLevel]) -> Result<FrameTensor> {
    validate_codes(codes, levels)?;
    let channels =
        levels
            .first()
            .map(|l| l.codebook.channels())
            .ok_or(QuantizeError::LevelCount {
                expected: 1,
                actual: 0,
            })?;
    let mut z_hat = FrameTensor::zeros(codes.frames, channels);
    for (tokens, level) in codes.levels.iter().zip(levels) {
        z_hat.add_assign(&reconstruct_level(tokens, level)?)?;
    }
    Ok(z_hat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(stride: usize, entries: Vec<f32>, dim: usize) -> QuantizerLevel {
        QuantizerLevel::new(stride, Codebook::with_identity(entries, dim).unwrap()).unwrap()
    }

    #[test]
    fn nearest_brute_force() {
        let cb = Codebook::with_identity(vec![0.0, 0.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(lookup_nearest(&[0.9, 1.2], &cb).unwrap(), 1);
        assert_eq!(lookup_nearest(&[1.0, 1.0], &cb).unwrap(), 1);
        assert_eq!(lookup_nearest(&[0.0, 0.0], &cb).unwrap(), 0);
        // equidistant: lowest index wins
        assert_eq!(lookup_nearest(&[0.5, 0.5], &cb).unwrap(), 0);
        assert!(matches!(
            lookup_nearest(&[0.5], &cb),
            Err(QuantizeError::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn empty_codebook_is_rejected() {
        assert_eq!(
            Codebook::with_identity(vec![], 2).unwrap_err(),
            QuantizeError::EmptyCodebook
        );
    }

    #[test]
    fn normalised_lookup_ignores_magnitude() {
        let mut cb = Codebook::with_identity(vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(lookup_nearest(&[10.0, 9.0], &cb).unwrap(), 0);
        cb.l2_normalize = true;
        assert_eq!(lookup_nearest(&[0.1, 0.3], &cb).unwrap(), 1);
    }

    #[test]
    fn hand_traced_two_frame_pool() {
        let z = FrameTensor::from_mono(vec![1.0, 1.0, 3.0, 3.0]);
        let out = quantize(&z, &[level(2, vec![2.0], 1)]).unwrap();
        assert_eq!(out.codes.levels, vec![vec![0, 0]]);
        assert_eq!(out.z_hat.data(), &[2.0; 4]);
        assert_eq!(out.residual.data(), &[-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn exact_representation_leaves_no_residual() {
        let z = FrameTensor::from_fn(6, 2, |t, c| ((t % 3) * 2 + c) as f32);
        let entries: Vec<f32> = z.data()[..6].to_vec();
        let out = quantize(&z, &[level(1, entries, 2)]).unwrap();
        assert_eq!(out.z_hat, z);
        assert!(out.residual.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn level_lengths_follow_strides() {
        let z = FrameTensor::zeros(512, 2);
        let levels: Vec<_> = [8, 4, 2, 1]
            .into_iter()
            .map(|s| level(s, vec![0.0, 0.0, 1.0, -1.0], 2))
            .collect();
        let out = quantize(&z, &levels).unwrap();
        assert_eq!(out.codes.level_lengths(), vec![64, 128, 256, 512]);
    }

    #[test]
    fn dequantize_matches_quantize_and_validates() {
        let z = FrameTensor::from_fn(8, 2, |t, c| (t as f32 * 0.3 - c as f32).sin());
        let levels = vec![
            level(4, vec![0.0, 0.0, 0.5, -0.5, -0.5, 0.5], 2),
            level(1, vec![0.1, 0.2, -0.3, 0.1], 2),
        ];
        let out = quantize(&z, &levels).unwrap();
        assert_eq!(dequantize(&out.codes, &levels).unwrap(), out.z_hat);

        let mut bad = out.codes.clone();
        bad.levels[1][3] = 2;
        assert!(matches!(
            dequantize(&bad, &levels),
            Err(QuantizeError::TokenOutOfRange {
                level: 1,
                token: 2,
                ..
            })
        ));
        let mut short = out.codes.clone();
        short.levels[0].pop();
        assert!(matches!(
            dequantize(&short, &levels),
            Err(QuantizeError::LevelLength { level: 0, .. })
        ));
    }

    #[test]
    fn zero_out_projection_gives_zero_output() {
        let mut lvl = level(2, vec![1.0, 2.0, 3.0, 4.0], 2);
        lvl.codebook.out_proj = Linear::zeros(2, 2, true);
        let codes = MultiScaleCodes {
            frames: 4,
            levels: vec![vec![0, 1]],
        };
        let y = dequantize(&codes, &[lvl]).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indivisible_latent_is_rejected() {
        let z = FrameTensor::zeros(6, 1);
        assert!(matches!(
            quantize(&z, &[level(4, vec![0.0], 1)]),
            Err(QuantizeError::NotDivisible {
                level: 0,
                frames: 6,
                stride: 4
            })
        ));
    }
}
