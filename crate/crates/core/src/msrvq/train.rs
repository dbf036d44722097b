use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{quantize, Codebook, LevelConfig, QuantizeError, QuantizerLevel, Result};
use crate::tensor::{avg_pool, linear, FrameTensor, Linear, TensorError};

/// Smoothing added to EMA cluster counts so empty clusters never divide by
/// zero.
const COUNT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct EmaOptions {
    pub iterations: usize,
    pub ema_decay: f64,
    /// Codewords assigned fewer than this many frames per pass over the
    /// data are re-seeded from random training frames.
    pub dead_code_threshold: f64,
    pub rng_seed: u64,
    /// Frames drawn per iteration; `None` uses every frame every iteration.
    pub batch_size: Option<usize>,
}

impl Default for EmaOptions {
    fn default() -> Self {
        Self {
            iterations: 100,
            ema_decay: 0.99,
            dead_code_threshold: 2.0,
            rng_seed: 0,
            batch_size: None,
        }
    }
}

/// Codebooks learned by [`train_codebooks_ema`] together with their
/// training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCodebooks {
    pub levels: Vec<QuantizerLevel>,
    /// Per level, the per-element quantization MSE of every iteration's batch
    /// in codeword space.
    pub mse_history: Vec<Vec<f64>>,
    /// Per level, the per-element MSE of the final codebook over all of that
    /// level's training vectors.
    pub final_mse: Vec<f64>,
    /// Per-element mean squared latent residual before any level (index 0)
    /// and after each level.
    pub residual_energy: Vec<f64>,
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

fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest codeword and its squared distance. Ties keep the lowest index.
fn nearest(v: &[f32], entries: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (k, e) in entries.chunks_exact(dim).enumerate() {
        let d = sq_dist(v, e);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Projection pair for `channels -> dim`: the identity when the sizes agree,
/// otherwise a random map with orthonormal rows (or columns) and its
/// transpose.
fn projections(channels: usize, dim: usize, rng: &mut ChaCha8Rng) -> (Linear, Linear) {
    if channels == dim {
        return (Linear::identity(dim), Linear::identity(dim));
    }
    let (count, len) = (channels.min(dim), channels.max(dim));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    // in_proj weight is dim x channels.
    let mut w_in = vec![0f32; dim * channels];
    for d in 0..dim {
        for c in 0..channels {
            w_in[d * channels + c] = if dim <= channels {
                basis[d][c] as f32
            } else {
                basis[c][d] as f32
            };
        }
    }
    let mut w_out = vec![0f32; channels * dim];
    for c in 0..channels {
        for d in 0..dim {
            w_out[c * dim + d] = w_in[d * channels + c];
        }
    }
    (
        Linear {
            in_dim: channels,
            out_dim: dim,
            weight: w_in,
            bias: None,
        },
        Linear {
            in_dim: dim,
            out_dim: channels,
            weight: w_out,
            bias: None,
        },
    )
}

/// k-means++ seeding: each new centre is drawn with probability
/// proportional to its squared distance from the nearest chosen centre.
fn kmeans_plus_plus(data: &FrameTensor, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.frames();
    let dim = data.channels();
    let mut entries = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    entries.extend_from_slice(data.row(first));
    let mut dist: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| f64::from(sq_dist(data.row(j), data.row(first))))
        .collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (j, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = j;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let centre = data.row(pick).to_vec();
        dist.par_iter_mut().enumerate().for_each(|(j, d)| {
            *d = d.min(f64::from(sq_dist(data.row(j), &centre)));
        });
        entries.extend_from_slice(&centre);
    }
    entries
}

fn distinct_rows(data: &FrameTensor) -> usize {
    (0..data.frames())
        .map(|t| data.row(t).iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

struct LevelFit {
    entries: Vec<f32>,
    history: Vec<f64>,
}

fn fit_level(data: &FrameTensor, size: usize, opts: &EmaOptions, rng: &mut ChaCha8Rng) -> LevelFit {
    let n = data.frames();
    let dim = data.channels();
    let mut entries = kmeans_plus_plus(data, size, rng);
    let mut ema_count = vec![1f64; size];
    let mut ema_sum: Vec<f64> = entries.iter().map(|&v| f64::from(v)).collect();
    let mut history = Vec::with_capacity(opts.iterations);
    let decay = opts.ema_decay;

    for it in 0..opts.iterations {
        let batch: Vec<usize> = match opts.batch_size {
            Some(b) if b < n => (0..b).map(|_| rng.random_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        let assigned: Vec<(usize, f32)> = batch
            .par_iter()
            .map(|&j| nearest(data.row(j), &entries, dim))
            .collect();

        let mut counts = vec![0f64; size];
        let mut sums = vec![0f64; size * dim];
        let mut sq_err = 0f64;
        for (&j, &(k, d)) in batch.iter().zip(&assigned) {
            counts[k] += 1.0;
            sq_err += f64::from(d);
            for (s, &v) in sums[k * dim..(k + 1) * dim].iter_mut().zip(data.row(j)) {
                *s += f64::from(v);
            }
        }
        history.push(sq_err / (batch.len() * dim) as f64);

        for k in 0..size {
            ema_count[k] = decay * ema_count[k] + (1.0 - decay) * counts[k];
        }
        for (e, s) in ema_sum.iter_mut().zip(&sums) {
            *e = decay * *e + (1.0 - decay) * s;
        }
        let total: f64 = ema_count.iter().sum();
        for k in 0..size {
            let smoothed =
                (ema_count[k] + COUNT_EPSILON) / (total + size as f64 * COUNT_EPSILON) * total;
            for d in 0..dim {
                entries[k * dim + d] = (ema_sum[k * dim + d] / smoothed) as f32;
            }
        }

        if it + 1 < opts.iterations {
            let per_epoch = n as f64 / batch.len() as f64;
            for k in 0..size {
                if counts[k] * per_epoch < opts.dead_code_threshold {
                    let row = data.row(rng.random_range(0..n));
                    entries[k * dim..(k + 1) * dim].copy_from_slice(row);
                    for d in 0..dim {
                        ema_sum[k * dim + d] = f64::from(row[d]);
                    }
                    ema_count[k] = 1.0;
                }
            }
        }
    }
    LevelFit { entries, history }
}

/// Greedy level-by-level codebook learning with EMA k-means.
///
/// Level `i` is fit to the average-pooled residual left by the already
/// trained levels `0..i`, seeded with k-means++ and refined by
/// exponential-moving-average updates of cluster counts and sums. Codewords
/// that fall below `dead_code_threshold` assignments are re-seeded from
/// random training vectors. Results are a deterministic function of the
/// inputs and `rng_seed`.
///
/// Frames beyond the last multiple of `lcm(strides)` are ignored.
pub fn train_codebooks_ema(
    features: &FrameTensor,
    levels: &[LevelConfig],
    opts: &EmaOptions,
) -> Result<TrainedCodebooks> {
    if levels.is_empty() {
        return Err(QuantizeError::LevelCount {
            expected: 1,
            actual: 0,
        });
    }
    for cfg in levels {
        if cfg.stride == 0 {
            return Err(TensorError::ZeroFactor.into());
        }
        if cfg.codebook_size == 0 || cfg.codeword_dim == 0 {
            return Err(QuantizeError::EmptyCodebook);
        }
    }
    if !(0.0..1.0).contains(&opts.ema_decay) {
        return Err(QuantizeError::InvalidCodebook(format!(
            "EMA decay {} outside [0, 1)",
            opts.ema_decay
        )));
    }
    let k_max = levels.iter().map(|c| c.codebook_size).max().unwrap_or(1);
    if features.frames() < k_max {
        return Err(QuantizeError::InsufficientData(format!(
            "{} frames for a codebook of {k_max} entries",
            features.frames()
        )));
    }
    let block = levels.iter().fold(1, |acc, c| lcm(acc, c.stride));
    let usable = features.frames() / block * block;
    if usable == 0 {
        return Err(QuantizeError::InsufficientData(format!(
            "{} frames cannot fill one block of {block}",
            features.frames()
        )));
    }

    let channels = features.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let mut residual = features.resized(usable);
    let element_count = (usable * channels) as f64;
    let mut trained = TrainedCodebooks {
        levels: Vec::with_capacity(levels.len()),
        mse_history: Vec::with_capacity(levels.len()),
        final_mse: Vec::with_capacity(levels.len()),
        residual_energy: vec![residual.energy() / element_count],
    };

    for (i, cfg) in levels.iter().enumerate() {
        let (in_proj, out_proj) = projections(channels, cfg.codeword_dim, &mut rng);
        let pooled = avg_pool(&residual, cfg.stride)?;
        let data = linear(&pooled, &in_proj)?;
        let distinct = distinct_rows(&data);
        if distinct < cfg.codebook_size {
            log::warn!(
                "level {i}: {distinct} distinct training vectors for {} codewords",
                cfg.codebook_size
            );
        }
        let fit = fit_level(&data, cfg.codebook_size, opts, &mut rng);
        let final_mse = (0..data.frames())
            .into_par_iter()
            .map(|t| f64::from(nearest(data.row(t), &fit.entries, cfg.codeword_dim).1))
            .sum::<f64>()
            / (data.frames() * cfg.codeword_dim) as f64;

        let codebook = Codebook::new(fit.entries, cfg.codeword_dim, in_proj, out_proj)?;
        let level = QuantizerLevel::new(cfg.stride, codebook)?;
        residual = quantize(&residual, std::slice::from_ref(&level))?.residual;

        trained.levels.push(level);
        trained.mse_history.push(fit.history);
        trained.final_mse.push(final_mse);
        trained
            .residual_energy
            .push(residual.energy() / element_count);
    }
    Ok(trained)
}
