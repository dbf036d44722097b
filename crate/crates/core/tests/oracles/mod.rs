//! Straightforward reference implementations used as test oracles. They
//! favour obviousness over speed and compute in f64 where it matters.

#![allow(dead_code, clippy::needless_range_loop)]

use mscodec_core::tensor::ConvSpec;
use mscodec_core::FrameTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, frames: usize, channels: usize) -> FrameTensor {
    FrameTensor::new(frames, channels, gaussian_vec(rng, frames * channels)).unwrap()
}

pub fn max_abs_diff(a: &FrameTensor, b: &FrameTensor) -> f32 {
    assert_eq!((a.frames(), a.channels()), (b.frames(), b.channels()));
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

/// Direct grouped cross-correlation from the textbook definition:
/// `y[t][o] = b[o] + sum_{i in group(o), k} w[o][i][k] * xpad[t*s + k*d][i]`.
pub fn conv_oracle(x: &FrameTensor, spec: &ConvSpec) -> FrameTensor {
    let (pl, pr) = spec.padding;
    let c_in = spec.in_channels;
    let len = x.frames() + pl + pr;
    let mut xpad = vec![vec![0f64; c_in]; len];
    for t in 0..x.frames() {
        for i in 0..c_in {
            xpad[t + pl][i] = f64::from(x.get(t, i));
        }
    }
    let extent = spec.dilation * (spec.kernel_size - 1) + 1;
    let out_frames = (len - extent) / spec.stride + 1;
    let icg = c_in / spec.groups;
    let ocg = spec.out_channels / spec.groups;
    let mut out = Vec::with_capacity(out_frames * spec.out_channels);
    for t in 0..out_frames {
        for o in 0..spec.out_channels {
            let g = o / ocg;
            let mut acc = spec.bias.as_ref().map_or(0.0, |b| f64::from(b[o]));
            for il in 0..icg {
                for k in 0..spec.kernel_size {
                    let w = spec.weight[(o * icg + il) * spec.kernel_size + k];
                    acc += f64::from(w) * xpad[t * spec.stride + k * spec.dilation][g * icg + il];
                }
            }
            out.push(acc as f32);
        }
    }
    FrameTensor::new(out_frames, spec.out_channels, out).unwrap()
}

/// The same convolution as `spec` expressed with one group and explicit
/// zeros off the block diagonal.
pub fn block_diagonal(spec: &ConvSpec) -> ConvSpec {
    let icg = spec.in_channels / spec.groups;
    let ocg = spec.out_channels / spec.groups;
    let k = spec.kernel_size;
    let mut full = vec![0f32; spec.out_channels * spec.in_channels * k];
    for o in 0..spec.out_channels {
        let g = o / ocg;
        for il in 0..icg {
            for kk in 0..k {
                full[(o * spec.in_channels + g * icg + il) * k + kk] =
                    spec.weight[(o * icg + il) * k + kk];
            }
        }
    }
    ConvSpec::new(spec.in_channels, spec.out_channels, k)
        .with_stride(spec.stride)
        .with_dilation(spec.dilation)
        .with_padding(spec.padding.0, spec.padding.1)
        .with_weight(full)
        .with_bias(spec.bias.clone())
}

/// Transposed convolution by zero-stuffing: insert `stride - 1` zeros
/// between input frames, pad by `extent - 1` on both sides, correlate with
/// the flipped kernel at unit stride, then crop the requested padding.
/// `spec.weight` uses the transposed layout `in x (out / groups) x k`.
pub fn transposed_oracle(x: &FrameTensor, spec: &ConvSpec) -> FrameTensor {
    let s = spec.stride;
    let c_in = spec.in_channels;
    let k = spec.kernel_size;
    let extent = spec.dilation * (k - 1) + 1;
    let stuffed_len = (x.frames() - 1) * s + 1;
    let mut stuffed = vec![0f32; stuffed_len * c_in];
    for t in 0..x.frames() {
        stuffed[t * s * c_in..(t * s + 1) * c_in].copy_from_slice(x.row(t));
    }
    let stuffed = FrameTensor::new(stuffed_len, c_in, stuffed).unwrap();

    let icg = c_in / spec.groups;
    let ocg = spec.out_channels / spec.groups;
    let mut forward = vec![0f32; spec.out_channels * icg * k];
    for g in 0..spec.groups {
        for il in 0..icg {
            for ol in 0..ocg {
                for kk in 0..k {
                    let (i, o) = (g * icg + il, g * ocg + ol);
                    forward[(o * icg + il) * k + (k - 1 - kk)] =
                        spec.weight[(i * ocg + ol) * k + kk];
                }
            }
        }
    }
    let fspec = ConvSpec::new(c_in, spec.out_channels, k)
        .with_groups(spec.groups)
        .with_dilation(spec.dilation)
        .with_padding(extent - 1, extent - 1)
        .with_weight(forward)
        .with_bias(spec.bias.clone());
    let full = conv_oracle(&stuffed, &fspec);
    let (pl, pr) = spec.padding;
    let keep = full.frames() - pl - pr;
    let mut out = Vec::with_capacity(keep * spec.out_channels);
    for t in pl..pl + keep {
        out.extend_from_slice(full.row(t));
    }
    FrameTensor::new(keep, spec.out_channels, out).unwrap()
}

/// Classic residual vector quantization without pooling or projections:
/// each stage picks the nearest codeword to the current residual (lowest
/// index on ties) and subtracts it.
pub fn plain_rvq(z: &FrameTensor, codebooks: &[Vec<f32>]) -> (Vec<Vec<u32>>, Vec<Vec<f32>>) {
    let dim = z.channels();
    let mut residual: Vec<Vec<f32>> = (0..z.frames()).map(|t| z.row(t).to_vec()).collect();
    let mut tokens = Vec::new();
    for cb in codebooks {
        let mut level = Vec::with_capacity(z.frames());
        for r in residual.iter_mut() {
            let mut best = 0;
            let mut best_d = f32::INFINITY;
            for (k, c) in cb.chunks_exact(dim).enumerate() {
                let mut d = 0f32;
                for j in 0..dim {
                    d += (r[j] - c[j]) * (r[j] - c[j]);
                }
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            for j in 0..dim {
                r[j] -= cb[best * dim + j];
            }
            level.push(best as u32);
        }
        tokens.push(level);
    }
    (tokens, residual)
}

/// `frames` samples drawn from four well-separated isotropic Gaussians.
pub fn four_gaussians(rng: &mut ChaCha8Rng, frames: usize, channels: usize) -> FrameTensor {
    let centres: Vec<Vec<f32>> = (0..4)
        .map(|c| {
            (0..channels)
                .map(|j| if j % 4 == c { 4.0 } else { -1.0 })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(frames * channels);
    for _ in 0..frames {
        let c = rng.random_range(0..4);
        for j in 0..channels {
            data.push(centres[c][j] + 0.5 * rng.sample::<f32, _>(StandardNormal));
        }
    }
    FrameTensor::new(frames, channels, data).unwrap()
}

/// Lloyd's k-means with k-means++ seeding, best of `restarts` runs.
/// Returns the per-element mean squared error.
pub fn lloyd_kmeans_mse(x: &FrameTensor, k: usize, seed: u64, restarts: usize) -> f64 {
    let pts: Vec<Vec<f64>> = (0..x.frames())
        .map(|t| x.row(t).iter().map(|&v| f64::from(v)).collect())
        .collect();
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut best = f64::INFINITY;
    let mut r = rng(seed);
    for _ in 0..restarts {
        let mut centres = vec![pts[r.random_range(0..pts.len())].clone()];
        while centres.len() < k {
            let w: Vec<f64> = pts
                .iter()
                .map(|p| {
                    centres
                        .iter()
                        .map(|c| d2(p, c))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let total: f64 = w.iter().sum();
            let mut u = r.random::<f64>() * total;
            let mut pick = pts.len() - 1;
            for (i, wi) in w.iter().enumerate() {
                if u < *wi {
                    pick = i;
                    break;
                }
                u -= wi;
            }
            centres.push(pts[pick].clone());
        }
        let mut sse = f64::INFINITY;
        for _ in 0..300 {
            let mut sums = vec![vec![0f64; x.channels()]; k];
            let mut counts = vec![0usize; k];
            let mut new_sse = 0.0;
            for p in &pts {
                let (j, d) = centres
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (j, d2(p, c)))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                new_sse += d;
                counts[j] += 1;
                for (s, v) in sums[j].iter_mut().zip(p) {
                    *s += v;
                }
            }
            for j in 0..k {
                if counts[j] > 0 {
                    centres[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
                }
            }
            if new_sse >= sse {
                break;
            }
            sse = new_sse;
        }
        best = best.min(sse);
    }
    best / (x.frames() * x.channels()) as f64
}

/// Log-magnitude spectrogram by a direct DFT of each periodic-Hann
/// windowed frame, optionally folded onto HTK-mel triangles.
pub fn naive_log_spectrogram(
    x: &[f32],
    sample_rate: f64,
    win: usize,
    mels: Option<usize>,
    eps: f64,
) -> Vec<Vec<f64>> {
    let hop = win / 4;
    let mut padded: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
    while padded.len() < win || !(padded.len() - win).is_multiple_of(hop) {
        padded.push(0.0);
    }
    let frames = (padded.len() - win) / hop + 1;
    let bins = win / 2 + 1;
    let hann: Vec<f64> = (0..win)
        .map(|n| (std::f64::consts::PI * n as f64 / win as f64).sin().powi(2))
        .collect();
    let twiddle: Vec<(f64, f64)> = (0..win)
        .map(|j| {
            let phase = 2.0 * std::f64::consts::PI * j as f64 / win as f64;
            (phase.cos(), phase.sin())
        })
        .collect();
    let mel_weights = mels.map(|m| {
        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let top = mel(sample_rate / 2.0);
        let pts: Vec<f64> = (0..m + 2)
            .map(|i| inv(top * i as f64 / (m + 1) as f64))
            .collect();
        (0..m)
            .map(|j| {
                (0..bins)
                    .map(|b| {
                        let f = b as f64 * sample_rate / win as f64;
                        if f <= pts[j] || f >= pts[j + 2] {
                            0.0
                        } else if f <= pts[j + 1] {
                            (f - pts[j]) / (pts[j + 1] - pts[j])
                        } else {
                            (pts[j + 2] - f) / (pts[j + 2] - pts[j + 1])
                        }
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });
    (0..frames)
        .map(|f| {
            let frame = &padded[f * hop..f * hop + win];
            let mags: Vec<f64> = (0..bins)
                .map(|b| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, &v) in frame.iter().enumerate() {
                        let (c, s) = twiddle[(b * n) % win];
                        re += v * hann[n] * c;
                        im -= v * hann[n] * s;
                    }
                    (re * re + im * im).sqrt()
                })
                .collect();
            let values = match &mel_weights {
                Some(w) => w
                    .iter()
                    .map(|row| row.iter().zip(&mags).map(|(a, b)| a * b).sum())
                    .collect(),
                None => mags,
            };
            values.into_iter().map(|v: f64| (v + eps).log10()).collect()
        })
        .collect()
}

/// Mean over windows of the mean absolute log-spectrogram difference.
pub fn naive_spectral_l1(
    a: &[f32],
    b: &[f32],
    sample_rate: f64,
    windows: &[usize],
    mels: Option<usize>,
    eps: f64,
) -> f64 {
    let per_window: Vec<f64> = windows
        .iter()
        .map(|&w| {
            let sa = naive_log_spectrogram(a, sample_rate, w, mels, eps);
            let sb = naive_log_spectrogram(b, sample_rate, w, mels, eps);
            let mut sum = 0.0;
            let mut n = 0usize;
            for (ra, rb) in sa.iter().zip(&sb) {
                for (x, y) in ra.iter().zip(rb) {
                    sum += (x - y).abs();
                    n += 1;
                }
            }
            sum / n as f64
        })
        .collect();
    per_window.iter().sum::<f64>() / per_window.len() as f64
}

/// A deterministic pair of one-second test signals: a two-tone mixture and
/// a detuned, noisier copy.
pub fn fixture_pair(sample_rate: u32) -> (Vec<f32>, Vec<f32>) {
    let mut r = rng(2024);
    let sr = sample_rate as f32;
    let n = sample_rate as usize;
    let tau = std::f32::consts::TAU;
    let a = (0..n)
        .map(|i| {
            let t = i as f32 / sr;
            0.5 * (tau * 440.0 * t).sin() + 0.2 * (tau * 1230.0 * t).sin()
        })
        .collect();
    let b = (0..n)
        .map(|i| {
            let t = i as f32 / sr;
            0.45 * (tau * 447.0 * t).sin()
                + 0.25 * (tau * 1230.0 * t + 0.3).sin()
                + 0.02 * r.sample::<f32, _>(StandardNormal)
        })
        .collect();
    (a, b)
}

/// Writes tokens one bit at a time, most significant first, and pads the
/// last byte with zeros.
pub fn naive_bit_pack(levels: &[Vec<u32>], bits: u32) -> Vec<u8> {
    let mut out_bits = Vec::new();
    for level in levels {
        for &tok in level {
            for b in (0..bits).rev() {
                out_bits.push((tok >> b) & 1 == 1);
            }
        }
    }
    out_bits
        .chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |byte, (i, &bit)| byte | (u8::from(bit) << (7 - i)))
        })
        .collect()
}
