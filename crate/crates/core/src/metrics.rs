//! Reconstruction metrics: SI-SDR and multi-resolution log-magnitude L1
//! distances on linear and mel frequency scales.
//!
//! No alignment is performed: a delayed copy of a signal scores as a
//! different signal.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::AudioBuffer;

/// SI-SDR reported when the error energy vanishes.
pub const SI_SDR_CAP_DB: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: reference has {reference} samples, estimate has {estimate}")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("sample rate mismatch: reference {reference} Hz, estimate {estimate} Hz")]
    SampleRateMismatch { reference: u32, estimate: u32 },
    #[error("reference signal is all zeros")]
    ZeroReference,
    #[error("signals are empty")]
    Empty,
    #[error("invalid spectral config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Settings shared by [`mel_l1`] and [`stft_l1`]. Hop is a quarter of
/// each window.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    /// FFT sizes, each a power of two.
    pub windows: Vec<usize>,
    /// Mel bands for each window.
    pub mel_bins: Vec<usize>,
    pub f_min: f64,
    /// Upper mel edge; `None` means Nyquist.
    pub f_max: Option<f64>,
    /// Added to magnitudes before the logarithm.
    pub eps: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            windows: vec![512, 1024, 2048],
            mel_bins: vec![80, 80, 80],
            f_min: 0.0,
            f_max: None,
            eps: 1e-5,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let bad = |m: String| Err(MetricsError::InvalidConfig(m));
        if self.windows.is_empty() {
            return bad("no window sizes".into());
        }
        if let Some(w) = self
            .windows
            .iter()
            .find(|w| !w.is_power_of_two() || **w < 4)
        {
            return bad(format!("window {w} is not a power of two >= 4"));
        }
        if self.mel_bins.len() != self.windows.len() || self.mel_bins.contains(&0) {
            return bad("need one positive mel bin count per window".into());
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.eps));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        let f_max = self.f_max.unwrap_or(nyquist);
        if !(self.f_min >= 0.0 && self.f_min < f_max && f_max <= nyquist) {
            return bad(format!(
                "frequency range {}..{f_max} Hz outside 0..{nyquist} Hz",
                self.f_min
            ));
        }
        Ok(())
    }
}

fn check_pair(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<()> {
    if reference.sample_rate != estimate.sample_rate {
        return Err(MetricsError::SampleRateMismatch {
            reference: reference.sample_rate,
            estimate: estimate.sample_rate,
        });
    }
    if reference.len() != estimate.len() {
        return Err(MetricsError::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
        });
    }
    if reference.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Scale-invariant signal-to-distortion ratio in dB, within
/// `[-100, 100]`.
pub fn si_sdr(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
    check_pair(reference, estimate)?;
    let (mut rr, mut er) = (0.0f64, 0.0f64);
    for (&r, &e) in reference.samples.iter().zip(&estimate.samples) {
        rr += f64::from(r) * f64::from(r);
        er += f64::from(e) * f64::from(r);
    }
    if rr == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let alpha = er / rr;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (&r, &e) in reference.samples.iter().zip(&estimate.samples) {
        let target = alpha * f64::from(r);
        num += target * target;
        let err = target - f64::from(e);
        den += err * err;
    }
    if num == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    let db = 10.0 * (num / den.max(num * 1e-10)).log10();
    Ok(db.max(-SI_SDR_CAP_DB))
}

/// Mean over windows of the mean absolute difference between log-mel
/// magnitude spectrograms.
pub fn mel_l1(
    reference: &AudioBuffer,
    estimate: &AudioBuffer,
    cfg: &SpectralConfig,
) -> Result<f64> {
    spectral_l1(reference, estimate, cfg, true)
}

/// Like [`mel_l1`] on linear-frequency magnitudes.
pub fn stft_l1(
    reference: &AudioBuffer,
    estimate: &AudioBuffer,
    cfg: &SpectralConfig,
) -> Result<f64> {
    spectral_l1(reference, estimate, cfg, false)
}

fn spectral_l1(
    reference: &AudioBuffer,
    estimate: &AudioBuffer,
    cfg: &SpectralConfig,
    mel: bool,
) -> Result<f64> {
    check_pair(reference, estimate)?;
    cfg.validate(reference.sample_rate)?;
    let mut planner = FftPlanner::new();
    let mut total = 0.0;
    for (&win, &bins) in cfg.windows.iter().zip(&cfg.mel_bins) {
        let stft = Stft::new(win, &mut planner);
        let a = stft.magnitudes(&reference.samples);
        let b = stft.magnitudes(&estimate.samples);
        let (a, b) = if mel {
            let fb = mel_filterbank(
                reference.sample_rate,
                win,
                bins,
                cfg.f_min,
                cfg.f_max.unwrap_or(f64::from(reference.sample_rate) / 2.0),
            );
            (fb.apply(&a), fb.apply(&b))
        } else {
            (a, b)
        };
        let sum: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| ((x + cfg.eps).log10() - (y + cfg.eps).log10()).abs())
            .sum();
        total += sum / a.len() as f64;
    }
    Ok(total / cfg.windows.len() as f64)
}

/// Magnitude spectrogram, frame-major with `win / 2 + 1` bins per frame.
struct Stft {
    win: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    fn new(win: usize, planner: &mut FftPlanner<f64>) -> Self {
        let window = (0..win)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos())
            .collect();
        Self {
            win,
            hop: win / 4,
            window,
            fft: planner.plan_fft_forward(win),
        }
    }

    /// Number of frames after right zero-padding `len` samples to at least
    /// one window and a whole number of hops.
    fn frames(&self, len: usize) -> usize {
        if len <= self.win {
            1
        } else {
            1 + (len - self.win).div_ceil(self.hop)
        }
    }

    fn magnitudes(&self, x: &[f32]) -> Vec<f64> {
        let frames = self.frames(x.len());
        let bins = self.win / 2 + 1;
        let mut out = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); self.win];
        for f in 0..frames {
            let start = f * self.hop;
            for (n, c) in buf.iter_mut().enumerate() {
                let s = x.get(start + n).map_or(0.0, |&v| f64::from(v));
                *c = Complex::new(s * self.window[n], 0.0);
            }
            self.fft.process(&mut buf);
            out.extend(buf[..bins].iter().map(|c| c.norm()));
        }
        out
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, spaced evenly on the mel scale.
struct MelFilterbank {
    bins: usize,
    /// `mels x bins`, row-major.
    weights: Vec<f64>,
}

fn mel_filterbank(
    sample_rate: u32,
    win: usize,
    mels: usize,
    f_min: f64,
    f_max: f64,
) -> MelFilterbank {
    let bins = win / 2 + 1;
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mels + 1) as f64))
        .collect();
    let mut weights = vec![0.0; mels * bins];
    for m in 0..mels {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * f64::from(sample_rate) / win as f64;
            let up = (f - left) / (centre - left);
            let down = (right - f) / (right - centre);
            weights[m * bins + k] = up.min(down).max(0.0);
        }
    }
    MelFilterbank { bins, weights }
}

impl MelFilterbank {
    fn apply(&self, spec: &[f64]) -> Vec<f64> {
        spec.chunks_exact(self.bins)
            .flat_map(|frame| {
                self.weights
                    .chunks_exact(self.bins)
                    .map(move |row| row.iter().zip(frame).map(|(w, s)| w * s).sum())
            })
            .collect()
    }
}
