//! Deterministic 1-D signal kernels on frame-major tensors.
//!
//! Everything the codec graph needs lives here: grouped and transposed
//! convolutions, average pooling and nearest-neighbour upsampling, the Snake
//! activation, pointwise linear maps and local windowed attention. Every
//! kernel is a pure function of its inputs, so results are bit-identical
//! across calls and threads.

mod activation;
mod attention;
mod conv;
mod linear;
mod resample;

pub use activation::{leaky_relu, snake, tanh};
pub use attention::{local_attention_weights, local_windowed_attention, AttentionParams};
pub use conv::{conv1d, transposed_conv1d, ConvKind, ConvSpec};
pub use linear::{layer_norm, linear, LayerNorm, Linear};
pub use resample::{avg_pool, nn_upsample};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {actual} does not match {frames} frames x {channels} channels")]
    ShapeMismatch {
        frames: usize,
        channels: usize,
        actual: usize,
    },
    #[error("expected {expected} channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("invalid convolution spec: {0}")]
    InvalidSpec(String),
    #[error("padded length {padded} is shorter than the effective kernel extent {extent}")]
    EmptyOutput { padded: usize, extent: usize },
    #[error("{frames} frames are not divisible by factor {factor}")]
    NotDivisible { frames: usize, factor: usize },
    #[error("resampling factor must be at least 1")]
    ZeroFactor,
    #[error("activation parameter for channel {channel} must be positive, got {value}")]
    NonPositiveAlpha { channel: usize, value: f32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// A `frames x channels` real sequence stored frame-major: the value of
/// channel `c` at frame `t` sits at `data[t * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    frames: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FrameTensor {
    pub fn new(frames: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || data.len() != frames * channels {
            return Err(TensorError::ShapeMismatch {
                frames,
                channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            frames,
            channels,
            data,
        })
    }

    pub fn zeros(frames: usize, channels: usize) -> Self {
        assert!(channels > 0, "a tensor needs at least one channel");
        Self {
            frames,
            channels,
            data: vec![0.0; frames * channels],
        }
    }

    /// Builds a tensor from `f(frame, channel)`.
    pub fn from_fn(frames: usize, channels: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(channels > 0, "a tensor needs at least one channel");
        let mut data = Vec::with_capacity(frames * channels);
        for t in 0..frames {
            for c in 0..channels {
                data.push(f(t, c));
            }
        }
        Self {
            frames,
            channels,
            data,
        }
    }

    /// A single-channel tensor holding `samples` as frames.
    pub fn from_mono(samples: Vec<f32>) -> Self {
        Self {
            frames: samples.len(),
            channels: 1,
            data: samples,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.data[frame * self.channels..(frame + 1) * self.channels]
    }

    pub fn row_mut(&mut self, frame: usize) -> &mut [f32] {
        &mut self.data[frame * self.channels..(frame + 1) * self.channels]
    }

    pub fn get(&self, frame: usize, channel: usize) -> f32 {
        self.data[frame * self.channels + channel]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &FrameTensor) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Elementwise `self -= other`.
    pub fn sub_assign(&mut self, other: &FrameTensor) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(())
    }

    /// Keeps the first `frames` frames, or pads with zero frames.
    pub fn resized(&self, frames: usize) -> FrameTensor {
        let mut data = self.data.clone();
        data.resize(frames * self.channels, 0.0);
        FrameTensor {
            frames,
            channels: self.channels,
            data,
        }
    }

    /// Sum of squared values.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v) * f64::from(v)).sum()
    }

    fn check_same_shape(&self, other: &FrameTensor) -> Result<()> {
        if self.frames != other.frames || self.channels != other.channels {
            return Err(TensorError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.frames, self.channels, other.frames, other.channels
            )));
        }
        Ok(())
    }
}

/// Dot product with eight independent accumulators. The summation order is
/// fixed, so results are reproducible regardless of caller.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}
