//! Convolutional encoder/decoder around the multi-scale quantizer.

mod codec;
mod config;
mod layers;
mod weights;

use thiserror::Error;

use crate::msrvq::QuantizeError;
use crate::tensor::TensorError;

pub use codec::{Codec, CodecInit, ConvLayerInfo, NoiseMode};
pub use config::{Activation, CodecConfig, NoiseShape, Preset};
pub use layers::{noise_block, ConvRole, NoiseBlockParams, NoiseDraw, TensorView};
pub use weights::{read_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("weight file config does not match the requested config")]
    ConfigMismatch,
    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },
    #[error("audio is empty")]
    EmptyAudio,
    #[error("audio contains non-finite samples")]
    NonFiniteAudio,
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated while reading {0}")]
    Truncated(String),
    #[error("tensor {name}: expected shape {expected:?}, found {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("weight file is missing tensor {0}")]
    MissingTensor(String),
    #[error("weight file has unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("weight file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("weight file config: {0}")]
    ConfigParse(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
