//! Multi-scale neural audio codec: tensor kernels, multi-scale residual
//! vector quantization, the encoder/decoder graph, the token bitstream and
//! reconstruction metrics.

pub mod audio;
pub mod bitstream;
pub mod metrics;
pub mod model;
pub mod msrvq;
pub mod tensor;

pub use audio::AudioBuffer;
pub use bitstream::{BitstreamError, BitstreamHeader};
pub use metrics::{MetricsError, SpectralConfig};
pub use model::{Codec, CodecConfig, CodecInit, ModelError, NoiseMode, Preset};
pub use msrvq::{Codebook, LevelConfig, MultiScaleCodes, QuantizeError, QuantizerLevel};
pub use tensor::{FrameTensor, TensorError};
