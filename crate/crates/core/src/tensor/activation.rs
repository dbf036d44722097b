use super::{FrameTensor, Result, TensorError};

/// Snake activation `x + sin^2(alpha * x) / alpha` with one `alpha` per
/// channel.
pub fn snake(x: &FrameTensor, alpha: &[f32]) -> Result<FrameTensor> {
    if alpha.len() != x.channels() {
        return Err(TensorError::ChannelMismatch {
            expected: x.channels(),
            actual: alpha.len(),
        });
    }
    if let Some((channel, &value)) = alpha
        .iter()
        .enumerate()
        .find(|(_, a)| a.is_nan() || **a <= 0.0)
    {
        return Err(TensorError::NonPositiveAlpha { channel, value });
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(alpha.len()) {
        for (v, &a) in row.iter_mut().zip(alpha) {
            let s = (a * *v).sin();
            *v += s * s / a;
        }
    }
    Ok(out)
}

pub fn leaky_relu(x: &FrameTensor, slope: f32) -> FrameTensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    out
}

pub fn tanh(x: &FrameTensor) -> FrameTensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = v.tanh();
    }
    out
}
