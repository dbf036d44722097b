use super::{FrameTensor, Result, TensorError};

/// Non-overlapping average pooling by `factor` along frames.
///
/// The frame count must be divisible by `factor`; callers pad upstream.
/// Each mean is computed as `first + sum(x - first) / factor`, which returns
/// constant blocks exactly for every factor.
pub fn avg_pool(x: &FrameTensor, factor: usize) -> Result<FrameTensor> {
    if factor == 0 {
        return Err(TensorError::ZeroFactor);
    }
    if !x.frames().is_multiple_of(factor) {
        return Err(TensorError::NotDivisible {
            frames: x.frames(),
            factor,
        });
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let channels = x.channels();
    let out_frames = x.frames() / factor;
    let scale = factor as f32;
    let mut out = Vec::with_capacity(out_frames * channels);
    for block in 0..out_frames {
        let first = x.row(block * factor);
        for (c, &base) in first.iter().enumerate() {
            let mut offset = 0f32;
            for j in 1..factor {
                offset += x.get(block * factor + j, c) - base;
            }
            out.push(base + offset / scale);
        }
    }
    FrameTensor::new(out_frames, channels, out)
}

/// Nearest-neighbour upsampling: output frame `j` is input frame `j / factor`.
pub fn nn_upsample(x: &FrameTensor, factor: usize) -> Result<FrameTensor> {
    if factor == 0 {
        return Err(TensorError::ZeroFactor);
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let channels = x.channels();
    let mut out = Vec::with_capacity(x.frames() * factor * channels);
    for t in 0..x.frames() {
        let row = x.row(t);
        for _ in 0..factor {
            out.extend_from_slice(row);
        }
    }
    FrameTensor::new(x.frames() * factor, channels, out)
}
