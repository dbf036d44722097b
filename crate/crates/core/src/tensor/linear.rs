use rayon::prelude::*;

use super::{dot, FrameTensor, Result, TensorError};

/// Pointwise affine map applied independently to every frame.
/// `weight` is `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize, bias: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: bias.then(|| vec![0.0; out_dim]),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Self {
            in_dim: dim,
            out_dim: dim,
            weight,
            bias: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight.len() != self.in_dim * self.out_dim {
            return Err(TensorError::DimensionMismatch(format!(
                "linear weight holds {} values for {}x{}",
                self.weight.len(),
                self.out_dim,
                self.in_dim
            )));
        }
        if let Some(b) = &self.bias {
            if b.len() != self.out_dim {
                return Err(TensorError::DimensionMismatch(format!(
                    "linear bias holds {} values for {} outputs",
                    b.len(),
                    self.out_dim
                )));
            }
        }
        Ok(())
    }

    /// Applies the map to a single vector.
    pub fn apply_vec(&self, v: &[f32], out: &mut [f32]) {
        for (o, y) in out.iter_mut().enumerate() {
            let b = self.bias.as_ref().map_or(0.0, |b| b[o]);
            *y = b + dot(&self.weight[o * self.in_dim..(o + 1) * self.in_dim], v);
        }
    }

    /// Largest absolute row sum, an upper bound on the induced infinity
    /// norm and, for identity-like maps, on the Euclidean gain.
    pub fn row_sum_norm(&self) -> f32 {
        self.weight
            .chunks(self.in_dim)
            .map(|r| r.iter().map(|v| v.abs()).sum::<f32>())
            .fold(0.0, f32::max)
    }
}

pub fn linear(x: &FrameTensor, map: &Linear) -> Result<FrameTensor> {
    map.validate()?;
    if x.channels() != map.in_dim {
        return Err(TensorError::ChannelMismatch {
            expected: map.in_dim,
            actual: x.channels(),
        });
    }
    let mut out = vec![0f32; x.frames() * map.out_dim];
    out.par_chunks_mut(map.out_dim)
        .with_min_len(64)
        .enumerate()
        .for_each(|(t, row)| map.apply_vec(x.row(t), row));
    FrameTensor::new(x.frames(), map.out_dim, out)
}

/// Per-frame normalisation over channels with learned gain and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub eps: f32,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            eps: 1e-5,
        }
    }
}

pub fn layer_norm(x: &FrameTensor, norm: &LayerNorm) -> Result<FrameTensor> {
    let c = x.channels();
    if norm.gamma.len() != c || norm.beta.len() != c {
        return Err(TensorError::ChannelMismatch {
            expected: c,
            actual: norm.gamma.len(),
        });
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        let mean = row.iter().sum::<f32>() / c as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / c as f32;
        let inv = 1.0 / (var + norm.eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(&norm.gamma).zip(&norm.beta) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}
