use rayon::prelude::*;

use super::{dot, linear, FrameTensor, Linear, Result, TensorError};

/// Projections of a single-head attention layer. Query and key map
/// `C -> H`, value maps `C -> H` and output maps `H -> C`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl AttentionParams {
    pub fn zeros(channels: usize, head_dim: usize) -> Self {
        Self {
            query: Linear::zeros(channels, head_dim, false),
            key: Linear::zeros(channels, head_dim, false),
            value: Linear::zeros(channels, head_dim, false),
            output: Linear::zeros(head_dim, channels, false),
        }
    }

    fn validate(&self, channels: usize) -> Result<()> {
        let head = self.query.out_dim;
        let ok = self.query.in_dim == channels
            && self.key.in_dim == channels
            && self.value.in_dim == channels
            && self.key.out_dim == head
            && self.value.out_dim == head
            && self.output.in_dim == head
            && self.output.out_dim == channels;
        if !ok {
            return Err(TensorError::DimensionMismatch(format!(
                "attention projections do not fit {channels} channels"
            )));
        }
        Ok(())
    }
}

/// Frames `t` may attend to: every `s` with `|t - s| < window`.
fn neighbourhood(t: usize, frames: usize, window: usize) -> std::ops::Range<usize> {
    let reach = window - 1;
    t.saturating_sub(reach)..(t + reach + 1).min(frames)
}

fn softmax_in_place(scores: &mut [f32]) {
    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut total = 0f32;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

struct Projected {
    q: FrameTensor,
    k: FrameTensor,
    v: FrameTensor,
    scale: f32,
}

fn project(x: &FrameTensor, params: &AttentionParams, window: usize) -> Result<Projected> {
    if window == 0 {
        return Err(TensorError::DimensionMismatch(
            "attention window must be at least 1".into(),
        ));
    }
    params.validate(x.channels())?;
    Ok(Projected {
        q: linear(x, &params.query)?,
        k: linear(x, &params.key)?,
        v: linear(x, &params.value)?,
        scale: 1.0 / (params.query.out_dim as f32).sqrt(),
    })
}

fn row_weights(p: &Projected, t: usize, window: usize) -> (std::ops::Range<usize>, Vec<f32>) {
    let range = neighbourhood(t, p.q.frames(), window);
    let qt = p.q.row(t);
    let mut scores: Vec<f32> = range
        .clone()
        .map(|s| dot(qt, p.k.row(s)) * p.scale)
        .collect();
    softmax_in_place(&mut scores);
    (range, scores)
}

/// Non-causal single-head scaled dot-product attention where frame `t`
/// sees only frames within `window - 1` of itself. A window at least as
/// long as the sequence is full attention. No residual connection is added.
pub fn local_windowed_attention(
    x: &FrameTensor,
    params: &AttentionParams,
    window: usize,
) -> Result<FrameTensor> {
    let p = project(x, params, window)?;
    let head = params.value.out_dim;
    let mut mixed = vec![0f32; x.frames() * head];
    mixed.par_chunks_mut(head).enumerate().for_each(|(t, row)| {
        // Weighted mean anchored on the query frame's own value; the
        // weights sum to one, so identical values reproduce exactly.
        let anchor = p.v.row(t);
        let (range, weights) = row_weights(&p, t, window);
        for (s, w) in range.zip(weights) {
            for ((acc, v), a) in row.iter_mut().zip(p.v.row(s)).zip(anchor) {
                *acc += w * (v - a);
            }
        }
        for (acc, a) in row.iter_mut().zip(anchor) {
            *acc += a;
        }
    });
    let mixed = FrameTensor::new(x.frames(), head, mixed)?;
    linear(&mixed, &params.output)
}

/// Dense `T x T` attention matrix of [`local_windowed_attention`], with
/// zeros outside each frame's window.
pub fn local_attention_weights(
    x: &FrameTensor,
    params: &AttentionParams,
    window: usize,
) -> Result<Vec<Vec<f32>>> {
    let p = project(x, params, window)?;
    Ok((0..x.frames())
        .map(|t| {
            let mut dense = vec![0f32; x.frames()];
            let (range, weights) = row_weights(&p, t, window);
            for (s, w) in range.zip(weights) {
                dense[s] = w;
            }
            dense
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(c: usize, seed: u32) -> AttentionParams {
        let mut state = seed.wrapping_mul(2654435761).wrapping_add(1);
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            (state as f32 / u32::MAX as f32) - 0.5
        };
        let mut mk = |i, o| Linear {
            in_dim: i,
            out_dim: o,
            weight: (0..i * o).map(|_| next()).collect(),
            bias: None,
        };
        AttentionParams {
            query: mk(c, c),
            key: mk(c, c),
            value: mk(c, c),
            output: mk(c, c),
        }
    }

    #[test]
    fn single_frame_is_value_projection() {
        let mut p = params(3, 7);
        p.output = Linear::identity(3);
        let x = FrameTensor::new(1, 3, vec![0.3, -1.0, 2.0]).unwrap();
        let y = local_windowed_attention(&x, &p, 4).unwrap();
        let v = linear(&x, &p.value).unwrap();
        assert_eq!(y.data(), v.data());
    }

    #[test]
    fn equal_frames_give_equal_outputs() {
        let p = params(4, 3);
        let x = FrameTensor::from_fn(9, 4, |_, c| c as f32 * 0.4 - 0.5);
        let y = local_windowed_attention(&x, &p, 3).unwrap();
        for t in 1..9 {
            assert_eq!(y.row(t), y.row(0));
        }
    }

    #[test]
    fn window_limits_support() {
        let p = params(2, 11);
        let x = FrameTensor::from_fn(10, 2, |t, c| ((t * 7 + c * 3) % 5) as f32 * 0.3);
        let w = local_attention_weights(&x, &p, 3).unwrap();
        for (t, row) in w.iter().enumerate() {
            for (s, &v) in row.iter().enumerate() {
                if t.abs_diff(s) >= 3 {
                    assert_eq!(v, 0.0);
                }
            }
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_zero_window_and_bad_dims() {
        let p = params(2, 1);
        let x = FrameTensor::zeros(3, 2);
        assert!(local_windowed_attention(&x, &p, 0).is_err());
        assert!(local_windowed_attention(&FrameTensor::zeros(3, 3), &p, 2).is_err());
    }
}
