use rayon::prelude::*;

use super::{dot, FrameTensor, Result, TensorError};

/// Rows handed to one rayon task. Small tensors stay on the calling thread.
const MIN_ROWS_PER_TASK: usize = 64;

/// Which weight layout a [`ConvSpec`] is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    /// `weight` is `out x (in / groups) x kernel`.
    Forward,
    /// `weight` is `in x (out / groups) x kernel`.
    Transposed,
}

/// Shape, hyper-parameters and weights of a grouped 1-D convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    /// Zero padding as `(left, right)` frame counts.
    pub padding: (usize, usize),
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl ConvSpec {
    /// A stride-1, undilated, ungrouped, unpadded spec with zero weights and
    /// zero bias.
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            stride: 1,
            dilation: 1,
            groups: 1,
            padding: (0, 0),
            weight: vec![0.0; out_channels * in_channels * kernel_size],
            bias: Some(vec![0.0; out_channels]),
        }
    }

    /// A depthwise spec: one filter per channel.
    pub fn depthwise(channels: usize, kernel_size: usize) -> Self {
        Self::new(channels, channels, kernel_size).with_groups(channels)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    /// Sets the group count and resizes the (zeroed) weight accordingly.
    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        let per_group = self.in_channels.checked_div(groups).unwrap_or(0);
        self.weight = vec![0.0; self.out_channels * per_group * self.kernel_size];
        self
    }

    pub fn with_padding(mut self, left: usize, right: usize) -> Self {
        self.padding = (left, right);
        self
    }

    pub fn with_weight(mut self, weight: Vec<f32>) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_bias(mut self, bias: Option<Vec<f32>>) -> Self {
        self.bias = bias;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels
    }

    /// `dilation * (kernel - 1) + 1`.
    pub fn extent(&self) -> usize {
        self.dilation * (self.kernel_size - 1) + 1
    }

    /// Shape of the weight tensor for the given layout.
    pub fn weight_shape(&self, kind: ConvKind) -> [usize; 3] {
        match kind {
            ConvKind::Forward => [
                self.out_channels,
                self.in_channels / self.groups.max(1),
                self.kernel_size,
            ],
            ConvKind::Transposed => [
                self.in_channels,
                self.out_channels / self.groups.max(1),
                self.kernel_size,
            ],
        }
    }

    pub fn validate(&self, kind: ConvKind) -> Result<()> {
        let invalid = |m: String| Err(TensorError::InvalidSpec(m));
        if self.in_channels == 0 || self.out_channels == 0 {
            return invalid("channel counts must be positive".into());
        }
        if self.kernel_size == 0 || self.stride == 0 || self.dilation == 0 || self.groups == 0 {
            return invalid("kernel, stride, dilation and groups must be positive".into());
        }
        if !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return invalid(format!(
                "{} -> {} channels not divisible by {} groups",
                self.in_channels, self.out_channels, self.groups
            ));
        }
        let expected: usize = self.weight_shape(kind).iter().product();
        if self.weight.len() != expected {
            return invalid(format!(
                "weight holds {} values, shape {:?} needs {expected}",
                self.weight.len(),
                self.weight_shape(kind)
            ));
        }
        if let Some(bias) = &self.bias {
            if bias.len() != self.out_channels {
                return invalid(format!(
                    "bias holds {} values for {} output channels",
                    bias.len(),
                    self.out_channels
                ));
            }
        }
        Ok(())
    }

    fn init_row(&self, row: &mut [f32]) {
        match &self.bias {
            Some(b) => row.copy_from_slice(b),
            None => row.fill(0.0),
        }
    }
}

/// Grouped, strided, dilated cross-correlation with explicit zero padding.
///
/// Output frames: `floor((T + pad_l + pad_r - extent) / stride) + 1`.
pub fn conv1d(x: &FrameTensor, spec: &ConvSpec) -> Result<FrameTensor> {
    spec.validate(ConvKind::Forward)?;
    if x.channels() != spec.in_channels {
        return Err(TensorError::ChannelMismatch {
            expected: spec.in_channels,
            actual: x.channels(),
        });
    }
    let (pad_l, pad_r) = spec.padding;
    let padded = x.frames() + pad_l + pad_r;
    let extent = spec.extent();
    if padded < extent {
        return Err(TensorError::EmptyOutput { padded, extent });
    }
    let out_frames = (padded - extent) / spec.stride + 1;
    let out_c = spec.out_channels;
    let k = spec.kernel_size;
    let frames = x.frames();

    // Gathers the input row feeding tap `kk` of output frame `u`, if any.
    let input_row = |u: usize, kk: usize| -> Option<&[f32]> {
        let pos = u * spec.stride + kk * spec.dilation;
        (pos >= pad_l && pos - pad_l < frames).then(|| x.row(pos - pad_l))
    };

    let mut out = vec![0f32; out_frames * out_c];
    if spec.is_depthwise() {
        // [kk][c]
        let mut taps = vec![0f32; k * out_c];
        for c in 0..out_c {
            for kk in 0..k {
                taps[kk * out_c + c] = spec.weight[c * k + kk];
            }
        }
        out.par_chunks_mut(out_c)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each(|(u, row)| {
                spec.init_row(row);
                for kk in 0..k {
                    if let Some(xr) = input_row(u, kk) {
                        let w = &taps[kk * out_c..(kk + 1) * out_c];
                        for c in 0..out_c {
                            row[c] += w[c] * xr[c];
                        }
                    }
                }
            });
    } else {
        let icg = spec.in_channels / spec.groups;
        let ocg = out_c / spec.groups;
        // [kk][o][i_local], contiguous along the reduction axis.
        let mut taps = vec![0f32; k * out_c * icg];
        for o in 0..out_c {
            for i in 0..icg {
                for kk in 0..k {
                    taps[(kk * out_c + o) * icg + i] = spec.weight[(o * icg + i) * k + kk];
                }
            }
        }
        out.par_chunks_mut(out_c)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each(|(u, row)| {
                spec.init_row(row);
                for kk in 0..k {
                    if let Some(xr) = input_row(u, kk) {
                        for (o, acc) in row.iter_mut().enumerate() {
                            let g = o / ocg;
                            let w = &taps[(kk * out_c + o) * icg..(kk * out_c + o + 1) * icg];
                            *acc += dot(w, &xr[g * icg..(g + 1) * icg]);
                        }
                    }
                }
            });
    }
    FrameTensor::new(out_frames, out_c, out)
}

/// Transposed (fractionally strided) convolution: the adjoint of
/// [`conv1d`] with the same hyper-parameters. Weights use the
/// [`ConvKind::Transposed`] layout.
///
/// Output frames: `(T - 1) * stride - pad_l - pad_r + extent`.
pub fn transposed_conv1d(x: &FrameTensor, spec: &ConvSpec) -> Result<FrameTensor> {
    spec.validate(ConvKind::Transposed)?;
    if x.channels() != spec.in_channels {
        return Err(TensorError::ChannelMismatch {
            expected: spec.in_channels,
            actual: x.channels(),
        });
    }
    let (pad_l, pad_r) = spec.padding;
    let extent = spec.extent();
    let frames = x.frames();
    let full = if frames == 0 {
        0
    } else {
        (frames - 1) * spec.stride + extent
    };
    if full <= pad_l + pad_r {
        return Err(TensorError::EmptyOutput {
            padded: full,
            extent: pad_l + pad_r + 1,
        });
    }
    let out_frames = full - pad_l - pad_r;
    let out_c = spec.out_channels;
    let k = spec.kernel_size;
    let icg = spec.in_channels / spec.groups;
    let ocg = out_c / spec.groups;

    // [kk][o][i_local]
    let mut taps = vec![0f32; k * out_c * icg];
    for g in 0..spec.groups {
        for il in 0..icg {
            let i = g * icg + il;
            for ol in 0..ocg {
                let o = g * ocg + ol;
                for kk in 0..k {
                    taps[(kk * out_c + o) * icg + il] = spec.weight[(i * ocg + ol) * k + kk];
                }
            }
        }
    }

    let mut out = vec![0f32; out_frames * out_c];
    out.par_chunks_mut(out_c)
        .with_min_len(MIN_ROWS_PER_TASK)
        .enumerate()
        .for_each(|(u, row)| {
            spec.init_row(row);
            let pos = u + pad_l;
            for kk in 0..k {
                let shift = kk * spec.dilation;
                if shift > pos || !(pos - shift).is_multiple_of(spec.stride) {
                    continue;
                }
                let t = (pos - shift) / spec.stride;
                if t >= frames {
                    continue;
                }
                let xr = x.row(t);
                for (o, acc) in row.iter_mut().enumerate() {
                    let g = o / ocg;
                    let w = &taps[(kk * out_c + o) * icg..(kk * out_c + o + 1) * icg];
                    *acc += dot(w, &xr[g * icg..(g + 1) * icg]);
                }
            }
        });
    FrameTensor::new(out_frames, out_c, out)
}
