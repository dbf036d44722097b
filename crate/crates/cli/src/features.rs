//! Training features: `frames u32 | channels u32 | frames * channels f32`,
//! little-endian, frame-major.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mscodec_core::FrameTensor;

pub fn read(path: &Path) -> Result<FrameTensor> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse(&bytes).with_context(|| format!("bad features file {}", path.display()))
}

pub fn parse(bytes: &[u8]) -> Result<FrameTensor> {
    if bytes.len() < 8 {
        bail!("missing the 8-byte header");
    }
    let frames = u32::from_le_bytes(bytes[0..4].try_into()?) as usize;
    let channels = u32::from_le_bytes(bytes[4..8].try_into()?) as usize;
    let expected = frames
        .checked_mul(channels)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(8));
    if expected != Some(bytes.len()) {
        bail!(
            "{frames} x {channels} header needs {} bytes, file has {}",
            expected.map_or("too many".into(), |n| n.to_string()),
            bytes.len()
        );
    }
    let data = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FrameTensor::new(frames, channels, data)?)
}

pub fn encode(x: &FrameTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * x.data().len());
    out.extend_from_slice(&(x.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(x.channels() as u32).to_le_bytes());
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let x = FrameTensor::from_fn(3, 2, |t, c| (t * 2 + c) as f32 - 1.5);
        assert_eq!(parse(&encode(&x)).unwrap(), x);
    }

    #[test]
    fn rejects_bad_lengths() {
        let x = FrameTensor::zeros(2, 2);
        let bytes = encode(&x);
        assert!(parse(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse(&bytes[..4]).is_err());
    }
}
