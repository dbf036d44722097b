//! Weight file format, all integers little-endian:
//!
//! ```text
//! "MSAC" | version u32 | config_len u32 | config JSON | tensor_count u32
//! per tensor: name_len u16 | name | rank u8 | dims u32 x rank | f32 data
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::codec::Codec;
use super::config::CodecConfig;
use super::{ModelError, Result};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"MSAC";
pub const WEIGHTS_VERSION: u32 = 1;

/// Serialises every tensor of `codec` together with its config.
pub fn write_weights(codec: &Codec) -> Vec<u8> {
    let json = codec.config().to_canonical_json();
    let tensors = codec.tensors();
    let mut out = Vec::with_capacity(64 + json.len() + 4 * codec.count_parameters());
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::Truncated(what.to_string()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

/// Parses a weight file and rebuilds the codec it describes.
pub fn read_weights(bytes: &[u8]) -> Result<Codec> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "header").map_err(|_| ModelError::BadMagic)? != WEIGHTS_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.u32("header")?;
    if version != WEIGHTS_VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let len = r.u32("config")? as usize;
    let json = std::str::from_utf8(r.take(len, "config")?)
        .map_err(|e| ModelError::ConfigParse(e.to_string()))?;
    let config: CodecConfig =
        serde_json::from_str(json).map_err(|e| ModelError::ConfigParse(e.to_string()))?;
    config.validate()?;

    let count = r.u32("tensor table")? as usize;
    let mut raw: HashMap<String, RawTensor> = HashMap::new();
    for i in 0..count {
        let what = format!("tensor #{i}");
        let name_len = r.u16(&what)? as usize;
        let name = String::from_utf8_lossy(r.take(name_len, &what)?).into_owned();
        let rank = r.u8(&name)? as usize;
        let shape = (0..rank)
            .map(|_| r.u32(&name).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| ModelError::Truncated(name.clone()))?;
        let data = r
            .take(n, &name)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if raw
            .insert(name.clone(), RawTensor { shape, data })
            .is_some()
        {
            return Err(ModelError::UnexpectedTensor(name));
        }
    }
    if r.pos != bytes.len() {
        return Err(ModelError::TrailingBytes(bytes.len() - r.pos));
    }

    let mut codec = Codec::zeroed(config)?;
    for slot in codec.slots() {
        let t = raw
            .remove(&slot.name)
            .ok_or_else(|| ModelError::MissingTensor(slot.name.clone()))?;
        if t.shape != slot.shape {
            return Err(ModelError::ShapeMismatch {
                name: slot.name,
                expected: slot.shape,
                actual: t.shape,
            });
        }
        slot.data.copy_from_slice(&t.data);
    }
    if let Some(name) = raw.into_keys().min() {
        return Err(ModelError::UnexpectedTensor(name));
    }
    codec.sync_shared_projections();
    Ok(codec)
}

pub(crate) fn save_weights(codec: &Codec, path: &Path) -> Result<()> {
    fs::write(path, write_weights(codec))?;
    Ok(())
}

pub(crate) fn load_weights(path: &Path) -> Result<Codec> {
    read_weights(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn codec() -> Codec {
        let cfg = CodecConfig {
            base_channels: 2,
            codebook_size: 8,
            codeword_dim: 2,
            ..Preset::Speech24k.config()
        };
        Codec::random(cfg, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = codec();
        let bytes = write_weights(&c);
        let back = read_weights(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(write_weights(&back), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = write_weights(&codec());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_weights(&bad), Err(ModelError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            read_weights(&bad),
            Err(ModelError::UnsupportedVersion(2))
        ));
        for cut in [bytes.len() - 1, bytes.len() / 2] {
            assert!(matches!(
                read_weights(&bytes[..cut]),
                Err(ModelError::Truncated(_))
            ));
        }
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(
            read_weights(&bad),
            Err(ModelError::TrailingBytes(1))
        ));
    }

    #[test]
    fn truncation_names_the_tensor() {
        let bytes = write_weights(&codec());
        match read_weights(&bytes[..bytes.len() - 3]) {
            Err(ModelError::Truncated(name)) => assert_eq!(name, "decoder.out.bias"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
