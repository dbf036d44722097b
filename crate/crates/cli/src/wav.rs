use std::path::Path;

use anyhow::{bail, Context, Result};
use hound::{SampleFormat, WavSpec, WavWriter};
use mscodec_core::AudioBuffer;

/// Reads a mono WAV holding 16-bit integer or 32-bit float samples.
pub fn read(path: &Path) -> Result<AudioBuffer> {
    let mut reader =
        hound::WavReader::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        bail!(
            "{}: {} channels; only mono input is accepted",
            path.display(),
            spec.channels
        );
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<Result<Vec<_>, _>>(),
        (SampleFormat::Float, 32) => reader.samples::<f32>().collect::<Result<Vec<_>, _>>(),
        (format, bits) => bail!(
            "{}: unsupported sample format {bits}-bit {format:?}; use 16-bit PCM or 32-bit float",
            path.display()
        ),
    }
    .with_context(|| format!("corrupt WAV data in {}", path.display()))?;
    Ok(AudioBuffer::new(spec.sample_rate, samples))
}

/// Writes mono 32-bit float samples.
pub fn write(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec)
        .with_context(|| format!("cannot create {}", path.display()))?;
    for &s in &audio.samples {
        writer.write_sample(s)?;
    }
    writer.finalize()?;
    Ok(())
}
