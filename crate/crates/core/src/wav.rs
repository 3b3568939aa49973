//! PCM WAV input and 32-bit float output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::invalid;
use crate::periphery::SUPPORTED_SAMPLE_RATES_HZ;
use crate::Result;

/// Mono signal in full-scale units (`[-1, 1]` for integer PCM).
#[derive(Clone, Debug, PartialEq)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

/// Reads 16-bit integer or 32-bit float PCM. Multi-channel files yield their
/// first channel.
pub fn read_wav(path: &Path) -> Result<Audio> {
    decode_wav(&std::fs::read(path)?, &path.display().to_string())
}

/// Decodes an in-memory WAV file; `name` labels error messages.
pub fn decode_wav(bytes: &[u8], name: &str) -> Result<Audio> {
    let mut reader = WavReader::new(std::io::Cursor::new(bytes))?;
    let spec = reader.spec();
    let fs = spec.sample_rate as f64;
    if fs < SUPPORTED_SAMPLE_RATES_HZ.0 || fs > SUPPORTED_SAMPLE_RATES_HZ.1 {
        return invalid(format!("{}: unsupported sample rate {fs} Hz", name));
    }
    let stride = spec.channels.max(1) as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .step_by(stride)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(stride)
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return invalid(format!(
                "{}: unsupported sample format {fmt:?} {bits}-bit",
                name
            ))
        }
    };
    if samples.is_empty() {
        return invalid(format!("{}: no audio samples", name));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return invalid(format!("{}: non-finite samples", name));
    }
    Ok(Audio {
        samples,
        sample_rate_hz: fs,
    })
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav_f32(path: &Path, samples: &[f64], sample_rate_hz: f64) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz.round() as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

/// Writes a mono 16-bit integer WAV, clipping to full scale.
pub fn write_wav_i16(path: &Path, samples: &[f64], sample_rate_hz: f64) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz.round() as u32,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    w.finalize()?;
    Ok(())
}
