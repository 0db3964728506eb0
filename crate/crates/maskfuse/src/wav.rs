//! RIFF/WAVE input (PCM16 or float32, any channel count) and PCM16 output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use maskfuse_core::Waveform;

use crate::error::{Error, Result};

fn wav_error(path: &Path, e: impl ToString) -> Error {
    Error::Wav { path: path.to_path_buf(), reason: e.to_string() }
}

/// Reads a WAV file into samples in `[-1, 1]`, preserving channel order.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => Error::io(path, io),
        other => wav_error(path, other),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(wav_error(path, "zero channels"));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (fmt, bits) => return Err(wav_error(path, format!("{bits}-bit {fmt:?} samples"))),
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(wav_error(path, "sample count is not a multiple of the channel count"));
    }
    let frames = interleaved.len() / channels;
    let mut out = vec![Vec::with_capacity(frames); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, &v) in frame.iter().enumerate() {
            out[c].push(v);
        }
    }
    Ok(Waveform::new(out, spec.sample_rate)?)
}

/// Writes 16-bit PCM. Samples are scaled by 32768, rounded and clipped.
pub fn save_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if w.channels().iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Core(maskfuse_core::Error::NonFinite("waveform samples")));
    }
    let spec = WavSpec {
        channels: w.num_channels() as u16,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => wav_error(path, other),
    })?;
    for i in 0..w.len() {
        for c in 0..w.num_channels() {
            let q = (w.channel(c)[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(q).map_err(|e| wav_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}
