use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::scalar::Real;

const FULL_SCALE: f64 = 32768.0;

fn hound_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format("WAV file", path, other.to_string()),
    }
}

/// Reads a 16-bit little-endian PCM mono 16 kHz RIFF file.
///
/// Any other encoding is rejected with a message naming the offending header field.
pub fn read_wav<T: Real>(path: impl AsRef<Path>) -> Result<Waveform<T>> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| hound_err(path, e))?;
    let spec = reader.spec();
    let bad = |field: &str, got: String, want: &str| {
        Error::format("WAV file", path, format!("field `{field}` is {got}, expected {want}"))
    };
    if spec.sample_format != SampleFormat::Int {
        return Err(bad("audio_format", "IEEE float".into(), "PCM integer"));
    }
    if spec.bits_per_sample != 16 {
        return Err(bad("bits_per_sample", spec.bits_per_sample.to_string(), "16"));
    }
    if spec.channels != 1 {
        return Err(bad("num_channels", spec.channels.to_string(), "1"));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(bad("sample_rate", spec.sample_rate.to_string(), "16000"));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| T::lit(f64::from(v) / FULL_SCALE)))
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| hound_err(path, e))?;
    Waveform::new(samples, SAMPLE_RATE)
}

/// Writes `w` as 16-bit PCM, clipping to full scale.
pub fn write_wav<T: Real>(path: impl AsRef<Path>, w: &Waveform<T>) -> Result<()> {
    let path = path.as_ref();
    if w.rate() != SAMPLE_RATE {
        return Err(Error::invalid(format!(
            "only {SAMPLE_RATE} Hz audio can be written, got {} Hz",
            w.rate()
        )));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| hound_err(path, e))?;
    for &x in w.samples() {
        writer
            .write_sample(quantize(x.to_f64_lossy()))
            .map_err(|e| hound_err(path, e))?;
    }
    writer.finalize().map_err(|e| hound_err(path, e))
}

/// Nearest 16-bit code for a sample in nominal [-1, 1).
pub fn quantize(x: f64) -> i16 {
    (x * FULL_SCALE).round().clamp(-FULL_SCALE, FULL_SCALE - 1.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_quantizes_to_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let w = Waveform::new(vec![0.0, 0.5, -0.25, 0.999, -1.0, 1.5], SAMPLE_RATE).unwrap();
        write_wav(&path, &w).unwrap();
        let back: Waveform<f64> = read_wav(&path).unwrap();
        assert_eq!(back.len(), 6);
        for (a, b) in w.samples().iter().zip(back.samples()).take(5) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
        assert_eq!(back.samples()[5], 32767.0 / 32768.0);
    }

    #[test]
    fn rejects_other_encodings_naming_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let cases: [(WavSpec, &str); 3] = [
            (
                WavSpec { channels: 2, sample_rate: 16_000, bits_per_sample: 16, sample_format: SampleFormat::Int },
                "num_channels",
            ),
            (
                WavSpec { channels: 1, sample_rate: 8_000, bits_per_sample: 16, sample_format: SampleFormat::Int },
                "sample_rate",
            ),
            (
                WavSpec { channels: 1, sample_rate: 16_000, bits_per_sample: 32, sample_format: SampleFormat::Float },
                "audio_format",
            ),
        ];
        for (i, (spec, field)) in cases.into_iter().enumerate() {
            let path = dir.path().join(format!("{i}.wav"));
            let mut wr = WavWriter::create(&path, spec).unwrap();
            for _ in 0..4 {
                match spec.sample_format {
                    SampleFormat::Int => wr.write_sample(0i16).unwrap(),
                    SampleFormat::Float => wr.write_sample(0.0f32).unwrap(),
                }
            }
            wr.finalize().unwrap();
            let err = read_wav::<f64>(&path).unwrap_err().to_string();
            assert!(err.contains(field), "{err}");
        }
    }
}
