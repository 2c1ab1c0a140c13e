//! WAV file reading and writing (PCM16 and 32-bit float).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Int, bits) if bits <= 32 => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err(path))?
        }
        (format, bits) => {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported sample format {format:?}/{bits} bit",
                path.display()
            )))
        }
    };
    let len = interleaved.len() / channels;
    let mut out = vec![Vec::with_capacity(len); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, v) in frame.iter().enumerate() {
            out[c].push(*v);
        }
    }
    Waveform::new(out, spec.sample_rate)
}

/// Reads a WAV file and checks it against the expected sample rate.
pub fn read_wav_at(path: impl AsRef<Path>, sample_rate: u32) -> Result<Waveform> {
    let w = read_wav(path)?;
    if w.sample_rate() != sample_rate {
        return Err(Error::SampleRate {
            expected: sample_rate,
            actual: w.sample_rate(),
        });
    }
    Ok(w)
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: w.num_channels() as u16,
        sample_rate: w.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for n in 0..w.len() {
        for c in w.channels() {
            match format {
                WavFormat::Float32 => writer.write_sample(c[n] as f32),
                WavFormat::Pcm16 => {
                    let v = (c[n] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v)
                }
            }
            .map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_multichannel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = Waveform::new(vec![vec![0.25, -0.5, 0.125], vec![0.0, 1.0, -1.0]], 16000).unwrap();
        write_wav(&p, &w, WavFormat::Float32).unwrap();
        let r = read_wav_at(&p, 16000).unwrap();
        assert_eq!(r, w);
        assert!(matches!(read_wav_at(&p, 8000), Err(Error::SampleRate { .. })));
    }

    #[test]
    fn pcm16_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let w = Waveform::mono(vec![0.5, -0.25, 0.3], 16000).unwrap();
        write_wav(&p, &w, WavFormat::Pcm16).unwrap();
        let r = read_wav(&p).unwrap();
        for (a, b) in r.channel(0).iter().zip(w.channel(0)) {
            assert!((a - b).abs() <= 0.5 / 32768.0);
        }
    }
}
