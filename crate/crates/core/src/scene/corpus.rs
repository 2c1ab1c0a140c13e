//! Speech and noise material: user WAV folders or built-in generators.
//!
//! The built-in talker is a harmonic source shaped by three formant
//! resonances, organised into syllables with a raised-cosine envelope and
//! occasional fricative bursts. Each synthetic speaker has its own pitch,
//! vocal-tract scale and breathiness, so speaker identity survives across
//! utterances.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::Waveform;
use crate::wav::read_wav_at;

const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [440.0, 1020.0, 2240.0],
];
const FORMANT_BANDWIDTHS: [f64; 3] = [90.0, 120.0, 180.0];
const FORMANT_GAINS: [f64; 3] = [1.0, 0.5, 0.25];
const SPEECH_RMS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Voice {
    pub f0_hz: f64,
    pub formant_scale: f64,
    pub breathiness: f64,
}

impl Voice {
    pub fn for_speaker(seed: u64, index: usize) -> Self {
        let mut r = rng::stream(seed, &[rng::tag("voice"), index as u64]);
        Self {
            f0_hz: r.gen_range(85.0..260.0),
            formant_scale: r.gen_range(0.85..1.2),
            breathiness: r.gen_range(0.02..0.12),
        }
    }
}

/// Renders `len` samples of speech-like signal for `voice`.
pub fn speech_like(voice: &Voice, utterance_seed: u64, len: usize, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut r = rng::stream(utterance_seed, &[rng::tag("utterance")]);
    let nyquist_guard = 0.45 * fs;
    let mut out = vec![0.0; len];
    let mut pos = 0usize;
    let contour_phase: f64 = r.gen_range(0.0..2.0 * PI);
    let mut phases = vec![0.0_f64; 128];
    while pos < len {
        if r.gen_bool(0.12) {
            pos += (r.gen_range(0.04..0.18) * fs) as usize;
            continue;
        }
        let dur = ((r.gen_range(0.12..0.3) * fs) as usize).min(len - pos);
        let vowel = VOWELS[r.gen_range(0..VOWELS.len())];
        let formants: Vec<f64> = vowel.iter().map(|f| f * voice.formant_scale).collect();
        let f0_syll = voice.f0_hz * r.gen_range(0.9..1.12);
        let loud = r.gen_range(0.6..1.0);
        let harmonics = ((nyquist_guard / f0_syll) as usize).min(phases.len());
        let amps: Vec<f64> = (1..=harmonics)
            .map(|k| {
                let f = k as f64 * f0_syll;
                let env: f64 = formants
                    .iter()
                    .zip(FORMANT_BANDWIDTHS.iter().zip(FORMANT_GAINS))
                    .map(|(fc, (bw, g))| g / (1.0 + ((f - fc) / bw).powi(2)))
                    .sum();
                env + 0.01
            })
            .collect();
        let fricative = r.gen_bool(0.3).then(|| (r.gen_range(0.03..0.07) * fs) as usize);
        let mut prev_noise = 0.0;
        for i in 0..dur {
            let t = (pos + i) as f64 / fs;
            let env = (PI * i as f64 / dur as f64).sin().powi(2) * loud;
            let f0 = f0_syll * (1.0 + 0.06 * (2.0 * PI * 0.8 * t + contour_phase).sin());
            let mut v = 0.0;
            for (k, a) in amps.iter().enumerate() {
                let ph = &mut phases[k];
                *ph += 2.0 * PI * (k + 1) as f64 * f0 / fs;
                if *ph > 2.0 * PI {
                    *ph -= 2.0 * PI * (*ph / (2.0 * PI)).floor();
                }
                v += a * ph.sin();
            }
            let white: f64 = r.gen_range(-1.0..1.0);
            let hiss = white - prev_noise;
            prev_noise = white;
            let mut sample = env * (v + voice.breathiness * 5.0 * hiss);
            if let Some(fl) = fricative {
                if i < fl {
                    sample += 0.6 * loud * hiss * (PI * i as f64 / fl as f64).sin();
                }
            }
            out[pos + i] = sample;
        }
        pos += dur;
    }
    normalize_rms(&mut out, SPEECH_RMS);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    /// Pink noise with slow random amplitude fluctuation.
    Fluctuating,
}

pub fn noise_signal(kind: NoiseKind, seed: u64, len: usize, sample_rate: u32) -> Vec<f64> {
    let mut r = rng::stream(seed, &[rng::tag("noise")]);
    let mut out: Vec<f64> = (0..len).map(|_| r.gen_range(-1.0..1.0)).collect();
    match kind {
        NoiseKind::White => {}
        NoiseKind::Pink | NoiseKind::Fluctuating => {
            // Kellet's economy pinking filter
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            for v in out.iter_mut() {
                let w = *v;
                b0 = 0.99765 * b0 + w * 0.0990460;
                b1 = 0.96300 * b1 + w * 0.2965164;
                b2 = 0.57000 * b2 + w * 1.0526913;
                *v = b0 + b1 + b2 + w * 0.1848;
            }
            if kind == NoiseKind::Fluctuating {
                let rate = r.gen_range(0.5..2.0);
                let ph: f64 = r.gen_range(0.0..2.0 * PI);
                let fs = sample_rate as f64;
                for (n, v) in out.iter_mut().enumerate() {
                    *v *= 0.6 + 0.4 * (2.0 * PI * rate * n as f64 / fs + ph).sin();
                }
            }
        }
        NoiseKind::Brown => {
            let mut acc = 0.0;
            for v in out.iter_mut() {
                acc = 0.995 * acc + 0.1 * *v;
                *v = acc;
            }
        }
    }
    normalize_rms(&mut out, SPEECH_RMS);
    out
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        let g = target / rms;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SignalSource {
    Synthetic { voice: Voice, seed: u64 },
    Noise { kind: NoiseKind, seed: u64 },
    File { path: PathBuf },
}

impl SignalSource {
    /// Loads `len` samples; files longer than that are cut at `offset_frac`
    /// of their spare length.
    pub fn load(&self, len: usize, sample_rate: u32, offset_frac: f64) -> Result<Waveform> {
        let samples = match self {
            SignalSource::Synthetic { voice, seed } => speech_like(voice, *seed, len, sample_rate),
            SignalSource::Noise { kind, seed } => noise_signal(*kind, *seed, len, sample_rate),
            SignalSource::File { path } => {
                let w = read_wav_at(path, sample_rate)?;
                if w.num_channels() != 1 {
                    return Err(Error::InvalidInput(format!("{}: expected mono audio", path.display())));
                }
                if w.len() < len {
                    return Err(Error::TooShort {
                        required: len,
                        actual: w.len(),
                    });
                }
                let spare = w.len() - len;
                let start = ((spare as f64) * offset_frac.clamp(0.0, 1.0)) as usize;
                w.channel(0)[start..start + len].to_vec()
            }
        };
        Waveform::mono(samples, sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub utterances: Vec<SignalSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseClip {
    pub id: String,
    pub source: SignalSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub speakers: Vec<Speaker>,
    pub noises: Vec<NoiseClip>,
}

impl Corpus {
    /// Self-contained corpus of generated talkers and noises.
    pub fn synthetic(num_speakers: usize, utterances_per_speaker: usize, num_noises: usize, seed: u64) -> Self {
        let speakers = (0..num_speakers)
            .map(|i| {
                let voice = Voice::for_speaker(seed, i);
                Speaker {
                    id: format!("spk{i:03}"),
                    utterances: (0..utterances_per_speaker)
                        .map(|u| SignalSource::Synthetic {
                            voice,
                            seed: rng::derive_seed(seed, &[rng::tag("utt"), i as u64, u as u64]),
                        })
                        .collect(),
                }
            })
            .collect();
        let kinds = [NoiseKind::Pink, NoiseKind::Fluctuating, NoiseKind::White, NoiseKind::Brown];
        let noises = (0..num_noises)
            .map(|i| NoiseClip {
                id: format!("noise{i:03}"),
                source: SignalSource::Noise {
                    kind: kinds[i % kinds.len()],
                    seed: rng::derive_seed(seed, &[rng::tag("noise"), i as u64]),
                },
            })
            .collect();
        Self { speakers, noises }
    }

    /// Speech folder with one sub-directory of mono WAVs per speaker, and a
    /// flat folder of noise WAVs.
    pub fn from_dirs(speech_dir: &Path, noise_dir: &Path) -> Result<Self> {
        let mut speakers = Vec::new();
        for dir in sorted_entries(speech_dir)? {
            if !dir.is_dir() {
                continue;
            }
            let utterances: Vec<SignalSource> = sorted_entries(&dir)?
                .into_iter()
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
                .map(|path| SignalSource::File { path })
                .collect();
            if !utterances.is_empty() {
                let id = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
                speakers.push(Speaker { id, utterances });
            }
        }
        let noises = sorted_entries(noise_dir)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
            .map(|path| NoiseClip {
                id: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                source: SignalSource::File { path },
            })
            .collect();
        Ok(Self { speakers, noises })
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    v.sort();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speech_is_deterministic_and_nonsilent() {
        let v = Voice::for_speaker(7, 3);
        let a = speech_like(&v, 11, 16000, 16000);
        let b = speech_like(&v, 11, 16000, 16000);
        assert_eq!(a, b);
        let rms = (a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64).sqrt();
        assert!((rms - SPEECH_RMS).abs() < 1e-9);
        assert_ne!(a, speech_like(&v, 12, 16000, 16000));
    }

    #[test]
    fn noises_have_target_level() {
        for kind in [NoiseKind::White, NoiseKind::Pink, NoiseKind::Brown, NoiseKind::Fluctuating] {
            let n = noise_signal(kind, 3, 8000, 16000);
            assert!(n.iter().all(|v| v.is_finite()));
            let rms = (n.iter().map(|x| x * x).sum::<f64>() / n.len() as f64).sqrt();
            assert!((rms - SPEECH_RMS).abs() < 1e-9);
        }
    }

    #[test]
    fn synthetic_corpus_shape() {
        let c = Corpus::synthetic(5, 2, 3, 1);
        assert_eq!(c.speakers.len(), 5);
        assert_eq!(c.speakers[4].utterances.len(), 2);
        assert_eq!(c.noises.len(), 3);
        let w = c.speakers[0].utterances[0].load(1600, 16000, 0.0).unwrap();
        assert_eq!(w.len(), 1600);
    }

    #[test]
    fn file_corpus_reads_folders() {
        use crate::wav::{write_wav, WavFormat};
        let dir = tempfile::tempdir().unwrap();
        let speech = dir.path().join("speech");
        let noise = dir.path().join("noise");
        for s in ["a", "b"] {
            std::fs::create_dir_all(speech.join(s)).unwrap();
            let w = Waveform::mono(speech_like(&Voice::for_speaker(0, 0), 1, 3200, 16000), 16000).unwrap();
            write_wav(speech.join(s).join("u1.wav"), &w, WavFormat::Float32).unwrap();
        }
        std::fs::create_dir_all(&noise).unwrap();
        let w = Waveform::mono(noise_signal(NoiseKind::Pink, 1, 3200, 16000), 16000).unwrap();
        write_wav(noise.join("n.wav"), &w, WavFormat::Pcm16).unwrap();
        let c = Corpus::from_dirs(&speech, &noise).unwrap();
        assert_eq!(c.speakers.len(), 2);
        assert_eq!(c.noises[0].id, "n");
        assert_eq!(c.speakers[1].utterances[0].load(1600, 16000, 0.5).unwrap().len(), 1600);
        assert!(c.speakers[1].utterances[0].load(4000, 16000, 0.5).is_err());
    }
}
