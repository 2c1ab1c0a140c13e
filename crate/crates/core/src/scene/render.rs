//! Rendering of two-talker-plus-noise scenes at the eight-microphone array.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::geometry::{ArrayGeometry, RoomSpec, Side};
use super::rir::{image_source_rirs, RirHorizon};
use super::shadow::HeadShadow;
use crate::error::{Error, Result};
use crate::signal::{peak_normalize, Waveform};

pub const TARGET_AZIMUTH: f64 = 60.0;
pub const MIXTURE_PEAK: f64 = 0.99;
pub const SPEECH_DISTANCE: (f64, f64) = (1.0, 2.0);
pub const NOISE_DISTANCE: (f64, f64) = (2.0, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Speech,
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// Degrees clockwise from the front; positive to the listener's right.
    pub azimuth: f64,
    pub distance: f64,
    /// Dry mono signal.
    pub signal: Waveform,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.signal.num_channels() != 1 {
            return Err(Error::InvalidInput("source signal must be mono".into()));
        }
        let (lo, hi) = match self.kind {
            SourceKind::Speech => {
                if (self.azimuth.abs() - TARGET_AZIMUTH).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "talker azimuth {} must be +/-{TARGET_AZIMUTH}",
                        self.azimuth
                    )));
                }
                SPEECH_DISTANCE
            }
            SourceKind::Noise => NOISE_DISTANCE,
        };
        if !(lo..=hi).contains(&self.distance) {
            return Err(Error::InvalidInput(format!(
                "{:?} distance {} outside [{lo}, {hi}] m",
                self.kind, self.distance
            )));
        }
        if !(-180.0..=180.0).contains(&self.azimuth) {
            return Err(Error::InvalidInput(format!("azimuth {} outside [-180, 180]", self.azimuth)));
        }
        Ok(())
    }
}

/// Geometry, material and level of one scene. `talker_left` sits at -60
/// degrees and is the left-ear target; `talker_right` at +60 degrees.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub room: RoomSpec,
    pub array: ArrayGeometry,
    pub shadow: HeadShadow,
    pub horizon: RirHorizon,
    pub talker_left: SourceSpec,
    pub talker_right: SourceSpec,
    /// `None` renders a noise-free scene.
    pub noise: Option<SourceSpec>,
    pub snr_db: f64,
    /// Output length in samples.
    pub num_samples: usize,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub seed: u64,
    pub t60: f64,
    pub snr_db: f64,
    pub distance_left: f64,
    pub distance_right: f64,
    pub distance_noise: Option<f64>,
    pub azimuth_noise: Option<f64>,
    pub speaker_left: String,
    pub speaker_right: String,
    pub utterance_left: usize,
    pub utterance_right: usize,
    pub noise_id: Option<String>,
    pub normalization_gain: f64,
    pub noise_gain: f64,
}

/// Eight-channel mixture with its two direct-path in-ear targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureExample {
    pub mixture: Waveform,
    pub target_left: Waveform,
    pub target_right: Waveform,
    pub metadata: SceneMetadata,
}

impl MixtureExample {
    pub fn target(&self, side: Side) -> &Waveform {
        match side {
            Side::Left => &self.target_left,
            Side::Right => &self.target_right,
        }
    }

    /// The uncompensated in-ear channel on `side`, the "unprocessed" estimate.
    pub fn in_ear(&self, array: &ArrayGeometry, side: Side) -> Waveform {
        self.mixture.select(array.in_ear_channel(side))
    }
}

/// Pre-normalization parts of a rendered scene.
#[derive(Debug, Clone)]
pub struct SceneRender {
    pub talker_left: Waveform,
    pub talker_right: Waveform,
    /// Unscaled noise image at the array.
    pub noise: Option<Waveform>,
    pub noise_gain: f64,
    pub mixture: Waveform,
    pub direct_left: Waveform,
    pub direct_right: Waveform,
}

/// Linear convolution of `x` with each filter, truncated to `x.len()` samples.
pub fn convolve_truncated(x: &[f64], filters: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let longest = filters.iter().map(Vec::len).max().unwrap_or(1);
    let n = (x.len() + longest - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut xs: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    xs.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut xs);
    filters
        .iter()
        .map(|h| {
            let mut hs: Vec<Complex64> = h.iter().map(|v| Complex64::new(*v, 0.0)).collect();
            hs.resize(n, Complex64::new(0.0, 0.0));
            fwd.process(&mut hs);
            for (a, b) in hs.iter_mut().zip(&xs) {
                *a *= b;
            }
            inv.process(&mut hs);
            hs[..x.len()].iter().map(|v| v.re / n as f64).collect()
        })
        .collect()
}

/// Renders one source at every microphone: room response, then the
/// head-shadow filter of the microphone's side.
pub fn render_source(
    room: &RoomSpec,
    array: &ArrayGeometry,
    shadow: &HeadShadow,
    horizon: RirHorizon,
    source: &SourceSpec,
    num_samples: usize,
) -> Result<Waveform> {
    let fs = source.signal.sample_rate();
    let pos = array.source_position(source.azimuth, source.distance);
    let rirs = image_source_rirs(room, &pos, &array.mic_positions(), horizon, fs)?;
    let dry = &source.signal.channel(0)[..num_samples];
    let mut channels = convolve_truncated(dry, &rirs);
    for (c, ch) in channels.iter_mut().enumerate() {
        shadow.filter(source.azimuth, array.side_of(c), fs).apply(ch);
    }
    Waveform::new(channels, fs)
}

/// Gain `g` such that `10 log10(P_speech / (g^2 P_noise)) = snr_db`, with
/// powers averaged over all channels.
pub fn scale_noise_to_snr(speech_mix: &Waveform, noise: &Waveform, snr_db: f64) -> Result<f64> {
    let ps = speech_mix.mean_power();
    let pn = noise.mean_power();
    if ps == 0.0 || pn == 0.0 {
        return Err(Error::InvalidInput("SNR scaling needs nonzero speech and noise power".into()));
    }
    Ok((ps / pn * 10f64.powf(-snr_db / 10.0)).sqrt())
}

pub fn measured_snr_db(speech_mix: &Waveform, scaled_noise: &Waveform) -> f64 {
    10.0 * (speech_mix.mean_power() / scaled_noise.mean_power()).log10()
}

fn add_into(acc: &mut [Vec<f64>], w: &Waveform, gain: f64) {
    for (a, c) in acc.iter_mut().zip(w.channels()) {
        for (x, y) in a.iter_mut().zip(c) {
            *x += gain * y;
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.array.validate()?;
        self.talker_left.validate()?;
        self.talker_right.validate()?;
        if self.talker_left.azimuth > 0.0 || self.talker_right.azimuth < 0.0 {
            return Err(Error::InvalidInput(
                "left talker must be at -60 degrees and right talker at +60 degrees".into(),
            ));
        }
        let sources = [Some(&self.talker_left), Some(&self.talker_right), self.noise.as_ref()];
        for s in sources.into_iter().flatten() {
            s.validate()?;
            if s.signal.sample_rate() != self.sample_rate {
                return Err(Error::SampleRate {
                    expected: self.sample_rate,
                    actual: s.signal.sample_rate(),
                });
            }
            if s.signal.len() < self.num_samples {
                return Err(Error::TooShort {
                    required: self.num_samples,
                    actual: s.signal.len(),
                });
            }
            if s.signal.channel(0)[..self.num_samples].iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidInput(format!("{:?} source signal is silent", s.kind)));
            }
        }
        Ok(())
    }

    pub fn render_parts(&self) -> Result<SceneRender> {
        self.validate()?;
        let n = self.num_samples;
        let render = |s: &SourceSpec, room: &RoomSpec| {
            render_source(room, &self.array, &self.shadow, self.horizon, s, n)
        };
        let talker_left = render(&self.talker_left, &self.room)?;
        let talker_right = render(&self.talker_right, &self.room)?;
        let anechoic = self.room.with_t60(0.0);
        let direct_left = render(&self.talker_left, &anechoic)?;
        let direct_right = render(&self.talker_right, &anechoic)?;

        let mut acc = vec![vec![0.0; n]; talker_left.num_channels()];
        add_into(&mut acc, &talker_left, 1.0);
        add_into(&mut acc, &talker_right, 1.0);
        let speech = Waveform::new(acc.clone(), self.sample_rate)?;
        let (noise, noise_gain) = match &self.noise {
            Some(spec) => {
                let img = render(spec, &self.room)?;
                let g = scale_noise_to_snr(&speech, &img, self.snr_db)?;
                add_into(&mut acc, &img, g);
                (Some(img), g)
            }
            None => (None, 0.0),
        };
        Ok(SceneRender {
            talker_left,
            talker_right,
            noise,
            noise_gain,
            mixture: Waveform::new(acc, self.sample_rate)?,
            direct_left,
            direct_right,
        })
    }

    /// Full render: peak-normalized mixture plus direct-path in-ear targets
    /// scaled by the same normalization gain.
    pub fn render(&self, mut metadata: SceneMetadata) -> Result<MixtureExample> {
        let parts = self.render_parts()?;
        let (mixture, gain) = peak_normalize(&parts.mixture, MIXTURE_PEAK)?;
        let left = parts.direct_left.select(self.array.in_ear_channel(Side::Left)).scaled(gain);
        let right = parts.direct_right.select(self.array.in_ear_channel(Side::Right)).scaled(gain);
        metadata.normalization_gain = gain;
        metadata.noise_gain = parts.noise_gain;
        metadata.t60 = self.room.t60;
        metadata.snr_db = self.snr_db;
        Ok(MixtureExample {
            mixture,
            target_left: left,
            target_right: right,
            metadata,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::corpus::{noise_signal, speech_like, NoiseKind, Voice};

    fn spec(t60: f64, noise: bool, shadow: HeadShadow) -> SceneSpec {
        let fs = 16000;
        let n = 4000;
        let talker = |az: f64, d: f64, seed: u64| SourceSpec {
            kind: SourceKind::Speech,
            azimuth: az,
            distance: d,
            signal: Waveform::mono(speech_like(&Voice::for_speaker(1, seed as usize), seed, n, fs), fs).unwrap(),
        };
        SceneSpec {
            room: RoomSpec::default().with_t60(t60),
            array: ArrayGeometry::default(),
            shadow,
            horizon: RirHorizon::T60,
            talker_left: talker(-60.0, 1.3, 1),
            talker_right: talker(60.0, 1.7, 2),
            noise: noise.then(|| SourceSpec {
                kind: SourceKind::Noise,
                azimuth: 150.0,
                distance: 3.0,
                signal: Waveform::mono(noise_signal(NoiseKind::Pink, 5, n, fs), fs).unwrap(),
            }),
            snr_db: 5.0,
            num_samples: n,
            sample_rate: fs,
        }
    }

    fn meta() -> SceneMetadata {
        SceneMetadata {
            seed: 0,
            t60: 0.0,
            snr_db: 0.0,
            distance_left: 0.0,
            distance_right: 0.0,
            distance_noise: None,
            azimuth_noise: None,
            speaker_left: String::new(),
            speaker_right: String::new(),
            utterance_left: 0,
            utterance_right: 0,
            noise_id: None,
            normalization_gain: 1.0,
            noise_gain: 0.0,
        }
    }

    #[test]
    fn snr_gain_cases() {
        let a = Waveform::mono(vec![1.0, -1.0, 1.0, -1.0], 16000).unwrap();
        assert!((scale_noise_to_snr(&a, &a, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((scale_noise_to_snr(&a, &a, 20.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((scale_noise_to_snr(&a, &a, -10.0).unwrap() - 3.16227766).abs() < 1e-8);
        let z = Waveform::mono(vec![0.0; 4], 16000).unwrap();
        assert!(scale_noise_to_snr(&a, &z, 0.0).is_err());
    }

    #[test]
    fn requested_snr_is_realized() {
        let p = spec(0.2, true, HeadShadow::default()).render_parts().unwrap();
        let speech = Waveform::new(
            p.talker_left
                .channels()
                .iter()
                .zip(p.talker_right.channels())
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
            16000,
        )
        .unwrap();
        let noise = p.noise.unwrap().scaled(p.noise_gain);
        assert!((measured_snr_db(&speech, &noise) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn anechoic_in_ear_channel_is_sum_of_direct_renders() {
        let s = spec(0.0, false, HeadShadow::default());
        let parts = s.render_parts().unwrap();
        let ex = s.render(meta()).unwrap();
        let g = ex.metadata.normalization_gain;
        let ear = s.array.in_ear_channel(Side::Left);
        let mix = ex.mixture.channel(ear);
        let expected: Vec<f64> = ex
            .target_left
            .channel(0)
            .iter()
            .zip(parts.direct_right.channel(ear))
            .map(|(a, b)| a + g * b)
            .collect();
        let err: f64 = mix.iter().zip(&expected).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = expected.iter().map(|v| v * v).sum();
        assert!((err / norm).sqrt() < 1e-12);
        assert!((ex.mixture.peak() - MIXTURE_PEAK).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sources() {
        let mut s = spec(0.0, false, HeadShadow::default());
        s.talker_left.signal = Waveform::mono(vec![0.0; 4000], 16000).unwrap();
        assert!(s.render_parts().is_err());
        let mut s = spec(0.0, false, HeadShadow::default());
        s.talker_right.signal = Waveform::mono(vec![0.1; 4000], 8000).unwrap();
        assert!(matches!(s.render_parts(), Err(Error::SampleRate { .. })));
        let mut s = spec(0.0, false, HeadShadow::default());
        s.talker_right.azimuth = 30.0;
        assert!(s.render_parts().is_err());
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let x = [1.0, 2.0, -1.0, 0.5, 0.0, 3.0];
        let h = vec![0.5, -0.25, 0.125];
        let y = convolve_truncated(&x, std::slice::from_ref(&h)).remove(0);
        for n in 0..x.len() {
            let direct: f64 = (0..h.len()).filter(|k| *k <= n).map(|k| h[k] * x[n - k]).sum();
            assert!((y[n] - direct).abs() < 1e-12);
        }
    }
}
