//! Waveforms, STFT analysis/synthesis and temporal context framing.
//!
//! Spectra are one-sided (`fft_size / 2 + 1` bins). The synthesis side
//! divides the weighted overlap-add by the summed squared window, which
//! gives perfect reconstruction wherever that sum is nonzero.

use std::f64::consts::PI;
use std::sync::Arc;

pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Multichannel real signal, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidInput("waveform needs at least one channel".into()));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::InvalidInput("waveform length must be positive".into()));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidInput("all channels must have equal length".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("waveform samples".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Single-channel waveform holding a copy of channel `c`.
    pub fn select(&self, c: usize) -> Waveform {
        Waveform {
            channels: vec![self.channels[c].clone()],
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|x| x * gain).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Mean power over all channels and samples.
    pub fn mean_power(&self) -> f64 {
        let n = (self.len() * self.num_channels()) as f64;
        self.channels.iter().flatten().map(|x| x * x).sum::<f64>() / n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Periodic (DFT-even) Hann.
    Hann,
    Hamming,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n;
                match self {
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 32 ms Hann at 16 kHz with 50% overlap.
    fn default() -> Self {
        Self::hann(512)
    }
}

impl StftConfig {
    /// Hann window of `window_length` samples, half-window hop, no zero padding.
    pub fn hann(window_length: usize) -> Self {
        Self {
            window_length,
            hop: window_length / 2,
            fft_size: window_length,
            window: WindowKind::Hann,
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 || self.hop == 0 {
            return Err(Error::Config(format!(
                "window_length {} and hop {} must be positive",
                self.window_length, self.hop
            )));
        }
        if self.fft_size != self.window_length {
            return Err(Error::Config(format!(
                "fft_size {} must equal window_length {}",
                self.fft_size, self.window_length
            )));
        }
        if self.hop > self.window_length {
            return Err(Error::Config("hop exceeds window length".into()));
        }
        Ok(())
    }

    /// Constant-overlap-add check: the hop-shifted window sum is flat.
    pub fn is_cola(&self) -> bool {
        if self.validate().is_err() {
            return false;
        }
        let w = self.window.coefficients(self.window_length);
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let reference = sums[0];
        reference > 0.0 && sums.iter().all(|s| (s - reference).abs() <= 1e-9 * reference)
    }

    /// Number of frames produced for a signal of `len` samples; a trailing
    /// partial frame is zero padded.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_length {
            return 0;
        }
        let span = len - self.window_length;
        span / self.hop + 1 + usize::from(!span.is_multiple_of(self.hop))
    }
}

/// Complex spectrogram laid out as `[channel][frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    values: Vec<Complex64>,
    channels: usize,
    frames: usize,
    bins: usize,
    config: StftConfig,
    sample_rate: u32,
    signal_length: usize,
}

impl ComplexSpectrogram {
    pub fn from_values(
        values: Vec<Complex64>,
        channels: usize,
        frames: usize,
        config: StftConfig,
        sample_rate: u32,
        signal_length: usize,
    ) -> Result<Self> {
        let bins = config.bins();
        if values.len() != channels * frames * bins {
            return Err(Error::shape(
                "spectrogram values",
                channels * frames * bins,
                values.len(),
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram values".into()));
        }
        Ok(Self {
            values,
            channels,
            frames,
            bins,
            config,
            sample_rate,
            signal_length,
        })
    }

    pub fn zeros(channels: usize, frames: usize, config: StftConfig, sample_rate: u32, signal_length: usize) -> Self {
        let bins = config.bins();
        Self {
            values: vec![Complex64::new(0.0, 0.0); channels * frames * bins],
            channels,
            frames,
            bins,
            config,
            sample_rate,
            signal_length,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn bins(&self) -> usize {
        self.bins
    }
    pub fn config(&self) -> &StftConfig {
        &self.config
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    /// Length of the analysed signal; synthesis restores exactly this many samples.
    pub fn signal_length(&self) -> usize {
        self.signal_length
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    fn offset(&self, ch: usize, t: usize) -> usize {
        (ch * self.frames + t) * self.bins
    }

    pub fn frame(&self, ch: usize, t: usize) -> &[Complex64] {
        let o = self.offset(ch, t);
        &self.values[o..o + self.bins]
    }

    pub fn frame_mut(&mut self, ch: usize, t: usize) -> &mut [Complex64] {
        let o = self.offset(ch, t);
        &mut self.values[o..o + self.bins]
    }

    pub fn get(&self, ch: usize, t: usize, f: usize) -> Complex64 {
        self.values[self.offset(ch, t) + f]
    }

    /// Channel subset as a new spectrogram.
    pub fn select_channels(&self, channels: &[usize]) -> ComplexSpectrogram {
        let mut values = Vec::with_capacity(channels.len() * self.frames * self.bins);
        for &c in channels {
            let o = self.offset(c, 0);
            values.extend_from_slice(&self.values[o..o + self.frames * self.bins]);
        }
        ComplexSpectrogram {
            values,
            channels: channels.len(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> ComplexSpectrogram {
        ComplexSpectrogram {
            values: Vec::new(),
            channels: self.channels,
            frames: self.frames,
            bins: self.bins,
            config: self.config,
            sample_rate: self.sample_rate,
            signal_length: self.signal_length,
        }
    }
}

/// Frames `t - tau ..= t + tau` of every channel, zero outside the signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub tau: usize,
    pub center: usize,
    /// `[channel][2 tau + 1][bin]`
    pub values: Vec<Complex64>,
    pub channels: usize,
    pub bins: usize,
}

impl ContextWindow {
    pub fn width(&self) -> usize {
        2 * self.tau + 1
    }

    pub fn slice(&self, ch: usize, k: usize) -> &[Complex64] {
        let o = (ch * self.width() + k) * self.bins;
        &self.values[o..o + self.bins]
    }
}

/// Reusable analysis/synthesis engine for one configuration.
#[derive(Clone)]
pub struct StftProcessor {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftProcessor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftProcessor").field("config", &self.config).finish()
    }
}

impl StftProcessor {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: config.window.coefficients(config.window_length),
            forward: planner.plan_fft_forward(config.fft_size),
            inverse: planner.plan_fft_inverse(config.fft_size),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn stft(&self, w: &Waveform) -> Result<ComplexSpectrogram> {
        let cfg = &self.config;
        let len = w.len();
        if len < cfg.window_length {
            return Err(Error::TooShort {
                required: cfg.window_length,
                actual: len,
            });
        }
        let frames = cfg.num_frames(len);
        let bins = cfg.bins();
        let n = cfg.fft_size;
        let mut values = Vec::with_capacity(w.num_channels() * frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for x in w.channels() {
            for t in 0..frames {
                let start = t * cfg.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    let s = x.get(start + i).copied().unwrap_or(0.0);
                    *b = Complex64::new(s * self.window[i], 0.0);
                }
                self.forward.process(&mut buf);
                values.extend_from_slice(&buf[..bins]);
            }
        }
        ComplexSpectrogram::from_values(values, w.num_channels(), frames, *cfg, w.sample_rate(), len)
    }

    /// Summed squared synthesis window at every output sample of an
    /// `frames`-frame signal truncated to `len`.
    fn window_power(&self, frames: usize, len: usize) -> Vec<f64> {
        let mut d = vec![0.0; len];
        for t in 0..frames {
            let start = t * self.config.hop;
            for (i, w) in self.window.iter().enumerate() {
                if let Some(v) = d.get_mut(start + i) {
                    *v += w * w;
                }
            }
        }
        d
    }

    fn inverse_frame(&self, spectrum: &[Complex64], buf: &mut [Complex64]) {
        let n = self.config.fft_size;
        let bins = spectrum.len();
        buf[0] = Complex64::new(spectrum[0].re, 0.0);
        for k in 1..bins {
            buf[k] = spectrum[k];
            buf[n - k] = spectrum[k].conj();
        }
        if n.is_multiple_of(2) {
            buf[n / 2] = Complex64::new(spectrum[n / 2].re, 0.0);
        }
        self.inverse.process(buf);
    }

    pub fn istft(&self, s: &ComplexSpectrogram) -> Result<Waveform> {
        let cfg = &self.config;
        if !cfg.is_cola() {
            return Err(Error::Config(format!(
                "{:?} window with hop {} of {} is not constant-overlap-add",
                cfg.window, cfg.hop, cfg.window_length
            )));
        }
        if s.config() != cfg {
            return Err(Error::Config("spectrogram was produced with a different STFT config".into()));
        }
        let len = s.signal_length();
        let d = self.window_power(s.frames(), len);
        let n = cfg.fft_size;
        let scale = 1.0 / n as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut channels = Vec::with_capacity(s.channels());
        for ch in 0..s.channels() {
            let mut y = vec![0.0; len];
            for t in 0..s.frames() {
                self.inverse_frame(s.frame(ch, t), &mut buf);
                let start = t * cfg.hop;
                for (i, b) in buf.iter().enumerate() {
                    if let Some(v) = y.get_mut(start + i) {
                        *v += self.window[i] * b.re * scale;
                    }
                }
            }
            for (v, p) in y.iter_mut().zip(&d) {
                *v = if *p > WINDOW_FLOOR { *v / p } else { 0.0 };
            }
            channels.push(y);
        }
        Waveform::new(channels, s.sample_rate())
    }

    /// Adjoint of [`istft`](Self::istft) with respect to the real and
    /// imaginary parts of a single-channel spectrogram: given dL/dy for the
    /// synthesized samples, returns dL/dRe and dL/dIm laid out `[frame][bin]`.
    pub fn istft_adjoint(&self, grad: &[f64], frames: usize) -> (Vec<f64>, Vec<f64>) {
        let cfg = &self.config;
        let n = cfg.fft_size;
        let bins = cfg.bins();
        let len = grad.len();
        let d = self.window_power(frames, len);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut g_re = vec![0.0; frames * bins];
        let mut g_im = vec![0.0; frames * bins];
        for t in 0..frames {
            let start = t * cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let pos = start + i;
                let g = if pos < len && d[pos] > WINDOW_FLOOR {
                    grad[pos] * self.window[i] / d[pos]
                } else {
                    0.0
                };
                *b = Complex64::new(g, 0.0);
            }
            self.forward.process(&mut buf);
            for k in 0..bins {
                let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
                let c = if edge { 1.0 } else { 2.0 } / n as f64;
                g_re[t * bins + k] = c * buf[k].re;
                g_im[t * bins + k] = if edge { 0.0 } else { c * buf[k].im };
            }
        }
        (g_re, g_im)
    }
}

const WINDOW_FLOOR: f64 = 1e-10;

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    StftProcessor::new(*cfg)?.stft(w)
}

pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform> {
    StftProcessor::new(*s.config())?.istft(s)
}

pub fn frame_context(s: &ComplexSpectrogram, t: usize, tau: usize) -> Result<ContextWindow> {
    if t >= s.frames() {
        return Err(Error::InvalidInput(format!(
            "frame index {t} out of range for {} frames",
            s.frames()
        )));
    }
    let width = 2 * tau + 1;
    let bins = s.bins();
    let mut values = vec![Complex64::new(0.0, 0.0); s.channels() * width * bins];
    for ch in 0..s.channels() {
        for k in 0..width {
            let src = t as isize + k as isize - tau as isize;
            if src >= 0 && (src as usize) < s.frames() {
                let o = (ch * width + k) * bins;
                values[o..o + bins].copy_from_slice(s.frame(ch, src as usize));
            }
        }
    }
    Ok(ContextWindow {
        tau,
        center: t,
        values,
        channels: s.channels(),
        bins,
    })
}

/// Scales `w` so its largest absolute sample equals `peak`.
pub fn peak_normalize(w: &Waveform, peak: f64) -> Result<(Waveform, f64)> {
    let current = w.peak();
    if current == 0.0 {
        return Err(Error::InvalidInput("cannot peak-normalize an all-zero signal".into()));
    }
    let gain = peak / current;
    Ok((w.scaled(gain), gain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn tone_peaks_at_expected_bin() {
        let x: Vec<f64> = (0..8000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 16000.0).sin())
            .collect();
        let s = stft(&Waveform::mono(x, 16000).unwrap(), &StftConfig::default()).unwrap();
        for t in 1..s.frames() - 1 {
            let frame = s.frame(0, t);
            let (best, _) = frame
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (k, v)| if v.norm() > acc.1 { (k, v.norm()) } else { acc });
            assert_eq!(best, 32, "frame {t}");
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let w = Waveform::mono(vec![0.0; 2048], 16000).unwrap();
        let s = stft(&w, &StftConfig::default()).unwrap();
        assert!(s.values().iter().all(|v| v.norm() == 0.0));
        let y = istft(&s).unwrap();
        assert!(y.channel(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn frame_count_pads_tail() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.num_frames(512), 1);
        assert_eq!(cfg.num_frames(768), 2);
        assert_eq!(cfg.num_frames(769), 3);
        assert_eq!(cfg.num_frames(16000), 62);
        assert_eq!(cfg.num_frames(511), 0);
    }

    #[test]
    fn short_signal_names_minimum() {
        let w = Waveform::mono(vec![0.1; 100], 16000).unwrap();
        match stft(&w, &StftConfig::default()) {
            Err(Error::TooShort { required, actual }) => {
                assert_eq!((required, actual), (512, 100));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_cola_hop_rejected() {
        let cfg = StftConfig {
            hop: 200,
            ..StftConfig::default()
        };
        assert!(!cfg.is_cola());
        let proc_ = StftProcessor::new(cfg).unwrap();
        let w = Waveform::mono(noise(2048, 1), 16000).unwrap();
        let s = proc_.stft(&w).unwrap();
        assert!(matches!(proc_.istft(&s), Err(Error::Config(_))));
        assert!(StftConfig::default().is_cola());
        assert!(StftConfig { hop: 128, ..StftConfig::default() }.is_cola());
    }

    #[test]
    fn round_trip_and_linearity() {
        let cfg = StftConfig::default();
        let x = noise(16000, 2);
        let y = noise(16000, 3);
        let wx = Waveform::mono(x.clone(), 16000).unwrap();
        let wy = Waveform::mono(y.clone(), 16000).unwrap();
        let sx = stft(&wx, &cfg).unwrap();
        let sy = stft(&wy, &cfg).unwrap();
        let rx = istft(&sx).unwrap();
        let mut err = 0.0_f64;
        let mut norm = 0.0_f64;
        for n in 512..16000 - 512 {
            err += (rx.channel(0)[n] - x[n]).powi(2);
            norm += x[n].powi(2);
        }
        assert!((err / norm).sqrt() < 1e-12);

        let mut sum = sx.clone();
        for (a, b) in sum.values_mut().iter_mut().zip(sy.values()) {
            *a += b;
        }
        let r = istft(&sum).unwrap();
        for n in 512..16000 - 512 {
            assert!((r.channel(0)[n] - x[n] - y[n]).abs() < 1e-9);
        }

        let s3 = stft(&wx.scaled(-3.5), &cfg).unwrap();
        for (a, b) in s3.values().iter().zip(sx.values()) {
            assert!((a - b * -3.5).norm() <= 1e-9 * b.norm().max(1e-12) + 1e-12);
        }
    }

    #[test]
    fn parseval_on_interior_frame() {
        let cfg = StftConfig::default();
        let proc_ = StftProcessor::new(cfg).unwrap();
        let x = noise(4096, 4);
        let s = proc_.stft(&Waveform::mono(x.clone(), 16000).unwrap()).unwrap();
        let n = cfg.fft_size;
        for t in [3usize, 7] {
            let time: f64 = (0..n)
                .map(|i| (x[t * cfg.hop + i] * proc_.window()[i]).powi(2))
                .sum();
            let freq: f64 = s
                .frame(0, t)
                .iter()
                .enumerate()
                .map(|(k, v)| if k == 0 || k == n / 2 { 1.0 } else { 2.0 } * v.norm_sqr())
                .sum::<f64>()
                / n as f64;
            assert!((time - freq).abs() < 1e-9 * time);
        }
    }

    #[test]
    fn adjoint_matches_inner_product() {
        // <istft(S), g> == <S, istft_adjoint(g)> over real/imag parts
        let cfg = StftConfig::hann(16);
        let proc_ = StftProcessor::new(cfg).unwrap();
        let len = 64;
        let frames = cfg.num_frames(len);
        let bins = cfg.bins();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<Complex64> = (0..frames * bins)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut spec = ComplexSpectrogram::from_values(values, 1, frames, cfg, 16000, len).unwrap();
        // DC and Nyquist imaginary parts are discarded by synthesis
        for t in 0..frames {
            let f = spec.frame_mut(0, t);
            f[0].im = 0.0;
            f[bins - 1].im = 0.0;
        }
        let y = proc_.istft(&spec).unwrap();
        let g = noise(len, 10);
        let lhs: f64 = y.channel(0).iter().zip(&g).map(|(a, b)| a * b).sum();
        let (gr, gi) = proc_.istft_adjoint(&g, frames);
        let rhs: f64 = spec
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v.re * gr[i] + v.im * gi[i])
            .sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn context_window_edges() {
        let cfg = StftConfig::hann(16);
        let w = Waveform::new(vec![noise(128, 5), noise(128, 6)], 16000).unwrap();
        let s = stft(&w, &cfg).unwrap();
        let c0 = frame_context(&s, 0, 0).unwrap();
        assert_eq!(c0.width(), 1);
        assert_eq!(c0.slice(1, 0), s.frame(1, 0));

        let c = frame_context(&s, 0, 2).unwrap();
        for ch in 0..2 {
            assert!(c.slice(ch, 0).iter().all(|v| v.norm() == 0.0));
            assert!(c.slice(ch, 1).iter().all(|v| v.norm() == 0.0));
            for k in 2..5 {
                assert_eq!(c.slice(ch, k), s.frame(ch, k - 2));
            }
        }
        let last = s.frames() - 1;
        let c = frame_context(&s, last, 1).unwrap();
        assert_eq!(c.slice(0, 1), s.frame(0, last));
        assert!(c.slice(0, 2).iter().all(|v| v.norm() == 0.0));
        assert!(frame_context(&s, s.frames(), 1).is_err());
    }

    #[test]
    fn peak_normalize_cases() {
        let w = Waveform::mono(vec![0.5, -2.0, 1.0], 16000).unwrap();
        let (n, g) = peak_normalize(&w, 0.99).unwrap();
        assert!((g - 0.495).abs() < 1e-15);
        assert!((n.peak() - 0.99).abs() < 1e-15);

        let w = Waveform::mono(vec![0.99, 0.1], 16000).unwrap();
        assert_eq!(peak_normalize(&w, 0.99).unwrap().1, 1.0);

        let w = Waveform::new(vec![vec![1.0, 2.0], vec![-3.0, 0.5]], 16000).unwrap();
        let (_, g) = peak_normalize(&w, 0.99).unwrap();
        assert!((g - 0.33).abs() < 1e-15);

        let z = Waveform::mono(vec![0.0; 4], 16000).unwrap();
        assert!(peak_normalize(&z, 0.99).is_err());
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(Waveform::new(vec![], 16000).is_err());
        assert!(Waveform::mono(vec![], 16000).is_err());
        assert!(Waveform::mono(vec![f64::NAN], 16000).is_err());
        assert!(Waveform::new(vec![vec![0.0; 3], vec![0.0; 2]], 16000).is_err());
    }
}
