//! Short-time objective intelligibility.
//!
//! Follows the common reference implementation: 10 kHz internal rate,
//! 256-sample frames with hop 128 and a 512-point FFT, removal of frames
//! more than 40 dB below the loudest reference frame, 15 one-third-octave
//! bands from 150 Hz, 30-frame segments and clipping at -15 dB SDR.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const STOI_RATE: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Polyphase rational resampler with a Kaiser-windowed sinc low-pass.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    half: usize,
    taps: Vec<f64>,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Result<Self> {
        if from == 0 || to == 0 {
            return Err(Error::InvalidInput("sample rates must be positive".into()));
        }
        let g = gcd(from as u64, to as u64);
        let up = (to as u64 / g) as usize;
        let down = (from as u64 / g) as usize;
        let m = up.max(down);
        let half = 10 * m;
        let cutoff = 0.5 / m as f64;
        let beta = 5.0;
        let norm = bessel_i0(beta);
        let taps = (0..=2 * half)
            .map(|i| {
                let n = i as f64 - half as f64;
                let x = 2.0 * cutoff * n;
                let sinc = if n == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
                let r = n / half as f64;
                let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
                up as f64 * 2.0 * cutoff * sinc * w
            })
            .collect();
        Ok(Self { up, down, half, taps })
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        if self.up == self.down {
            return x.to_vec();
        }
        let out_len = (x.len() * self.up).div_ceil(self.down);
        let h = self.half as isize;
        (0..out_len)
            .map(|m| {
                // upsampled position m * down; input k sits at k * up
                let pos = (m * self.down) as isize;
                let k_lo = ((pos - h).max(0) as usize).div_ceil(self.up);
                let k_hi = (((pos + h) / self.up as isize) as usize).min(x.len().saturating_sub(1));
                (k_lo..=k_hi)
                    .map(|k| x[k] * self.taps[(pos - (k * self.up) as isize + h) as usize])
                    .sum()
            })
            .collect()
    }
}

fn window() -> Vec<f64> {
    // Hann of length FRAME + 2 with the zero endpoints removed
    (1..=FRAME)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (FRAME + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, e)| max - DYN_RANGE_DB - **e < 0.0)
        .map(|(s, _)| *s)
        .collect();
    let out_len = if keep.is_empty() { 0 } else { (keep.len() - 1) * HOP + FRAME };
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (j, &s) in keep.iter().enumerate() {
        for i in 0..FRAME {
            xs[j * HOP + i] += w[i] * x[s + i];
            ys[j * HOP + i] += w[i] * y[s + i];
        }
    }
    (xs, ys)
}

/// Band-power envelope `[band][frame]`.
fn third_octave_envelope(x: &[f64], w: &[f64], obm: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(NFFT);
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let mut env = vec![vec![0.0; starts.len()]; BANDS];
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for (t, &s) in starts.iter().enumerate() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(if i < FRAME { w[i] * x[s + i] } else { 0.0 }, 0.0);
        }
        fft.process(&mut buf);
        for (band, &(lo, hi)) in obm.iter().enumerate() {
            env[band][t] = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        }
    }
    env
}

/// Bin ranges `[lo, hi)` of the one-third-octave bands.
fn band_edges() -> Vec<(usize, usize)> {
    let bins = NFFT / 2 + 1;
    let f: Vec<f64> = (0..bins).map(|k| k as f64 * STOI_RATE as f64 / NFFT as f64).collect();
    let nearest = |target: f64| {
        let mut best = 0;
        for (i, v) in f.iter().enumerate() {
            if (v - target).powi(2) < (f[best] - target).powi(2) {
                best = i;
            }
        }
        best
    };
    (0..BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Minimum input length (at `rate`) for a single STOI segment.
pub fn min_stoi_samples(rate: u32) -> usize {
    let at_10k = FRAME + (SEGMENT - 1) * HOP + 1;
    (at_10k as f64 * rate as f64 / STOI_RATE as f64).ceil() as usize
}

/// STOI of `estimate` against `reference`, both at `sample_rate`.
///
/// Segments where either envelope has zero variance contribute a
/// correlation of 0.
pub fn stoi(estimate: &[f64], reference: &[f64], sample_rate: u32) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::shape("stoi lengths", reference.len(), estimate.len()));
    }
    if estimate.iter().chain(reference).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stoi input".into()));
    }
    let required = min_stoi_samples(sample_rate);
    if reference.len() < required {
        return Err(Error::TooShort {
            required,
            actual: reference.len(),
        });
    }
    let rs = Resampler::new(sample_rate, STOI_RATE)?;
    let x = rs.process(reference);
    let y = rs.process(estimate);
    let w = window();
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let obm = band_edges();
    let xe = third_octave_envelope(&x, &w, &obm);
    let ye = third_octave_envelope(&y, &w, &obm);
    let frames = xe[0].len();
    if frames < SEGMENT {
        return Err(Error::InvalidInput(format!(
            "only {frames} non-silent frames remain; STOI needs at least {SEGMENT}"
        )));
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for end in SEGMENT..=frames {
        for band in 0..BANDS {
            let xs = &xe[band][end - SEGMENT..end];
            let ys = &ye[band][end - SEGMENT..end];
            let nx = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
            let g = nx / (ny + EPS);
            let yp: Vec<f64> = ys.iter().zip(xs).map(|(y, x)| (y * g).min(x * (1.0 + clip))).collect();
            let mx = xs.iter().sum::<f64>() / SEGMENT as f64;
            let my = yp.iter().sum::<f64>() / SEGMENT as f64;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (a, b) in xs.iter().zip(&yp) {
                let (da, db) = (a - mx, b - my);
                sxy += da * db;
                sxx += da * da;
                syy += db * db;
            }
            total += sxy / ((sxx.sqrt() + EPS) * (syy.sqrt() + EPS));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
