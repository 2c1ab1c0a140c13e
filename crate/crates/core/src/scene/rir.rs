//! Shoebox image-source room impulse responses.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::geometry::{distance, Point, RoomSpec};
use crate::error::{Error, Result};

/// Half-width (in samples) of the Hann-windowed sinc used for fractional delays.
pub const SINC_HALF_WIDTH: usize = 32;

/// How far the image expansion reaches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RirHorizon {
    /// Images up to this many reflections.
    MaxOrder(usize),
    /// Images arriving within this many seconds.
    Seconds(f64),
    /// Images arriving within one T60 (the -60 dB point).
    T60,
}

/// Adds a windowed-sinc pulse of `amplitude` centred at fractional sample `delay`.
pub fn add_fractional_pulse(h: &mut [f64], delay: f64, amplitude: f64) {
    let hw = SINC_HALF_WIDTH as f64;
    let lo = (delay - hw).ceil().max(0.0) as usize;
    let hi = ((delay + hw).floor() as isize).min(h.len() as isize - 1);
    if hi < lo as isize {
        return;
    }
    // sin(pi (n - d)) = -(-1)^n sin(pi d) for integer n
    let s = (PI * delay).sin();
    for n in lo..=hi as usize {
        let x = n as f64 - delay;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
            sign * s / (PI * x)
        };
        let window = 0.5 * (1.0 + (PI * x / hw).cos());
        h[n] += amplitude * sinc * window;
    }
}

pub(super) struct ImageAxis {
    pub(super) coords: Vec<(f64, i32)>,
}

impl ImageAxis {
    /// Image coordinates `(1 - 2q) s + 2 m L` with their reflection counts
    /// `|m - q| + |m|`, limited to `max_dist` from the receiver span.
    pub(super) fn new(source: f64, length: f64, max_dist: f64, max_order: Option<usize>) -> Self {
        let m_max = (max_dist / (2.0 * length)).ceil() as i32 + 1;
        let mut coords = Vec::new();
        for m in -m_max..=m_max {
            for q in 0..2 {
                let order = (m - q).abs() + m.abs();
                if max_order.is_some_and(|o| order as usize > o) {
                    continue;
                }
                let c = (1 - 2 * q) as f64 * source + 2.0 * m as f64 * length;
                coords.push((c, order));
            }
        }
        Self { coords }
    }
}

/// Impulse responses from `src` to every receiver in `mics`.
///
/// Each image contributes `beta^order / r` at delay `r / c`, where `beta`
/// follows from the room's T60. With `t60 == 0` only the direct path exists.
pub fn image_source_rirs(
    room: &RoomSpec,
    src: &Point,
    mics: &[Point],
    horizon: RirHorizon,
    sample_rate: u32,
) -> Result<Vec<Vec<f64>>> {
    room.validate()?;
    if !room.contains(src) {
        return Err(Error::InvalidInput(format!("source {src:?} outside room {:?}", room.dimensions)));
    }
    if let Some(m) = mics.iter().find(|m| !room.contains(m)) {
        return Err(Error::InvalidInput(format!("microphone {m:?} outside room {:?}", room.dimensions)));
    }
    let fs = sample_rate as f64;
    let c = room.speed_of_sound;
    let direct_max = mics.iter().map(|m| distance(src, m)).fold(0.0, f64::max);
    let beta = room.reflection_coefficient();
    let (max_dist, max_order) = if room.t60 == 0.0 {
        (direct_max, Some(0))
    } else {
        match horizon {
            RirHorizon::MaxOrder(o) => {
                let longest = room.dimensions.iter().fold(0.0_f64, |a, b| a.max(*b));
                (direct_max + 2.0 * longest * (o as f64 + 1.0), Some(o))
            }
            RirHorizon::Seconds(s) => (c * s.max(direct_max / c), None),
            RirHorizon::T60 => (c * room.t60.max(direct_max / c), None),
        }
    };
    let len = (max_dist / c * fs).ceil() as usize + SINC_HALF_WIDTH + 1;
    let mut out = vec![vec![0.0; len]; mics.len()];

    let axes: Vec<ImageAxis> = (0..3)
        .map(|i| ImageAxis::new(src[i], room.dimensions[i], max_dist + room.dimensions[i], max_order))
        .collect();
    let powers: Vec<f64> = (0..=200).map(|k| beta.powi(k)).collect();
    let gain = |order: i32| -> f64 {
        if order == 0 {
            1.0
        } else {
            powers.get(order as usize).copied().unwrap_or(0.0)
        }
    };
    for &(x, ox) in &axes[0].coords {
        for &(y, oy) in &axes[1].coords {
            for &(z, oz) in &axes[2].coords {
                let order = ox + oy + oz;
                if max_order.is_some_and(|o| order as usize > o) {
                    continue;
                }
                let g = gain(order);
                if g == 0.0 {
                    continue;
                }
                let image = [x, y, z];
                for (h, mic) in out.iter_mut().zip(mics) {
                    let r = distance(&image, mic);
                    if r > max_dist + 1e-9 {
                        continue;
                    }
                    add_fractional_pulse(h, r / c * fs, g / r.max(1e-3));
                }
            }
        }
    }
    Ok(out)
}

/// Single-receiver convenience wrapper around [`image_source_rirs`].
pub fn image_source_rir(
    room: &RoomSpec,
    src: &Point,
    mic: &Point,
    horizon: RirHorizon,
    sample_rate: u32,
) -> Result<Vec<f64>> {
    Ok(image_source_rirs(room, src, std::slice::from_ref(mic), horizon, sample_rate)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Low-frequency group delay, `sum n h[n] / sum h[n]`.
    fn group_delay(h: &[f64]) -> f64 {
        let dc: f64 = h.iter().sum();
        h.iter().enumerate().map(|(n, v)| n as f64 * v).sum::<f64>() / dc
    }

    #[test]
    fn anechoic_direct_pulse() {
        let room = RoomSpec::default();
        let mic = [5.0, 5.0, 1.5];
        let src = [6.0, 5.0, 1.5];
        let h = image_source_rir(&room, &src, &mic, RirHorizon::T60, 16000).unwrap();
        let (peak, _) = h
            .iter()
            .enumerate()
            .fold((0, 0.0), |a, (n, v)| if v.abs() > a.1 { (n, v.abs()) } else { a });
        assert_eq!(peak, 47);
        let gd = group_delay(&h);
        assert!((gd - 16000.0 / 343.0).abs() < 0.02, "group delay {gd}");
        let dc: f64 = h.iter().sum();
        assert!((dc - 1.0).abs() < 1e-2, "dc gain {dc}");

        let far = image_source_rir(&room, &[7.0, 5.0, 1.5], &mic, RirHorizon::T60, 16000).unwrap();
        let ratio = far.iter().sum::<f64>() / dc;
        assert!((ratio - 0.5).abs() < 1e-2, "ratio {ratio}");
    }

    #[test]
    fn rejects_points_outside() {
        let room = RoomSpec::default();
        assert!(image_source_rir(&room, &[13.0, 1.0, 1.0], &[1.0, 1.0, 1.0], RirHorizon::T60, 16000).is_err());
        assert!(image_source_rir(&room, &[1.0, 1.0, 1.0], &[1.0, 1.0, 3.0], RirHorizon::T60, 16000).is_err());
    }

    #[test]
    fn reverberant_rir_contains_direct_path() {
        let room = RoomSpec::default().with_t60(0.3);
        let mic = [5.0, 5.0, 1.5];
        let src = [6.0, 5.0, 1.5];
        let h = image_source_rir(&room, &src, &mic, RirHorizon::T60, 16000).unwrap();
        assert!(h.len() >= 4800);
        let direct = image_source_rir(&RoomSpec::default(), &src, &mic, RirHorizon::T60, 16000).unwrap();
        // first reflection (floor, 1.5 m down and back) arrives well after the sinc tail
        for n in 0..60 {
            assert!((h[n] - direct[n]).abs() < 1e-12);
        }
        let order1 = image_source_rir(&room, &src, &mic, RirHorizon::MaxOrder(1), 16000).unwrap();
        assert!(order1.iter().map(|v| v.abs()).sum::<f64>() > direct.iter().map(|v| v.abs()).sum::<f64>());
    }
}
