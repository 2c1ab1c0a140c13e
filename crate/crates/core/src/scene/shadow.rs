//! Parametric head-shadow low-pass standing in for the level cues of an HRTF.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::geometry::Side;

/// The shadow filter is `y[n] = (1 - a) x[n] + a y[n-1]` with
/// `a = s * exp(-2 pi f_min / fs)`, where `s = max(0, sin(azimuth))` for a
/// left microphone and `max(0, -sin(azimuth))` for a right one. Ipsilateral
/// and median-plane sources give `a = 0` (identity); a source at 90 degrees
/// on the far side reaches the minimum cutoff `f_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadShadow {
    pub min_cutoff_hz: f64,
    pub enabled: bool,
}

impl Default for HeadShadow {
    fn default() -> Self {
        Self {
            min_cutoff_hz: 1500.0,
            enabled: true,
        }
    }
}

impl HeadShadow {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn filter(&self, azimuth_deg: f64, side: Side, sample_rate: u32) -> OnePole {
        if !self.enabled {
            return OnePole::identity();
        }
        head_shadow_filter(azimuth_deg, side, self.min_cutoff_hz, sample_rate)
    }
}

/// First-order low-pass with unit DC gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnePole {
    pub pole: f64,
}

impl OnePole {
    pub fn identity() -> Self {
        Self { pole: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.pole == 0.0
    }

    /// -3 dB point of the equivalent analog prototype; infinite for identity.
    pub fn cutoff_hz(&self, sample_rate: u32) -> f64 {
        if self.pole <= 0.0 {
            f64::INFINITY
        } else {
            -self.pole.ln() * sample_rate as f64 / (2.0 * PI)
        }
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64, sample_rate: u32) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate as f64;
        let a = self.pole;
        (1.0 - a) / (1.0 - 2.0 * a * w.cos() + a * a).sqrt()
    }

    pub fn apply(&self, x: &mut [f64]) {
        if self.is_identity() {
            return;
        }
        let a = self.pole;
        let mut y = 0.0;
        for v in x.iter_mut() {
            y = (1.0 - a) * *v + a * y;
            *v = y;
        }
    }
}

pub fn head_shadow_filter(azimuth_deg: f64, side: Side, min_cutoff_hz: f64, sample_rate: u32) -> OnePole {
    let s = azimuth_deg.to_radians().sin();
    let contralateral = match side {
        Side::Left => s.max(0.0),
        Side::Right => (-s).max(0.0),
    };
    let max_pole = (-2.0 * PI * min_cutoff_hz / sample_rate as f64).exp();
    OnePole {
        pole: contralateral * max_pole,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_plane_is_identity() {
        for side in [Side::Left, Side::Right] {
            assert!(head_shadow_filter(0.0, side, 1500.0, 16000).is_identity());
            assert!(head_shadow_filter(180.0, side, 1500.0, 16000).pole.abs() < 1e-15);
        }
    }

    #[test]
    fn contralateral_side_is_darker() {
        let left = head_shadow_filter(60.0, Side::Left, 1500.0, 16000);
        let right = head_shadow_filter(60.0, Side::Right, 1500.0, 16000);
        assert!(right.is_identity());
        for f in [1000.0, 4000.0, 7000.0] {
            assert!(left.gain_at(f, 16000) < right.gain_at(f, 16000));
        }
        assert_eq!(left, head_shadow_filter(-60.0, Side::Right, 1500.0, 16000));
    }

    #[test]
    fn cutoff_falls_with_angle() {
        let mut last = f64::INFINITY;
        for az in [10.0, 30.0, 60.0, 90.0] {
            let c = head_shadow_filter(az, Side::Left, 1500.0, 16000).cutoff_hz(16000);
            assert!(c < last);
            last = c;
        }
        assert!((last - 1500.0).abs() < 1e-9);
    }

    #[test]
    fn unit_dc_gain() {
        let f = head_shadow_filter(75.0, Side::Left, 1500.0, 16000);
        let mut x = vec![1.0; 2000];
        f.apply(&mut x);
        assert!((x[1999] - 1.0).abs() < 1e-12);
    }
}
