use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Shoebox room with uniform, frequency-independent absorption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Width (x), depth (y), height (z) in metres.
    pub dimensions: [f64; 3],
    /// Reverberation time in seconds; zero means anechoic.
    pub t60: f64,
    pub speed_of_sound: f64,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            dimensions: [12.0, 12.5, 3.0],
            t60: 0.0,
            speed_of_sound: 343.0,
        }
    }
}

impl RoomSpec {
    pub fn with_t60(self, t60: f64) -> Self {
        Self { t60, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Config(format!("room dimensions {:?} must be positive", self.dimensions)));
        }
        if !(self.t60.is_finite() && self.t60 >= 0.0) {
            return Err(Error::Config(format!("t60 {} must be non-negative", self.t60)));
        }
        if !(self.speed_of_sound.is_finite() && self.speed_of_sound > 0.0) {
            return Err(Error::Config("speed of sound must be positive".into()));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Wall pressure reflection coefficient realizing `t60`, fitted to the
    /// averaged Schroeder decay of this room's image lattice.
    pub fn reflection_coefficient(&self) -> f64 {
        if self.t60 == 0.0 {
            return 0.0;
        }
        super::decay::calibrated_beta(self)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.iter()
            .zip(&self.dimensions)
            .all(|(v, d)| v.is_finite() && *v > 0.0 && v < d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Microphone channel indices belonging to this side's hearing aid.
    pub fn channels(self) -> std::ops::Range<usize> {
        match self {
            Side::Left => 0..4,
            Side::Right => 4..8,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

pub const NUM_MICS: usize = 8;

/// Two hearing aids, each with one in-ear and three external microphones.
///
/// The head faces +y; +x is the listener's right. Channels 0-3 are the left
/// device and 4-7 the right, with the in-ear microphone first in each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub listener_position: Point,
    pub head_radius: f64,
    /// Offsets from the head centre, one per channel.
    pub mic_offsets: Vec<Point>,
    /// In-ear channel index of the left and right devices.
    pub in_ear: [usize; 2],
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::hearing_aids([5.6, 6.5, 1.5], 0.0875)
    }
}

impl ArrayGeometry {
    /// In-ear mics on the interaural axis at `±head_radius`; external mics
    /// 1 cm above the ear, spaced 1 cm front to back.
    pub fn hearing_aids(listener_position: Point, head_radius: f64) -> Self {
        let mut mic_offsets = Vec::with_capacity(NUM_MICS);
        for sign in [-1.0, 1.0] {
            let x = sign * head_radius;
            mic_offsets.push([x, 0.0, 0.0]);
            for y in [0.01, 0.0, -0.01] {
                mic_offsets.push([x, y, 0.01]);
            }
        }
        Self {
            listener_position,
            head_radius,
            mic_offsets,
            in_ear: [0, 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_offsets.len() != NUM_MICS {
            return Err(Error::Config(format!(
                "array needs exactly {NUM_MICS} microphones, got {}",
                self.mic_offsets.len()
            )));
        }
        if self.in_ear[0] >= 4 || !(4..8).contains(&self.in_ear[1]) || self.in_ear[1] - 4 != self.in_ear[0] {
            return Err(Error::Config(format!("in-ear channels {:?} are not mirrored", self.in_ear)));
        }
        for i in 0..4 {
            let l = self.mic_offsets[i];
            let r = self.mic_offsets[i + 4];
            let mirrored = (l[0] + r[0]).abs() < 1e-12 && (l[1] - r[1]).abs() < 1e-12 && (l[2] - r[2]).abs() < 1e-12;
            if !mirrored || l[0] >= 0.0 {
                return Err(Error::Config(format!(
                    "microphones {i} and {} are not mirror images about the median plane",
                    i + 4
                )));
            }
        }
        Ok(())
    }

    pub fn mic_positions(&self) -> Vec<Point> {
        self.mic_offsets
            .iter()
            .map(|o| {
                let p = self.listener_position;
                [p[0] + o[0], p[1] + o[1], p[2] + o[2]]
            })
            .collect()
    }

    pub fn in_ear_channel(&self, side: Side) -> usize {
        match side {
            Side::Left => self.in_ear[0],
            Side::Right => self.in_ear[1],
        }
    }

    pub fn side_of(&self, channel: usize) -> Side {
        if channel < 4 {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// Position at `distance` metres and `azimuth` degrees (clockwise from
    /// the front, positive to the right) in the horizontal plane of the head.
    pub fn source_position(&self, azimuth_deg: f64, distance: f64) -> Point {
        let a = azimuth_deg.to_radians();
        let p = self.listener_position;
        [p[0] + distance * a.sin(), p[1] + distance * a.cos(), p[2]]
    }

    pub fn azimuth_of(&self, p: &Point) -> f64 {
        let l = self.listener_position;
        (p[0] - l[0]).atan2(p[1] - l[1]).to_degrees()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_array_is_mirrored() {
        let a = ArrayGeometry::default();
        a.validate().unwrap();
        assert_eq!(a.in_ear_channel(Side::Left), 0);
        assert_eq!(a.in_ear_channel(Side::Right), 4);
        let mut bad = a.clone();
        bad.mic_offsets[5][1] += 0.001;
        assert!(bad.validate().is_err());
        bad.mic_offsets.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn azimuth_convention() {
        let a = ArrayGeometry::default();
        let right = a.source_position(60.0, 1.5);
        assert!(right[0] > a.listener_position[0]);
        assert!((a.azimuth_of(&right) - 60.0).abs() < 1e-9);
        let left = a.source_position(-60.0, 1.5);
        assert!((a.azimuth_of(&left) + 60.0).abs() < 1e-9);
    }

    #[test]
    fn reflection_coefficient_grows_with_t60() {
        let beta = |t| RoomSpec::default().with_t60(t).reflection_coefficient();
        assert_eq!(beta(0.0), 0.0);
        let (a, b, c) = (beta(0.1), beta(0.3), beta(0.6));
        assert!(0.0 < a && a < b && b < c && c < 1.0, "{a} {b} {c}");
    }
}
