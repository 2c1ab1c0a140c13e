//! Fitting the wall reflection coefficient to a requested T60.
//!
//! Closed-form decay laws (Sabine, Eyring) assume a diffuse field. A 3 m high
//! shoebox image lattice is far from diffuse: vertical image families die out
//! quickly and the horizontal ones dominate the late tail, so those formulas
//! miss the decay the synthesized responses actually show by up to a factor
//! of two. Instead, `beta` is solved by bisection so that the Schroeder T20 of
//! the lattice's energy response, averaged over a fixed set of interior
//! source/receiver pairs, equals the requested T60.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use super::geometry::{distance, Point, RoomSpec};
use super::rir::ImageAxis;

const PAIRS: usize = 128;
/// The fit uses images arriving within this multiple of the target T60.
const HORIZON: f64 = 1.5;
const BINS: usize = 900;
const BISECTION_STEPS: usize = 40;

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let (mut x, mut f) = (0.0, 1.0 / base as f64);
    while i > 0 {
        x += f * (i % base) as f64;
        i /= base;
        f /= base as f64;
    }
    x
}

/// Halton points in the central 60% of each room dimension.
fn calibration_pairs(dims: &[f64; 3]) -> Vec<(Point, Point)> {
    const PRIMES: [usize; 6] = [2, 3, 5, 7, 11, 13];
    (1..=PAIRS)
        .map(|i| {
            let p = |k: usize| -> Point {
                std::array::from_fn(|d| dims[d] * (0.2 + 0.6 * radical_inverse(i, PRIMES[k + d])))
            };
            (p(0), p(3))
        })
        .collect()
}

/// Image energy `1 / r^2` per (time bin, reflection order), summed over the
/// pairs with each pair scaled to unit direct-path energy, so the averaged
/// decay for any `beta` is a weighted sum over orders.
struct DecayTable {
    bin_seconds: f64,
    orders: usize,
    weights: Vec<f64>,
}

impl DecayTable {
    fn new(room: &RoomSpec, horizon: f64) -> Self {
        let c = room.speed_of_sound;
        let max_dist = c * horizon;
        let bin_seconds = horizon / BINS as f64;
        let mut orders = 0;
        let mut weights = Vec::new();
        for (src, mic) in calibration_pairs(&room.dimensions) {
            let axes: Vec<ImageAxis> = (0..3)
                .map(|d| ImageAxis::new(src[d], room.dimensions[d], max_dist + room.dimensions[d], None))
                .collect();
            if orders == 0 {
                orders = 1 + axes.iter().map(|a| a.coords.iter().map(|c| c.1).max().unwrap_or(0) as usize).sum::<usize>();
            }
            if weights.is_empty() {
                weights = vec![0.0; BINS * orders];
            }
            let direct = distance(&src, &mic).powi(2);
            for &(x, ox) in &axes[0].coords {
                for &(y, oy) in &axes[1].coords {
                    for &(z, oz) in &axes[2].coords {
                        let r = distance(&[x, y, z], &mic);
                        if r >= max_dist {
                            continue;
                        }
                        let bin = ((r / c / bin_seconds) as usize).min(BINS - 1);
                        weights[bin * orders + (ox + oy + oz) as usize] += direct / (r * r).max(1e-6);
                    }
                }
            }
        }
        Self { bin_seconds, orders, weights }
    }

    /// T20 (-5 to -25 dB) of the pair-averaged Schroeder curve. Zero when the
    /// curve never spans the range.
    fn t60(&self, beta: f64) -> f64 {
        let gains: Vec<f64> = (0..self.orders).map(|o| beta.powi(2 * o as i32)).collect();
        let mean: Vec<f64> = self
            .weights
            .chunks_exact(self.orders)
            .map(|row| row.iter().zip(&gains).map(|(a, g)| a * g).sum())
            .collect();
        let mut edc = vec![0.0; BINS];
        let mut acc = 0.0;
        for i in (0..BINS).rev() {
            acc += mean[i];
            edc[i] = acc;
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (i, e) in edc.iter().enumerate() {
            let db = 10.0 * (e / edc[0]).log10();
            if (-25.0..=-5.0).contains(&db) {
                xs.push(i as f64 * self.bin_seconds);
                ys.push(db);
            }
        }
        if xs.len() < 2 {
            return 0.0;
        }
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        if slope < 0.0 {
            -60.0 / slope
        } else {
            0.0
        }
    }
}

fn solve(room: &RoomSpec) -> f64 {
    let table = DecayTable::new(room, HORIZON * room.t60);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if table.t60(mid) < room.t60 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Reflection coefficient whose pair-averaged Schroeder T60 equals
/// `room.t60`; memoized per room.
pub(super) fn calibrated_beta(room: &RoomSpec) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<[u64; 5], f64>>> = OnceLock::new();
    let [x, y, z] = room.dimensions;
    let key = [x, y, z, room.t60, room.speed_of_sound].map(f64::to_bits);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(beta) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return *beta;
    }
    let beta = solve(room);
    cache.lock().unwrap_or_else(|e| e.into_inner()).insert(key, beta);
    beta
}
