use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reported SI-SDR values are clipped to `[-SI_SDR_CLIP_DB, SI_SDR_CLIP_DB]`.
pub const SI_SDR_CLIP_DB: f64 = 100.0;
/// Stabilizer of the differentiable training objective.
pub const SMOOTH_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiSdr {
    pub db: f64,
    pub clipped: bool,
}

fn check_pair(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::shape("si_sdr lengths", reference.len(), estimate.len()));
    }
    if estimate.iter().chain(reference).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("si_sdr input".into()));
    }
    let energy: f64 = reference.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::InvalidInput("si_sdr reference is all zeros".into()));
    }
    Ok(energy)
}

/// Scale-invariant SDR in dB, clipped for zero-error or zero-projection cases.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<SiSdr> {
    let b = check_pair(estimate, reference)?;
    let a: f64 = estimate.iter().zip(reference).map(|(e, s)| e * s).sum();
    let alpha = a / b;
    let target = alpha * alpha * b;
    let error: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, s)| (e - alpha * s).powi(2))
        .sum();
    let raw = if target == 0.0 {
        f64::NEG_INFINITY
    } else if error == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (target / error).log10()
    };
    let db = raw.clamp(-SI_SDR_CLIP_DB, SI_SDR_CLIP_DB);
    Ok(SiSdr { db, clipped: db != raw })
}

/// `10 log10((|alpha s|^2 + eps) / (|e - alpha s|^2 + eps))` and its gradient
/// with respect to the estimate.
pub fn smooth_si_sdr(estimate: &[f64], reference: &[f64]) -> Result<(f64, Vec<f64>)> {
    let b = check_pair(estimate, reference)?;
    let a: f64 = estimate.iter().zip(reference).map(|(e, s)| e * s).sum();
    let alpha = a / b;
    let p2 = alpha * a;
    let residual: Vec<f64> = estimate.iter().zip(reference).map(|(e, s)| e - alpha * s).collect();
    let e2: f64 = residual.iter().map(|r| r * r).sum();
    let value = 10.0 * ((p2 + SMOOTH_EPS) / (e2 + SMOOTH_EPS)).log10();
    let k = 10.0 / std::f64::consts::LN_10;
    let cp = 2.0 * alpha / (p2 + SMOOTH_EPS);
    let ce = 2.0 / (e2 + SMOOTH_EPS);
    let grad = reference
        .iter()
        .zip(&residual)
        .map(|(s, r)| k * (cp * s - ce * r))
        .collect();
    Ok((value, grad))
}

/// Fixed-pairing objective `-(si_sdr(left) + si_sdr(right)) / 2` on clipped values.
pub fn loss(est_left: &[f64], est_right: &[f64], tgt_left: &[f64], tgt_right: &[f64]) -> Result<f64> {
    Ok(-0.5 * (si_sdr(est_left, tgt_left)?.db + si_sdr(est_right, tgt_right)?.db))
}

/// Differentiable form of [`loss`] with per-side gradients.
pub fn training_loss(
    est_left: &[f64],
    est_right: &[f64],
    tgt_left: &[f64],
    tgt_right: &[f64],
) -> Result<(f64, [Vec<f64>; 2])> {
    let (l, gl) = smooth_si_sdr(est_left, tgt_left)?;
    let (r, gr) = smooth_si_sdr(est_right, tgt_right)?;
    let half = |g: Vec<f64>| g.into_iter().map(|v| -0.5 * v).collect();
    Ok((-0.5 * (l + r), [half(gl), half(gr)]))
}
