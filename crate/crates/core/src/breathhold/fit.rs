//! Exponential rise and recovery time constants around the response peak.

use serde::{Deserialize, Serialize};

use super::BreathHoldError;

/// Search range of the time constant, seconds.
const TAU_RANGE: (f64, f64) = (0.2, 1000.0);
const GRID_POINTS: usize = 240;
const MAX_ITER: usize = 200;

/// Which flank of the response is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flank {
    /// `1 + A·exp((t − t_max)/τ)` for `t ≤ t_max`.
    Growth,
    /// `1 + A·exp(−(t − t_max)/τ)` for `t ≥ t_max`.
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub tau: f64,
    pub amplitude: f64,
    /// Coefficient of determination, `1 − SS_res/SS_tot`.
    pub quality: f64,
    pub samples: usize,
}

fn basis(flank: Flank, t: f64, t_max: f64, tau: f64) -> f64 {
    match flank {
        Flank::Growth => ((t - t_max) / tau).exp(),
        Flank::Decay => (-(t - t_max) / tau).exp(),
    }
}

/// Best amplitude for a given τ (closed form) and the residual sum of
/// squares it leaves.
fn profile(times: &[f64], excess: &[f64], t_max: f64, tau: f64, flank: Flank) -> (f64, f64) {
    let (mut sgy, mut sgg) = (0.0, 0.0);
    for (&t, &y) in times.iter().zip(excess) {
        let g = basis(flank, t, t_max, tau);
        sgy += g * y;
        sgg += g * g;
    }
    let a = if sgg > 0.0 { sgy / sgg } else { 0.0 };
    let sse = times
        .iter()
        .zip(excess)
        .map(|(&t, &y)| {
            let r = y - a * basis(flank, t, t_max, tau);
            r * r
        })
        .sum();
    (a, sse)
}

/// Least-squares fit of one flank, with the amplitude profiled out and the
/// time constant found by a log-spaced scan followed by golden-section
/// refinement.
///
/// `values` are normalized (baseline 1). Fails with `FitDiverged` when the
/// optimum sits on the edge of the search range.
pub fn fit_exponential(
    times: &[f64],
    values: &[f64],
    t_max: f64,
    flank: Flank,
) -> Result<ExpFit, BreathHoldError> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(BreathHoldError::TooFewSamples { found: times.len() });
    }
    let excess: Vec<f64> = values.iter().map(|v| v - 1.0).collect();
    let sse_at = |log_tau: f64| profile(times, &excess, t_max, log_tau.exp(), flank).1;

    let (lo, hi) = (TAU_RANGE.0.ln(), TAU_RANGE.1.ln());
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| sse_at(lo + i as f64 * step))
        .collect();
    let best = (0..GRID_POINTS)
        .min_by(|&a, &b| grid[a].total_cmp(&grid[b]))
        .unwrap_or(0);
    if best == 0 || best == GRID_POINTS - 1 {
        return Err(BreathHoldError::FitDiverged);
    }
    let (mut a, mut b) = (lo + (best - 1) as f64 * step, lo + (best + 1) as f64 * step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (sse_at(c), sse_at(d));
    for _ in 0..MAX_ITER {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sse_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sse_at(d);
        }
    }
    if (b - a).abs() >= 1e-6 {
        return Err(BreathHoldError::FitDiverged);
    }
    let tau = (0.5 * (a + b)).exp();
    let (amplitude, sse) = profile(times, &excess, t_max, tau, flank);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sst: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let quality = if sst > 0.0 { 1.0 - sse / sst } else { 0.0 };
    Ok(ExpFit {
        tau,
        amplitude,
        quality,
        samples: times.len(),
    })
}
