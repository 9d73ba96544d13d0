use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{fill_gaps, CardiacConfig, CardiacError};
use crate::trace::HemodynamicTrace;

/// Heart rate in one analysis window, time-stamped at the window centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartRateSample {
    pub t: f64,
    pub hr_bpm: Option<f64>,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeartRateTrace {
    pub samples: Vec<HeartRateSample>,
}

impl HeartRateTrace {
    fn valid_in(&self, t0: f64, t1: f64) -> impl Iterator<Item = f64> + '_ {
        self.samples
            .iter()
            .filter(move |s| s.t >= t0 && s.t <= t1)
            .filter_map(|s| s.hr_bpm)
    }

    pub fn mean_over(&self, t0: f64, t1: f64) -> Option<f64> {
        let (sum, n) = self
            .valid_in(t0, t1)
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn max_over(&self, t0: f64, t1: f64) -> Option<f64> {
        self.valid_in(t0, t1).reduce(f64::max)
    }

    /// Rate of the valid sample nearest to `t`, if one lies within `reach`
    /// seconds.
    pub fn nearest(&self, t: f64, reach: f64) -> Option<f64> {
        self.samples
            .iter()
            .filter(|s| s.hr_bpm.is_some() && (s.t - t).abs() <= reach)
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .and_then(|s| s.hr_bpm)
    }
}

fn detrend(x: &mut [f64]) {
    let n = x.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let d = i as f64 - tm;
        sxy += d * (v - xm);
        sxx += d * d;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    for (i, v) in x.iter_mut().enumerate() {
        *v -= xm + slope * (i as f64 - tm);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A peak near half the strongest frequency at least this tall relative to
/// it is taken as the fundamental.
pub const SUBHARMONIC_RATIO: f64 = 0.5;

/// Dominant cardiac frequency of one window: `(Hz, confidence)`.
///
/// The window is detrended and Hann-tapered; the largest local maximum of
/// the magnitude spectrum inside the band is refined by fitting a parabola
/// to the log magnitudes of the peak bin and its neighbours.
pub fn spectral_peak(
    window: &[f64],
    fps: f64,
    config: &CardiacConfig,
) -> Result<(f64, f64), CardiacError> {
    let n = window.len();
    let mut x = window.to_vec();
    detrend(&mut x);
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            Complex::new(v * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf[..n / 2 + 1].iter().map(|c| c.norm()).collect();
    let df = fps / n as f64;
    let lo = ((config.band_hz.0 / df).ceil() as usize).max(1);
    let hi = ((config.band_hz.1 / df).floor() as usize).min(mag.len() - 2);
    if lo > hi {
        return Err(CardiacError::NoCardiacPeak);
    }
    let band = &mag[lo..=hi];
    let med = median(band.to_vec());
    let peak = (lo..=hi)
        .filter(|&k| mag[k] > mag[k - 1] && mag[k] >= mag[k + 1])
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]));
    let Some(mut k) = peak else {
        return Err(CardiacError::NoCardiacPeak);
    };
    // Pulse waveforms carry strong harmonics; a comparable peak near half the
    // frequency is the fundamental.
    while k / 2 >= lo {
        let half = (k as f64 / 2.0).round() as usize;
        let sub = (half.saturating_sub(1).max(lo)..=(half + 1).min(hi))
            .filter(|&j| mag[j] > mag[j - 1] && mag[j] >= mag[j + 1])
            .max_by(|&a, &b| mag[a].total_cmp(&mag[b]));
        match sub {
            Some(j)
                if mag[j] >= SUBHARMONIC_RATIO * mag[k] && mag[j] > config.peak_factor * med =>
            {
                k = j
            }
            _ => break,
        }
    }
    // Rounding residue of a constant window is not a rhythm.
    let scale = window.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(mag[k] > config.peak_factor * med) || mag[k] <= 1e-9 * scale * n as f64 {
        return Err(CardiacError::NoCardiacPeak);
    }
    let (a, b, c) = (
        mag[k - 1].max(1e-300).ln(),
        mag[k].ln(),
        mag[k + 1].max(1e-300).ln(),
    );
    let denom = a - 2.0 * b + c;
    let shift = if denom < 0.0 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let confidence = (1.0 - config.peak_factor * med / mag[k]).clamp(0.0, 1.0);
    Ok(((k as f64 + shift) * df, confidence))
}

/// Sliding-window heart rate of a sampled signal.
pub fn heart_rate_of_signal(
    values: &[Option<f64>],
    t0: f64,
    fps: f64,
    config: &CardiacConfig,
) -> Result<HeartRateTrace, CardiacError> {
    if fps < 10.0 {
        return Err(CardiacError::FrameRateTooLow { fps });
    }
    let w = (config.window_seconds * fps).round() as usize;
    if values.len() < w || w < 8 {
        return Err(CardiacError::TraceTooShort {
            seconds: values.len() as f64 / fps,
            required: config.window_seconds,
        });
    }
    let filled = fill_gaps(values).ok_or(CardiacError::NoValidSamples)?;
    let step = ((config.step_seconds * fps).round() as usize).max(1);
    let starts: Vec<usize> = (0..=values.len() - w).step_by(step).collect();
    let samples = starts
        .par_iter()
        .map(|&s| {
            let t = t0 + (s as f64 + (w as f64 - 1.0) / 2.0) / fps;
            // Windows made mostly of interpolated gaps carry no rate.
            let valid = values[s..s + w].iter().filter(|v| v.is_some()).count();
            if valid * 2 < w {
                return HeartRateSample {
                    t,
                    hr_bpm: None,
                    confidence: 0.0,
                };
            }
            match spectral_peak(&filled[s..s + w], fps, config) {
                Ok((hz, confidence)) => HeartRateSample {
                    t,
                    hr_bpm: Some(hz * 60.0),
                    confidence,
                },
                Err(_) => HeartRateSample {
                    t,
                    hr_bpm: None,
                    confidence: 0.0,
                },
            }
        })
        .collect();
    Ok(HeartRateTrace { samples })
}

/// Heart rate from the unsmoothed flow index of a trace.
pub fn heart_rate(
    trace: &HemodynamicTrace,
    config: &CardiacConfig,
) -> Result<HeartRateTrace, CardiacError> {
    let t0 = trace.samples.first().map_or(0.0, |s| s.t);
    heart_rate_of_signal(&trace.bfi(), t0, trace.fps, config)
}
