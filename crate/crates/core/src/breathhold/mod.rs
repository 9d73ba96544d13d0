//! Breath-hold response features: holding indices, their ratio, response
//! time constants and the timing of the flow and volume peaks.

mod features;
mod fit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{HemodynamicTrace, TraceError};

pub use features::{
    analyze_session, extract_feature_set, prepare_trace, CardiacOutputs, Feature, FeatureSet,
};
pub use fit::{fit_exponential, ExpFit, Flank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreathHoldAnnotation {
    #[serde(rename = "t_start_s")]
    pub t_start: f64,
    #[serde(rename = "t_bh_s")]
    pub t_bh: f64,
    pub subject_id: String,
    pub session_id: String,
    pub risk_score: Option<u8>,
}

impl BreathHoldAnnotation {
    pub const MIN_REST: f64 = 30.0;
    pub const BH_RANGE: (f64, f64) = (5.0, 120.0);
    pub const MIN_RECOVERY: f64 = 10.0;

    /// Checks the annotation against a session of `duration` seconds.
    pub fn validate(&self, duration: f64) -> Result<(), BreathHoldError> {
        let out = |reason: &str| {
            Err(BreathHoldError::AnnotationOutOfRange {
                reason: reason.to_string(),
            })
        };
        if !(self.t_start >= Self::MIN_REST) {
            return out("t_start must leave at least 30 s of rest");
        }
        if !(self.t_bh >= Self::BH_RANGE.0 && self.t_bh <= Self::BH_RANGE.1) {
            return out("t_bh must lie in [5, 120] s");
        }
        if !(self.t_start + self.t_bh < duration - Self::MIN_RECOVERY) {
            return out("breath-hold must end at least 10 s before the session ends");
        }
        if let Some(s) = self.risk_score {
            if !(1..=10).contains(&s) {
                return out("risk score must be a decile 1 to 10");
            }
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.t_bh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreathHoldConfig {
    /// Peak search continues this long after the breath-hold ends, seconds.
    pub post_window: f64,
    /// Relative band around baseline that counts as recovered.
    pub return_band: f64,
    /// Smallest volume index that can divide the flow index, %/s.
    pub epsilon_bhi: f64,
    pub min_fit_quality: f64,
    /// Smallest peak change that can be fitted, relative to baseline.
    pub min_amplitude: f64,
    pub min_fit_samples: usize,
    /// Maximum heart rate is searched up to this long after `t_max`.
    pub hr_max_extra: f64,
}

impl Default for BreathHoldConfig {
    fn default() -> Self {
        Self {
            post_window: 10.0,
            return_band: 0.02,
            epsilon_bhi: 0.01,
            min_fit_quality: 0.5,
            min_amplitude: 0.05,
            min_fit_samples: 10,
            hr_max_extra: 10.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BreathHoldError {
    #[error("annotation out of range: {reason}")]
    AnnotationOutOfRange { reason: String },
    #[error("volume index {bhi_v} %/s is too small to form a ratio")]
    VolumeResponseTooSmall { bhi_v: f64 },
    #[error("response of {amplitude} relative to baseline is too small to fit")]
    DegenerateResponse { amplitude: f64 },
    #[error("exponential fit did not converge inside the search range")]
    FitDiverged,
    #[error("{found} samples available for a fit")]
    TooFewSamples { found: usize },
    #[error("no valid samples in the response window")]
    NoValidSamples,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Index {
    Flow,
    Volume,
}

/// Valid samples of one index relative to its baseline.
pub fn relative_series(
    trace: &HemodynamicTrace,
    which: Index,
) -> Result<(Vec<f64>, Vec<f64>), BreathHoldError> {
    let scale = match which {
        Index::Flow if !trace.normalized => {
            1.0 / trace.baseline.ok_or(TraceError::BaselineMissing)?.bfi
        }
        _ => 1.0,
    };
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for s in &trace.samples {
        let x = match which {
            Index::Flow => s.bfi,
            Index::Volume => s.bvi,
        };
        if let Some(x) = x {
            t.push(s.t);
            v.push(x * scale);
        }
    }
    Ok((t, v))
}

/// Time and relative height of the largest value in `[t0, t1]`.
fn peak_in(times: &[f64], values: &[f64], t0: f64, t1: f64) -> Option<(f64, f64)> {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .fold(None, |best: Option<(f64, f64)>, (&t, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((t, v)),
        })
}

/// Holding indices and peak timing of one session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BhiResult {
    /// Flow index at baseline in trace units (1 for a normalized trace).
    pub bfi_0: f64,
    pub bfi_max: f64,
    pub bvi_max: f64,
    /// Time of the flow peak, seconds.
    pub t_max: f64,
    pub t_max_bvi: f64,
    pub bfi_change: f64,
    pub bvi_change: f64,
    pub bhi_f: f64,
    pub bhi_v: f64,
    /// `t_max_bvi − t_max`.
    pub peak_lag: f64,
    /// False when the flow never rises above baseline.
    pub flow_response: bool,
    pub volume_response: bool,
}

/// Holding indices with the peak searched in `[window.0, window.1]` and
/// the change divided by `t_bh`.
pub fn compute_bhi_window(
    trace: &HemodynamicTrace,
    t_bh: f64,
    window: (f64, f64),
) -> Result<BhiResult, BreathHoldError> {
    let (tf, vf) = relative_series(trace, Index::Flow)?;
    let (tv, vv) = relative_series(trace, Index::Volume)?;
    let (t_max, bfi_max) =
        peak_in(&tf, &vf, window.0, window.1).ok_or(BreathHoldError::NoValidSamples)?;
    let (t_max_bvi, bvi_max) =
        peak_in(&tv, &vv, window.0, window.1).ok_or(BreathHoldError::NoValidSamples)?;
    let bfi_change = 100.0 * (bfi_max - 1.0);
    let bvi_change = 100.0 * (bvi_max - 1.0);
    let bfi_0 = if trace.normalized {
        1.0
    } else {
        trace.baseline.ok_or(TraceError::BaselineMissing)?.bfi
    };
    Ok(BhiResult {
        bfi_0,
        bfi_max,
        bvi_max,
        t_max,
        t_max_bvi,
        bfi_change,
        bvi_change,
        bhi_f: bfi_change / t_bh,
        bhi_v: bvi_change / t_bh,
        peak_lag: t_max_bvi - t_max,
        flow_response: bfi_max >= 1.0,
        volume_response: bvi_max >= 1.0,
    })
}

/// Holding indices over the breath-hold plus the post-hold window.
pub fn compute_bhi(
    trace: &HemodynamicTrace,
    annotation: &BreathHoldAnnotation,
    config: &BreathHoldConfig,
) -> Result<BhiResult, BreathHoldError> {
    annotation.validate(trace.duration())?;
    let window = (annotation.t_start, annotation.t_end() + config.post_window);
    compute_bhi_window(trace, annotation.t_bh, window)
}

/// `bhi_f / bhi_v`.
pub fn compute_bp_ratio(
    bhi_f: f64,
    bhi_v: f64,
    config: &BreathHoldConfig,
) -> Result<f64, BreathHoldError> {
    if !(bhi_v > config.epsilon_bhi) {
        return Err(BreathHoldError::VolumeResponseTooSmall { bhi_v });
    }
    Ok(bhi_f / bhi_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseFit {
    pub t_max: f64,
    /// Peak change relative to baseline.
    pub amplitude: f64,
    /// First time after the peak back inside the baseline band, or the end
    /// of the trace.
    pub t_return: f64,
    pub growth: ExpFit,
    pub decay: ExpFit,
    pub growth_valid: bool,
    pub decay_valid: bool,
}

impl ResponseFit {
    pub fn tau_growth(&self) -> f64 {
        self.growth.tau
    }

    pub fn tau_decay(&self) -> f64 {
        self.decay.tau
    }
}

/// Rise and recovery time constants of one index.
pub fn fit_response(
    trace: &HemodynamicTrace,
    annotation: &BreathHoldAnnotation,
    which: Index,
    config: &BreathHoldConfig,
) -> Result<ResponseFit, BreathHoldError> {
    annotation.validate(trace.duration())?;
    let (t, v) = relative_series(trace, which)?;
    let (t_max, peak) = peak_in(
        &t,
        &v,
        annotation.t_start,
        annotation.t_end() + config.post_window,
    )
    .ok_or(BreathHoldError::NoValidSamples)?;
    fit_around_peak(&t, &v, annotation.t_start, t_max, peak, config)
}

/// Fits both flanks of a response peaking at `(t_max, peak)`.
pub fn fit_around_peak(
    t: &[f64],
    v: &[f64],
    t_start: f64,
    t_max: f64,
    peak: f64,
    config: &BreathHoldConfig,
) -> Result<ResponseFit, BreathHoldError> {
    let amplitude = peak - 1.0;
    if !(amplitude >= config.min_amplitude) {
        return Err(BreathHoldError::DegenerateResponse { amplitude });
    }
    let t_return = t
        .iter()
        .zip(v)
        .find(|(&ti, &vi)| ti > t_max && (vi - 1.0).abs() <= config.return_band)
        .map_or_else(|| *t.last().unwrap_or(&t_max), |(&ti, _)| ti);
    let take = |a: f64, b: f64| -> (Vec<f64>, Vec<f64>) {
        t.iter()
            .zip(v)
            .filter(|(ti, _)| **ti >= a && **ti <= b)
            .map(|(ti, vi)| (*ti, *vi))
            .unzip()
    };
    let (gt, gv) = take(t_start, t_max);
    let (dt, dv) = take(t_max, t_return);
    for n in [gt.len(), dt.len()] {
        if n < config.min_fit_samples {
            return Err(BreathHoldError::TooFewSamples { found: n });
        }
    }
    let growth = fit_exponential(&gt, &gv, t_max, Flank::Growth)?;
    let decay = fit_exponential(&dt, &dv, t_max, Flank::Decay)?;
    Ok(ResponseFit {
        t_max,
        amplitude,
        t_return,
        growth,
        decay,
        growth_valid: growth.quality >= config.min_fit_quality,
        decay_valid: decay.quality >= config.min_fit_quality,
    })
}
