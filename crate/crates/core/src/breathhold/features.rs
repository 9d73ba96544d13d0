use serde::{Deserialize, Serialize};

use super::{
    compute_bhi, compute_bp_ratio, fit_response, BreathHoldAnnotation, BreathHoldConfig,
    BreathHoldError, Index,
};
use crate::cardiac::{
    heart_rate, peaks_ratio_summary, segment_pulses, CardiacConfig, CardiacError, HeartRateTrace,
    PeaksRatioSummary,
};
use crate::trace::{HemodynamicTrace, TraceError};

/// One scalar feature. Invalid features keep their value when one could be
/// computed, so downstream code can still inspect it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub value: Option<f64>,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Feature {
    pub fn ok(value: f64) -> Self {
        if value.is_finite() {
            Self {
                value: Some(value),
                valid: true,
                reason: None,
            }
        } else {
            Self::invalid(None, "not finite")
        }
    }

    pub fn invalid(value: Option<f64>, reason: impl ToString) -> Self {
        Self {
            value: value.filter(|v| v.is_finite()),
            valid: false,
            reason: Some(reason.to_string()),
        }
    }

    pub fn missing(reason: impl ToString) -> Self {
        Self::invalid(None, reason)
    }

    /// The value, if the feature is valid.
    pub fn get(&self) -> Option<f64> {
        self.value.filter(|_| self.valid)
    }
}

/// Heart-rate and morphology results for the same session.
#[derive(Debug, Clone)]
pub struct CardiacOutputs {
    pub heart_rate: Result<HeartRateTrace, CardiacError>,
    pub peaks: Result<PeaksRatioSummary, CardiacError>,
    /// Length of the heart-rate window, seconds.
    pub window_seconds: f64,
}

impl CardiacOutputs {
    /// Heart rate and peaks ratios from the unsmoothed flow trace.
    pub fn analyze(
        trace: &HemodynamicTrace,
        annotation: &BreathHoldAnnotation,
        config: &CardiacConfig,
    ) -> Self {
        let heart_rate = heart_rate(trace, config);
        let peaks = heart_rate.as_ref().map_err(Clone::clone).and_then(|hr| {
            let segs = segment_pulses(trace, hr, config)?;
            peaks_ratio_summary(
                &segs,
                (0.0, annotation.t_start),
                (annotation.t_start, annotation.t_end()),
                config,
            )
        });
        Self {
            heart_rate,
            peaks,
            window_seconds: config.window_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub subject_id: String,
    pub session_id: String,
    pub risk_score: Option<u8>,
    pub t_start: f64,
    /// Baseline flow index in raw trace units.
    pub bfi_0: Feature,
    /// Peak flow and volume relative to baseline.
    pub bfi_max: Feature,
    pub bvi_max: Feature,
    pub bhi_f: Feature,
    pub bhi_v: Feature,
    pub bp_ratio: Feature,
    pub bfi_change: Feature,
    pub bvi_change: Feature,
    pub tau_growth: Feature,
    pub tau_decay: Feature,
    pub growth_quality: Feature,
    pub decay_quality: Feature,
    pub t_max: Feature,
    pub t_bh: Feature,
    pub peak_lag: Feature,
    pub hr_rest: Feature,
    pub hr_max: Feature,
    pub peaks_ratio_resting: Feature,
    pub peaks_ratio_bh: Feature,
    pub peaks_ratio_of_ratios: Feature,
}

impl FeatureSet {
    /// Names accepted by [`FeatureSet::feature`], in report order.
    pub const NAMES: [&'static str; 18] = [
        "bhi_f",
        "bhi_v",
        "bp_ratio",
        "bfi_change",
        "bvi_change",
        "tau_growth",
        "tau_decay",
        "t_max",
        "t_bh",
        "peak_lag",
        "hr_rest",
        "hr_max",
        "peaks_ratio_resting",
        "peaks_ratio_bh",
        "peaks_ratio_of_ratios",
        "bfi_max",
        "bvi_max",
        "bfi_0",
    ];

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        Some(match name {
            "bfi_0" => &self.bfi_0,
            "bfi_max" => &self.bfi_max,
            "bvi_max" => &self.bvi_max,
            "bhi_f" => &self.bhi_f,
            "bhi_v" => &self.bhi_v,
            "bp_ratio" => &self.bp_ratio,
            "bfi_change" => &self.bfi_change,
            "bvi_change" => &self.bvi_change,
            "tau_growth" => &self.tau_growth,
            "tau_decay" => &self.tau_decay,
            "t_max" => &self.t_max,
            "t_bh" => &self.t_bh,
            "peak_lag" => &self.peak_lag,
            "hr_rest" => &self.hr_rest,
            "hr_max" => &self.hr_max,
            "peaks_ratio_resting" => &self.peaks_ratio_resting,
            "peaks_ratio_bh" => &self.peaks_ratio_bh,
            "peaks_ratio_of_ratios" => &self.peaks_ratio_of_ratios,
            _ => return None,
        })
    }
}

/// Assembles every feature of one session. `trace` is the smoothed trace
/// with a baseline; component failures only mark the affected features
/// invalid. Only an out-of-range annotation is an error.
pub fn extract_feature_set(
    trace: &HemodynamicTrace,
    annotation: &BreathHoldAnnotation,
    cardiac: &CardiacOutputs,
    config: &BreathHoldConfig,
) -> Result<FeatureSet, BreathHoldError> {
    annotation.validate(trace.duration())?;
    let bhi = compute_bhi(trace, annotation, config);
    let all = |e: &BreathHoldError| Feature::missing(e);

    let (bfi_0, bfi_max, bvi_max, bhi_f, bhi_v, bp_ratio, bfi_change, bvi_change, t_max, peak_lag);
    match &bhi {
        Ok(r) => {
            bfi_0 = Feature::ok(r.bfi_0);
            bfi_max = Feature::ok(r.bfi_max);
            bvi_max = Feature::ok(r.bvi_max);
            bhi_f = if r.flow_response {
                Feature::ok(r.bhi_f)
            } else {
                Feature::invalid(Some(r.bhi_f), "no flow response: peak below baseline")
            };
            bhi_v = Feature::ok(r.bhi_v);
            bp_ratio = match (bhi_f.get(), compute_bp_ratio(r.bhi_f, r.bhi_v, config)) {
                (Some(_), Ok(v)) => Feature::ok(v),
                (None, Ok(v)) => Feature::invalid(Some(v), "flow index invalid"),
                (_, Err(e)) => Feature::missing(e),
            };
            bfi_change = Feature::ok(r.bfi_change);
            bvi_change = Feature::ok(r.bvi_change);
            t_max = Feature::ok(r.t_max);
            peak_lag = Feature::ok(r.peak_lag);
        }
        Err(e) => {
            bfi_0 = all(e);
            bfi_max = all(e);
            bvi_max = all(e);
            bhi_f = all(e);
            bhi_v = all(e);
            bp_ratio = all(e);
            bfi_change = all(e);
            bvi_change = all(e);
            t_max = all(e);
            peak_lag = all(e);
        }
    }

    let (tau_growth, tau_decay, growth_quality, decay_quality) =
        match fit_response(trace, annotation, Index::Flow, config) {
            Ok(f) => {
                let tau = |v: f64, ok: bool, q: f64| {
                    if ok {
                        Feature::ok(v)
                    } else {
                        Feature::invalid(
                            Some(v),
                            format!("fit quality {q:.3} below {}", config.min_fit_quality),
                        )
                    }
                };
                (
                    tau(f.growth.tau, f.growth_valid, f.growth.quality),
                    tau(f.decay.tau, f.decay_valid, f.decay.quality),
                    Feature::ok(f.growth.quality),
                    Feature::ok(f.decay.quality),
                )
            }
            Err(e) => (all(&e), all(&e), all(&e), all(&e)),
        };

    let (hr_rest, hr_max) = match &cardiac.heart_rate {
        Ok(hr) => {
            // Rest windows must end before the hold starts.
            let rest = hr
                .mean_over(0.0, annotation.t_start - cardiac.window_seconds / 2.0)
                .map_or_else(
                    || Feature::missing("no valid heart rate at rest"),
                    Feature::ok,
                );
            let end = t_max.value.unwrap_or(annotation.t_end()) + config.hr_max_extra;
            let max = hr.max_over(annotation.t_start, end).map_or_else(
                || Feature::missing("no valid heart rate during the response"),
                Feature::ok,
            );
            (rest, max)
        }
        Err(e) => (Feature::missing(e), Feature::missing(e)),
    };

    let (peaks_ratio_resting, peaks_ratio_bh, peaks_ratio_of_ratios) = match &cardiac.peaks {
        Ok(p) => (
            Feature::ok(p.ratio_resting),
            Feature::ok(p.ratio_bh),
            Feature::ok(p.ratio_of_ratios),
        ),
        Err(e) => (
            Feature::missing(e),
            Feature::missing(e),
            Feature::missing(e),
        ),
    };

    Ok(FeatureSet {
        subject_id: annotation.subject_id.clone(),
        session_id: annotation.session_id.clone(),
        risk_score: annotation.risk_score,
        t_start: annotation.t_start,
        bfi_0,
        bfi_max,
        bvi_max,
        bhi_f,
        bhi_v,
        bp_ratio,
        bfi_change,
        bvi_change,
        tau_growth,
        tau_decay,
        growth_quality,
        decay_quality,
        t_max,
        t_bh: Feature::ok(annotation.t_bh),
        peak_lag,
        hr_rest,
        hr_max,
        peaks_ratio_resting,
        peaks_ratio_bh,
        peaks_ratio_of_ratios,
    })
}

/// Indices rebuilt from the per-frame columns, baseline over the rest
/// period, optional box smoothing and normalization.
pub fn prepare_trace(
    raw: &HemodynamicTrace,
    annotation: &BreathHoldAnnotation,
    smooth_seconds: Option<f64>,
) -> Result<HemodynamicTrace, TraceError> {
    let mut t = raw.reindexed();
    t.compute_baseline((0.0, annotation.t_start))?;
    if let Some(s) = smooth_seconds {
        t = t.smoothed(s)?;
    }
    t.normalized()
}

/// Full single-session analysis of a raw trace.
pub fn analyze_session(
    raw: &HemodynamicTrace,
    annotation: &BreathHoldAnnotation,
    smooth_seconds: Option<f64>,
    cardiac_config: &CardiacConfig,
    config: &BreathHoldConfig,
) -> Result<FeatureSet, BreathHoldError> {
    annotation.validate(raw.duration())?;
    let prepared = prepare_trace(raw, annotation, smooth_seconds)?;
    let unsmoothed = prepare_trace(raw, annotation, None)?;
    let cardiac = CardiacOutputs::analyze(&unsmoothed, annotation, cardiac_config);
    extract_feature_set(&prepared, annotation, &cardiac, config)
}

#[cfg(test)]
mod tests {
    use super::super::tests::synthetic_trace;
    use super::*;
    use crate::cardiac::HeartRateSample;

    fn ann() -> BreathHoldAnnotation {
        BreathHoldAnnotation {
            t_start: 60.0,
            t_bh: 35.0,
            subject_id: "a".into(),
            session_id: "1".into(),
            risk_score: Some(4),
        }
    }

    fn response(t: f64) -> f64 {
        let tmax = 98.0;
        if t < 60.0 {
            1.0
        } else if t <= tmax {
            1.0 + 0.44 * ((t - tmax) / 16.3).exp()
        } else {
            1.0 + 0.44 * (-(t - tmax) / 8.0).exp()
        }
    }

    fn cardiac() -> CardiacOutputs {
        let samples = (10..170)
            .map(|t| HeartRateSample {
                t: t as f64,
                hr_bpm: Some(if t < 60 {
                    68.0
                } else if t < 100 {
                    68.0 + (t - 60) as f64 * 0.4
                } else {
                    70.0
                }),
                confidence: 0.9,
            })
            .collect();
        CardiacOutputs {
            heart_rate: Ok(HeartRateTrace { samples }),
            peaks: Ok(PeaksRatioSummary {
                ratio_resting: 0.84,
                ratio_bh: 1.04,
                ratio_of_ratios: 1.04 / 0.84,
                n_pulses_resting: 60,
                n_pulses_bh: 40,
            }),
            window_seconds: 20.0,
        }
    }

    #[test]
    fn all_features_on_a_clean_response() {
        let tr = synthetic_trace(60.0, 180.0, response, |t| {
            1.0 + 0.5 * (response(t - 1.4) - 1.0)
        });
        let f = extract_feature_set(&tr, &ann(), &cardiac(), &BreathHoldConfig::default()).unwrap();
        assert!((f.bhi_f.get().unwrap() - 44.0 / 35.0).abs() < 1e-9);
        assert!((f.bp_ratio.get().unwrap() - 2.0).abs() < 1e-3);
        assert!((f.tau_growth.get().unwrap() - 16.3).abs() < 0.02);
        assert!((f.tau_decay.get().unwrap() - 8.0).abs() < 0.02);
        assert!((f.peak_lag.get().unwrap() - 1.4).abs() < 1.0 / 60.0);
        assert_eq!(f.hr_rest.get(), Some(68.0));
        assert!((f.hr_max.get().unwrap() - 83.6).abs() < 1e-9);
        assert_eq!(f.peaks_ratio_bh.get(), Some(1.04));
    }

    #[test]
    fn flat_volume_invalidates_only_the_ratio() {
        let tr = synthetic_trace(60.0, 180.0, response, |_| 1.0);
        let f = extract_feature_set(&tr, &ann(), &cardiac(), &BreathHoldConfig::default()).unwrap();
        assert!(!f.bp_ratio.valid);
        for name in FeatureSet::NAMES.iter().filter(|n| **n != "bp_ratio") {
            assert!(f.feature(name).unwrap().valid, "{name}");
        }
        let json = serde_json::to_value(&f).unwrap();
        assert_eq!(json["bp_ratio"]["valid"], false);
    }

    #[test]
    fn cardiac_failure_is_per_feature() {
        let tr = synthetic_trace(60.0, 180.0, response, response);
        let c = CardiacOutputs {
            heart_rate: Err(CardiacError::NoValidSamples),
            peaks: Err(CardiacError::InsufficientPulses {
                t0: 0.0,
                t1: 60.0,
                found: 4,
                required: 5,
            }),
            window_seconds: 20.0,
        };
        let f = extract_feature_set(&tr, &ann(), &c, &BreathHoldConfig::default()).unwrap();
        assert!(!f.hr_rest.valid && !f.hr_max.valid && !f.peaks_ratio_of_ratios.valid);
        assert!(f.bhi_f.valid && f.tau_decay.valid);
        assert!(f
            .peaks_ratio_resting
            .reason
            .as_deref()
            .unwrap()
            .contains("4 usable pulses"));
    }

    #[test]
    fn falling_flow_is_reported_but_invalid() {
        let tr = synthetic_trace(60.0, 180.0, |t| if t > 55.0 { 0.9 } else { 1.0 }, response);
        let f = extract_feature_set(&tr, &ann(), &cardiac(), &BreathHoldConfig::default()).unwrap();
        assert!(!f.bhi_f.valid);
        assert!(f.bhi_f.value.unwrap() < 0.0);
        assert!(!f.bp_ratio.valid && !f.tau_growth.valid);
    }

    #[test]
    fn annotation_past_the_trace_is_an_error() {
        let tr = synthetic_trace(60.0, 100.0, response, response);
        assert!(
            extract_feature_set(&tr, &ann(), &cardiac(), &BreathHoldConfig::default()).is_err()
        );
    }
}
