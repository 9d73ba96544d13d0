//! Flat `key = value` configuration with `#` comments.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::breathhold::{BreathHoldAnnotation, BreathHoldConfig};
use crate::cardiac::CardiacConfig;
use crate::synth::{SessionScript, SpecklePhysics, SynthError, SynthOptions};
use crate::trace::AcquisitionConfig;

/// Parsed entries with the line each came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pub entries: BTreeMap<String, (String, usize)>,
}

impl FromStr for KeyValues {
    type Err = IoError;

    fn from_str(text: &str) -> Result<Self, IoError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(IoError::Config {
                    line,
                    message: format!("expected key = value, got {content:?}"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(IoError::Config {
                    line,
                    message: format!("invalid key {k:?}"),
                });
            }
            if v.is_empty() {
                return Err(IoError::Config {
                    line,
                    message: format!("{k}: missing value"),
                });
            }
            if let Some((_, first)) = entries.insert(k.to_string(), (v.to_string(), line)) {
                return Err(IoError::Config {
                    line,
                    message: format!("{k}: duplicate key, first set on line {first}"),
                });
            }
        }
        Ok(Self { entries })
    }
}

/// Everything `simulate` needs: camera, speckle physics, session script and
/// the identifiers written to the annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub acquisition: AcquisitionConfig,
    pub physics: SpecklePhysics,
    pub options: SynthOptions,
    pub script: SessionScript,
    pub subject_id: String,
    pub session_id: String,
    pub risk_score: Option<u8>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            acquisition: AcquisitionConfig::default(),
            physics: SpecklePhysics::default(),
            options: SynthOptions::default(),
            script: SessionScript::default(),
            subject_id: "synthetic".into(),
            session_id: "1".into(),
            risk_score: Some(1),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, IoError> {
    value.parse().map_err(|_| IoError::Config {
        line,
        message: format!("{key}: cannot parse {value:?}"),
    })
}

impl SimulationConfig {
    /// Defaults overridden by the given entries. Unknown keys are errors.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, IoError> {
        let mut c = Self::default();
        for (key, (value, line)) in &kv.entries {
            let (v, l) = (value.as_str(), *line);
            let f = || parse::<f64>(key, v, l);
            let a = &mut c.acquisition;
            let p = &mut c.physics;
            let s = &mut c.script;
            match key.as_str() {
                "fps" => a.fps = f()?,
                "bit_depth" => a.bit_depth = parse(key, v, l)?,
                "gain" => a.gain = f()?,
                "read_noise" => a.read_noise = f()?,
                "dark_offset" => a.dark_offset = f()?,
                "exposure" => a.exposure = f()?,
                "roi_width" => a.roi_width = parse(key, v, l)?,
                "roi_height" => a.roi_height = parse(key, v, l)?,
                "tau_c" => p.tau_c = f()?,
                "beta" => p.beta = f()?,
                "speckle_px" => p.speckle_px = f()?,
                "mean_e" => p.mean_e = f()?,
                "camera_noise" => c.options.camera_noise = parse(key, v, l)?,
                "min_substeps" => c.options.min_substeps = parse(key, v, l)?,
                "duration" => s.duration = f()?,
                "t_start" => s.t_start = f()?,
                "t_bh" => s.t_bh = f()?,
                "flow_amplitude" => s.flow.amplitude = f()?,
                "flow_peak_delay" => s.flow.peak_delay = f()?,
                "flow_tau_growth" => s.flow.tau_growth = f()?,
                "flow_tau_decay" => s.flow.tau_decay = f()?,
                "flow_rounding" => s.flow.rounding = f()?,
                "volume_amplitude" => s.volume.amplitude = f()?,
                "volume_peak_delay" => s.volume.peak_delay = f()?,
                "volume_tau_growth" => s.volume.tau_growth = f()?,
                "volume_tau_decay" => s.volume.tau_decay = f()?,
                "volume_rounding" => s.volume.rounding = f()?,
                "hr_rest_bpm" => s.heart_rate.rest_bpm = f()?,
                "hr_peak_bpm" => s.heart_rate.peak_bpm = f()?,
                "pulsatility" => s.pulsatility = f()?,
                "volume_pulsatility" => s.volume_pulsatility = f()?,
                "pulse_rest_p1" => s.pulse_rest.p1 = f()?,
                "pulse_rest_p2" => s.pulse_rest.p2 = f()?,
                "pulse_rest_p3" => s.pulse_rest.p3 = f()?,
                "pulse_bh_p1" => s.pulse_bh.p1 = f()?,
                "pulse_bh_p2" => s.pulse_bh.p2 = f()?,
                "pulse_bh_p3" => s.pulse_bh.p3 = f()?,
                "initial_phase" => s.initial_phase = f()?,
                "subject_id" => c.subject_id = v.to_string(),
                "session_id" => c.session_id = v.to_string(),
                "risk_score" => c.risk_score = Some(parse(key, v, l)?),
                _ => {
                    return Err(IoError::Config {
                        line: l,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        Ok(c)
    }

    /// Range checks of every section. The first failing field is named.
    pub fn validate(&self) -> Result<(), SynthError> {
        self.acquisition.validate()?;
        self.physics.validate()?;
        self.script.validate()?;
        Ok(())
    }

    pub fn annotation(&self) -> BreathHoldAnnotation {
        BreathHoldAnnotation {
            t_start: self.script.t_start,
            t_bh: self.script.t_bh,
            subject_id: self.subject_id.clone(),
            session_id: self.session_id.clone(),
            risk_score: self.risk_score,
        }
    }
}

/// Processing and feature-extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Box filter length for the flow and volume indices; `None` disables.
    pub smooth_seconds: Option<f64>,
    /// Rest window used by `process` for the volume baseline, seconds.
    pub baseline_window: (f64, f64),
    pub cardiac: CardiacConfig,
    pub breathhold: BreathHoldConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            smooth_seconds: Some(crate::trace::DEFAULT_SMOOTHING_SECONDS),
            baseline_window: (0.0, crate::breathhold::BreathHoldAnnotation::MIN_REST),
            cardiac: CardiacConfig::default(),
            breathhold: BreathHoldConfig::default(),
        }
    }
}

/// A value that failed a range check, named by its config key.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidSetting {
    pub key: &'static str,
    pub reason: &'static str,
}

impl std::fmt::Display for InvalidSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.key, self.reason)
    }
}

impl AnalysisConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, IoError> {
        let mut c = Self::default();
        for (key, (value, line)) in &kv.entries {
            let (v, l) = (value.as_str(), *line);
            let f = || parse::<f64>(key, v, l);
            let (cc, bc) = (&mut c.cardiac, &mut c.breathhold);
            match key.as_str() {
                "smooth_seconds" => {
                    let s = f()?;
                    c.smooth_seconds = (s != 0.0).then_some(s);
                }
                "baseline_start" => c.baseline_window.0 = f()?,
                "baseline_end" => c.baseline_window.1 = f()?,
                "hr_window_seconds" => cc.window_seconds = f()?,
                "hr_step_seconds" => cc.step_seconds = f()?,
                "hr_band_low_hz" => cc.band_hz.0 = f()?,
                "hr_band_high_hz" => cc.band_hz.1 = f()?,
                "peak_factor" => cc.peak_factor = f()?,
                "prominence" => cc.prominence = f()?,
                "noise_factor" => cc.noise_factor = f()?,
                "min_pulses" => cc.min_pulses = parse(key, v, l)?,
                "post_window" => bc.post_window = f()?,
                "return_band" => bc.return_band = f()?,
                "epsilon_bhi" => bc.epsilon_bhi = f()?,
                "min_fit_quality" => bc.min_fit_quality = f()?,
                "min_amplitude" => bc.min_amplitude = f()?,
                _ => {
                    return Err(IoError::Config {
                        line: l,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), InvalidSetting> {
        let bad = |key, reason| Err(InvalidSetting { key, reason });
        if let Some(s) = self.smooth_seconds {
            if !(s > 0.0 && s.is_finite()) {
                return bad("smooth_seconds", "must be positive, or 0 to disable");
            }
        }
        let (a, b) = self.baseline_window;
        if !(a >= 0.0 && b > a) {
            return bad("baseline_end", "must be after baseline_start");
        }
        let c = &self.cardiac;
        if !(c.window_seconds > 0.0 && c.step_seconds > 0.0) {
            return bad("hr_window_seconds", "window and step must be positive");
        }
        if !(c.band_hz.0 > 0.0 && c.band_hz.1 > c.band_hz.0) {
            return bad("hr_band_high_hz", "band must be positive and increasing");
        }
        if !(c.peak_factor >= 1.0) {
            return bad("peak_factor", "must be at least 1");
        }
        if !(self.breathhold.post_window >= 0.0) {
            return bad("post_window", "must be non-negative");
        }
        if !(self.breathhold.return_band > 0.0) {
            return bad("return_band", "must be positive");
        }
        Ok(())
    }
}
