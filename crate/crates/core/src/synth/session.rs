use serde::{Deserialize, Serialize};

use super::generator::{calibrate_beta, SpeckleGenerator};
use super::physics::{
    exposure_ratio_for_contrast, normalized_contrast, SpecklePhysics, SynthOptions,
};
use super::script::{SessionScript, Timeline};
use super::SynthError;
use crate::trace::{AcquisitionConfig, Frame, FrameStream};

/// Scalar targets implied by a script, in the units the feature extractor
/// reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub bfi_change_pct: f64,
    pub bvi_change_pct: f64,
    pub bhi_f: f64,
    pub bhi_v: f64,
    pub bp_ratio: Option<f64>,
    pub t_peak_flow: f64,
    pub t_peak_volume: f64,
    pub peak_lag: f64,
    pub tau_growth: f64,
    pub tau_decay: f64,
    pub hr_rest_bpm: f64,
    pub hr_peak_bpm: f64,
    pub peaks_ratio_rest: f64,
    pub peaks_ratio_bh: f64,
    pub peaks_ratio_change: f64,
}

impl TruthSummary {
    pub fn from_script(script: &SessionScript) -> Self {
        let bfi = 100.0 * script.flow.amplitude;
        let bvi = 100.0 * script.volume.amplitude;
        let bhi_f = bfi / script.t_bh;
        let bhi_v = bvi / script.t_bh;
        let tf = script.flow.peak_time(script.t_start, script.t_bh);
        let tv = script.volume.peak_time(script.t_start, script.t_bh);
        let ratio = |p: &super::PulseShape| {
            let (h1, h2, _) = p.normalized();
            h2 / h1
        };
        let rest = ratio(&script.pulse_rest);
        let bh = ratio(&script.pulse_bh);
        Self {
            bfi_change_pct: bfi,
            bvi_change_pct: bvi,
            bhi_f,
            bhi_v,
            bp_ratio: (bhi_v.abs() > 0.0).then(|| bhi_f / bhi_v),
            t_peak_flow: tf,
            t_peak_volume: tv,
            peak_lag: tv - tf,
            tau_growth: script.flow.tau_growth,
            tau_decay: script.flow.tau_decay,
            hr_rest_bpm: script.heart_rate.rest_bpm,
            hr_peak_bpm: script.heart_rate.peak_bpm,
            peaks_ratio_rest: rest,
            peaks_ratio_bh: bh,
            peaks_ratio_change: bh / rest,
        }
    }
}

/// Exact inputs behind a synthetic session.
///
/// Per-frame curves are evaluated at the middle of each exposure;
/// `frame_t` holds the frame timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub script: SessionScript,
    pub physics: SpecklePhysics,
    pub config: AcquisitionConfig,
    /// Static-limit contrast measured on the generated field.
    pub beta_calibrated: f64,
    pub summary: TruthSummary,
    pub frame_t: Vec<f64>,
    pub flow: Vec<f64>,
    pub volume: Vec<f64>,
    pub hr_bpm: Vec<f64>,
    pub tau_c: Vec<f64>,
    pub mean_e: Vec<f64>,
    pub pulse_onsets: Vec<f64>,
}

/// Frame-by-frame session synthesis; yields frames in order without
/// holding the whole session in memory.
#[derive(Debug)]
pub struct SessionSynth {
    truth: GroundTruth,
    generator: SpeckleGenerator,
    next: usize,
}

impl SessionSynth {
    pub fn new(
        script: &SessionScript,
        physics: &SpecklePhysics,
        config: &AcquisitionConfig,
        seed: u64,
    ) -> Result<Self, SynthError> {
        Self::with_options(script, physics, config, &SynthOptions::default(), seed)
    }

    pub fn with_options(
        script: &SessionScript,
        physics: &SpecklePhysics,
        config: &AcquisitionConfig,
        options: &SynthOptions,
        seed: u64,
    ) -> Result<Self, SynthError> {
        config.validate()?;
        physics.validate()?;
        script.validate()?;
        if physics.tau_c.is_infinite() {
            return Err(SynthError::InvalidPhysics {
                field: "tau_c",
                reason: "must be finite for a session".into(),
            });
        }
        let n = (script.duration * config.fps).round() as usize;
        if n == 0 {
            return Err(SynthError::NoFrames);
        }
        let frame_t: Vec<f64> = (0..n).map(|k| k as f64 / config.fps).collect();
        let mid: Vec<f64> = frame_t.iter().map(|t| t + 0.5 * config.exposure).collect();
        let Timeline {
            flow,
            volume,
            hr_bpm,
            pulse_onsets,
            ..
        } = script.sample(&mid)?;

        // Pick τ_c so that the expected flow index 1/K² scales exactly with
        // flow, rather than only to first order.
        let base = normalized_contrast(config.exposure / physics.tau_c);
        let tau_c = flow
            .iter()
            .map(|&f| {
                exposure_ratio_for_contrast(base / f)
                    .map(|x| config.exposure / x)
                    .ok_or_else(|| SynthError::InvalidScript(format!("flow multiplier {f} cannot be reached from the baseline decorrelation time")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mean_e = volume.iter().map(|v| physics.mean_e / v).collect();
        let truth = GroundTruth {
            seed,
            script: *script,
            physics: *physics,
            config: *config,
            beta_calibrated: calibrate_beta(physics, config, seed)?,
            summary: TruthSummary::from_script(script),
            frame_t,
            flow,
            volume,
            hr_bpm,
            tau_c,
            mean_e,
            pulse_onsets,
        };
        Ok(Self {
            truth,
            generator: SpeckleGenerator::new(*physics, *config, *options, seed)?,
            next: 0,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.truth.frame_t.len()
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn into_ground_truth(self) -> GroundTruth {
        self.truth
    }
}

impl Iterator for SessionSynth {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        let k = self.next;
        if k >= self.frame_count() {
            return None;
        }
        self.next += 1;
        Some(
            self.generator
                .next_frame(self.truth.tau_c[k], self.truth.mean_e[k]),
        )
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.frame_count() - self.next;
        (left, Some(left))
    }
}

/// Whole session in memory. Prefer [`SessionSynth`] for long sessions.
pub fn synthesize_breathhold_session(
    script: &SessionScript,
    physics: &SpecklePhysics,
    config: &AcquisitionConfig,
    seed: u64,
) -> Result<(FrameStream, GroundTruth), SynthError> {
    let mut synth = SessionSynth::new(script, physics, config, seed)?;
    let mut stream = FrameStream::new(*config);
    stream.frames.extend(&mut synth);
    Ok((stream, synth.into_ground_truth()))
}
