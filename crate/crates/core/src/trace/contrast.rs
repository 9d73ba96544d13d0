//! Per-frame speckle contrast and the derived flow and volume indices.

use serde::{Deserialize, Serialize};

use super::{AcquisitionConfig, Frame, FrameMoments, TraceError};

/// Adjusted contrast at or below this value cannot be inverted into a flow
/// index; the sample is marked invalid.
pub const EPSILON_CONTRAST: f64 = 1e-4;

/// Summary statistics of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastSample {
    pub t: f64,
    pub mean_adu: f64,
    pub k_raw_sq: f64,
    pub k_adj_sq: f64,
}

/// Camera noise terms subtracted from the raw contrast.
///
/// With `μ_e = (mean_adu − dark_offset)·gain` the terms are shot `1/μ_e`,
/// read `read_noise²/μ_e²` and quantization `gain²/(12·μ_e²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub gain: f64,
    pub read_noise: f64,
    pub dark_offset: f64,
    pub enabled: bool,
}

/// Individual noise contributions to `K²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTerms {
    pub shot: f64,
    pub read: f64,
    pub quantization: f64,
}

impl NoiseTerms {
    pub fn total(&self) -> f64 {
        self.shot + self.read + self.quantization
    }
}

impl NoiseModel {
    pub fn from_config(config: &AcquisitionConfig) -> Self {
        Self {
            gain: config.gain,
            read_noise: config.read_noise,
            dark_offset: config.dark_offset,
            enabled: true,
        }
    }

    /// Dark-offset subtraction only; no noise is removed from the contrast.
    pub fn disabled(dark_offset: f64) -> Self {
        Self {
            gain: 1.0,
            read_noise: 0.0,
            dark_offset,
            enabled: false,
        }
    }

    pub fn terms(&self, mean_adu: f64) -> Result<NoiseTerms, TraceError> {
        let signal_adu = mean_adu - self.dark_offset;
        if !(signal_adu > 0.0) {
            return Err(TraceError::ZeroMeanFrame { mean_adu });
        }
        if !self.enabled {
            return Ok(NoiseTerms {
                shot: 0.0,
                read: 0.0,
                quantization: 0.0,
            });
        }
        let mu_e = signal_adu * self.gain;
        let mu_e_sq = mu_e * mu_e;
        Ok(NoiseTerms {
            shot: 1.0 / mu_e,
            read: self.read_noise * self.read_noise / mu_e_sq,
            quantization: self.gain * self.gain / (12.0 * mu_e_sq),
        })
    }
}

/// `σ²(I)/μ²(I)` over the full frame, in dark-corrected ADU.
pub fn compute_raw_contrast(frame: &Frame, config: &AcquisitionConfig) -> Result<f64, TraceError> {
    frame.check_dimensions(config)?;
    raw_contrast_from_moments(
        &FrameMoments::from_samples(&frame.samples),
        config.dark_offset,
    )
}

pub fn raw_contrast_from_moments(m: &FrameMoments, dark_offset: f64) -> Result<f64, TraceError> {
    if m.count == 0 {
        return Err(TraceError::EmptyFrame);
    }
    let mean_adu = m.mean();
    let mean = mean_adu - dark_offset;
    if !(mean > 0.0) {
        return Err(TraceError::ZeroMeanFrame { mean_adu });
    }
    Ok(m.variance() / (mean * mean))
}

/// Removes the camera noise contributions from a raw contrast. The result
/// may be zero or negative; that is reported downstream by [`compute_bfi`].
pub fn correct_contrast(
    k_raw_sq: f64,
    mean_adu: f64,
    noise: &NoiseModel,
) -> Result<f64, TraceError> {
    Ok(k_raw_sq - noise.terms(mean_adu)?.total())
}

/// `BFI = 1/K²_adjusted`.
pub fn compute_bfi(k_adj_sq: f64) -> Result<f64, TraceError> {
    if !(k_adj_sq > EPSILON_CONTRAST) {
        return Err(TraceError::ContrastUnderflow { k_adj_sq });
    }
    Ok(1.0 / k_adj_sq)
}

/// `BVI = (I₀ − dark)/(I − dark)`.
pub fn compute_bvi(
    mean_adu: f64,
    baseline_intensity: f64,
    dark_offset: f64,
) -> Result<f64, TraceError> {
    let current = mean_adu - dark_offset;
    if !(current > 0.0) {
        return Err(TraceError::ZeroMeanFrame { mean_adu });
    }
    let base = baseline_intensity - dark_offset;
    if !(base > 0.0) {
        return Err(TraceError::ZeroMeanFrame {
            mean_adu: baseline_intensity,
        });
    }
    Ok(base / current)
}

/// Full per-frame reduction: mean, raw and adjusted contrast.
pub fn frame_contrast(
    frame: &Frame,
    config: &AcquisitionConfig,
    noise: &NoiseModel,
) -> Result<ContrastSample, TraceError> {
    frame.check_dimensions(config)?;
    let m = FrameMoments::from_samples(&frame.samples);
    contrast_from_moments(frame.timestamp, &m, noise)
}

pub fn contrast_from_moments(
    t: f64,
    m: &FrameMoments,
    noise: &NoiseModel,
) -> Result<ContrastSample, TraceError> {
    let k_raw_sq = raw_contrast_from_moments(m, noise.dark_offset)?;
    let mean_adu = m.mean();
    let k_adj_sq = correct_contrast(k_raw_sq, mean_adu, noise)?;
    Ok(ContrastSample {
        t,
        mean_adu,
        k_raw_sq,
        k_adj_sq,
    })
}
