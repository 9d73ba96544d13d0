use serde::{Deserialize, Serialize};

use super::TraceError;

/// Camera and acquisition parameters shared by the simulator and the
/// processing pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Frames per second.
    pub fps: f64,
    /// Bits per sample.
    pub bit_depth: u16,
    /// Photoelectrons per ADU.
    pub gain: f64,
    /// Read noise, photoelectrons RMS.
    pub read_noise: f64,
    /// Dark offset in ADU.
    pub dark_offset: f64,
    /// Exposure time in seconds.
    pub exposure: f64,
    pub roi_width: u32,
    pub roi_height: u32,
}

impl Default for AcquisitionConfig {
    /// 60 fps, 12-bit global-shutter board camera with a 256×256 region of
    /// interest.
    fn default() -> Self {
        Self {
            fps: 60.0,
            bit_depth: 12,
            gain: 1.0,
            read_noise: 2.0,
            dark_offset: 10.0,
            exposure: 0.01,
            roi_width: 256,
            roi_height: 256,
        }
    }
}

pub const MIN_ROI_SIDE: u32 = 16;

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |field: &'static str, reason: &str| {
            Err(TraceError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps", "must be a finite positive number");
        }
        if self.bit_depth == 0 || self.bit_depth > 16 {
            return bad("bit_depth", "must be between 1 and 16");
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return bad("gain", "must be a finite positive number");
        }
        if !(self.read_noise.is_finite() && self.read_noise >= 0.0) {
            return bad("read_noise", "must be finite and non-negative");
        }
        if !(self.dark_offset.is_finite() && self.dark_offset >= 0.0) {
            return bad("dark_offset", "must be finite and non-negative");
        }
        if self.dark_offset >= self.max_adu() as f64 {
            return bad("dark_offset", "must be below the full-scale ADU value");
        }
        if !(self.exposure.is_finite() && self.exposure > 0.0) {
            return bad("exposure", "must be a finite positive number");
        }
        // Tolerate rounding in exposure = 1/fps.
        if self.exposure * self.fps > 1.0 + 1e-9 {
            return bad("exposure", "exposure * fps must not exceed 1");
        }
        if self.roi_width < MIN_ROI_SIDE {
            return bad("roi_width", "must be at least 16 pixels");
        }
        if self.roi_height < MIN_ROI_SIDE {
            return bad("roi_height", "must be at least 16 pixels");
        }
        Ok(())
    }

    /// Largest representable sample value, `2^bit_depth - 1`.
    pub fn max_adu(&self) -> u16 {
        ((1u32 << self.bit_depth.min(16)) - 1) as u16
    }

    pub fn pixels(&self) -> usize {
        self.roi_width as usize * self.roi_height as usize
    }

    pub fn frame_interval(&self) -> f64 {
        1.0 / self.fps
    }
}
