//! Frame statistics and the flow/volume index traces derived from them.
//!
//! A frame is reduced to its mean and raw contrast `σ²/μ²` over the whole
//! region of interest. Camera noise is removed from the raw contrast to give
//! the adjusted contrast, whose inverse is the blood flow index. The blood
//! volume index is the baseline intensity divided by the current intensity.

mod config;
mod contrast;
mod frame;
mod series;

use rayon::prelude::*;
use thiserror::Error;

pub use config::{AcquisitionConfig, MIN_ROI_SIDE};
pub use contrast::{
    compute_bfi, compute_bvi, compute_raw_contrast, contrast_from_moments, correct_contrast,
    frame_contrast, raw_contrast_from_moments, ContrastSample, NoiseModel, NoiseTerms,
    EPSILON_CONTRAST,
};
pub use frame::{Frame, FrameMoments, FrameStream};
pub use series::{
    box_smooth, Baseline, HemodynamicTrace, TraceSample, DEFAULT_SMOOTHING_SECONDS,
    MIN_REST_SECONDS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("invalid acquisition config: {field} {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("frame is empty")]
    EmptyFrame,
    #[error("dark-corrected mean is not positive (mean {mean_adu} ADU)")]
    ZeroMeanFrame { mean_adu: f64 },
    #[error("frame is {found:?}, expected {expected:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("adjusted contrast {k_adj_sq} is below the inversion threshold")]
    ContrastUnderflow { k_adj_sq: f64 },
    #[error("rest window covers {seconds} s, need {required} s")]
    WindowTooShort { seconds: f64, required: f64 },
    #[error("no valid samples in window")]
    NoValidSamples,
    #[error("baseline has not been computed")]
    BaselineMissing,
    #[error("smoothing window of {samples} samples is shorter than 3")]
    SmoothingWindowTooShort { samples: usize },
    #[error("timestamps not strictly increasing at sample {index}")]
    NonMonotonicTime { index: usize },
}

/// Reduces a batch of frames in parallel; results keep frame order.
pub fn contrast_batch(
    frames: &[Frame],
    config: &AcquisitionConfig,
    noise: &NoiseModel,
) -> Vec<(f64, f64, Result<ContrastSample, TraceError>)> {
    frames
        .par_iter()
        .map(|f| {
            let mean = if f.samples.is_empty() {
                f64::NAN
            } else {
                FrameMoments::from_samples(&f.samples).mean()
            };
            (f.timestamp, mean, frame_contrast(f, config, noise))
        })
        .collect()
}

/// Runs the per-frame reduction over a whole stream and assembles the
/// (unsmoothed, un-baselined) trace.
pub fn trace_from_stream(stream: &FrameStream) -> HemodynamicTrace {
    let noise = NoiseModel::from_config(&stream.config);
    let mut trace = HemodynamicTrace::new(stream.config.fps, stream.config.dark_offset);
    for (t, mean, r) in contrast_batch(&stream.frames, &stream.config, &noise) {
        trace.push_contrast(t, mean, r);
    }
    trace
}
