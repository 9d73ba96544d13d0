//! Synthetic dynamic speckle with known ground truth.
//!
//! A complex circular-Gaussian field decorrelates by first-order
//! autoregression, so its intensity autocorrelation is exponential and the
//! exposure-integrated contrast follows [`expected_contrast`] exactly in the
//! limit of fine sub-steps. Frames pass through a camera model with shot
//! noise, read noise, dark offset and quantization.

mod generator;
mod physics;
mod rng;
mod script;
mod session;

use thiserror::Error;

use crate::trace::TraceError;

pub use generator::{
    calibrate_beta, expose, generate_flat_sequence, generate_speckle_sequence,
    generate_speckle_sequence_with, SpeckleGenerator,
};
pub use physics::{
    channel_weights, expected_contrast, exposure_ratio_for_contrast, normalized_contrast,
    SpecklePhysics, SynthOptions,
};
pub use script::{HeartRateProfile, PulseShape, ResponseEnvelope, SessionScript, Timeline};
pub use session::{synthesize_breathhold_session, GroundTruth, SessionSynth, TruthSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid physics: {field} {reason}")]
    InvalidPhysics { field: &'static str, reason: String },
    #[error("invalid session script: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    InvalidConfig(#[from] TraceError),
    #[error("at least one frame must be requested")]
    NoFrames,
}
