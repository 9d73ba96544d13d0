//! Speckle contrast optical spectroscopy analysis for breath-hold sessions.
//!
//! The crate turns raw speckle camera frames into blood flow and blood
//! volume index traces, extracts cardiac and breath-hold features from them,
//! and compares feature distributions between risk groups. A dynamic speckle
//! simulator produces frame streams with known ground truth.

// `!(a > b)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod breathhold;
pub mod cardiac;
pub mod cli;
pub mod cohort;
pub mod io;
pub mod synth;
pub mod trace;
