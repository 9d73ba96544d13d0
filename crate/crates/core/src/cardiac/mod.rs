//! Heart rate, beat segmentation and pulse morphology from flow traces.

mod pulse;
mod rate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pulse::{
    detect_peaks, min_max, noise_level, peaks_ratio_summary, segment_pulses, segment_signal,
    window_peaks_ratio, Landmark, PeaksRatioSummary, PulseSegment,
};
pub use rate::{heart_rate, heart_rate_of_signal, spectral_peak, HeartRateSample, HeartRateTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardiacConfig {
    pub window_seconds: f64,
    pub step_seconds: f64,
    /// Search band for the heart rate, Hz.
    pub band_hz: (f64, f64),
    /// Spectral peak must exceed this multiple of the in-band median.
    pub peak_factor: f64,
    /// Minimum prominence of a waveform feature on the normalized pulse.
    pub prominence: f64,
    /// Prominence floor in units of the segment's estimated noise level.
    pub noise_factor: f64,
    /// Onset search spans `(1 ± period_tolerance)` periods.
    pub period_tolerance: f64,
    pub min_segment_samples: usize,
    /// Beats with both P1 and P2 required per window for a peaks ratio.
    pub min_pulses: usize,
}

impl Default for CardiacConfig {
    fn default() -> Self {
        Self {
            window_seconds: 20.0,
            step_seconds: 1.0,
            band_hz: (0.5, 3.7),
            peak_factor: 3.0,
            prominence: 0.02,
            noise_factor: 3.0,
            period_tolerance: 0.4,
            min_segment_samples: 10,
            min_pulses: 5,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CardiacError {
    #[error("no spectral peak in the cardiac band stands out from the background")]
    NoCardiacPeak,
    #[error("trace covers {seconds} s, heart-rate window needs {required} s")]
    TraceTooShort { seconds: f64, required: f64 },
    #[error("frame rate {fps} is below 10 frames/s")]
    FrameRateTooLow { fps: f64 },
    #[error("trace has no valid flow samples")]
    NoValidSamples,
    #[error("no beat could be segmented")]
    SegmentationFailed,
    #[error("{found} usable pulses in [{t0}, {t1}) s, need {required}")]
    InsufficientPulses {
        t0: f64,
        t1: f64,
        found: usize,
        required: usize,
    },
}

/// Linear interpolation over missing samples; ends take the nearest valid
/// value. `None` if nothing is valid.
pub(crate) fn fill_gaps(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = values.iter().position(Option::is_some)?;
    let mut out = vec![0.0; values.len()];
    let mut last = (first, values[first].unwrap());
    for (i, v) in values.iter().enumerate() {
        match v {
            Some(x) => {
                for (j, o) in out.iter_mut().enumerate().take(i).skip(last.0 + 1) {
                    let f = (j - last.0) as f64 / (i - last.0) as f64;
                    *o = last.1 + f * (x - last.1);
                }
                out[i] = *x;
                last = (i, *x);
            }
            None if i < first => out[i] = last.1,
            None => {}
        }
    }
    for o in out.iter_mut().skip(last.0 + 1) {
        *o = last.1;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_are_interpolated() {
        let v = [None, Some(1.0), None, None, Some(4.0), None];
        assert_eq!(fill_gaps(&v).unwrap(), vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(fill_gaps(&[None, None]).is_none());
    }
}
