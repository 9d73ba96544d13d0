use serde::{Deserialize, Serialize};

use super::CohortError;

/// Tukey fence multiplier.
pub const FENCE: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme values inside the fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Values outside the fences, ascending.
    pub outliers: Vec<f64>,
}

impl BoxplotSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    pub fn fences(&self) -> (f64, f64) {
        (self.q1 - FENCE * self.iqr(), self.q3 + FENCE * self.iqr())
    }
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at rank `p·(n − 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_summary(sample: &[f64]) -> Result<BoxplotSummary, CohortError> {
    if sample.len() < 4 {
        return Err(CohortError::SampleTooSmall {
            n: sample.len(),
            required: 4,
        });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(CohortError::NonFinite);
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - FENCE * iqr, q3 + FENCE * iqr);
    let inside = || s.iter().copied().filter(|v| *v >= lo && *v <= hi);
    Ok(BoxplotSummary {
        n: s.len(),
        median: quantile_sorted(&s, 0.5),
        q1,
        q3,
        whisker_low: inside().fold(f64::INFINITY, f64::min),
        whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
        outliers: s.iter().copied().filter(|v| *v < lo || *v > hi).collect(),
    })
}
