use serde::{Deserialize, Serialize};

use super::contrast::{compute_bfi, compute_bvi, ContrastSample};
use super::TraceError;

/// Shortest rest window accepted for baseline estimation, seconds. At the
/// lowest admissible heart rate (30 bpm) this spans five cardiac cycles.
pub const MIN_REST_SECONDS: f64 = 10.0;

/// Width of the temporal averaging filter applied before breath-hold
/// feature extraction, seconds.
pub const DEFAULT_SMOOTHING_SECONDS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub mean_adu: f64,
    pub k_raw_sq: f64,
    pub k_adj_sq: f64,
    pub bfi: Option<f64>,
    pub bvi: Option<f64>,
}

impl TraceSample {
    pub fn is_valid(&self) -> bool {
        self.bfi.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// `BFI₀`, in the units of the trace at the time the baseline was taken.
    pub bfi: f64,
    /// `I₀`, raw ADU (dark offset included).
    pub intensity: f64,
    pub window: (f64, f64),
}

/// Time-aligned flow and volume indices at frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct HemodynamicTrace {
    pub fps: f64,
    pub dark_offset: f64,
    pub samples: Vec<TraceSample>,
    pub baseline: Option<Baseline>,
    /// True once `bfi` has been divided by `BFI₀`.
    pub normalized: bool,
}

impl HemodynamicTrace {
    pub fn new(fps: f64, dark_offset: f64) -> Self {
        Self {
            fps,
            dark_offset,
            samples: Vec::new(),
            baseline: None,
            normalized: false,
        }
    }

    /// Builds a trace from already assembled samples, checking time order.
    pub fn from_samples(
        fps: f64,
        dark_offset: f64,
        samples: Vec<TraceSample>,
    ) -> Result<Self, TraceError> {
        if let Some(i) = samples.windows(2).position(|w| !(w[1].t > w[0].t)) {
            return Err(TraceError::NonMonotonicTime { index: i + 1 });
        }
        Ok(Self {
            fps,
            dark_offset,
            samples,
            baseline: None,
            normalized: false,
        })
    }

    /// Appends one frame's contrast. Frames that failed the per-frame
    /// reduction become invalid samples rather than aborting the session.
    pub fn push_contrast(
        &mut self,
        t: f64,
        mean_adu: f64,
        result: Result<ContrastSample, TraceError>,
    ) {
        let sample = match result {
            Ok(c) => TraceSample {
                t: c.t,
                mean_adu: c.mean_adu,
                k_raw_sq: c.k_raw_sq,
                k_adj_sq: c.k_adj_sq,
                bfi: compute_bfi(c.k_adj_sq).ok(),
                bvi: self
                    .baseline
                    .and_then(|b| compute_bvi(c.mean_adu, b.intensity, self.dark_offset).ok()),
            },
            Err(_) => TraceSample {
                t,
                mean_adu,
                k_raw_sq: f64::NAN,
                k_adj_sq: f64::NAN,
                bfi: None,
                bvi: None,
            },
        };
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn bfi(&self) -> Vec<Option<f64>> {
        self.samples.iter().map(|s| s.bfi).collect()
    }

    pub fn bvi(&self) -> Vec<Option<f64>> {
        self.samples.iter().map(|s| s.bvi).collect()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t + 1.0 / self.fps,
            _ => 0.0,
        }
    }

    /// Index range of samples with `t0 <= t < t1`.
    pub fn index_range(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let lo = self.samples.partition_point(|s| s.t < t0);
        let hi = self.samples.partition_point(|s| s.t < t1);
        lo..hi.max(lo)
    }

    /// Baseline `BFI₀` and `I₀` as means over a rest window, then recomputes
    /// BVI against the new `I₀` so that it is 1 at baseline.
    pub fn compute_baseline(&mut self, window: (f64, f64)) -> Result<Baseline, TraceError> {
        let (t0, t1) = window;
        let dt = 1.0 / self.fps;
        if !(t1 - t0 >= MIN_REST_SECONDS - 1e-9) {
            return Err(TraceError::WindowTooShort {
                seconds: t1 - t0,
                required: MIN_REST_SECONDS,
            });
        }
        let range = self.index_range(t0, t1);
        let covered = match (
            self.samples.get(range.start),
            range.end.checked_sub(1).and_then(|i| self.samples.get(i)),
        ) {
            (Some(a), Some(b)) if range.end > range.start => b.t - a.t + dt,
            _ => 0.0,
        };
        if covered + 2.0 * dt < t1 - t0 {
            return Err(TraceError::WindowTooShort {
                seconds: covered,
                required: t1 - t0,
            });
        }
        let window_samples = &self.samples[range];
        let flows: Vec<f64> = window_samples.iter().filter_map(|s| s.bfi).collect();
        let intensities: Vec<f64> = window_samples
            .iter()
            .map(|s| s.mean_adu)
            .filter(|&m| m > self.dark_offset)
            .collect();
        if flows.is_empty() || intensities.is_empty() {
            return Err(TraceError::NoValidSamples);
        }
        let bfi = mean(&flows);
        let intensity = mean(&intensities);
        let baseline = Baseline {
            bfi,
            intensity,
            window,
        };
        self.baseline = Some(baseline);
        let dark = self.dark_offset;
        for s in &mut self.samples {
            s.bvi = compute_bvi(s.mean_adu, intensity, dark).ok();
        }
        Ok(baseline)
    }

    /// Flow index recomputed from each sample's adjusted contrast, which
    /// drops any smoothing or normalization applied to the BFI column.
    /// Baseline and BVI are cleared.
    pub fn reindexed(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.bfi = compute_bfi(s.k_adj_sq).ok();
            s.bvi = None;
        }
        out.baseline = None;
        out.normalized = false;
        out
    }

    /// `BFI / BFI₀`. BVI is already relative to its baseline.
    pub fn normalized(&self) -> Result<Self, TraceError> {
        let b = self.baseline.ok_or(TraceError::BaselineMissing)?;
        if self.normalized {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for s in &mut out.samples {
            s.bfi = s.bfi.map(|v| v / b.bfi);
        }
        out.normalized = true;
        Ok(out)
    }

    pub fn denormalized(&self) -> Result<Self, TraceError> {
        let b = self.baseline.ok_or(TraceError::BaselineMissing)?;
        if !self.normalized {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for s in &mut out.samples {
            s.bfi = s.bfi.map(|v| v * b.bfi);
        }
        out.normalized = false;
        Ok(out)
    }

    /// Centered moving average of BFI and BVI over `window_seconds`.
    pub fn smoothed(&self, window_seconds: f64) -> Result<Self, TraceError> {
        let n = (window_seconds * self.fps).round() as usize;
        if n < 3 {
            return Err(TraceError::SmoothingWindowTooShort { samples: n });
        }
        let bfi = box_smooth(&self.bfi(), n);
        let bvi = box_smooth(&self.bvi(), n);
        let mut out = self.clone();
        for ((s, f), v) in out.samples.iter_mut().zip(bfi).zip(bvi) {
            s.bfi = f;
            s.bvi = v;
        }
        Ok(out)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Centered box filter of `n` samples. For even `n` the window covers
/// offsets `-n/2 ..= n/2 - 1`. Near the ends the window is truncated to the
/// samples that exist, and missing samples are left out of each average.
/// Missing inputs stay missing in the output.
pub fn box_smooth(values: &[Option<f64>], n: usize) -> Vec<Option<f64>> {
    let len = values.len();
    let back = n / 2;
    let fwd = n - 1 - back;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            // Deviations from the center sample keep constant stretches exact.
            v.map(|center| {
                let lo = i.saturating_sub(back);
                let hi = (i + fwd + 1).min(len);
                let (dev, count) = values[lo..hi]
                    .iter()
                    .flatten()
                    .fold((0.0, 0usize), |(d, c), x| (d + (x - center), c + 1));
                center + dev / count as f64
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn trace_from(fps: f64, bfi: &[f64], mean_adu: &[f64]) -> HemodynamicTrace {
        let samples = bfi
            .iter()
            .zip(mean_adu)
            .enumerate()
            .map(|(i, (&b, &m))| TraceSample {
                t: i as f64 / fps,
                mean_adu: m,
                k_raw_sq: 1.0 / b,
                k_adj_sq: 1.0 / b,
                bfi: Some(b),
                bvi: None,
            })
            .collect();
        HemodynamicTrace::from_samples(fps, 0.0, samples).unwrap()
    }

    #[test]
    fn baseline_of_constant_trace() {
        let mut tr = trace_from(60.0, &vec![2.0; 1200], &vec![300.0; 1200]);
        let b = tr.compute_baseline((0.0, 20.0)).unwrap();
        assert_eq!(b.bfi, 2.0);
        assert_eq!(b.intensity, 300.0);
        assert!(tr.samples.iter().all(|s| s.bvi == Some(1.0)));
    }

    #[test]
    fn baseline_of_whole_number_of_cycles() {
        let fps = 60.0;
        let bfi: Vec<f64> = (0..1200)
            .map(|i| 3.0 + 0.4 * (2.0 * std::f64::consts::PI * 1.2 * i as f64 / fps).sin())
            .collect();
        let mut tr = trace_from(fps, &bfi, &vec![300.0; 1200]);
        // 10 s at 1.2 Hz is exactly 12 cycles.
        let b = tr.compute_baseline((0.0, 10.0)).unwrap();
        assert!((b.bfi - 3.0).abs() < 1e-3);
    }

    #[test]
    fn baseline_window_too_short() {
        let mut tr = trace_from(60.0, &vec![1.0; 1200], &vec![300.0; 1200]);
        assert!(matches!(
            tr.compute_baseline((0.0, 5.0)),
            Err(TraceError::WindowTooShort { .. })
        ));
        // Declared window longer than the data actually present.
        assert!(matches!(
            tr.compute_baseline((15.0, 25.0)),
            Err(TraceError::WindowTooShort { .. })
        ));
    }

    #[test]
    fn bvi_inverse_of_intensity() {
        let mut mean_adu = vec![300.0; 1200];
        mean_adu[1100] = 150.0;
        let mut tr = trace_from(60.0, &vec![1.0; 1200], &mean_adu);
        tr.compute_baseline((0.0, 10.0)).unwrap();
        assert_eq!(tr.samples[1100].bvi, Some(2.0));
    }

    #[test]
    fn normalize_examples() {
        let mut bfi = vec![2.5; 1200];
        bfi[1000] = 2.5 * 1.44;
        let mut tr = trace_from(60.0, &bfi, &vec![300.0; 1200]);
        assert!(matches!(tr.normalized(), Err(TraceError::BaselineMissing)));
        tr.compute_baseline((0.0, 10.0)).unwrap();
        let n = tr.normalized().unwrap();
        assert_eq!(n.samples[0].bfi, Some(1.0));
        assert_relative_eq!(n.samples[1000].bfi.unwrap(), 1.44, epsilon = 1e-12);
        let back = n.denormalized().unwrap();
        for (a, b) in back.samples.iter().zip(&tr.samples) {
            assert_relative_eq!(a.bfi.unwrap(), b.bfi.unwrap(), max_relative = 1e-15);
        }
    }

    #[test]
    fn smoothing_constant_is_identity() {
        let v = vec![Some(1.7); 500];
        assert_eq!(box_smooth(&v, 120), v);
    }

    #[test]
    fn smoothing_spreads_impulse() {
        let mut v = vec![Some(0.0); 1000];
        v[500] = Some(1.0);
        let out = box_smooth(&v, 120);
        for (i, o) in out.iter().enumerate() {
            let expected = if (441..=560).contains(&i) {
                1.0 / 120.0
            } else {
                0.0
            };
            assert_relative_eq!(o.unwrap(), expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn smoothing_skips_invalid_samples() {
        let v = vec![Some(1.0), None, Some(3.0), Some(1.0), None];
        let out = box_smooth(&v, 3);
        assert_eq!(out, vec![Some(1.0), None, Some(2.0), Some(2.0), None]);
    }

    #[test]
    fn smoothing_reduces_white_noise_by_sqrt_window() {
        // Monte-Carlo over 1000 realizations: interior output std of a
        // 120-sample box filter over unit white noise is 1/sqrt(120).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..1000 {
            let v: Vec<Option<f64>> = (0..400)
                .map(|_| Some(StandardNormal.sample(&mut rng)))
                .collect();
            let out = box_smooth(&v, 120);
            let x = out[200].unwrap();
            acc += x * x;
            count += 1;
        }
        let std = (acc / count as f64).sqrt();
        let target = 1.0 / 120f64.sqrt();
        assert!(
            (std / target - 1.0).abs() < 0.15,
            "std {std} target {target}"
        );
    }

    #[test]
    fn smoothed_trace_rejects_tiny_window() {
        let tr = trace_from(60.0, &vec![1.0; 100], &vec![300.0; 100]);
        assert!(tr.smoothed(0.02).is_err());
        assert!(tr.smoothed(2.0).is_ok());
    }

    #[test]
    fn non_monotonic_time_rejected() {
        let s = TraceSample {
            t: 0.0,
            mean_adu: 1.0,
            k_raw_sq: 1.0,
            k_adj_sq: 1.0,
            bfi: Some(1.0),
            bvi: None,
        };
        assert!(HemodynamicTrace::from_samples(60.0, 0.0, vec![s, s]).is_err());
    }

    proptest! {
        // Shrunken edge windows cannot conserve the sum of an arbitrary
        // trace, so the mean property is checked where every output window
        // is complete: traces that are constant within a half window of
        // either end.
        #[test]
        fn smoothing_preserves_mean(
            core in prop::collection::vec(-5.0f64..5.0, 1..300),
            level in -2.0f64..2.0,
            n in 3usize..41,
        ) {
            let pad = n;
            let mut v = vec![Some(level); pad];
            v.extend(core.iter().map(|&x| Some(x)));
            v.extend(std::iter::repeat_n(Some(level), pad));
            let out = box_smooth(&v, n);
            let m_in: f64 = v.iter().map(|x| x.unwrap()).sum::<f64>() / v.len() as f64;
            let m_out: f64 = out.iter().map(|x| x.unwrap()).sum::<f64>() / out.len() as f64;
            prop_assert!((m_in - m_out).abs() < 1e-12);
        }
    }
}
