use serde::{Deserialize, Serialize};

use super::{fill_gaps, CardiacConfig, CardiacError, HeartRateTrace};
use crate::trace::HemodynamicTrace;

/// Time and normalized height of a waveform feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub t: f64,
    pub height: f64,
}

/// One cardiac cycle from onset to the next onset, normalized to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub t_onset: f64,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub samples: Vec<f64>,
    pub p1: Option<Landmark>,
    pub p2: Option<Landmark>,
    pub p3: Option<Landmark>,
    pub notch: Option<Landmark>,
}

impl PulseSegment {
    /// Removes the straight line through the end points, then rescales to
    /// [0, 1]. Returns `None` for a segment without any variation.
    pub fn from_raw(times: Vec<f64>, raw: &[f64]) -> Option<Self> {
        let n = raw.len();
        if n < 2 || times.len() != n {
            return None;
        }
        let (t0, t1) = (times[0], times[n - 1]);
        let (y0, y1) = (raw[0], raw[n - 1]);
        let detrended: Vec<f64> = times
            .iter()
            .zip(raw)
            .map(|(t, y)| y - (y0 + (y1 - y0) * (t - t0) / (t1 - t0)))
            .collect();
        let samples = min_max(&detrended)?;
        Some(Self {
            t_onset: t0,
            t_end: t1,
            times,
            samples,
            p1: None,
            p2: None,
            p3: None,
            notch: None,
        })
    }

    /// P2/P1 height ratio when both peaks were found.
    pub fn peaks_ratio(&self) -> Option<f64> {
        match (self.p1, self.p2) {
            (Some(a), Some(b)) if a.height > 0.0 => Some(b.height / a.height),
            _ => None,
        }
    }
}

pub fn min_max(v: &[f64]) -> Option<Vec<f64>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    Some(
        v.iter()
            .map(|x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect(),
    )
}

/// Splits the unsmoothed flow signal into beats.
///
/// The first onset is the minimum within one period of the start; each
/// following onset is the minimum within `[0.6T, 1.4T]` of the previous
/// one, `T` being the local period from `hr`. Stretches without a valid
/// heart rate are skipped and the search restarts after them.
pub fn segment_signal(
    times: &[f64],
    values: &[Option<f64>],
    hr: &HeartRateTrace,
    config: &CardiacConfig,
) -> Result<Vec<PulseSegment>, CardiacError> {
    let y = fill_gaps(values).ok_or(CardiacError::NoValidSamples)?;
    let n = y.len();
    if n < 2 {
        return Err(CardiacError::SegmentationFailed);
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    let reach = config.window_seconds;
    let argmin = |a: usize, b: usize| (a..b).min_by(|&i, &j| y[i].total_cmp(&y[j]));
    let tol = config.period_tolerance;

    let mut out = Vec::new();
    let mut cursor = 0usize;
    let mut onset: Option<usize> = None;
    while cursor + 1 < n {
        let Some(bpm) = hr.nearest(times[cursor], reach) else {
            onset = None;
            cursor += ((1.0 / dt).round() as usize).max(1);
            continue;
        };
        let period = 60.0 / bpm / dt;
        match onset {
            None => {
                let end = (cursor + period.ceil() as usize + 1).min(n);
                let Some(i) = argmin(cursor, end) else { break };
                onset = Some(i);
                cursor = i;
            }
            Some(i) => {
                let a = i + ((1.0 - tol) * period).floor().max(1.0) as usize;
                let b = (i + ((1.0 + tol) * period).ceil() as usize + 1).min(n);
                if a >= b {
                    break;
                }
                let j = argmin(a, b).expect("non-empty range");
                // Gaps inside a beat make it unusable; keep the onset chain.
                if values[i..=j].iter().all(Option::is_some) {
                    if let Some(seg) = PulseSegment::from_raw(times[i..=j].to_vec(), &y[i..=j]) {
                        out.push(seg);
                    }
                }
                onset = Some(j);
                cursor = j;
            }
        }
    }
    if out.is_empty() {
        return Err(CardiacError::SegmentationFailed);
    }
    Ok(out)
}

pub fn segment_pulses(
    trace: &HemodynamicTrace,
    hr: &HeartRateTrace,
    config: &CardiacConfig,
) -> Result<Vec<PulseSegment>, CardiacError> {
    segment_signal(&trace.times(), &trace.bfi(), hr, config)
}

/// Topographic prominence of the local maximum at `i`.
fn prominence(y: &[f64], i: usize) -> f64 {
    let h = y[i];
    let mut left = h;
    for &v in y[..i].iter().rev() {
        if v > h {
            break;
        }
        left = left.min(v);
    }
    let mut right = h;
    for &v in &y[i + 1..] {
        if v > h {
            break;
        }
        right = right.min(v);
    }
    h - left.max(right)
}

/// Interior local maxima with their prominence. Plateaus count once, at
/// their first sample.
fn maxima(y: &[f64]) -> Vec<(usize, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                out.push((i, prominence(y, i)));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Robust white-noise level of a segment from the median absolute second
/// difference; smooth waveform curvature barely moves the median.
pub fn noise_level(y: &[f64]) -> f64 {
    if y.len() < 5 {
        return 0.0;
    }
    let mut d: Vec<f64> = y
        .windows(3)
        .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs())
        .collect();
    d.sort_by(f64::total_cmp);
    let med = d[d.len() / 2];
    // MAD → σ for a normal variable, and Var(second difference) = 6σ².
    1.4826 * med / 6f64.sqrt()
}

/// Vertex of the parabola through samples `i − 1, i, i + 1`.
fn refine(times: &[f64], y: &[f64], i: usize) -> Landmark {
    if i == 0 || i + 1 >= y.len() {
        return Landmark {
            t: times[i],
            height: y[i],
        };
    }
    let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom == 0.0 {
        return Landmark {
            t: times[i],
            height: b,
        };
    }
    let d = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
    let step = if d >= 0.0 {
        times[i + 1] - times[i]
    } else {
        times[i] - times[i - 1]
    };
    Landmark {
        t: times[i] + d * step,
        height: b - 0.25 * (a - c) * d,
    }
}

/// Locates P1, the dicrotic notch, P2 and P3 on a normalized segment.
///
/// Only extrema whose prominence reaches `config.prominence`, or
/// `config.noise_factor` times the segment's noise level if larger, count. P1 is
/// the first such maximum; the notch is the most prominent minimum after
/// P1 that is followed by another prominent maximum; P2 is the highest
/// maximum between P1 and the notch and P3 the first maximum after it.
/// Without a notch, P2 is the highest maximum after P1 and P3 is absent.
pub fn detect_peaks(segment: &PulseSegment, config: &CardiacConfig) -> PulseSegment {
    let mut seg = segment.clone();
    seg.p1 = None;
    seg.p2 = None;
    seg.p3 = None;
    seg.notch = None;
    let y = &seg.samples;
    if y.len() < config.min_segment_samples {
        return seg;
    }
    let thr = config.prominence.max(config.noise_factor * noise_level(y));
    let peaks: Vec<usize> = maxima(y)
        .into_iter()
        .filter(|p| p.1 >= thr)
        .map(|p| p.0)
        .collect();
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    let dips: Vec<(usize, f64)> = maxima(&neg).into_iter().filter(|p| p.1 >= thr).collect();
    let Some(&p1) = peaks.first() else { return seg };
    let notch = dips
        .iter()
        .filter(|(i, _)| *i > p1 && peaks.iter().any(|&p| p > *i))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|d| d.0);
    let highest = |it: &mut dyn Iterator<Item = usize>| {
        it.max_by(|&a, &b| y[a].total_cmp(&y[b]).then(b.cmp(&a)))
    };
    let (p2, p3) = match notch {
        Some(k) => (
            highest(&mut peaks.iter().copied().filter(|&p| p > p1 && p < k)),
            peaks.iter().copied().find(|&p| p > k),
        ),
        None => (
            highest(&mut peaks.iter().copied().filter(|&p| p > p1)),
            None,
        ),
    };
    let t = &seg.times;
    let lm = |i: usize| refine(t, y, i);
    let neg_lm = |i: usize| {
        let l = refine(t, &neg, i);
        Landmark {
            t: l.t,
            height: -l.height,
        }
    };
    let (a, b, c, d) = (Some(lm(p1)), p2.map(lm), p3.map(lm), notch.map(neg_lm));
    seg.p1 = a;
    seg.p2 = b;
    seg.p3 = c;
    seg.notch = d;
    seg
}

/// Mean P2/P1 ratio of the beats whose onset lies in `[t0, t1)`.
pub fn window_peaks_ratio(
    segments: &[PulseSegment],
    t0: f64,
    t1: f64,
    min_pulses: usize,
) -> Result<(f64, usize), CardiacError> {
    let ratios: Vec<f64> = segments
        .iter()
        .filter(|s| s.t_onset >= t0 && s.t_onset < t1)
        .filter_map(PulseSegment::peaks_ratio)
        .collect();
    if ratios.len() < min_pulses {
        return Err(CardiacError::InsufficientPulses {
            t0,
            t1,
            found: ratios.len(),
            required: min_pulses,
        });
    }
    Ok((
        ratios.iter().sum::<f64>() / ratios.len() as f64,
        ratios.len(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeaksRatioSummary {
    pub ratio_resting: f64,
    pub ratio_bh: f64,
    pub ratio_of_ratios: f64,
    pub n_pulses_resting: usize,
    pub n_pulses_bh: usize,
}

/// Resting window `[rest.0, rest.1)` against breath-hold window
/// `[bh.0, bh.1)`.
pub fn peaks_ratio_summary(
    segments: &[PulseSegment],
    rest: (f64, f64),
    bh: (f64, f64),
    config: &CardiacConfig,
) -> Result<PeaksRatioSummary, CardiacError> {
    let (r, nr) = window_peaks_ratio(segments, rest.0, rest.1, config.min_pulses)?;
    let (b, nb) = window_peaks_ratio(segments, bh.0, bh.1, config.min_pulses)?;
    Ok(PeaksRatioSummary {
        ratio_resting: r,
        ratio_bh: b,
        ratio_of_ratios: b / r,
        n_pulses_resting: nr,
        n_pulses_bh: nb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cardiac::HeartRateSample;
    use crate::synth::PulseShape;
    use proptest::prelude::*;

    fn flat_hr(bpm: f64, t_end: f64) -> HeartRateTrace {
        HeartRateTrace {
            samples: (0..=t_end as usize)
                .map(|t| HeartRateSample {
                    t: t as f64,
                    hr_bpm: Some(bpm),
                    confidence: 1.0,
                })
                .collect(),
        }
    }

    fn beat(shape: &PulseShape, n: usize) -> PulseSegment {
        let times: Vec<f64> = (0..=n).map(|i| i as f64 / 60.0).collect();
        let raw: Vec<f64> = (0..=n).map(|i| shape.value(i as f64 / n as f64)).collect();
        PulseSegment::from_raw(times, &raw).unwrap()
    }

    fn train(shape: &PulseShape, bpm: f64, seconds: f64, fps: f64) -> (Vec<f64>, Vec<Option<f64>>) {
        let n = (seconds * fps) as usize;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / fps).collect();
        let v = t
            .iter()
            .map(|t| Some(2.0 + 0.3 * shape.value(t * bpm / 60.0)))
            .collect();
        (t, v)
    }

    #[test]
    fn template_heights_recovered() {
        let cfg = CardiacConfig::default();
        let shape = PulseShape {
            p1: 1.0,
            p2: 0.8,
            p3: 0.3,
        };
        let seg = detect_peaks(&beat(&shape, 50), &cfg);
        assert!((seg.p1.unwrap().height - 1.0).abs() < 0.02);
        assert!((seg.p2.unwrap().height - 0.8).abs() < 0.02);
        assert!((seg.p3.unwrap().height - 0.3).abs() < 0.02);
        let notch = seg.notch.unwrap();
        assert!(seg.p1.unwrap().t < notch.t && notch.t < seg.p3.unwrap().t);
    }

    #[test]
    fn second_peak_taller_than_first() {
        let cfg = CardiacConfig::default();
        let shape = PulseShape {
            p1: 0.9,
            p2: 1.0,
            p3: 0.3,
        };
        let seg = detect_peaks(&beat(&shape, 50), &cfg);
        assert!((seg.peaks_ratio().unwrap() - 1.0 / 0.9).abs() < 0.03);
    }

    #[test]
    fn triangle_has_only_first_peak() {
        let cfg = CardiacConfig::default();
        let raw: Vec<f64> = (0..=40)
            .map(|i| {
                if i <= 10 {
                    i as f64
                } else {
                    (40 - i) as f64 / 3.0
                }
            })
            .collect();
        let times = (0..=40).map(|i| i as f64 / 60.0).collect();
        let seg = detect_peaks(&PulseSegment::from_raw(times, &raw).unwrap(), &cfg);
        assert!(seg.p1.is_some());
        assert!(seg.p2.is_none() && seg.p3.is_none() && seg.notch.is_none());
    }

    #[test]
    fn noise_raises_the_prominence_floor() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let cfg = CardiacConfig::default();
        let shape = PulseShape {
            p1: 1.0,
            p2: 0.84,
            p3: 0.35,
        };
        let clean = beat(&shape, 50);
        assert!(noise_level(&clean.samples) * cfg.noise_factor < cfg.prominence);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let jitter = Normal::new(0.0, 0.04).unwrap();
        let noisy: Vec<f64> = clean
            .samples
            .iter()
            .map(|v| v + jitter.sample(&mut rng))
            .collect();
        let sigma = noise_level(&noisy);
        assert!(sigma > 0.025 && sigma < 0.06, "sigma {sigma}");
        let seg = detect_peaks(
            &PulseSegment::from_raw(clean.times.clone(), &noisy).unwrap(),
            &cfg,
        );
        // The shallow valley between P1 and P2 is below the noise floor.
        assert!(seg.p1.unwrap().height > 0.8);
        assert!(seg.p2.is_none());
    }

    #[test]
    fn short_segment_has_no_features() {
        let cfg = CardiacConfig::default();
        let seg = detect_peaks(
            &beat(
                &PulseShape {
                    p1: 1.0,
                    p2: 0.8,
                    p3: 0.3,
                },
                8,
            ),
            &cfg,
        );
        assert!(seg.p1.is_none());
    }

    #[test]
    fn train_at_72_bpm_gives_72_beats_per_minute() {
        let cfg = CardiacConfig::default();
        let shape = PulseShape {
            p1: 1.0,
            p2: 0.84,
            p3: 0.35,
        };
        let (t, v) = train(&shape, 72.0, 60.0, 60.0);
        let segs = segment_signal(&t, &v, &flat_hr(72.0, 60.0), &cfg).unwrap();
        assert!(
            (segs.len() as i64 - 72).abs() <= 1,
            "{} segments",
            segs.len()
        );
        for s in &segs {
            let lo = s.samples.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0));
            // Onsets sit on multiples of the period.
            let k = (s.t_onset * 1.2).round();
            assert!((s.t_onset - k / 1.2).abs() < 0.025);
        }
    }

    #[test]
    fn missing_heart_rate_fails_segmentation() {
        let cfg = CardiacConfig::default();
        let shape = PulseShape {
            p1: 1.0,
            p2: 0.84,
            p3: 0.35,
        };
        let (t, v) = train(&shape, 72.0, 20.0, 60.0);
        let none = HeartRateTrace::default();
        assert!(matches!(
            segment_signal(&t, &v, &none, &cfg),
            Err(CardiacError::SegmentationFailed)
        ));
    }

    #[test]
    fn ratio_summary() {
        let cfg = CardiacConfig::default();
        let mk = |t: f64, r: f64| PulseSegment {
            t_onset: t,
            t_end: t + 0.8,
            times: vec![],
            samples: vec![],
            p1: Some(Landmark {
                t: t + 0.1,
                height: 1.0,
            }),
            p2: Some(Landmark {
                t: t + 0.2,
                height: r,
            }),
            p3: None,
            notch: None,
        };
        let mut segs: Vec<_> = (0..10).map(|i| mk(i as f64, 0.84)).collect();
        segs.extend((0..6).map(|i| mk(20.0 + i as f64, 1.04)));
        let s = peaks_ratio_summary(&segs, (0.0, 15.0), (20.0, 30.0), &cfg).unwrap();
        assert!((s.ratio_resting - 0.84).abs() < 1e-12);
        assert!((s.ratio_of_ratios - 1.04 / 0.84).abs() < 1e-12);
        assert!((s.ratio_of_ratios - 1.238).abs() < 1e-3);
        assert_eq!((s.n_pulses_resting, s.n_pulses_bh), (10, 6));
        let few: Vec<_> = segs.iter().take(4).cloned().collect();
        assert!(matches!(
            peaks_ratio_summary(&few, (0.0, 15.0), (20.0, 30.0), &cfg),
            Err(CardiacError::InsufficientPulses { found: 4, .. })
        ));
    }

    proptest! {
        #[test]
        fn renormalizing_is_identity(raw in prop::collection::vec(-10.0f64..10.0, 3..60)) {
            let times: Vec<f64> = (0..raw.len()).map(|i| i as f64 * 0.01).collect();
            if let Some(seg) = PulseSegment::from_raw(times.clone(), &raw) {
                let again = min_max(&seg.samples).unwrap();
                prop_assert_eq!(&again, &seg.samples);
            }
        }

        #[test]
        fn symmetric_single_peak_is_mirrored(half in prop::collection::vec(0.01f64..1.0, 5..30)) {
            // Strictly increasing half, mirrored: one peak in the middle.
            let mut up = vec![0.0];
            for d in &half { up.push(up.last().unwrap() + d); }
            let mut raw = up.clone();
            raw.extend(up.iter().rev().skip(1));
            let n = raw.len();
            let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let cfg = CardiacConfig { min_segment_samples: 3, noise_factor: 0.0, ..CardiacConfig::default() };
            let fwd = detect_peaks(&PulseSegment::from_raw(times.clone(), &raw).unwrap(), &cfg);
            let rev_raw: Vec<f64> = raw.iter().rev().copied().collect();
            let rev = detect_peaks(&PulseSegment::from_raw(times, &rev_raw).unwrap(), &cfg);
            let (a, b) = (fwd.p1.unwrap(), rev.p1.unwrap());
            prop_assert!((a.t - (n as f64 - 1.0 - b.t)).abs() < 1e-9);
            prop_assert!((a.height - b.height).abs() < 1e-12);
            prop_assert!(fwd.p2.is_none() && rev.p2.is_none());
        }
    }
}
