//! Time courses driving a synthetic breath-hold session.

use serde::{Deserialize, Serialize};

use super::SynthError;

/// Phase grid used to integrate heart rate into cardiac phase, seconds.
const PHASE_STEP: f64 = 1e-3;

/// Smooth rise and fall of a relative change around a breath-hold.
///
/// The envelope is 0 up to `t_start`, rises with time constant
/// `tau_growth`, peaks at `amplitude` near `t_start + t_bh + peak_delay` and
/// decays back with `tau_decay`. The two exponentials are joined by a soft
/// minimum whose width is `rounding` (in units of the time constants).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseEnvelope {
    pub amplitude: f64,
    pub peak_delay: f64,
    pub tau_growth: f64,
    pub tau_decay: f64,
    pub rounding: f64,
}

impl ResponseEnvelope {
    pub fn flat() -> Self {
        Self {
            amplitude: 0.0,
            ..Self::default()
        }
    }

    fn log_blend(&self, s: f64) -> f64 {
        let k = self.rounding;
        let a = -s / (k * self.tau_growth);
        let b = s / (k * self.tau_decay);
        let m = a.max(b);
        -k * (m + ((a - m).exp() + (b - m).exp()).ln())
    }

    /// Offset of the true maximum from the nominal corner.
    fn crest_offset(&self) -> f64 {
        let k = self.rounding;
        k * (self.tau_decay / self.tau_growth).ln() / (1.0 / self.tau_growth + 1.0 / self.tau_decay)
    }

    /// Time of the maximum.
    pub fn peak_time(&self, t_start: f64, t_bh: f64) -> f64 {
        t_start + t_bh + self.peak_delay + self.crest_offset()
    }

    /// Normalized shape in [0, 1].
    pub fn shape(&self, t: f64, t_start: f64, t_bh: f64) -> f64 {
        if t <= t_start {
            return 0.0;
        }
        let corner = t_start + t_bh + self.peak_delay;
        let crest = self.crest_offset();
        let s = t - corner;
        let g_max = self.log_blend(crest).exp();
        if s <= crest {
            let g0 = self.log_blend(t_start - corner).exp();
            ((self.log_blend(s).exp() - g0) / (g_max - g0)).clamp(0.0, 1.0)
        } else {
            (self.log_blend(s).exp() / g_max).clamp(0.0, 1.0)
        }
    }

    /// Multiplier `1 + amplitude·shape`.
    pub fn value(&self, t: f64, t_start: f64, t_bh: f64) -> f64 {
        1.0 + self.amplitude * self.shape(t, t_start, t_bh)
    }

    fn validate(&self, name: &str) -> Result<(), SynthError> {
        let ok = self.amplitude.is_finite()
            && self.amplitude > -0.9
            && self.peak_delay.is_finite()
            && self.peak_delay >= 0.0
            && self.tau_growth > 0.0
            && self.tau_decay > 0.0
            && self.rounding > 0.0
            && self.tau_growth.is_finite()
            && self.tau_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidScript(format!(
                "{name} envelope parameters out of range"
            )))
        }
    }
}

impl Default for ResponseEnvelope {
    fn default() -> Self {
        Self {
            amplitude: 0.44,
            peak_delay: 3.0,
            tau_growth: 16.3,
            tau_decay: 8.0,
            rounding: 0.15,
        }
    }
}

/// Relative heights of the three systolic/diastolic maxima of one beat.
///
/// The template is built from cosine-interpolated knots: onset, first
/// peak, a valley, second peak, the dicrotic notch, third peak and the
/// return to zero. Heights are rescaled so the tallest peak is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl PulseShape {
    pub const P1_PHASE: f64 = 0.15;
    pub const VALLEY_PHASE: f64 = 0.22;
    pub const P2_PHASE: f64 = 0.30;
    pub const NOTCH_PHASE: f64 = 0.40;
    pub const P3_PHASE: f64 = 0.48;
    const VALLEY_DEPTH: f64 = 0.06;
    const NOTCH_FRACTION: f64 = 0.5;

    pub fn normalized(&self) -> (f64, f64, f64) {
        let top = self.p1.max(self.p2).max(self.p3);
        (self.p1 / top, self.p2 / top, self.p3 / top)
    }

    fn knots(&self) -> [(f64, f64); 7] {
        let (h1, h2, h3) = self.normalized();
        [
            (0.0, 0.0),
            (Self::P1_PHASE, h1),
            (Self::VALLEY_PHASE, h1.min(h2) - Self::VALLEY_DEPTH),
            (Self::P2_PHASE, h2),
            (Self::NOTCH_PHASE, Self::NOTCH_FRACTION * h3),
            (Self::P3_PHASE, h3),
            (1.0, 0.0),
        ]
    }

    /// Height of the notch in normalized units.
    pub fn notch_height(&self) -> f64 {
        Self::NOTCH_FRACTION * self.normalized().2
    }

    /// Template value at cardiac phase `phase ∈ [0, 1)`.
    pub fn value(&self, phase: f64) -> f64 {
        let phase = phase.rem_euclid(1.0);
        let knots = self.knots();
        let i = knots
            .iter()
            .rposition(|k| k.0 <= phase)
            .unwrap_or(0)
            .min(knots.len() - 2);
        let (x0, y0) = knots[i];
        let (x1, y1) = knots[i + 1];
        let u = (phase - x0) / (x1 - x0);
        let w = 0.5 - 0.5 * (std::f64::consts::PI * u).cos();
        y0 + (y1 - y0) * w
    }

    /// Mean over one cycle.
    pub fn mean(&self) -> f64 {
        let n = 4000;
        (0..n)
            .map(|i| self.value((i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64
    }

    fn validate(&self) -> Result<(), SynthError> {
        let pos = [self.p1, self.p2, self.p3]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !pos {
            return Err(SynthError::InvalidScript(
                "pulse heights must be positive".into(),
            ));
        }
        let (h1, h2, h3) = self.normalized();
        let valley = h1.min(h2) - Self::VALLEY_DEPTH;
        if !(valley > self.notch_height() && h3 < h1.min(h2)) {
            return Err(SynthError::InvalidScript(
                "third peak must sit below the first two so the notch is distinct".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartRateProfile {
    pub rest_bpm: f64,
    /// Reached when the flow envelope peaks.
    pub peak_bpm: f64,
}

/// Everything needed to synthesize one breath-hold session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionScript {
    pub duration: f64,
    pub t_start: f64,
    pub t_bh: f64,
    pub flow: ResponseEnvelope,
    pub volume: ResponseEnvelope,
    pub heart_rate: HeartRateProfile,
    /// Peak-to-trough scale of the cardiac modulation of flow.
    pub pulsatility: f64,
    pub volume_pulsatility: f64,
    pub pulse_rest: PulseShape,
    pub pulse_bh: PulseShape,
    /// Cardiac phase at t = 0, in cycles.
    pub initial_phase: f64,
}

impl Default for SessionScript {
    fn default() -> Self {
        Self {
            duration: 180.0,
            t_start: 60.0,
            t_bh: 35.0,
            flow: ResponseEnvelope::default(),
            volume: ResponseEnvelope {
                amplitude: 0.20,
                peak_delay: 4.4,
                ..ResponseEnvelope::default()
            },
            heart_rate: HeartRateProfile {
                rest_bpm: 68.0,
                peak_bpm: 84.0,
            },
            pulsatility: 0.2,
            volume_pulsatility: 0.01,
            pulse_rest: PulseShape {
                p1: 1.0,
                p2: 0.84,
                p3: 0.35,
            },
            pulse_bh: PulseShape {
                p1: 0.9615,
                p2: 1.0,
                p3: 0.35,
            },
            initial_phase: 0.3,
        }
    }
}

/// Sampled time courses of a script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub t: Vec<f64>,
    pub flow: Vec<f64>,
    pub volume: Vec<f64>,
    pub hr_bpm: Vec<f64>,
    /// Times at which a new beat starts (template phase 0).
    pub pulse_onsets: Vec<f64>,
}

impl SessionScript {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidScript(m.to_string()));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.t_start >= 0.0 && self.t_bh > 0.0 && self.t_start + self.t_bh < self.duration) {
            return bad(
                "rest, breath-hold and recovery segments must be contiguous within the session",
            );
        }
        self.flow.validate("flow")?;
        self.volume.validate("volume")?;
        let hr_ok = |v: f64| (30.0..=220.0).contains(&v);
        if !(hr_ok(self.heart_rate.rest_bpm) && hr_ok(self.heart_rate.peak_bpm)) {
            return bad("heart rate must lie in [30, 220] bpm");
        }
        if !((0.0..1.0).contains(&self.pulsatility)
            && (0.0..1.0).contains(&self.volume_pulsatility))
        {
            return bad("pulsatility must lie in [0, 1)");
        }
        if !self.initial_phase.is_finite() {
            return bad("initial phase must be finite");
        }
        self.pulse_rest.validate()?;
        self.pulse_bh.validate()?;
        Ok(())
    }

    pub fn hr_at(&self, t: f64) -> f64 {
        let h = self.flow.shape(t, self.t_start, self.t_bh);
        self.heart_rate.rest_bpm + (self.heart_rate.peak_bpm - self.heart_rate.rest_bpm) * h
    }

    fn in_breath_hold(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_start + self.t_bh
    }

    /// Pulse shape of the beat starting at `onset`.
    pub fn pulse_for_onset(&self, onset: f64) -> &PulseShape {
        if self.in_breath_hold(onset) {
            &self.pulse_bh
        } else {
            &self.pulse_rest
        }
    }

    /// Samples the script at the given times; `times` must be increasing
    /// and lie in `[0, duration]`.
    pub fn sample(&self, times: &[f64]) -> Result<Timeline, SynthError> {
        self.validate()?;
        // Cardiac phase on a fine grid, trapezoidal integration of hr/60.
        let n = (self.duration / PHASE_STEP).ceil() as usize + 2;
        let mut phase = Vec::with_capacity(n);
        let mut acc = self.initial_phase;
        let mut prev = self.hr_at(0.0) / 60.0;
        phase.push(acc);
        for i in 1..n {
            let cur = self.hr_at(i as f64 * PHASE_STEP) / 60.0;
            acc += 0.5 * (prev + cur) * PHASE_STEP;
            phase.push(acc);
            prev = cur;
        }
        let phase_at = |t: f64| {
            let x = (t / PHASE_STEP).clamp(0.0, (n - 2) as f64);
            let i = x.floor() as usize;
            let f = x - i as f64;
            phase[i] + f * (phase[i + 1] - phase[i])
        };
        let mut onsets = Vec::new();
        for i in 1..n {
            let (a, b) = (phase[i - 1], phase[i]);
            if b.floor() > a.floor() {
                let frac = (b.floor() - a) / (b - a);
                let t = (i as f64 - 1.0 + frac) * PHASE_STEP;
                if t < self.duration {
                    onsets.push(t);
                }
            }
        }
        let means = (self.pulse_rest.mean(), self.pulse_bh.mean());
        let mut tl = Timeline {
            t: times.to_vec(),
            flow: Vec::with_capacity(times.len()),
            volume: Vec::with_capacity(times.len()),
            hr_bpm: Vec::with_capacity(times.len()),
            pulse_onsets: onsets,
        };
        for &t in times {
            let p = phase_at(t);
            // Beats already under way at t = 0 count as starting then.
            let k = tl.pulse_onsets.partition_point(|&o| o <= t);
            let beat_start = if k == 0 { 0.0 } else { tl.pulse_onsets[k - 1] };
            let shape = self.pulse_for_onset(beat_start);
            let mean = if std::ptr::eq(shape, &self.pulse_bh) {
                means.1
            } else {
                means.0
            };
            let pulse = shape.value(p.rem_euclid(1.0)) - mean;
            let f = self.flow.value(t, self.t_start, self.t_bh) * (1.0 + self.pulsatility * pulse);
            let v = self.volume.value(t, self.t_start, self.t_bh)
                * (1.0 + self.volume_pulsatility * pulse);
            if !(f >= 0.1 && v >= 0.1) {
                return Err(SynthError::InvalidScript(format!(
                    "flow and volume must stay at or above 0.1 (t = {t} s)"
                )));
            }
            tl.flow.push(f);
            tl.volume.push(v);
            tl.hr_bpm.push(self.hr_at(t));
        }
        Ok(tl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn envelope_starts_at_zero_and_peaks_at_one() {
        let e = ResponseEnvelope::default();
        assert_eq!(e.shape(59.0, 60.0, 35.0), 0.0);
        assert!(e.shape(60.0 + 1e-9, 60.0, 35.0) < 1e-6);
        let tp = e.peak_time(60.0, 35.0);
        assert_relative_eq!(e.shape(tp, 60.0, 35.0), 1.0, epsilon = 1e-12);
        for dt in [-0.5, -0.1, 0.1, 0.5] {
            assert!(e.shape(tp + dt, 60.0, 35.0) < 1.0);
        }
        assert!(e.shape(179.0, 60.0, 35.0) < 0.01);
    }

    #[test]
    fn decay_tail_follows_time_constant() {
        let e = ResponseEnvelope::default();
        let tp = e.peak_time(60.0, 35.0);
        let r = e.shape(tp + 20.0, 60.0, 35.0) / e.shape(tp + 28.0, 60.0, 35.0);
        assert_relative_eq!(r.ln(), 1.0, max_relative = 0.01);
    }

    #[test]
    fn pulse_template_hits_knots() {
        let p = PulseShape {
            p1: 1.0,
            p2: 0.84,
            p3: 0.35,
        };
        assert_relative_eq!(p.value(0.0), 0.0);
        assert_relative_eq!(p.value(PulseShape::P1_PHASE), 1.0);
        assert_relative_eq!(p.value(PulseShape::P2_PHASE), 0.84);
        assert_relative_eq!(p.value(PulseShape::P3_PHASE), 0.35);
        assert_relative_eq!(p.value(PulseShape::NOTCH_PHASE), 0.175);
        assert!(p.value(0.9999) < 1e-6);
        let m = p.mean();
        assert!(m > 0.2 && m < 0.5);
    }

    #[test]
    fn pulse_validation() {
        assert!(PulseShape {
            p1: 1.0,
            p2: 0.8,
            p3: 0.9
        }
        .validate()
        .is_err());
        assert!(PulseShape {
            p1: 0.9,
            p2: 1.0,
            p3: 0.3
        }
        .validate()
        .is_ok());
        assert!(PulseShape {
            p1: 0.0,
            p2: 1.0,
            p3: 0.3
        }
        .validate()
        .is_err());
    }

    #[test]
    fn constant_rate_gives_regular_onsets() {
        let s = SessionScript {
            duration: 60.0,
            t_start: 30.0,
            t_bh: 10.0,
            flow: ResponseEnvelope::flat(),
            volume: ResponseEnvelope::flat(),
            heart_rate: HeartRateProfile {
                rest_bpm: 72.0,
                peak_bpm: 72.0,
            },
            initial_phase: 0.0,
            ..SessionScript::default()
        };
        let tl = s.sample(&[0.0, 1.0]).unwrap();
        assert_eq!(tl.pulse_onsets.len(), 71);
        for w in tl.pulse_onsets.windows(2) {
            assert_relative_eq!(w[1] - w[0], 60.0 / 72.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn invalid_scripts() {
        let s = SessionScript {
            t_start: 170.0,
            t_bh: 20.0,
            ..SessionScript::default()
        };
        assert!(matches!(s.validate(), Err(SynthError::InvalidScript(_))));
        let s = SessionScript {
            flow: ResponseEnvelope {
                amplitude: -0.88,
                ..ResponseEnvelope::default()
            },
            pulsatility: 0.9,
            ..SessionScript::default()
        };
        let times: Vec<f64> = (0..1800).map(|i| i as f64 * 0.1).collect();
        assert!(matches!(
            s.sample(&times),
            Err(SynthError::InvalidScript(_))
        ));
    }
}
