use serde::{Deserialize, Serialize};

use super::SynthError;

/// Physical parameters of a dynamic speckle pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecklePhysics {
    /// Field decorrelation time, seconds. `f64::INFINITY` gives static speckle.
    pub tau_c: f64,
    /// Coherence factor in (0, 1].
    pub beta: f64,
    /// Speckle diameter in pixels, at least 1. A value of 1 leaves pixels
    /// uncorrelated.
    pub speckle_px: f64,
    /// Mean photoelectrons per pixel per exposure.
    pub mean_e: f64,
}

impl Default for SpecklePhysics {
    fn default() -> Self {
        Self {
            tau_c: 0.01,
            beta: 1.0,
            speckle_px: 1.0,
            mean_e: 300.0,
        }
    }
}

impl SpecklePhysics {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |field: &'static str, reason: &str| {
            Err(SynthError::InvalidPhysics {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.tau_c > 0.0) {
            return bad("tau_c", "must be positive");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta", "must lie in (0, 1]");
        }
        if !(self.speckle_px.is_finite() && self.speckle_px >= 1.0) {
            return bad("speckle_px", "must be at least 1");
        }
        if !(self.mean_e.is_finite() && self.mean_e > 0.0) {
            return bad("mean_e", "must be a finite positive number");
        }
        Ok(())
    }
}

/// Knobs of the numerical integration over one exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Lower bound on sub-steps per exposure.
    pub min_substeps: usize,
    /// Upper bound on sub-step length as a fraction of `tau_c`.
    pub max_step_over_tau: f64,
    /// Overrides the adaptive sub-step count.
    pub fixed_substeps: Option<usize>,
    /// Shot and read noise. Quantization to integer ADU always applies.
    pub camera_noise: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            min_substeps: 8,
            max_step_over_tau: 0.15,
            fixed_substeps: None,
            camera_noise: true,
        }
    }
}

impl SynthOptions {
    pub fn substeps(&self, exposure: f64, tau_c: f64) -> usize {
        if let Some(m) = self.fixed_substeps {
            return m.max(1);
        }
        if tau_c.is_infinite() {
            return 1;
        }
        let x = exposure / tau_c;
        let adaptive = (x / self.max_step_over_tau).ceil() as usize;
        adaptive.max(self.min_substeps)
    }
}

/// `(e^{−2x} − 1 + 2x)/(2x²)`, the contrast of exponentially decorrelating
/// speckle integrated over an exposure of `x` decorrelation times, divided
/// by the coherence factor.
pub fn normalized_contrast(x: f64) -> f64 {
    if x < 0.5 {
        // Σ 2(−2x)ⁿ/(n+2)!, avoiding cancellation near zero.
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..40 {
            term *= -2.0 * x / (n as f64 + 2.0);
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        ((-2.0 * x).exp() - 1.0 + 2.0 * x) / (2.0 * x * x)
    }
}

/// Analytic speckle contrast `K²` for a given decorrelation time, exposure
/// and coherence factor.
pub fn expected_contrast(tau_c: f64, exposure: f64, beta: f64) -> f64 {
    beta * normalized_contrast(exposure / tau_c)
}

/// Inverse of [`normalized_contrast`] on `(0, 1)`.
pub fn exposure_ratio_for_contrast(target: f64) -> Option<f64> {
    if !(target > 0.0 && target < 1.0) {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while normalized_contrast(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normalized_contrast(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Weights of `n` independent, incoherently summed speckle patterns whose
/// combined contrast is `beta` times that of a single pattern:
/// `Σw = 1`, `Σw² = beta`.
pub fn channel_weights(beta: f64) -> Vec<f64> {
    if beta >= 1.0 {
        return vec![1.0];
    }
    let n = (1.0 / beta - 1e-12).ceil().max(2.0) as usize;
    let nf = n as f64;
    let disc = ((nf - 1.0) * (nf * beta - 1.0)).max(0.0);
    let w0 = (1.0 + disc.sqrt()) / nf;
    let rest = (1.0 - w0) / (nf - 1.0);
    let mut w = vec![rest; n];
    w[0] = w0;
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent route: `K²/β = (2/T)∫₀ᵀ (1 − τ/T)|g₁(τ)|² dτ` with
    /// `g₁(τ) = e^{−τ/τ_c}`, integrated by composite Simpson.
    fn contrast_by_quadrature(x: f64) -> f64 {
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |u: f64| 2.0 * (1.0 - u) * (-2.0 * x * u).exp();
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn static_limit_is_beta() {
        assert_relative_eq!(expected_contrast(f64::INFINITY, 0.01, 0.7), 0.7);
        assert_relative_eq!(expected_contrast(1e9, 0.01, 1.0), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn unit_exposure_ratio() {
        let v = expected_contrast(1.0, 1.0, 1.0);
        assert_relative_eq!(v, ((-2.0f64).exp() + 1.0) / 2.0, epsilon = 1e-15);
        assert!((v - 0.5677).abs() < 5e-5);
        assert_relative_eq!(contrast_by_quadrature(1.0), v, epsilon = 1e-10);
        assert_relative_eq!(expected_contrast(1.0, 1.0, 0.5), v / 2.0, epsilon = 1e-15);
        assert!((expected_contrast(1.0, 1.0, 0.5) - 0.2838).abs() < 1e-4);
    }

    #[test]
    fn matches_quadrature_over_range() {
        for &x in &[1e-4, 0.01, 0.3, 0.49, 0.5, 0.51, 2.0, 5.0, 20.0, 100.0] {
            assert_relative_eq!(
                normalized_contrast(x),
                contrast_by_quadrature(x),
                max_relative = 1e-8
            );
        }
        assert_relative_eq!(normalized_contrast(5.0), 0.18, max_relative = 1e-3);
    }

    #[test]
    fn inverse_round_trip() {
        for &x in &[0.01, 0.5, 1.0, 3.3, 40.0] {
            let k = normalized_contrast(x);
            assert_relative_eq!(
                exposure_ratio_for_contrast(k).unwrap(),
                x,
                max_relative = 1e-9
            );
        }
        assert!(exposure_ratio_for_contrast(1.0).is_none());
        assert!(exposure_ratio_for_contrast(0.0).is_none());
    }

    #[test]
    fn strictly_decreasing() {
        let mut prev = normalized_contrast(0.0);
        for i in 1..2000 {
            let v = normalized_contrast(i as f64 * 0.01);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn weights_reproduce_beta() {
        for &beta in &[1.0, 0.9, 0.5, 0.37, 0.2, 0.05] {
            let w = channel_weights(beta);
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(w.iter().map(|x| x * x).sum::<f64>(), beta, epsilon = 1e-12);
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn substep_rule() {
        let o = SynthOptions::default();
        assert_eq!(o.substeps(0.01, f64::INFINITY), 1);
        assert_eq!(o.substeps(0.01, 0.01), 8);
        assert_eq!(o.substeps(0.01, 0.0005), 134);
    }
}
