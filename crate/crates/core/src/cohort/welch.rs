use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::CohortError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "ns")]
    NotSignificant,
    #[serde(rename = "*")]
    P05,
    #[serde(rename = "**")]
    P01,
    #[serde(rename = "***")]
    P001,
    #[serde(rename = "****")]
    P0001,
}

impl Significance {
    /// Strict thresholds: exactly 0.05 is not significant.
    pub fn from_p(p: f64) -> Self {
        if p < 1e-4 {
            Self::P0001
        } else if p < 1e-3 {
            Self::P001
        } else if p < 1e-2 {
            Self::P01
        } else if p < 0.05 {
            Self::P05
        } else {
            Self::NotSignificant
        }
    }

    pub fn stars(self) -> &'static str {
        match self {
            Self::NotSignificant => "ns",
            Self::P05 => "*",
            Self::P01 => "**",
            Self::P001 => "***",
            Self::P0001 => "****",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stars())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 divisor).
    pub std: f64,
}

impl GroupStats {
    pub fn of(sample: &[f64]) -> Self {
        let n = sample.len();
        let mean = sample.iter().sum::<f64>() / n as f64;
        let ss: f64 = sample.iter().map(|x| (x - mean) * (x - mean)).sum();
        let std = if n > 1 {
            (ss / (n - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { n, mean, std }
    }

    fn var_of_mean(&self) -> f64 {
        self.std * self.std / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub a: GroupStats,
    pub b: GroupStats,
    pub t_statistic: f64,
    /// Welch–Satterthwaite, not rounded.
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
    pub significance: Significance,
    /// Both samples have zero variance; p is set by convention.
    pub degenerate: bool,
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() || !(df > 0.0) {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    // P(|T| > t) = I_{ν/(ν+t²)}(ν/2, 1/2), written to avoid cancellation
    // when t² dominates.
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Welch's unequal-variance t-test of `a` against `b`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<GroupComparison, CohortError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(CohortError::DegenerateSample {
            reason: format!(
                "groups of {} and {}, need at least 2 each",
                a.len(),
                b.len()
            ),
        });
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(CohortError::NonFinite);
    }
    let (sa, sb) = (GroupStats::of(a), GroupStats::of(b));
    let (va, vb) = (sa.var_of_mean(), sb.var_of_mean());
    let diff = sa.mean - sb.mean;
    if va + vb == 0.0 {
        let (t, p) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return Ok(GroupComparison {
            a: sa,
            b: sb,
            t_statistic: t,
            degrees_of_freedom: f64::NAN,
            p_value: p,
            significance: Significance::from_p(p),
            degenerate: true,
        });
    }
    let t = diff / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (sa.n - 1) as f64 + vb * vb / (sb.n - 1) as f64);
    let p = student_t_two_sided(t, df);
    Ok(GroupComparison {
        a: sa,
        b: sb,
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        significance: Significance::from_p(p),
        degenerate: false,
    })
}

/// Test-side reference: two-sided Student-t tail by exp-sinh quadrature of
/// the unnormalized density, divided by the quadrature of the whole line.
#[cfg(test)]
fn quadrature_two_sided(t: f64, df: f64) -> f64 {
    let g = |x: f64| (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    // ∫_a^∞ g by x = a + exp(π/2·sinh u).
    let tail = |a: f64| {
        let h = 1.0 / 128.0;
        let half_pi = std::f64::consts::FRAC_PI_2;
        let mut s = 0.0;
        let mut k: f64 = -6.0 / h;
        while k <= 6.0 / h {
            let u = k * h;
            let e = (half_pi * u.sinh()).exp();
            let w = half_pi * u.cosh() * e;
            let v = g(a + e) * w;
            if v.is_finite() {
                s += v;
            }
            k += 1.0;
        }
        s * h
    };
    tail(t.abs()) / tail(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_pair() {
        let r = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.t_statistic, -1.0);
        assert_eq!(r.degrees_of_freedom, 8.0);
        let oracle = quadrature_two_sided(-1.0, 8.0);
        assert!(
            (r.p_value - oracle).abs() < 1e-12,
            "{} vs {}",
            r.p_value,
            oracle
        );
        assert!((r.p_value - 0.346_593_507_087_334_16).abs() < 1e-12);
        assert_eq!(r.significance, Significance::NotSignificant);
    }

    #[test]
    fn identical_samples() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!((r.t_statistic, r.p_value), (0.0, 1.0));
        assert_eq!(r.significance, Significance::NotSignificant);
    }

    #[test]
    fn degenerate_conventions() {
        assert!(matches!(
            welch_t_test(&[1.0], &[1.0, 2.0]),
            Err(CohortError::DegenerateSample { .. })
        ));
        let same = welch_t_test(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!(same.degenerate && same.p_value == 1.0);
        let apart = welch_t_test(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert!(apart.degenerate && apart.p_value == 0.0);
        assert_eq!(apart.significance, Significance::P0001);
    }

    #[test]
    fn threshold_boundaries_are_strict() {
        let cases = [
            (0.05, "ns"),
            (0.049_999, "*"),
            (0.01, "*"),
            (0.001, "**"),
            (0.0001, "***"),
            (0.000_099, "****"),
            (1e-6, "****"),
            (1.0, "ns"),
        ];
        for (p, s) in cases {
            assert_eq!(Significance::from_p(p).stars(), s, "p = {p}");
        }
    }

    #[test]
    fn far_tail_matches_quadrature() {
        for (t, df) in [
            (5.78, 33.2),
            (12.0, 4.5),
            (0.01, 2.2),
            (2.0, 100.0),
            (40.0, 48.0),
        ] {
            let got = student_t_two_sided(t, df);
            let want = quadrature_two_sided(t, df);
            assert!((got - want).abs() < 1e-12, "t={t} df={df}: {got} vs {want}");
        }
    }

    proptest! {
        #[test]
        fn swap_negates_t_and_keeps_p(a in prop::collection::vec(-10.0f64..10.0, 2..12), b in prop::collection::vec(-10.0f64..10.0, 2..12)) {
            let (Ok(x), Ok(y)) = (welch_t_test(&a, &b), welch_t_test(&b, &a)) else { return Ok(()); };
            prop_assert_eq!(x.t_statistic, -y.t_statistic);
            prop_assert_eq!(x.p_value, y.p_value);
        }

        #[test]
        fn affine_transform_keeps_p(
            a in prop::collection::vec(-10.0f64..10.0, 3..12),
            b in prop::collection::vec(-10.0f64..10.0, 3..12),
            scale in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
            shift in -100.0f64..100.0,
        ) {
            let x = welch_t_test(&a, &b).unwrap();
            let ta: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
            let tb: Vec<f64> = b.iter().map(|v| scale * v + shift).collect();
            let y = welch_t_test(&ta, &tb).unwrap();
            prop_assert!((x.p_value - y.p_value).abs() < 1e-9, "{} vs {}", x.p_value, y.p_value);
        }

        #[test]
        fn p_is_a_probability(a in prop::collection::vec(-1e3f64..1e3, 2..30), b in prop::collection::vec(-1e3f64..1e3, 2..30)) {
            if let Ok(r) = welch_t_test(&a, &b) {
                prop_assert!((0.0..=1.0).contains(&r.p_value));
                prop_assert_eq!(r.significance, Significance::from_p(r.p_value));
            }
        }
    }
}
