use proptest::prelude::*;
use scos::synth::*;
use scos::trace::*;

fn small(side: u32) -> AcquisitionConfig {
    AcquisitionConfig {
        roi_width: side,
        roi_height: side,
        ..AcquisitionConfig::default()
    }
}

fn mean_k_adj(stream: &FrameStream) -> f64 {
    let tr = trace_from_stream(stream);
    tr.samples.iter().map(|s| s.k_adj_sq).sum::<f64>() / tr.len() as f64
}

fn noiseless(fixed: Option<usize>) -> SynthOptions {
    SynthOptions {
        camera_noise: false,
        fixed_substeps: fixed,
        ..SynthOptions::default()
    }
}

/// Asymptotic Kolmogorov survival function `Q(λ) = 2Σ(−1)^{k−1}e^{−2k²λ²}`
/// with the small-sample correction of Stephens.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut q = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powi(k as i32 - 1) * (-2.0 * k * k * lambda * lambda).exp();
        q += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    q.clamp(0.0, 1.0)
}

#[test]
fn static_speckle_has_unit_contrast() {
    let config = AcquisitionConfig {
        bit_depth: 16,
        ..small(256)
    };
    let physics = SpecklePhysics {
        tau_c: f64::INFINITY,
        mean_e: 2000.0,
        ..SpecklePhysics::default()
    };
    let s = generate_speckle_sequence_with(&physics, &config, &noiseless(None), 4, 5).unwrap();
    for f in &s.frames {
        let k = compute_raw_contrast(f, &config).unwrap();
        assert!((k - 1.0).abs() < 0.02, "k = {k}");
    }
}

#[test]
fn static_contrast_scales_with_beta() {
    let config = AcquisitionConfig {
        bit_depth: 16,
        ..small(256)
    };
    let physics = SpecklePhysics {
        tau_c: f64::INFINITY,
        beta: 0.5,
        mean_e: 2000.0,
        ..SpecklePhysics::default()
    };
    let s = generate_speckle_sequence_with(&physics, &config, &noiseless(None), 1, 9).unwrap();
    let k = compute_raw_contrast(&s.frames[0], &config).unwrap();
    assert!((k - 0.5).abs() < 0.01, "k = {k}");
    let b = calibrate_beta(&physics, &config, 9).unwrap();
    assert!((b - 0.5).abs() < 0.01, "b = {b}");
}

#[test]
fn exposure_ratio_five_matches_analytic_contrast() {
    let config = small(128);
    let physics = SpecklePhysics {
        tau_c: config.exposure / 5.0,
        ..SpecklePhysics::default()
    };
    let s = generate_speckle_sequence(&physics, &config, 60, 21).unwrap();
    let k = mean_k_adj(&s);
    let expected = (f64::exp(-10.0) - 1.0 + 10.0) / 50.0;
    assert!(
        (k / expected - 1.0).abs() < 0.05,
        "k = {k}, expected {expected}"
    );
}

#[test]
fn halving_decorrelation_time_lowers_contrast() {
    let config = small(64);
    let a = SpecklePhysics {
        tau_c: 0.004,
        ..SpecklePhysics::default()
    };
    let b = SpecklePhysics { tau_c: 0.002, ..a };
    let ka = mean_k_adj(&generate_speckle_sequence(&a, &config, 30, 1).unwrap());
    let kb = mean_k_adj(&generate_speckle_sequence(&b, &config, 30, 1).unwrap());
    assert!(kb < ka, "{kb} !< {ka}");
}

#[test]
fn single_substep_intensity_is_exponential() {
    let config = small(320);
    let physics = SpecklePhysics::default();
    let mut gen = SpeckleGenerator::new(physics, config, noiseless(Some(1)), 77).unwrap();
    let mut v = gen.next_intensity(physics.tau_c);
    v.truncate(100_000);
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-x).exp();
            (cdf - i as f64 / n)
                .abs()
                .max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max);
    let p = ks_p_value(d, v.len());
    assert!(p > 0.01, "KS D = {d}, p = {p}");
}

#[test]
fn mean_level_matches_photon_budget() {
    let config = AcquisitionConfig {
        gain: 2.0,
        dark_offset: 20.0,
        ..small(128)
    };
    let physics = SpecklePhysics {
        mean_e: 800.0,
        ..SpecklePhysics::default()
    };
    let s = generate_speckle_sequence(&physics, &config, 10, 4).unwrap();
    let expected = physics.mean_e / config.gain + config.dark_offset;
    for f in &s.frames {
        let m = FrameMoments::from_samples(&f.samples).mean();
        assert!((m / expected - 1.0).abs() < 0.01, "mean {m} vs {expected}");
    }
}

#[test]
fn coarse_substeps_agree_with_fine_reference() {
    let config = AcquisitionConfig {
        bit_depth: 16,
        ..small(128)
    };
    let physics = SpecklePhysics {
        tau_c: config.exposure,
        mean_e: 5000.0,
        ..SpecklePhysics::default()
    };
    let k8 = mean_k_adj(
        &generate_speckle_sequence_with(&physics, &config, &noiseless(Some(8)), 40, 2).unwrap(),
    );
    let k64 = mean_k_adj(
        &generate_speckle_sequence_with(&physics, &config, &noiseless(Some(64)), 40, 2).unwrap(),
    );
    let exact = expected_contrast(physics.tau_c, config.exposure, 1.0);
    assert!((k64 / exact - 1.0).abs() < 0.02, "k64 {k64} vs {exact}");
    assert!((k8 / k64 - 1.0).abs() < 0.03, "k8 {k8} vs k64 {k64}");
}

#[test]
fn flat_frames_leave_no_adjusted_contrast() {
    let config = AcquisitionConfig {
        read_noise: 5.0,
        ..small(128)
    };
    let s = generate_flat_sequence(&config, 200.0, 100, 8).unwrap();
    let tr = trace_from_stream(&s);
    for x in &tr.samples {
        assert!(x.k_adj_sq.abs() < 0.003, "k_adj {}", x.k_adj_sq);
    }
}

#[test]
fn larger_speckles_correlate_neighbours() {
    let config = small(128);
    let physics = SpecklePhysics {
        tau_c: f64::INFINITY,
        speckle_px: 3.0,
        ..SpecklePhysics::default()
    };
    let mut gen = SpeckleGenerator::new(physics, config, noiseless(None), 6).unwrap();
    let i = gen.next_intensity(f64::INFINITY);
    let n = i.len() as f64;
    let mean = i.iter().sum::<f64>() / n;
    let var = i.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cov = i
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / (n - 1.0);
    assert!(cov / var > 0.3, "neighbour correlation {}", cov / var);
    let b = calibrate_beta(&physics, &config, 6).unwrap();
    assert!(b > 0.85 && b < 1.02, "calibrated beta {b}");
}

#[test]
fn invalid_physics_is_rejected() {
    let config = small(16);
    for p in [
        SpecklePhysics {
            tau_c: 0.0,
            ..Default::default()
        },
        SpecklePhysics {
            beta: 1.5,
            ..Default::default()
        },
        SpecklePhysics {
            speckle_px: 0.5,
            ..Default::default()
        },
        SpecklePhysics {
            mean_e: -1.0,
            ..Default::default()
        },
    ] {
        assert!(matches!(
            generate_speckle_sequence(&p, &config, 1, 0),
            Err(SynthError::InvalidPhysics { .. })
        ));
    }
    assert!(matches!(
        generate_speckle_sequence(&SpecklePhysics::default(), &config, 0, 0),
        Err(SynthError::NoFrames)
    ));
}

#[test]
fn session_is_streamed_in_order() {
    let config = small(16);
    let script = SessionScript {
        duration: 50.0,
        t_start: 30.0,
        t_bh: 10.0,
        ..SessionScript::default()
    };
    let (stream, truth) =
        synthesize_breathhold_session(&script, &SpecklePhysics::default(), &config, 12).unwrap();
    assert_eq!(stream.len(), 3000);
    assert_eq!(truth.frame_t.len(), 3000);
    for (f, t) in stream.frames.iter().zip(&truth.frame_t) {
        assert_eq!(f.timestamp, *t);
    }
    let again = SessionSynth::new(&script, &SpecklePhysics::default(), &config, 12).unwrap();
    assert!(again.zip(&stream.frames).all(|(a, b)| &a == b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn identical_inputs_give_identical_frames(
        seed in any::<u64>(),
        tau_ms in 0.5f64..50.0,
        beta in 0.2f64..1.0,
        speckle in 1.0f64..3.0,
    ) {
        let config = small(16);
        let physics = SpecklePhysics { tau_c: tau_ms * 1e-3, beta, speckle_px: speckle, mean_e: 300.0 };
        let a = generate_speckle_sequence(&physics, &config, 3, seed).unwrap();
        let b = generate_speckle_sequence(&physics, &config, 3, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let c = generate_speckle_sequence(&physics, &config, 3, seed ^ 1).unwrap();
        prop_assert_ne!(&a, &c);
    }
}
