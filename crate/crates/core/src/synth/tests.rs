use super::*;
use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn white(n: usize, fs: f64, seed: u64) -> VibrationSignal<f64> {
    let mut r = rng(seed);
    VibrationSignal::new((0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect(), fs).unwrap()
}

fn cwru(n: usize) -> SynthConfig {
    SynthConfig::new(12_000.0, n, 3)
}

fn dft_magnitude(x: &[f64], bin_freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let ph = 2.0 * PI * bin_freq * i as f64;
        re += v * ph.cos();
        im -= v * ph.sin();
    }
    (re * re + im * im).sqrt()
}

#[test]
fn impact_length_and_window() {
    let imp = impact_waveform(&FaultSpec::outer_race(0.01), &cwru(4096)).unwrap();
    assert_eq!(imp.window_len, 6);
    let w = hann(6);
    assert_eq!(w[0], 0.0);
    assert!(w[5].abs() < 1e-15);
    assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn impact_is_band_limited() {
    let imp = impact_waveform(&FaultSpec::outer_race(0.01), &cwru(4096)).unwrap();
    let n = imp.samples.len();
    let pass = (1..n / 2).map(|k| dft_magnitude(&imp.samples, k as f64 / n as f64)).fold(0.0, f64::max);
    let db = |m: f64| 20.0 * (m / pass).log10();
    assert!(db(dft_magnitude(&imp.samples, 0.0)) <= -20.0);
    assert!(db(dft_magnitude(&imp.samples, 0.5)) <= -20.0);
}

#[test]
fn too_short_impact_is_rejected() {
    let spec = FaultSpec::outer_race(0.001);
    assert!(matches!(impact_waveform(&spec, &cwru(1024)), Err(Error::InvalidSpec(_))));
}

#[test]
fn modulation_profiles() {
    assert!(modulation_profile(7, &FaultSpec::outer_race(0.01)).iter().all(|&a| a == 1.0));
    let spec = FaultSpec { sidebands: vec![1.0, 1.0], ..FaultSpec::modulated(FaultType::Irf, 0.25, 1.0) };
    let a = modulation_profile(8, &spec);
    for (got, want) in a.iter().zip([2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
    }
}

#[test]
fn lambda_has_unit_mean() {
    let a = modulation_amplitudes(100_000, &FaultSpec::outer_race(0.01), &cwru(1024), &mut rng(4)).unwrap();
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    assert!((mean - 1.0).abs() <= 0.002, "mean {mean}");
    assert!(modulation_amplitudes(0, &FaultSpec::outer_race(0.01), &cwru(1024), &mut rng(4)).is_err());
}

#[test]
fn healthy_output_is_scaled_noise() {
    let ramp = VibrationSignal::new((0..5000).map(|k| (k + 1) as f64).collect(), 12_000.0).unwrap();
    let out = synthesize_signal(&FaultSpec::healthy(), &ramp, &cwru(1024), &mut rng(5)).unwrap();
    let start = (out.signal.samples[0] / out.beta).round() as usize - 1;
    for (i, v) in out.signal.samples.iter().enumerate() {
        assert_abs_diff_eq!(*v, out.beta * (start + i + 1) as f64, epsilon = 1e-9);
    }
    assert!((0.25..=2.0).contains(&out.beta));
}

#[test]
fn impacts_repeat_every_period() {
    let cfg = SynthConfig { lambda_std: 0.0, ..cwru(4096) };
    let x = impulse_train(&FaultSpec::outer_race(0.01), &cfg, &mut rng(6)).unwrap();
    let ac = |lag: usize| x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>();
    let best = (60..180).max_by(|&a, &b| ac(a).total_cmp(&ac(b))).unwrap();
    assert_eq!(best, 120);

    // consecutive maxima sit one period apart
    let peaks: Vec<usize> = (0..x.len() / 120 - 1)
        .map(|k| {
            let seg = &x[k * 120..(k + 1) * 120];
            k * 120 + (0..120).max_by(|&a, &b| seg[a].total_cmp(&seg[b])).unwrap()
        })
        .collect();
    for w in peaks.windows(2) {
        assert!((w[1] as i64 - w[0] as i64 - 120).abs() <= 1, "{w:?}");
    }
}

#[test]
fn outer_race_envelope_peaks_at_fault_frequency() {
    let cfg = cwru(4096);
    let noise = white(20_000, cfg.fs, 7);
    let cfg = SynthConfig { beta_range: (0.05, 0.05), ..cfg };
    let out = synthesize_signal(&FaultSpec::outer_race(0.01), &noise, &cfg, &mut rng(8)).unwrap();
    let env = crate::pipeline::envelope_spectrum(&out.signal.samples).unwrap();
    let peak = (1..env.len()).max_by(|&a, &b| env[a].total_cmp(&env[b])).unwrap();
    let res = cfg.fs / 4096.0;
    assert!((peak as f64 * res - 100.0).abs() <= res, "peak at {} Hz", peak as f64 * res);
}

#[test]
fn short_noise_is_rejected() {
    let noise = white(100, 12_000.0, 1);
    let err = synthesize_signal(&FaultSpec::outer_race(0.01), &noise, &cwru(1024), &mut rng(0)).unwrap_err();
    assert!(matches!(err, Error::InsufficientNoise { needed: 1024, available: 100 }));
    let other_rate = white(2048, 48_000.0, 1);
    assert!(synthesize_signal(&FaultSpec::healthy(), &other_rate, &cwru(1024), &mut rng(0)).is_err());
}

#[test]
fn kinematics_of_the_drive_end_bearing() {
    let f = BearingGeometry::skf_6205().defect_frequencies(1.0);
    assert_abs_diff_eq!(f.bpfo, 3.585, epsilon = 2e-3);
    assert_abs_diff_eq!(f.bpfi, 5.415, epsilon = 2e-3);
    assert_abs_diff_eq!(f.bsf, 2.357, epsilon = 2e-3);
    assert_abs_diff_eq!(f.ftf, 0.398, epsilon = 2e-3);
    let cat = FaultSpec::catalog(&BearingGeometry::skf_6205(), 29.95);
    assert_eq!(cat.len(), 4);
    for spec in cat.values() {
        spec.validate().unwrap();
    }
    assert_eq!(cat[&FaultType::Orf].sideband_count(), 0);
    assert_eq!(cat[&FaultType::Irf].sideband_count(), 2);
}

#[test]
fn spec_invariants() {
    let mut orf = FaultSpec::outer_race(0.01);
    orf.sidebands = vec![1.0, 0.5];
    assert!(orf.validate().is_err());
    let mut irf = FaultSpec::modulated(FaultType::Irf, 0.01, 0.0);
    assert!(irf.validate().is_err());
    irf.modulation_period = 0.03;
    irf.duty = 1.0;
    assert!(irf.validate().is_err());
    assert_eq!("orf".parse::<FaultType>().unwrap(), FaultType::Orf);
    assert!("xyz".parse::<FaultType>().is_err());
}

#[test]
fn config_invariants() {
    let mut cfg = cwru(1024);
    cfg.band = (100.0, 7000.0);
    assert!(cfg.validate().is_err());
    let mut cfg = cwru(1024);
    cfg.beta_range = (0.0, 1.0);
    assert!(cfg.validate().is_err());
    let parsed: SynthConfig = toml::from_str("fs = 12000.0\nn_samples = 512\nband = [300.0, 5700.0]\nseed = 1").unwrap();
    assert_eq!(parsed.beta_range, (0.25, 2.0));
    assert_eq!(parsed.lambda_std, 0.1);
}

fn small_dataset(per_class: usize, seed: u64) -> GeneratedDataset<f64> {
    let cfg = SynthConfig::new(12_000.0, 512, seed);
    let specs = FaultSpec::catalog(&BearingGeometry::skf_6205(), 29.95);
    let noise = white(4000, cfg.fs, 9);
    generate_source_dataset(&specs, &FaultType::ALL, &noise, per_class, &cfg).unwrap()
}

#[test]
fn datasets_are_balanced_and_reproducible() {
    let g = small_dataset(3, 1);
    assert_eq!(g.dataset.len(), 12);
    assert_eq!(g.dataset.dim(), 256);
    let counts = g.dataset.class_counts().unwrap();
    assert!(counts.values().all(|&c| c == 3));
    assert!(g.betas.iter().all(|b| (0.25..=2.0).contains(b)));
    let again = small_dataset(3, 1);
    assert_eq!(g.dataset.features, again.dataset.features);
    assert_ne!(g.dataset.features, small_dataset(3, 2).dataset.features);

    let one = small_dataset(1, 1);
    assert_eq!(one.dataset.labels.unwrap(), vec![0, 1, 2, 3]);
}

#[test]
fn missing_spec_is_a_config_error() {
    let cfg = SynthConfig::new(12_000.0, 512, 0);
    let mut specs = FaultSpec::catalog(&BearingGeometry::skf_6205(), 29.95);
    specs.remove(&FaultType::Bf);
    let noise = white(4000, cfg.fs, 9);
    let err = generate_source_dataset(&specs, &FaultType::ALL, &noise, 2, &cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn simulated_healthy_signal() {
    let s: VibrationSignal<f32> = simulate_healthy(&HealthyProfile::drive_end(), 12_000.0, 8192, &mut rng(1)).unwrap();
    assert_eq!(s.len(), 8192);
    let rms = (s.samples.iter().map(|v| (v * v) as f64).sum::<f64>() / 8192.0).sqrt();
    assert!(rms > 0.1 && rms < 1.0, "rms {rms}");
    let bad = HealthyProfile { resonance: (5000.0, 7000.0), ..HealthyProfile::drive_end() };
    assert!(simulate_healthy::<f32, _>(&bad, 12_000.0, 100, &mut rng(1)).is_err());
}

proptest::proptest! {
    #[test]
    fn integer_ratio_profiles_are_periodic(q in 2usize..8, n in 1usize..40) {
        let spec = FaultSpec::modulated(FaultType::Bf, 0.01, 0.01 * q as f64);
        let a = modulation_profile(n + q, &spec);
        for j in 0..n {
            proptest::prop_assert!((a[j] - a[j + q]).abs() < 1e-9);
        }
    }
}
