mod common;

use noisefield::rng;
use noisefield::spectral::{periodogram, DEFAULT_OVERLAP, DEFAULT_SEGMENT};
use noisefield::waveform::*;
use noisefield::Trace;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rustfft::FftPlanner;

fn yule_walker(phi1: f64, phi2: f64, max_lag: usize) -> Vec<f64> {
    let mut rho = vec![1.0, phi1 / (1.0 - phi2)];
    for k in 2..=max_lag {
        rho.push(phi1 * rho[k - 1] + phi2 * rho[k - 2]);
    }
    rho
}

/// Magnitude of the dominant inverse root, the decay envelope of the ACF.
fn decay(phi1: f64, phi2: f64) -> f64 {
    let disc = phi1 * phi1 + 4.0 * phi2;
    if disc < 0.0 {
        (-phi2).sqrt()
    } else {
        (phi1.abs() + disc.sqrt()) / 2.0
    }
}

fn assert_acf_matches(phi1: f64, phi2: f64) {
    let ar = ArCoefficients::new(phi1, phi2).unwrap();
    let rec = yule_walker(phi1, phi2, 100);
    let g = decay(phi1, phi2);
    for (k, r) in rec.iter().enumerate() {
        let scale = g.powi(k as i32).max(f64::MIN_POSITIVE);
        let diff = (ar.acf(k) - r).abs();
        assert!(diff <= 1e-10 * scale, "({phi1}, {phi2}) lag {k}: {} vs {r}", ar.acf(k));
    }
}

#[test]
fn triangle_and_root_tests_agree() {
    let mut r = rng::stream(101, 0);
    let mut accepted = 0;
    for _ in 0..10_000 {
        let phi1 = r.random_range(-2.0..2.0);
        let phi2 = r.random_range(-2.0..2.0);
        let triangle = check_stationarity(phi1, phi2).unwrap().is_stationary();
        let roots = CharacteristicRoots::of(phi1, phi2).all_outside_unit_circle();
        assert_eq!(triangle, roots, "({phi1}, {phi2})");
        accepted += triangle as usize;
    }
    assert!(accepted > 1000);
}

proptest! {
    #[test]
    fn margin_sign_matches_verdict(phi1 in -2.5f64..2.5, phi2 in -2.5f64..2.5) {
        let r = check_stationarity(phi1, phi2).unwrap();
        prop_assert_eq!(r.margin > 0.0, r.is_stationary());
    }

    #[test]
    fn acf_matches_recursion(phi1 in -1.99f64..1.99, phi2 in -0.99f64..0.99) {
        prop_assume!(check_stationarity(phi1, phi2).unwrap().margin > 1e-3);
        assert_acf_matches(phi1, phi2);
    }

    #[test]
    fn acf_on_repeated_root_parabola(phi1 in -1.95f64..1.95) {
        assert_acf_matches(phi1, -phi1 * phi1 / 4.0);
    }

    #[test]
    fn acf_bounded(phi1 in -1.99f64..1.99, phi2 in -0.99f64..0.99, k in 0usize..200) {
        prop_assume!(check_stationarity(phi1, phi2).unwrap().is_stationary());
        let rho = ArCoefficients::new(phi1, phi2).unwrap().acf(k);
        prop_assert!(rho.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn roots_satisfy_polynomial(phi1 in -1.99f64..1.99, phi2 in -0.99f64..0.99) {
        prop_assume!(phi2 != 0.0 && check_stationarity(phi1, phi2).unwrap().is_stationary());
        let CharacteristicRoots::Pair(r1, r2) = CharacteristicRoots::of(phi1, phi2) else {
            panic!("quadratic branch expected");
        };
        for r in [r1, r2] {
            let residual = Complex64::new(1.0, 0.0) - phi1 * r - phi2 * r * r;
            prop_assert!(residual.norm() <= 1e-12 * (1.0 + r.norm_sqr()));
            prop_assert!(r.norm() > 1.0);
        }
    }

    #[test]
    fn envelope_finite_and_non_negative(t in 1u64..10_000_000, mu in -2.0f64..10.0, s in 0.1f64..4.0) {
        let env = EnvelopeParams::new(1.0, mu, s).unwrap();
        let v = innovation_std(t, &env);
        prop_assert!(v.is_finite() && v >= 0.0);
    }
}

#[test]
fn acf_edge_cases() {
    for (p1, p2) in [(0.9, -0.81), (1.2, -0.3), (1.0, -0.25), (-1.0, -0.25), (0.0, -0.25), (0.5, 0.3)] {
        assert_acf_matches(p1, p2);
    }
}

/// Bartlett's variance of the sample autocorrelation at lag `k`.
fn bartlett_se(rho: &dyn Fn(i64) -> f64, k: i64, n: usize) -> f64 {
    let mut s = 0.0;
    for i in -400..=400 {
        s += rho(i + k).powi(2) + rho(i - k) * rho(i + k) - 4.0 * rho(k) * rho(i) * rho(i + k)
            + 2.0 * rho(i).powi(2) * rho(k).powi(2);
    }
    (s / n as f64).sqrt()
}

#[test]
fn homoscedastic_run_matches_theory() {
    let n = 1_000_000;
    let ar = ArCoefficients::new(1.2, -0.3).unwrap();
    let x = Trace::from_samples(common::homoscedastic_ar2(1.2, -0.3, 1.0, n, 7)).unwrap();
    let acf = noisefield::spectral::empirical_acf(&x, 20).unwrap();
    let rho = |k: i64| ar.acf(k.unsigned_abs() as usize);
    for k in 1..=20 {
        let se = bartlett_se(&rho, k as i64, n);
        assert!((acf[k] - ar.acf(k)).abs() < 3.0 * se, "lag {k}: {} vs {}", acf[k], ar.acf(k));
    }

    let welch = periodogram(&x, DEFAULT_SEGMENT, DEFAULT_OVERLAP).unwrap();
    let (mut err, mut total) = (0.0, 0.0);
    for (f, v) in welch.frequencies.iter().zip(&welch.values) {
        let theory = 2.0 * ar2_psd(&ar, 1.0, *f);
        err += (v - theory).abs();
        total += theory;
    }
    assert!(err / total < 0.10, "integrated error {}", err / total);
}

fn reference_impulse() -> ImpulseConfig {
    ImpulseConfig::new(
        ArCoefficients::new(1.2, -0.3).unwrap(),
        EnvelopeParams::new(1.0, 7.0, 2.25).unwrap(),
        32_768,
    )
    .unwrap()
}

fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr() / n as f64).collect()
}

#[test]
fn averaged_impulse_spectrum_peaks_at_dc() {
    // The low-frequency plateau of |H(f)|^2 spans ~150 bins of a full-length
    // DFT, where bin-to-bin noise decides the argmax. With 64-sample segments
    // the corner falls near bin 2 and the expected drop to bin 1 is ~25%.
    let cfg = reference_impulse();
    let segment = 64;
    let mut acc = vec![0.0; segment / 2 + 1];
    for i in 0..1000 {
        let u = generate_impulse(&cfg, &mut rng::stream(11, i));
        let p = periodogram(&u, segment, DEFAULT_OVERLAP).unwrap();
        for (a, v) in acc.iter_mut().zip(p.values) {
            *a += v;
        }
    }
    let peak = acc.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(peak, 0, "{:?}", &acc[..8]);
    assert!(acc.windows(2).take(10).all(|w| w[1] < w[0]));
}

#[test]
fn innovation_spectrum_is_flat() {
    // Reference envelope: coarse flatness and total power.
    let cfg = reference_impulse();
    let realizations = 1000;
    let mut acc = vec![0.0; cfg.length / 2 + 1];
    for i in 0..realizations {
        let e = generate_innovation(&cfg, &mut rng::stream(12, i));
        for (a, p) in acc.iter_mut().zip(power_spectrum(&e)) {
            *a += p / realizations as f64;
        }
    }
    let mean = acc.iter().sum::<f64>() / acc.len() as f64;
    assert!(acc.iter().all(|&v| v < 3.0 * mean));
    let level = cfg.envelope().iter().map(|v| v * v).sum::<f64>() / cfg.length as f64;
    assert!((mean / level - 1.0).abs() < 0.05, "mean {mean} level {level}");
}

#[test]
fn innovation_spectrum_within_three_sigma_per_bin() {
    // Short envelope so every bin can be checked against its exact
    // sampling variance.
    let cfg = ImpulseConfig::new(
        ArCoefficients::new(1.2, -0.3).unwrap(),
        EnvelopeParams::new(1.0, 2.0, 0.5).unwrap(),
        64,
    )
    .unwrap();
    let env = cfg.envelope();
    let n = cfg.length;
    let level = env.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let realizations = 1000;
    let mut acc = vec![0.0; n / 2 + 1];
    for i in 0..realizations {
        let e = generate_innovation(&cfg, &mut rng::stream(13, i));
        for (a, p) in acc.iter_mut().zip(power_spectrum(&e)) {
            *a += p / realizations as f64;
        }
    }
    for (k, &avg) in acc.iter().enumerate() {
        // Var(A^2 + B^2) for the Gaussian pair A = sum theta w cos, B = sum theta w sin.
        let (mut cc, mut ss, mut cs) = (0.0, 0.0, 0.0);
        for (t, th) in env.iter().enumerate() {
            let w = std::f64::consts::TAU * (k * t) as f64 / n as f64;
            cc += th * th * w.cos() * w.cos();
            ss += th * th * w.sin() * w.sin();
            cs += th * th * w.cos() * w.sin();
        }
        let var = 2.0 * (cc * cc + ss * ss + 2.0 * cs * cs) / (n * n) as f64;
        let sigma = (var / realizations as f64).sqrt();
        assert!((avg - level).abs() < 3.0 * sigma, "bin {k}: {avg} vs {level} (sigma {sigma})");
    }
}

#[test]
fn generators_are_pure() {
    let cfg = reference_impulse();
    let a = generate_impulse(&cfg, &mut rng::stream(3, 9));
    let b = generate_impulse(&cfg, &mut rng::stream(3, 9));
    assert_eq!(a, b);
    let c = generate_impulse(&cfg, &mut rng::stream(3, 10));
    assert_ne!(a, c);
}
