mod common;

use noisefield::field::*;
use noisefield::rng;
use noisefield::stats::{cumulant, SampleMoments};
use noisefield::waveform::{ArCoefficients, EnvelopeParams, ImpulseConfig};
use noisefield::Error;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn small_config(seed: u64) -> FieldConfig {
    let impulse = ImpulseConfig::new(
        ArCoefficients::new(1.2, -0.3).unwrap(),
        EnvelopeParams::new(1.0, 3.0, 1.0).unwrap(),
        256,
    )
    .unwrap();
    FieldConfig {
        lambda_r: 5.0,
        lambda_t: 5.0,
        mean_energy: 10.0,
        gamma_ratio: 0.1,
        trace_length: 8192,
        impulse,
        seed,
        unit_samples: None,
    }
}

fn reference_config(seed: u64) -> FieldConfig {
    let impulse = ImpulseConfig::new(
        ArCoefficients::new(1.2, -0.3).unwrap(),
        EnvelopeParams::new(1.0, 7.0, 2.25).unwrap(),
        32_768,
    )
    .unwrap();
    FieldConfig {
        lambda_r: 5.0,
        lambda_t: 5.0,
        mean_energy: 10.0,
        gamma_ratio: 0.1,
        trace_length: 524_288,
        impulse,
        seed,
        unit_samples: None,
    }
}

fn arrival_counts(runs: u64) -> Vec<usize> {
    let cfg = small_config(0);
    let lambda = cfg.rate_per_sample();
    (0..runs)
        .map(|i| {
            let mut r = rng::stream(500, i);
            sample_arrivals(lambda, cfg.trace_length as u64, &mut r).unwrap().len()
        })
        .collect()
}

#[test]
fn arrival_count_mean() {
    let counts = arrival_counts(10_000);
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    let sigma = (25.0f64 / counts.len() as f64).sqrt();
    assert!((mean - 25.0).abs() < 3.0 * sigma, "mean count {mean}");
}

#[test]
fn arrival_counts_follow_poisson() {
    let counts = arrival_counts(10_000);
    let n = counts.len() as f64;
    let pois = Poisson::new(25.0).unwrap();
    // Cells [0, 14], 15, ..., 35, [36, inf), each with expectation above 5.
    let cell = |k: usize| k.clamp(14, 36) - 14;
    let mut observed = [0.0; 23];
    for &c in &counts {
        observed[cell(c)] += 1.0;
    }
    let mut expected = [0.0; 23];
    for k in 0..=36u64 {
        expected[cell(k as usize)] += pois.pmf(k);
    }
    let below: f64 = expected.iter().sum();
    expected[22] += 1.0 - below;
    let stat: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - n * e).powi(2) / (n * e))
        .sum();
    let critical = ChiSquared::new(22.0).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

#[test]
fn arrival_times_are_uniform() {
    let horizon = 1u64 << 40;
    let mut r = rng::stream(501, 0);
    let times = sample_arrivals(20_000.0 / horizon as f64, horizon, &mut r).unwrap();
    let u: Vec<f64> = times.iter().map(|&t| t as f64 / horizon as f64).collect();
    let d = common::ks_statistic(&u, |x| x.clamp(0.0, 1.0));
    assert!(d < common::ks_critical_01(u.len()), "KS {d}");
}

#[test]
fn arrival_rate_must_be_positive() {
    let mut r = rng::stream(0, 0);
    assert!(matches!(sample_arrivals(0.0, 100, &mut r), Err(Error::InvalidArgument(_))));
    assert!(sample_arrivals(-1.0, 100, &mut r).is_err());
}

#[test]
fn impulse_energies_are_exponential() {
    let cfg = small_config(0);
    let energies: Vec<f64> = (0..10_000)
        .filter_map(|i| draw_impulse(&cfg.impulse, 10.0, 77, i))
        .map(|d| d.energy)
        .collect();
    assert_eq!(energies.len(), 10_000);
    let (mean, _) = common::mean_and_se(&energies);
    let sigma = 10.0 / (energies.len() as f64).sqrt();
    assert!((mean - 10.0).abs() < 3.0 * sigma, "mean energy {mean}");
    let d = common::ks_statistic(&energies, |x| 1.0 - (-x / 10.0).exp());
    assert!(d < common::ks_critical_01(energies.len()), "KS {d}");
    let positive = (0..10_000)
        .filter_map(|i| draw_impulse(&cfg.impulse, 10.0, 77, i))
        .filter(|d| d.sign > 0.0)
        .count();
    assert!((positive as f64 - 5000.0).abs() < 3.0 * 50.0);
}

#[test]
fn background_ratio_matches_gamma() {
    let r = simulate_components(&reference_config(3)).unwrap();
    let bg = r.background();
    let m = SampleMoments::new(&bg).unwrap();
    let ratio = m.variance() / r.shot.variance();
    assert!((ratio / 0.1 - 1.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn vanishing_background_leaves_shot() {
    let mut cfg = reference_config(4);
    cfg.gamma_ratio = 1e-9;
    let r = simulate_components(&cfg).unwrap();
    let rms = r.shot.rms();
    let dev = r.background().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(dev < 1e-3 * rms, "deviation {dev} rms {rms}");
}

#[test]
fn background_is_gaussian() {
    let r = simulate_components(&reference_config(5)).unwrap();
    let var = 0.1 * r.shot.variance();
    let bg = r.background();
    let d = common::ks_statistic(&bg, |x| common::normal_cdf(x, 0.0, var));
    assert!(d < common::ks_critical_01(bg.len()), "KS {d}");
}

#[test]
fn reference_trace_is_leptokurtic() {
    let x = simulate(&reference_config(6)).unwrap();
    let k = SampleMoments::new(x.samples()).unwrap().kurtosis();
    assert!(k > 3.0, "kurtosis {k}");
}

#[test]
fn ensemble_skewness_is_zero() {
    let base = small_config(7);
    let mut skews = Vec::with_capacity(10_000);
    for chunk in 0..20u64 {
        let mut cfg = base.clone();
        cfg.seed = rng::derive_seed(base.seed, chunk);
        for r in simulate_ensemble(&cfg, 500).unwrap() {
            skews.push(SampleMoments::new(r.total.samples()).unwrap().skewness());
        }
    }
    let (mean, se) = common::mean_and_se(&skews);
    assert!(mean.abs() < 3.0 * se, "mean skewness {mean} (se {se})");
}

#[test]
fn superposition_of_disjoint_supports_is_exact() {
    let cfg = small_config(8);
    let a = [Arrival { time: 100, ordinal: 0 }, Arrival { time: 2000, ordinal: 1 }];
    let b = [Arrival { time: 900, ordinal: 2 }, Arrival { time: 5000, ordinal: 3 }];
    let union = [a[0], b[0], a[1], b[1]];
    let ta = superpose(&cfg, &a).unwrap();
    let tb = superpose(&cfg, &b).unwrap();
    let tu = superpose(&cfg, &union).unwrap();
    for ((x, y), z) in ta.samples().iter().zip(tb.samples()).zip(tu.samples()) {
        assert_eq!(x + y, *z);
    }
}

#[test]
fn superposition_of_overlapping_supports_is_linear() {
    let cfg = small_config(9);
    let mut r = rng::stream(9, 0);
    let times = sample_arrivals(200.0 / 8192.0, 8192, &mut r).unwrap();
    let all = arrivals_from_times(&times);
    let (a, b): (Vec<Arrival>, Vec<Arrival>) = all.iter().partition(|x| x.ordinal % 2 == 0);
    let ta = superpose(&cfg, &a).unwrap();
    let tb = superpose(&cfg, &b).unwrap();
    let tu = superpose(&cfg, &all).unwrap();
    let scale = tu.rms();
    for ((x, y), z) in ta.samples().iter().zip(tb.samples()).zip(tu.samples()) {
        assert!((x + y - z).abs() <= 1e-12 * scale);
    }
}

#[test]
fn shot_power_matches_second_cumulant() {
    let mut cfg = small_config(10);
    cfg.lambda_r = 20.0;
    assert!(cfg.expected_arrivals() >= 100.0);
    let k2 = cumulant(2, &cfg.shot_params(4, 200).unwrap()).unwrap();
    let k2_shot = k2 - cfg.gamma_ratio * cfg.expected_shot_variance();
    let powers: Vec<f64> = simulate_ensemble(&cfg, 200)
        .unwrap()
        .iter()
        .map(|r| r.shot.mean_power())
        .collect();
    let (mean, _) = common::mean_and_se(&powers);
    assert!((mean / k2_shot - 1.0).abs() < 0.1, "power {mean} vs {k2_shot}");
}

#[test]
fn extending_the_trace_keeps_the_shot_prefix() {
    let mut short = reference_config(11);
    short.unit_samples = Some(524_288);
    let mut long = short.clone();
    long.trace_length *= 2;
    let a = simulate_components(&short).unwrap();
    let b = simulate_components(&long).unwrap();
    assert_eq!(a.shot.samples(), &b.shot.samples()[..short.trace_length]);
    assert_eq!(a.arrivals[..], b.arrivals[..a.arrivals.len()]);
}

#[test]
fn simulation_is_deterministic() {
    let cfg = reference_config(12);
    let a = simulate(&cfg).unwrap();
    assert_eq!(a, simulate(&cfg).unwrap());
    assert_eq!(a.seed(), Some(12));
    let ens_a = simulate_ensemble(&small_config(13), 8).unwrap();
    let ens_b = simulate_ensemble(&small_config(13), 8).unwrap();
    assert_eq!(ens_a, ens_b);
}
