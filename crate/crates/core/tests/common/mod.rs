#![allow(dead_code)]

use noisefield::rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

pub fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    1.0 - noisefield::stats::normal_ccdf(x, mean, var)
}

/// `x_t = phi1 x_{t-1} + phi2 x_{t-2} + sigma w_t` after a burn-in.
pub fn homoscedastic_ar2(phi1: f64, phi2: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0);
    let (mut p1, mut p2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n + 2000 {
        let w: f64 = r.sample(StandardNormal);
        let v = phi1 * p1 + phi2 * p2 + sigma * w;
        p2 = p1;
        p1 = v;
        if i >= 2000 {
            out.push(v);
        }
    }
    out
}

pub fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0);
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
