//! Second-order statistics: closed-form shot-noise spectra, Welch averaged
//! periodograms, Burg autoregressive estimation and sample autocorrelation.
//!
//! Closed-form and parametric spectra are two-sided densities `S(f)` shown on
//! `[0, 0.5]`; the Welch estimate is one-sided (`2 S(f)`). [`Psd::sides`]
//! records which, and [`Psd::total_power`] accounts for it.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::stats::{trapezoid, ShotParams};
use crate::trace::Trace;

pub const DEFAULT_SEGMENT: usize = 4096;
pub const DEFAULT_OVERLAP: f64 = 0.5;
/// Points on `[0, 0.5]` used for parametric spectra (spacing 1/512).
pub const DEFAULT_PARAMETRIC_POINTS: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sides {
    /// `S(f)` with `S(-f) = S(f)`; total power is twice the `[0, 0.5]` integral.
    Two,
    /// `2 S(f)`; total power is the `[0, 0.5]` integral.
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    /// Weight of the `delta(f)` term at DC, kept out of `values`.
    pub dc_impulse_mass: f64,
    pub sides: Sides,
}

impl Psd {
    pub fn new(frequencies: Vec<f64>, values: Vec<f64>, dc_impulse_mass: f64, sides: Sides) -> Result<Self> {
        if frequencies.len() != values.len() || frequencies.is_empty() {
            return Err(invalid("PSD grid and values must be non-empty and equal in length"));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0])
            || frequencies.iter().any(|f| !(0.0..=0.5).contains(f))
        {
            return Err(invalid("PSD grid must be strictly increasing within [0, 0.5]"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NumericalFailure("PSD values must be finite and non-negative".into()));
        }
        if !(dc_impulse_mass.is_finite() && dc_impulse_mass >= 0.0) {
            return Err(invalid("dc_impulse_mass must be finite and non-negative"));
        }
        Ok(Self { frequencies, values, dc_impulse_mass, sides })
    }

    /// Integral of the continuous part over all frequencies plus the DC mass.
    pub fn total_power(&self) -> f64 {
        let half = trapezoid(&self.frequencies, &self.values);
        let continuous = match self.sides {
            Sides::Two => 2.0 * half,
            Sides::One => half,
        };
        continuous + self.dc_impulse_mass
    }

    pub fn to_one_sided(&self) -> Psd {
        match self.sides {
            Sides::One => self.clone(),
            Sides::Two => Psd {
                frequencies: self.frequencies.clone(),
                values: self.values.iter().map(|v| 2.0 * v).collect(),
                dc_impulse_mass: self.dc_impulse_mass,
                sides: Sides::One,
            },
        }
    }

    /// Frequency of the largest value.
    pub fn peak_frequency(&self) -> f64 {
        let i = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.frequencies[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `n` evenly spaced points covering `[0, 0.5]`.
pub fn frequency_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(invalid("frequency grid needs at least two points"));
    }
    Ok((0..n).map(|i| 0.5 * i as f64 / (n - 1) as f64).collect())
}

/// `sum |a - b| / sum |b|` over a shared grid, optionally skipping `f = 0`.
pub fn integrated_relative_error(estimate: &Psd, reference: &Psd, skip_dc: bool) -> Result<f64> {
    if estimate.frequencies != reference.frequencies {
        return Err(invalid("spectra must share a frequency grid"));
    }
    if estimate.sides != reference.sides {
        return Err(invalid("spectra must use the same sidedness"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((f, e), r) in estimate.frequencies.iter().zip(&estimate.values).zip(&reference.values) {
        if skip_dc && *f == 0.0 {
            continue;
        }
        num += (e - r).abs();
        den += r.abs();
    }
    if den == 0.0 {
        return Err(Error::DegenerateVariance("reference spectrum is zero".into()));
    }
    Ok(num / den)
}

fn double_exp_spectrum(k2: f64, a: f64, b: f64, f: f64) -> f64 {
    let w2 = (TAU * f) * (TAU * f);
    k2 * (b - a) * (b - a) / ((a * a + w2) * (b * b + w2))
}

/// Spectrum of `gamma_t = K (e^{-at} - e^{-bt})`:
/// `<K^2> (b-a)^2 / ((a^2 + w^2)(b^2 + w^2))`, `w = 2 pi f`.
pub fn gamma_psd(frequencies: &[f64], k2: f64, fall_a: f64, rise_b: f64) -> Result<Psd> {
    if !(fall_a > 0.0 && rise_b > 0.0 && k2 >= 0.0) {
        return Err(invalid(format!("gamma_psd needs a, b > 0 and <K^2> >= 0, got {fall_a}, {rise_b}, {k2}")));
    }
    let values = frequencies.iter().map(|&f| double_exp_spectrum(k2, fall_a, rise_b, f)).collect();
    Psd::new(frequencies.to_vec(), values, 0.0, Sides::Two)
}

/// `integral of gamma_t^2 dt = (b-a)^2 / (2ab(a+b))` times `<K^2>`, which
/// equals the spectrum integrated over the whole frequency axis.
pub fn gamma_energy(k2: f64, fall_a: f64, rise_b: f64) -> f64 {
    let d = rise_b - fall_a;
    k2 * d * d / (2.0 * fall_a * rise_b * (fall_a + rise_b))
}

/// Weight of the DC delta in the shot-noise spectrum.
///
/// Read as the squared mean `(lambda <K> (b-a)/(ab))^2`. The alternative
/// reading, the full second moment `E[I^2]`, would count the continuous part
/// twice.
pub fn carson_dc_mass(p: &ShotParams) -> f64 {
    let k1 = p.k_moment(1).unwrap_or(0.0);
    let mean = p.lambda * k1 * (p.rise_b - p.fall_a) / (p.fall_a * p.rise_b);
    mean * mean
}

/// Carson's theorem: `lambda * gamma_psd + sigma_n^2`, plus the DC mass.
pub fn carson_psd(frequencies: &[f64], p: &ShotParams) -> Result<Psd> {
    let k2 = p.k_moment(2).ok_or_else(|| invalid("Carson spectrum needs <K^2>"))?;
    let values = frequencies
        .iter()
        .map(|&f| p.lambda * double_exp_spectrum(k2, p.fall_a, p.rise_b, f) + p.sigma_n_sq)
        .collect();
    Psd::new(frequencies.to_vec(), values, carson_dc_mass(p), Sides::Two)
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Segments summed per parallel batch; fixed so the reduction order, and
/// therefore the output bits, do not depend on the thread count.
const WELCH_BATCH: usize = 32;

/// Welch estimate with a Hann window. One-sided, rescaled so that its
/// integral over `[0, 0.5]` equals the mean power of the trace.
pub fn periodogram(trace: &Trace, segment: usize, overlap: f64) -> Result<Psd> {
    let x = trace.samples();
    if segment < 2 || segment > x.len() {
        return Err(invalid(format!(
            "segment length {segment} must lie in [2, {}]",
            x.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(invalid(format!("overlap must lie in [0, 1), got {overlap}")));
    }
    let step = (segment - (overlap * segment as f64).round() as usize).max(1);
    let count = (x.len() - segment) / step + 1;
    let bins = segment / 2 + 1;
    let window = hann(segment);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment);

    let mut acc = vec![0.0; bins];
    for batch_start in (0..count).step_by(WELCH_BATCH) {
        let batch_end = (batch_start + WELCH_BATCH).min(count);
        let spectra: Vec<Vec<f64>> = (batch_start..batch_end)
            .into_par_iter()
            .map(|s| {
                let offset = s * step;
                let mut buf: Vec<Complex64> = x[offset..offset + segment]
                    .iter()
                    .zip(&window)
                    .map(|(v, w)| Complex64::new(v * w, 0.0))
                    .collect();
                fft.process(&mut buf);
                buf[..bins].iter().map(|c| c.norm_sqr()).collect()
            })
            .collect();
        for s in spectra {
            acc.iter_mut().zip(s).for_each(|(a, v)| *a += v);
        }
    }
    let frequencies: Vec<f64> = (0..bins).map(|k| k as f64 / segment as f64).collect();
    let mut values: Vec<f64> = acc.into_iter().map(|v| 2.0 * v).collect();
    let integral = trapezoid(&frequencies, &values);
    let power = trace.mean_power();
    if integral > 0.0 {
        let scale = power / integral;
        values.iter_mut().for_each(|v| *v *= scale);
    }
    Psd::new(frequencies, values, 0.0, Sides::One)
}

/// `sigma_sq / |1 - sum_i phi_i e^{-j 2 pi f i}|^2`.
pub fn ar_psd_value(phi: &[f64], sigma_sq: f64, f: f64) -> f64 {
    let mut denom = Complex64::new(1.0, 0.0);
    for (i, &p) in phi.iter().enumerate() {
        denom -= p * Complex64::from_polar(1.0, -TAU * f * (i + 1) as f64);
    }
    sigma_sq / denom.norm_sqr()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurgEstimate {
    /// `phi_1..phi_p` in `x_t = sum_i phi_i x_{t-i} + e_t`.
    pub coefficients: Vec<f64>,
    pub reflection: Vec<f64>,
    pub innovation_variance: f64,
    pub psd: Psd,
}

impl BurgEstimate {
    pub fn psd_on(&self, frequencies: &[f64]) -> Result<Psd> {
        let values = frequencies
            .iter()
            .map(|&f| ar_psd_value(&self.coefficients, self.innovation_variance, f))
            .collect();
        Psd::new(frequencies.to_vec(), values, 0.0, Sides::Two)
    }
}

/// Burg's method on the demeaned trace.
pub fn burg_estimate(trace: &Trace, order: usize) -> Result<BurgEstimate> {
    if order == 0 {
        return Err(invalid("Burg order must be at least 1"));
    }
    let n = trace.len();
    if n < 10 * order {
        return Err(Error::InsufficientData { got: n, need: 10 * order });
    }
    let mean = trace.mean();
    let mut fwd: Vec<f64> = trace.samples().iter().map(|x| x - mean).collect();
    let mut bwd = fwd.clone();
    let mut energy = fwd.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if energy == 0.0 {
        return Err(Error::NumericalFailure("Burg estimate of a constant trace".into()));
    }
    let mut a = vec![1.0];
    let mut reflection = Vec::with_capacity(order);
    for m in 1..=order {
        let (mut num, mut den) = (0.0, 0.0);
        for i in m..n {
            num += fwd[i] * bwd[i - 1];
            den += fwd[i] * fwd[i] + bwd[i - 1] * bwd[i - 1];
        }
        if den == 0.0 || !den.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "Burg recursion degenerated at stage {m}"
            )));
        }
        let k = -2.0 * num / den;
        if !(k.abs() < 1.0) {
            return Err(Error::NumericalFailure(format!(
                "Burg reflection coefficient {k} at stage {m} is not inside the unit interval"
            )));
        }
        for i in (m..n).rev() {
            let (f, b) = (fwd[i], bwd[i - 1]);
            fwd[i] = f + k * b;
            bwd[i] = b + k * f;
        }
        let prev = a.clone();
        a.push(0.0);
        for i in 1..=m {
            a[i] = prev.get(i).copied().unwrap_or(0.0) + k * prev[m - i];
        }
        energy *= 1.0 - k * k;
        reflection.push(k);
    }
    let coefficients: Vec<f64> = a[1..].iter().map(|v| -v).collect();
    let grid = frequency_grid(DEFAULT_PARAMETRIC_POINTS)?;
    let values = grid.iter().map(|&f| ar_psd_value(&coefficients, energy, f)).collect();
    let psd = Psd::new(grid, values, 0.0, Sides::Two)?;
    Ok(BurgEstimate { coefficients, reflection, innovation_variance: energy, psd })
}

/// Biased sample autocorrelation of the demeaned trace, `rho_0 = 1`.
pub fn empirical_acf(trace: &Trace, max_lag: usize) -> Result<Vec<f64>> {
    let n = trace.len();
    if max_lag >= n {
        return Err(invalid(format!("max_lag {max_lag} must be below the trace length {n}")));
    }
    let mean = trace.mean();
    let x: Vec<f64> = trace.samples().iter().map(|v| v - mean).collect();
    let c0: f64 = x.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(Error::DegenerateVariance("autocorrelation of a constant trace".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                x[k..].iter().zip(&x[..n - k]).map(|(a, b)| a * b).sum::<f64>() / c0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn white(n: usize, seed: u64) -> Trace {
        let mut r = rng::stream(seed, 0);
        Trace::from_samples((0..n).map(|_| r.sample(StandardNormal)).collect()).unwrap()
    }

    fn ar2_run(phi1: f64, phi2: f64, n: usize, seed: u64) -> Trace {
        let mut r = rng::stream(seed, 0);
        let (mut p1, mut p2) = (0.0, 0.0);
        let mut out = Vec::with_capacity(n);
        for i in 0..n + 1000 {
            let w: f64 = r.sample(StandardNormal);
            let v = phi1 * p1 + phi2 * p2 + w;
            p2 = p1;
            p1 = v;
            if i >= 1000 {
                out.push(v);
            }
        }
        Trace::from_samples(out).unwrap()
    }

    fn unit_shot(lambda: f64, sigma_n_sq: f64) -> ShotParams {
        ShotParams::new(lambda, 1.0, 2.0, vec![0.0, 1.0, 0.0, 1.0], sigma_n_sq).unwrap()
    }

    #[test]
    fn carson_examples() {
        let grid = frequency_grid(101).unwrap();
        let flat = carson_psd(&grid, &unit_shot(0.0, 0.7)).unwrap();
        assert!(flat.values.iter().all(|&v| v == 0.7));
        let p = carson_psd(&[0.0], &unit_shot(1.0, 0.0)).unwrap();
        assert_eq!(p.values[0], 0.25);
        let g = gamma_psd(&[0.0], 1.0, 1.0, 2.0).unwrap();
        assert_eq!(g.values[0], 0.25);
        let slope = {
            let s1 = double_exp_spectrum(1.0, 1.0, 2.0, 1.0);
            let s10 = double_exp_spectrum(1.0, 1.0, 2.0, 10.0);
            (s10 / s1).log10()
        };
        assert!((slope + 4.0).abs() < 0.1, "slope = {slope}");
    }

    #[test]
    fn carson_is_scaled_gamma_plus_floor() {
        let p = ShotParams::new(3.0, 0.2, 0.9, vec![0.5, 2.0, 0.0, 5.0], 0.3).unwrap();
        let grid = frequency_grid(64).unwrap();
        let c = carson_psd(&grid, &p).unwrap();
        let g = gamma_psd(&grid, 2.0, 0.2, 0.9).unwrap();
        for (cv, gv) in c.values.iter().zip(&g.values) {
            assert_eq!(*cv, 3.0 * gv + 0.3);
        }
        let mean = 3.0 * 0.5 * 0.7 / (0.2 * 0.9);
        assert!((c.dc_impulse_mass - mean * mean).abs() < 1e-12 * mean * mean);
    }

    #[test]
    fn gamma_psd_properties() {
        let grid = frequency_grid(257).unwrap();
        let near = gamma_psd(&grid, 1.0, 1.0, 1.0 + 1e-6).unwrap();
        assert!(near.values.iter().all(|&v| v <= 1e-10));
        let g = gamma_psd(&grid, 1.0, 1.0, 2.0).unwrap();
        assert!(g.values.windows(2).all(|w| w[1] < w[0]));
        // Parseval: spectrum over the real line against the time integral.
        let opts = QuadOptions { abs_tol: 1e-13, ..Default::default() };
        let spectral = 2.0 * crate::quad::integrate_half_line(|f| double_exp_spectrum(1.0, 1.0, 2.0, f), opts)
            .unwrap()
            .value;
        let temporal = integrate(|t| ((-t).exp() - (-2.0 * t).exp()).powi(2), 0.0, 60.0, opts)
            .unwrap()
            .value;
        assert!((spectral - temporal).abs() < 1e-6 * temporal);
        assert!((gamma_energy(1.0, 1.0, 2.0) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn welch_parseval_and_white_flatness() {
        let t = white(1 << 20, 5);
        let p = periodogram(&t, DEFAULT_SEGMENT, DEFAULT_OVERLAP).unwrap();
        assert!((p.total_power() - t.mean_power()).abs() < 1e-6 * t.mean_power());
        // Short segments give enough averages for a per-bin 5% bound.
        let p = periodogram(&t, 256, DEFAULT_OVERLAP).unwrap();
        let level = 2.0 * t.variance();
        for (f, v) in p.frequencies.iter().zip(&p.values) {
            if *f > 0.0 && *f < 0.5 {
                assert!((v / level - 1.0).abs() < 0.05, "f = {f}: {v}");
            }
        }
        assert!(periodogram(&t, (1 << 20) + 1, 0.5).is_err());
    }

    #[test]
    fn welch_is_deterministic() {
        let t = white(100_000, 8);
        assert_eq!(periodogram(&t, 1024, 0.5).unwrap(), periodogram(&t, 1024, 0.5).unwrap());
    }

    #[test]
    fn welch_cosine_peak() {
        let x: Vec<f64> = (0..65_536).map(|i| (TAU * 0.125 * i as f64).cos()).collect();
        let p = periodogram(&Trace::from_samples(x).unwrap(), 1024, 0.5).unwrap();
        assert_eq!(p.peak_frequency(), 0.125);
        let peak = p.values.iter().cloned().fold(0.0, f64::max);
        let others = p.values.iter().filter(|&&v| v > 0.01 * peak).count();
        assert!(others <= 3);
    }

    #[test]
    fn burg_round_trips() {
        let t = ar2_run(1.2, -0.3, 1_000_000, 1);
        let b = burg_estimate(&t, 2).unwrap();
        assert!((b.coefficients[0] - 1.2).abs() < 0.01);
        assert!((b.coefficients[1] + 0.3).abs() < 0.01);
        assert!((b.innovation_variance - 1.0).abs() < 0.01);
        let c = burg_estimate(&ar2_run(0.9, -0.81, 200_000, 2), 2).unwrap();
        assert!((c.psd.peak_frequency() - 1.0 / 6.0).abs() <= 1.0 / 512.0);
        let w = burg_estimate(&white(1_000_000, 3), 2).unwrap();
        assert!(w.coefficients.iter().all(|c| c.abs() < 0.01));
    }

    #[test]
    fn burg_rejects_degenerate_input() {
        let c = Trace::from_samples(vec![3.0; 100]).unwrap();
        assert!(matches!(burg_estimate(&c, 2), Err(Error::NumericalFailure(_))));
        let short = Trace::from_samples(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(burg_estimate(&short, 2), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn acf_of_white_noise() {
        let n = 100_000;
        let acf = empirical_acf(&white(n, 4), 20).unwrap();
        assert_eq!(acf[0], 1.0);
        assert!(acf[1..].iter().all(|r| r.abs() < 4.0 / (n as f64).sqrt()));
        assert!(empirical_acf(&white(10, 4), 10).is_err());
    }
}
