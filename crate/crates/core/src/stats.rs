//! First-order statistics of the shot-noise field: cumulants from Campbell's
//! theorem, moment conversions, Edgeworth, Middleton Class A and alpha-stable
//! densities, empirical pdf/ccdf estimates and divergence metrics.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::trace::Trace;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    INV_SQRT_2PI / var.sqrt() * (-0.5 * z * z / var).exp()
}

/// `P(X > x)` for `X ~ N(mean, var)`.
pub fn normal_ccdf(x: f64, mean: f64, var: f64) -> f64 {
    0.5 * erfc((x - mean) / var.sqrt() * FRAC_1_SQRT_2)
}

/// Parameters of a shot-noise process with double-exponential impulses
/// `K (e^{-at} - e^{-bt})` plus Gaussian background.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotParams {
    pub lambda: f64,
    pub fall_a: f64,
    pub rise_b: f64,
    /// `<K^m>` for `m = 1..=len`.
    pub k_moments: Vec<f64>,
    pub sigma_n_sq: f64,
}

impl ShotParams {
    pub fn new(
        lambda: f64,
        fall_a: f64,
        rise_b: f64,
        k_moments: Vec<f64>,
        sigma_n_sq: f64,
    ) -> Result<Self> {
        ensure_finite("lambda", lambda)?;
        ensure_finite("sigma_n_sq", sigma_n_sq)?;
        if lambda < 0.0 {
            return Err(invalid(format!("lambda must be non-negative, got {lambda}")));
        }
        if sigma_n_sq < 0.0 {
            return Err(invalid(format!("sigma_n_sq must be non-negative, got {sigma_n_sq}")));
        }
        if !(fall_a > 0.0 && fall_a.is_finite() && rise_b > fall_a && rise_b.is_finite()) {
            return Err(invalid(format!(
                "need 0 < fall_a < rise_b, got a = {fall_a}, b = {rise_b}"
            )));
        }
        if k_moments.len() < 2 {
            return Err(invalid("k_moments must hold at least <K> and <K^2>"));
        }
        for (i, &m) in k_moments.iter().enumerate() {
            ensure_finite(&format!("<K^{}>", i + 1), m)?;
            if (i + 1) % 2 == 0 && m < 0.0 {
                return Err(invalid(format!("<K^{}> must be non-negative, got {m}", i + 1)));
            }
        }
        let (k1, k2) = (k_moments[0], k_moments[1]);
        if k2 < k1 * k1 * (1.0 - 1e-12) {
            return Err(invalid(format!("<K^2> = {k2} is below <K>^2 = {}", k1 * k1)));
        }
        Ok(Self { lambda, fall_a, rise_b, k_moments, sigma_n_sq })
    }

    pub fn k_moment(&self, m: usize) -> Option<f64> {
        m.checked_sub(1).and_then(|i| self.k_moments.get(i)).copied()
    }

    pub fn max_order(&self) -> usize {
        self.k_moments.len()
    }
}

/// `ln of the integral from 0 to infinity of (e^{-at} - e^{-bt})^m dt`.
///
/// Evaluated as the Beta integral `(1/(m a)) prod_{j=1}^m j c / (m a + j c)`
/// with `c = b - a`, which has no cancellation.
pub fn ln_double_exp_power_integral(m: usize, a: f64, b: f64) -> f64 {
    let c = b - a;
    let ma = m as f64 * a;
    let mut acc = -ma.ln();
    for j in 1..=m {
        let jc = j as f64 * c;
        acc += jc.ln() - (ma + jc).ln();
    }
    acc
}

pub fn double_exp_power_integral(m: usize, a: f64, b: f64) -> f64 {
    ln_double_exp_power_integral(m, a, b).exp()
}

/// The same integral expanded with the binomial formula,
/// `sum_k C(m,k) (-1)^k / (a(m-k) + bk)`. Loses precision for large `m`.
pub fn binomial_power_integral(m: usize, a: f64, b: f64) -> f64 {
    let mut binom = 1.0;
    let mut acc = 0.0;
    for k in 0..=m {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom / (a * (m - k) as f64 + b * k as f64);
        binom *= (m - k) as f64 / (k + 1) as f64;
    }
    acc
}

/// `kappa_m = lambda <K^m> I_m (+ sigma_n^2 when m = 2)`.
pub fn cumulant(m: usize, p: &ShotParams) -> Result<f64> {
    if m == 0 {
        return Err(invalid("cumulant order must be at least 1"));
    }
    let km = p.k_moment(m).ok_or_else(|| {
        invalid(format!("cumulant order {m} exceeds available <K^m> ({})", p.max_order()))
    })?;
    let shot = if p.lambda == 0.0 || km == 0.0 {
        0.0
    } else {
        p.lambda * km * double_exp_power_integral(m, p.fall_a, p.rise_b)
    };
    Ok(if m == 2 { shot + p.sigma_n_sq } else { shot })
}

/// Cumulants `kappa_1..kappa_M`, `M >= 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSet {
    kappa: Vec<f64>,
}

impl CumulantSet {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if kappa.len() < 4 {
            return Err(invalid(format!("need at least 4 cumulants, got {}", kappa.len())));
        }
        for (i, &k) in kappa.iter().enumerate() {
            ensure_finite(&format!("kappa_{}", i + 1), k)?;
        }
        Ok(Self { kappa })
    }

    /// Every cumulant the parameters support.
    pub fn from_shot(p: &ShotParams) -> Result<Self> {
        let kappa = (1..=p.max_order()).map(|m| cumulant(m, p)).collect::<Result<Vec<_>>>()?;
        Self::new(kappa)
    }

    /// `kappa_m`, 1-based.
    pub fn get(&self, m: usize) -> f64 {
        self.kappa[m - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.kappa
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    fn std_dev(&self) -> Result<f64> {
        let k2 = self.kappa[1];
        if k2 > 0.0 {
            Ok(k2.sqrt())
        } else {
            Err(Error::DegenerateVariance(format!("kappa_2 = {k2} is not positive")))
        }
    }
}

/// `(kappa_3 / kappa_2^{3/2}, kappa_4 / kappa_2^2)`; the second value is the
/// excess kurtosis.
pub fn skewness_kurtosis(c: &CumulantSet) -> Result<(f64, f64)> {
    let s = c.std_dev()?;
    let k2 = s * s;
    Ok((c.get(3) / (k2 * s), c.get(4) / (k2 * k2)))
}

/// Raw moments from cumulants: `mu_m = sum_{i=1}^m C(m-1, i-1) kappa_i mu_{m-i}`.
pub fn moments_from_cumulants(kappa: &[f64]) -> Vec<f64> {
    let mut mu = vec![1.0];
    for m in 1..=kappa.len() {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for i in 1..=m {
            acc += binom * kappa[i - 1] * mu[m - i];
            binom *= (m - i) as f64 / i as f64;
        }
        mu.push(acc);
    }
    mu.remove(0);
    mu
}

/// Inverse of [`moments_from_cumulants`].
pub fn cumulants_from_moments(mu: &[f64]) -> Vec<f64> {
    let mut full = vec![1.0];
    full.extend_from_slice(mu);
    let mut kappa: Vec<f64> = Vec::with_capacity(mu.len());
    for m in 1..=mu.len() {
        let mut acc = full[m];
        let mut binom = 1.0;
        for i in 1..m {
            acc -= binom * kappa[i - 1] * full[m - i];
            binom *= (m - i) as f64 / i as f64;
        }
        kappa.push(acc);
    }
    kappa
}

/// Terms kept in the Edgeworth expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeworthOrder {
    /// Gaussian term only.
    First,
    /// Adds the skewness correction.
    Second,
    /// Adds the kurtosis and squared-skewness corrections.
    Third,
}

impl TryFrom<u8> for EdgeworthOrder {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            3 => Ok(Self::Third),
            _ => Err(invalid(format!("Edgeworth order must be 1, 2 or 3, got {v}"))),
        }
    }
}

/// Edgeworth density at a single point, before any clamping. May be negative.
pub fn edgeworth_pdf_raw(x: f64, c: &CumulantSet, order: EdgeworthOrder) -> Result<f64> {
    let s = c.std_dev()?;
    let nu = (x - c.get(1)) / s;
    let base = normal_pdf(x, c.get(1), c.get(2));
    if order == EdgeworthOrder::First {
        return Ok(base);
    }
    let g1 = c.get(3) / (s * s * s);
    let nu2 = nu * nu;
    let he3 = nu * (nu2 - 3.0);
    let mut corr = 1.0 + g1 / 6.0 * he3;
    if order == EdgeworthOrder::Third {
        let g2 = c.get(4) / (s * s * s * s);
        let he4 = nu2 * nu2 - 6.0 * nu2 + 3.0;
        let he6 = nu2 * nu2 * nu2 - 15.0 * nu2 * nu2 + 45.0 * nu2 - 15.0;
        corr += g2 / 24.0 * he4 + g1 * g1 / 72.0 * he6;
    }
    Ok(base * corr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeworthDensity {
    pub grid: Vec<f64>,
    /// Clamped at zero and renormalized when any raw value was negative.
    pub values: Vec<f64>,
    pub raw: Vec<f64>,
    pub clamped: bool,
}

/// Edgeworth density on a grid, clamping negative lobes to zero and
/// renormalizing (trapezoid rule) only when clamping occurred.
pub fn edgeworth_pdf(grid: &[f64], c: &CumulantSet, order: EdgeworthOrder) -> Result<EdgeworthDensity> {
    check_grid(grid)?;
    let raw = grid
        .iter()
        .map(|&x| edgeworth_pdf_raw(x, c, order))
        .collect::<Result<Vec<_>>>()?;
    let clamped = raw.iter().any(|&v| v < 0.0);
    let mut values = raw.clone();
    if clamped {
        values.iter_mut().for_each(|v| *v = v.max(0.0));
        let mass = trapezoid(grid, &values);
        if mass > 0.0 {
            values.iter_mut().for_each(|v| *v /= mass);
        }
    }
    Ok(EdgeworthDensity { grid: grid.to_vec(), values, raw, clamped })
}

pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(invalid("grid needs at least two points"));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Middleton Class A parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAParams {
    pub overlap_a: f64,
    pub gamma_prime: f64,
    pub sigma_sq: f64,
    pub truncation_m: usize,
}

/// Weight mass the truncated Poisson series must retain.
pub const CLASS_A_WEIGHT_TOL: f64 = 1e-6;
const CLASS_A_MIN_TERMS: usize = 10;

impl ClassAParams {
    /// Picks the smallest truncation `>= 10` whose Poisson weights sum to at
    /// least `1 - 1e-6`.
    pub fn new(overlap_a: f64, gamma_prime: f64, sigma_sq: f64) -> Result<Self> {
        for (name, v) in [("A", overlap_a), ("gamma_prime", gamma_prime), ("sigma_sq", sigma_sq)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("Class A {name} must be positive, got {v}")));
            }
        }
        let mut mass = 0.0;
        let mut m = 0;
        loop {
            mass += poisson_weight(overlap_a, m);
            if m >= CLASS_A_MIN_TERMS && mass >= 1.0 - CLASS_A_WEIGHT_TOL {
                break;
            }
            m += 1;
        }
        Ok(Self { overlap_a, gamma_prime, sigma_sq, truncation_m: m })
    }

    pub fn with_truncation(mut self, truncation_m: usize) -> Result<Self> {
        let mass: f64 = (0..=truncation_m).map(|m| poisson_weight(self.overlap_a, m)).sum();
        if truncation_m < CLASS_A_MIN_TERMS || mass < 1.0 - CLASS_A_WEIGHT_TOL {
            return Err(invalid(format!(
                "truncation {truncation_m} keeps weight mass {mass}, below 1 - {CLASS_A_WEIGHT_TOL}"
            )));
        }
        self.truncation_m = truncation_m;
        Ok(self)
    }

    /// `sigma^2 (m/A + gamma') / (1 + gamma')`.
    pub fn component_variance(&self, m: usize) -> f64 {
        self.sigma_sq * (m as f64 / self.overlap_a + self.gamma_prime) / (1.0 + self.gamma_prime)
    }

    pub fn weight(&self, m: usize) -> f64 {
        poisson_weight(self.overlap_a, m)
    }

    /// Kurtosis of the untruncated mixture, `3 (1 + 1 / (A (1 + gamma')^2))`.
    pub fn kurtosis(&self) -> f64 {
        let g = 1.0 + self.gamma_prime;
        3.0 * (1.0 + 1.0 / (self.overlap_a * g * g))
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..=self.truncation_m).map(|m| (self.weight(m), self.component_variance(m)))
    }
}

fn poisson_weight(a: f64, m: usize) -> f64 {
    (-a + m as f64 * a.ln() - ln_gamma(m as f64 + 1.0)).exp()
}

pub fn class_a_pdf(x: f64, p: &ClassAParams) -> f64 {
    p.components().map(|(w, v)| w * normal_pdf(x, 0.0, v)).sum()
}

/// `P(X > x)` under the truncated mixture.
pub fn class_a_ccdf(x: f64, p: &ClassAParams) -> f64 {
    p.components().map(|(w, v)| w * normal_ccdf(x, 0.0, v)).sum()
}

/// Alpha-stable parameters in the `S1` parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub mu: f64,
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64, mu: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(invalid(format!("alpha must lie in (0, 2], got {alpha}")));
        }
        if !(-1.0..=1.0).contains(&beta) {
            return Err(invalid(format!("beta must lie in [-1, 1], got {beta}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("sigma must be non-negative, got {sigma}")));
        }
        ensure_finite("mu", mu)?;
        Ok(Self { alpha, beta, sigma, mu })
    }

    /// `tan(pi alpha / 2)`, exactly zero at `alpha = 2`.
    fn eta(&self) -> f64 {
        if self.alpha == 2.0 {
            0.0
        } else {
            (0.5 * PI * self.alpha).tan()
        }
    }

    /// Imaginary skew term of `ln phi` for `xi > 0`, divided by `(sigma xi)^alpha`.
    fn skew(&self, xi: f64) -> f64 {
        if self.alpha == 1.0 {
            -self.beta * 2.0 / PI * xi.ln()
        } else {
            self.beta * self.eta()
        }
    }
}

/// Characteristic function `E[exp(j xi X)]`.
pub fn stable_cf(xi: f64, p: &StableParams) -> num_complex::Complex64 {
    use num_complex::Complex64;
    if xi == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let t = (p.sigma * xi).abs().powf(p.alpha);
    let sign = xi.signum();
    let imag = if p.alpha == 1.0 {
        -p.beta * 2.0 / PI * sign * xi.abs().ln()
    } else {
        p.beta * sign * p.eta()
    };
    Complex64::new(-t, xi * p.mu + t * imag).exp()
}

/// `(sigma xi)^alpha` at which the integrands are truncated (`e^{-40}`).
const STABLE_CF_CUTOFF: f64 = 40.0;
const STABLE_ABS_TOL: f64 = 1e-8;

fn stable_quad<F: Fn(f64) -> f64>(p: &StableParams, x: f64, f: F) -> Result<f64> {
    if p.sigma == 0.0 {
        return Err(invalid("stable density is undefined for sigma = 0"));
    }
    let xi_max = STABLE_CF_CUTOFF.powf(1.0 / p.alpha) / p.sigma;
    // Split so that each piece covers roughly one oscillation period.
    let freq = (x - p.mu).abs() + p.sigma * (1.0 + p.beta.abs() * p.eta().abs().min(1e3));
    let splits = ((xi_max * freq / (2.0 * PI)).ceil() as usize).clamp(8, 20_000);
    let opts = QuadOptions {
        abs_tol: STABLE_ABS_TOL,
        rel_tol: 1e-10,
        max_intervals: 20 * splits + 4000,
        initial_splits: splits,
    };
    integrate(f, 0.0, xi_max, opts)
        .map(|r| r.value / PI)
        .map_err(|e| match e {
            Error::NumericalFailure(msg) => Error::NumericalFailure(format!(
                "stable integral at x = {x} (alpha = {}, beta = {}): {msg}",
                p.alpha, p.beta
            )),
            other => other,
        })
}

/// Density by Fourier inversion of [`stable_cf`].
pub fn stable_pdf(x: f64, p: &StableParams) -> Result<f64> {
    let v = stable_quad(p, x, |xi| {
        let t = (p.sigma * xi).powf(p.alpha);
        (-t).exp() * (xi * (p.mu - x) + t * p.skew(xi)).cos()
    })?;
    if v < -STABLE_ABS_TOL * 10.0 {
        return Err(Error::NumericalFailure(format!(
            "stable density at x = {x} came out negative ({v:e})"
        )));
    }
    Ok(v.max(0.0))
}

/// `P(X > x)` by the Gil-Pelaez inversion formula.
pub fn stable_ccdf(x: f64, p: &StableParams) -> Result<f64> {
    if p.alpha == 2.0 {
        return Ok(normal_ccdf(x, p.mu, 2.0 * p.sigma * p.sigma));
    }
    let v = stable_quad(p, x, |xi| {
        let t = (p.sigma * xi).powf(p.alpha);
        (-t).exp() * (xi * (p.mu - x) + t * p.skew(xi)).sin() / xi
    })?;
    Ok((0.5 + v).clamp(0.0, 1.0))
}

pub fn stable_cdf(x: f64, p: &StableParams) -> Result<f64> {
    stable_ccdf(x, p).map(|c| 1.0 - c)
}

/// Histogram density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    /// Sum of density times bin width; one up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    pub fn as_grid_density(&self) -> GridDensity {
        GridDensity { grid: self.centers(), values: self.density.clone() }
    }
}

pub const MIN_PDF_SAMPLES: usize = 1000;
pub const MIN_BINS: usize = 16;

/// Histogram of the samples over `[lo, hi]` normalized by the total count.
/// Samples outside the range are counted in the normalization but not binned.
pub fn histogram(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("invalid histogram range [{lo}, {hi}] with {bins} bins")));
    }
    if samples.is_empty() {
        return Err(invalid("cannot build a histogram from no samples"));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in samples {
        if x < lo || x > hi {
            continue;
        }
        let i = (((x - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let norm = samples.len() as f64 * width;
    let density = counts.iter().map(|&c| c as f64 / norm).collect();
    Ok(Histogram { edges, density, counts })
}

/// Histogram over the sample range. A constant trace gets a unit-width range
/// centred on its value.
pub fn empirical_pdf(trace: &Trace, bins: usize) -> Result<Histogram> {
    if trace.is_empty() {
        return Err(invalid("empirical pdf of an empty trace"));
    }
    if trace.len() < MIN_PDF_SAMPLES {
        return Err(Error::InsufficientData { got: trace.len(), need: MIN_PDF_SAMPLES });
    }
    if bins < MIN_BINS {
        return Err(invalid(format!("need at least {MIN_BINS} bins, got {bins}")));
    }
    let s = trace.samples();
    let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    histogram(s, bins, lo, hi)
}

/// Empirical tail function `P(X > x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCcdf {
    sorted: Vec<f64>,
}

impl EmpiricalCcdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("empirical ccdf of no samples"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let below_or_eq = self.sorted.partition_point(|&v| v <= x);
        (self.sorted.len() - below_or_eq) as f64 / self.sorted.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Linear-interpolated quantile, `q` in `[0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        quantile_sorted(&self.sorted, q)
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn empirical_ccdf(trace: &Trace) -> Result<EmpiricalCcdf> {
    EmpiricalCcdf::new(trace.samples())
}

/// A density sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if grid.len() != values.len() {
            return Err(invalid("grid and values differ in length"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Vec<f64>, f: F) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    /// Width of the cell around each point (half the distance to each neighbor).
    fn cell_widths(&self) -> Vec<f64> {
        let g = &self.grid;
        let n = g.len();
        (0..n)
            .map(|i| {
                let left = if i == 0 { g[1] - g[0] } else { g[i] - g[i - 1] };
                let right = if i + 1 == n { g[n - 1] - g[n - 2] } else { g[i + 1] - g[i] };
                0.5 * (left + right)
            })
            .collect()
    }
}

/// Floor applied to the model density before taking the logarithm.
pub const KL_FLOOR: f64 = 1e-12;

/// `sum p ln(p / max(q, 1e-12)) dx` over a shared grid, natural log.
pub fn kl_divergence(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    if p.grid != q.grid {
        return Err(invalid("KL divergence needs both densities on the same grid"));
    }
    let kl: f64 = p
        .cell_widths()
        .iter()
        .zip(p.values.iter().zip(&q.values))
        .filter(|(_, (&pv, _))| pv > 0.0)
        .map(|(dx, (&pv, &qv))| pv * (pv / qv.max(KL_FLOOR)).ln() * dx)
        .sum();
    Ok(kl.max(0.0))
}

/// Mean squared difference between an empirical and a model tail function
/// evaluated on the same grid.
pub fn mse_tail(empirical: &[f64], model: &[f64], grid: &[f64]) -> Result<f64> {
    if empirical.len() != grid.len() || model.len() != grid.len() || grid.is_empty() {
        return Err(invalid(format!(
            "tail MSE needs equal non-empty lengths, got {} / {} / {}",
            empirical.len(),
            model.len(),
            grid.len()
        )));
    }
    Ok(empirical
        .iter()
        .zip(model)
        .map(|(e, m)| (e - m) * (e - m))
        .sum::<f64>()
        / grid.len() as f64)
}

/// Sample mean and central moments up to order six.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub count: usize,
    pub mean: f64,
    /// Central moments `E[(X - mean)^k]` for `k = 2..=6` at index `k`.
    pub central: [f64; 7],
}

impl SampleMoments {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("moments of no samples"));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let mut central = [0.0; 7];
        for &x in samples {
            let d = x - mean;
            let d2 = d * d;
            central[2] += d2;
            central[3] += d2 * d;
            central[4] += d2 * d2;
            central[5] += d2 * d2 * d;
            central[6] += d2 * d2 * d2;
        }
        central.iter_mut().skip(2).for_each(|c| *c /= n);
        central[0] = 1.0;
        Ok(Self { count: samples.len(), mean, central })
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        self.central[2]
    }

    pub fn skewness(&self) -> f64 {
        self.central[3] / self.central[2].powf(1.5)
    }

    /// Kurtosis (3 for a Gaussian).
    pub fn kurtosis(&self) -> f64 {
        self.central[4] / (self.central[2] * self.central[2])
    }

    pub fn excess_kurtosis(&self) -> f64 {
        self.kurtosis() - 3.0
    }
}

/// Convergence diagnostics of the cumulant series.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceDiagnostics {
    /// `|z_{k+1} / z_k|` for `k = 0..m_max-1` of the binomial terms of
    /// `kappa_{m_max}`.
    pub term_ratios: Vec<f64>,
    /// `ln |kappa_m / m!|` for `m = 1..=m_max`; `-inf` when `kappa_m = 0`.
    pub ln_kappa_over_factorial: Vec<f64>,
    /// `|kappa_{m+1} / ((m+1) kappa_m)|` for `m = 1..m_max`; `None` where
    /// `kappa_m = 0`.
    pub radius_ratios: Vec<Option<f64>>,
}

fn ln_abs_cumulant(m: usize, p: &ShotParams) -> Result<f64> {
    let km = p.k_moment(m).ok_or_else(|| {
        invalid(format!("order {m} exceeds available <K^m> ({})", p.max_order()))
    })?;
    let shot_ln = if p.lambda > 0.0 && km != 0.0 {
        p.lambda.ln() + km.abs().ln() + ln_double_exp_power_integral(m, p.fall_a, p.rise_b)
    } else {
        f64::NEG_INFINITY
    };
    if m == 2 {
        Ok((shot_ln.exp() + p.sigma_n_sq).ln())
    } else {
        Ok(shot_ln)
    }
}

/// Ratio-test diagnostics evaluated in log space. Needs `<K^m>` up to
/// `m_max + 1`.
pub fn cumulant_convergence_diagnostics(p: &ShotParams, m_max: usize) -> Result<ConvergenceDiagnostics> {
    if m_max < 1 {
        return Err(invalid("m_max must be at least 1"));
    }
    let (a, c) = (p.fall_a, p.rise_b - p.fall_a);
    let mf = m_max as f64;
    let term_ratios = (0..m_max)
        .map(|k| {
            let kf = k as f64;
            (mf - kf) / (kf + 1.0) * (a * mf + c * kf) / (a * mf + c * (kf + 1.0))
        })
        .collect();
    let ln_abs = (1..=m_max + 1)
        .map(|m| ln_abs_cumulant(m, p))
        .collect::<Result<Vec<_>>>()?;
    let ln_kappa_over_factorial = (1..=m_max)
        .map(|m| ln_abs[m - 1] - ln_gamma(m as f64 + 1.0))
        .collect();
    let radius_ratios = (1..m_max)
        .map(|m| {
            let (lo, hi) = (ln_abs[m - 1], ln_abs[m]);
            if lo == f64::NEG_INFINITY {
                None
            } else {
                Some((hi - lo - (m as f64 + 1.0).ln()).exp())
            }
        })
        .collect();
    Ok(ConvergenceDiagnostics { term_ratios, ln_kappa_over_factorial, radius_ratios })
}
