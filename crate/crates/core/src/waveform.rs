//! Random transient impulses from an AR(2) recursion driven by heteroscedastic
//! white noise, plus the closed forms describing them: characteristic roots,
//! resonant frequency, autocorrelation, power spectrum and the deterministic
//! equivalent (double-exponential) waveform.
//!
//! Time is the dimensionless sample index and frequencies are normalized to
//! cycles per sample.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, invalid, Result};
use crate::trace::Trace;

/// Roots closer than this (relative to their magnitude) use the repeated-root ACF.
pub const REPEATED_ROOT_TOL: f64 = 1e-9;
/// Discriminants below `-DISCRIMINANT_TOL` are treated as complex roots.
pub const DISCRIMINANT_TOL: f64 = 1e-12;

/// The inequality of the stationarity triangle that failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationarityCondition {
    /// `phi2 - phi1 < 1`
    Difference,
    /// `phi2 + phi1 < 1`
    Sum,
    /// `|phi2| < 1`
    Phi2Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stationarity {
    Stationary,
    Violated(StationarityCondition),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    pub verdict: Stationarity,
    /// Signed Euclidean distance from `(phi1, phi2)` to the nearest edge of
    /// the triangle: positive inside, zero on an edge, negative outside.
    pub margin: f64,
}

impl StationarityReport {
    pub fn is_stationary(&self) -> bool {
        self.verdict == Stationarity::Stationary
    }
}

/// Checks the AR(2) stationarity triangle for a raw coefficient pair.
pub fn check_stationarity(phi1: f64, phi2: f64) -> Result<StationarityReport> {
    ensure_finite("phi1", phi1)?;
    ensure_finite("phi2", phi2)?;
    let slacks = [
        (StationarityCondition::Difference, (1.0 - (phi2 - phi1)) / 2f64.sqrt()),
        (StationarityCondition::Sum, (1.0 - (phi2 + phi1)) / 2f64.sqrt()),
        (StationarityCondition::Phi2Magnitude, 1.0 - phi2.abs()),
    ];
    let margin = slacks.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let verdict = match slacks.iter().find(|s| s.1 <= 0.0) {
        Some((cond, _)) => Stationarity::Violated(*cond),
        None => Stationarity::Stationary,
    };
    Ok(StationarityReport { verdict, margin })
}

/// Roots of the characteristic polynomial `1 - phi1 r - phi2 r^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CharacteristicRoots {
    /// `phi1 = phi2 = 0`: the polynomial is constant.
    WhiteNoise,
    /// `phi2 = 0`: AR(1) with root `1 / phi1`.
    Single(f64),
    Pair(Complex64, Complex64),
}

impl CharacteristicRoots {
    pub fn of(phi1: f64, phi2: f64) -> Self {
        if phi2 == 0.0 {
            return if phi1 == 0.0 {
                Self::WhiteNoise
            } else {
                Self::Single(1.0 / phi1)
            };
        }
        let disc = phi1 * phi1 + 4.0 * phi2;
        if disc >= 0.0 {
            // Cancellation-free quadratic formula for phi2 r^2 + phi1 r - 1 = 0.
            let sign = if phi1 >= 0.0 { 1.0 } else { -1.0 };
            let q = -0.5 * (phi1 + sign * disc.sqrt());
            let r1 = q / phi2;
            let r2 = -1.0 / q;
            let (big, small) = if r1.abs() >= r2.abs() { (r1, r2) } else { (r2, r1) };
            Self::Pair(Complex64::new(big, 0.0), Complex64::new(small, 0.0))
        } else {
            let re = -phi1 / (2.0 * phi2);
            let im = (-disc).sqrt() / (2.0 * phi2).abs();
            Self::Pair(Complex64::new(re, im), Complex64::new(re, -im))
        }
    }

    /// True when every root lies strictly outside the unit circle.
    pub fn all_outside_unit_circle(&self) -> bool {
        match *self {
            Self::WhiteNoise => true,
            Self::Single(r) => r.abs() > 1.0,
            Self::Pair(a, b) => a.norm() > 1.0 && b.norm() > 1.0,
        }
    }
}

/// A stationary pair of AR(2) coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArCoefficients {
    phi1: f64,
    phi2: f64,
}

impl ArCoefficients {
    pub fn new(phi1: f64, phi2: f64) -> Result<Self> {
        let report = check_stationarity(phi1, phi2)?;
        match report.verdict {
            Stationarity::Stationary => Ok(Self { phi1, phi2 }),
            Stationarity::Violated(cond) => Err(invalid(format!(
                "AR coefficients ({phi1}, {phi2}) are not stationary: {cond:?} condition fails"
            ))),
        }
    }

    pub fn phi1(&self) -> f64 {
        self.phi1
    }

    pub fn phi2(&self) -> f64 {
        self.phi2
    }

    pub fn discriminant(&self) -> f64 {
        self.phi1 * self.phi1 + 4.0 * self.phi2
    }

    pub fn roots(&self) -> CharacteristicRoots {
        CharacteristicRoots::of(self.phi1, self.phi2)
    }

    /// Resonant frequency of a complex-root pair, `None` for real roots.
    pub fn resonant_frequency(&self) -> Option<f64> {
        let disc = self.discriminant();
        if disc < -DISCRIMINANT_TOL {
            // acos(phi1 / (2 sqrt(-phi2))) written as an atan2 to stay accurate
            // near the real-root boundary.
            Some((-disc).sqrt().atan2(self.phi1) / TAU)
        } else {
            None
        }
    }

    /// Inverse roots `G = 1/r`, largest magnitude first.
    fn inverse_roots(&self) -> Option<(Complex64, Complex64)> {
        match self.roots() {
            CharacteristicRoots::Pair(r1, r2) => {
                let (g1, g2) = (r1.inv(), r2.inv());
                if g1.norm() >= g2.norm() {
                    Some((g1, g2))
                } else {
                    Some((g2, g1))
                }
            }
            _ => None,
        }
    }

    /// Theoretical autocorrelation at lag `k`.
    pub fn acf(&self, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let (phi1, phi2) = (self.phi1, self.phi2);
        let Some((g1, g2)) = self.inverse_roots() else {
            // AR(1) and white noise.
            return phi1.powi(k as i32);
        };
        let (r1, r2) = (g1.inv(), g2.inv());
        let spread = (r1 - r2).norm();
        let kf = k as f64;
        if spread <= REPEATED_ROOT_TOL * r1.norm().max(r2.norm()) {
            let g = 0.5 * phi1;
            return (1.0 + (1.0 + phi2) * kf / (1.0 - phi2)) * g.powi(k as i32);
        }
        let disc = self.discriminant();
        if disc < -DISCRIMINANT_TOL {
            let damping = (-phi2).sqrt();
            let sq = (-disc).sqrt();
            let theta = sq.atan2(phi1);
            let phase = ((1.0 - phi2) * sq).atan2((1.0 + phi2) * phi1);
            return damping.powi(k as i32) * (kf * theta + phase).sin() / phase.sin();
        }
        distinct_root_acf(g1, g2, k)
    }

    /// Spectrum of the AR(2) output for innovation variance `sigma_sq`.
    pub fn psd(&self, sigma_sq: f64, f: f64) -> f64 {
        let z1 = Complex64::from_polar(1.0, TAU * f);
        let z2 = z1 * z1;
        let denom = Complex64::new(1.0, 0.0) - self.phi1 * z1 - self.phi2 * z2;
        sigma_sq / denom.norm_sqr()
    }

    /// Decay rates `(a, b)` of a double exponential `e^{-at} - e^{-bt}` whose
    /// continuous spectrum matches `|H(f)|^2` of this filter at low frequency:
    /// each real inverse root `G` maps to `(1 - G) / sqrt(G)`.
    ///
    /// Requires two distinct real roots with positive inverse roots, i.e. the
    /// baseband regime with a spectral peak at `f = 0`.
    pub fn corner_rates(&self) -> Result<(f64, f64)> {
        let (g1, g2) = self.inverse_roots().ok_or_else(|| {
            invalid("corner rates need a second-order filter (phi2 != 0)")
        })?;
        if g1.im != 0.0 || g2.im != 0.0 || g1.re <= 0.0 || g2.re <= 0.0 || g1.re == g2.re {
            return Err(invalid(format!(
                "corner rates need distinct positive real inverse roots, got {g1} and {g2}"
            )));
        }
        let rate = |g: f64| (1.0 - g) / g.sqrt();
        Ok((rate(g1.re), rate(g2.re)))
    }

    /// Exact per-sample decay rates `-ln G` of the two real modes.
    pub fn decay_rates(&self) -> Result<(f64, f64)> {
        let (g1, g2) = self.inverse_roots().ok_or_else(|| {
            invalid("decay rates need a second-order filter (phi2 != 0)")
        })?;
        if g1.im != 0.0 || g1.re <= 0.0 || g2.re <= 0.0 {
            return Err(invalid("decay rates need positive real inverse roots"));
        }
        Ok((-g1.re.ln(), -g2.re.ln()))
    }
}

/// `((1-G2^2) G1^{k+1} - (1-G1^2) G2^{k+1}) / ((G1-G2)(1+G1 G2))`, with the
/// divided differences summed term by term when the roots are close.
fn distinct_root_acf(g1: Complex64, g2: Complex64, k: usize) -> f64 {
    let one = Complex64::new(1.0, 0.0);
    let close = (g1 - g2).norm() < 1e-3 * g1.norm();
    // (g1^n - g2^n) / (g1 - g2)
    let divided = |n: usize| -> Complex64 {
        if n == 0 {
            return Complex64::new(0.0, 0.0);
        }
        if close {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                acc += g1.powu(i as u32) * g2.powu((n - 1 - i) as u32);
            }
            acc
        } else {
            (g1.powu(n as u32) - g2.powu(n as u32)) / (g1 - g2)
        }
    };
    // Numerator / (g1 - g2) rearranged as D(k+1) - (g1 g2)^2 D(k-1).
    let p = g1 * g2;
    let value = (divided(k + 1) - p * p * divided(k - 1)) / (one + p);
    value.re
}

/// Envelope of the heteroscedastic innovation: a log-normal-shaped profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    theta0: f64,
    mu_t: f64,
    sigma_t: f64,
}

impl EnvelopeParams {
    /// `theta0 = 0` is accepted and yields a silent impulse.
    pub fn new(theta0: f64, mu_t: f64, sigma_t: f64) -> Result<Self> {
        ensure_finite("theta0", theta0)?;
        ensure_finite("mu_t", mu_t)?;
        ensure_finite("sigma_t", sigma_t)?;
        if theta0 < 0.0 {
            return Err(invalid(format!("theta0 must be non-negative, got {theta0}")));
        }
        if sigma_t <= 0.0 {
            return Err(invalid(format!("sigma_t must be positive, got {sigma_t}")));
        }
        Ok(Self { theta0, mu_t, sigma_t })
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn mu_t(&self) -> f64 {
        self.mu_t
    }

    pub fn sigma_t(&self) -> f64 {
        self.sigma_t
    }

    /// Continuous-time location of the envelope maximum, `exp(mu - sigma^2)`.
    pub fn peak_time(&self) -> f64 {
        (self.mu_t - self.sigma_t * self.sigma_t).exp()
    }
}

/// Innovation standard deviation at sample `t`; zero at `t = 0`.
pub fn innovation_std(t: u64, env: &EnvelopeParams) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let tf = t as f64;
    let z = (tf.ln() - env.mu_t) / env.sigma_t;
    env.theta0 / (tf * env.sigma_t * TAU.sqrt()) * (-0.5 * z * z).exp()
}

/// Everything needed to draw one random impulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseConfig {
    pub ar: ArCoefficients,
    pub envelope: EnvelopeParams,
    pub length: usize,
}

/// The envelope at the last sample must be below this fraction of its peak.
pub const ENVELOPE_DECAY_RATIO: f64 = 1e-3;

impl ImpulseConfig {
    pub fn new(ar: ArCoefficients, envelope: EnvelopeParams, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(invalid("impulse length must be positive"));
        }
        let cfg = Self { ar, envelope, length };
        if !cfg.envelope_decayed() {
            log::warn!(
                "impulse length {length} is too short: envelope has not decayed below \
                 {ENVELOPE_DECAY_RATIO} of its peak"
            );
        }
        Ok(cfg)
    }

    /// Whether the envelope at the final sample is below the decay ratio.
    pub fn envelope_decayed(&self) -> bool {
        let env = self.envelope();
        let peak = env.iter().cloned().fold(0.0, f64::max);
        let last = *env.last().unwrap_or(&0.0);
        peak == 0.0 || last < ENVELOPE_DECAY_RATIO * peak
    }

    /// `theta_t` for `t = 0..length`.
    pub fn envelope(&self) -> Vec<f64> {
        (0..self.length as u64)
            .map(|t| innovation_std(t, &self.envelope))
            .collect()
    }

    /// Population variance of the realized envelope, used as the innovation
    /// level in the AR(2) spectrum.
    pub fn envelope_variance(&self) -> f64 {
        let env = self.envelope();
        let n = env.len() as f64;
        let mean = env.iter().sum::<f64>() / n;
        env.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }

    /// `sum_t theta_t^2`, the expected innovation energy.
    pub fn envelope_energy(&self) -> f64 {
        self.envelope().iter().map(|v| v * v).sum()
    }
}

/// Draws one impulse: `U_t = phi1 U_{t-1} + phi2 U_{t-2} + theta_t W_t`
/// with `U_{-1} = U_{-2} = 0`.
pub fn generate_impulse<R: Rng + ?Sized>(cfg: &ImpulseConfig, rng: &mut R) -> Trace {
    Trace::from_parts_unchecked(impulse_samples(cfg, rng), None)
}

pub(crate) fn impulse_samples<R: Rng + ?Sized>(cfg: &ImpulseConfig, rng: &mut R) -> Vec<f64> {
    let (phi1, phi2) = (cfg.ar.phi1, cfg.ar.phi2);
    let mut out = Vec::with_capacity(cfg.length);
    let (mut prev1, mut prev2) = (0.0, 0.0);
    for t in 0..cfg.length as u64 {
        let w: f64 = rng.sample(StandardNormal);
        let u = phi1 * prev1 + phi2 * prev2 + innovation_std(t, &cfg.envelope) * w;
        out.push(u);
        prev2 = prev1;
        prev1 = u;
    }
    out
}

/// `theta_t W_t` for one impulse, without the AR filter.
pub fn generate_innovation<R: Rng + ?Sized>(cfg: &ImpulseConfig, rng: &mut R) -> Vec<f64> {
    (0..cfg.length as u64)
        .map(|t| innovation_std(t, &cfg.envelope) * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Closed-form AR(2) spectrum, `sigma_theta_sq / |1 - phi1 e^{j2pi f} - phi2 e^{j4pi f}|^2`.
pub fn ar2_psd(ar: &ArCoefficients, sigma_theta_sq: f64, f: f64) -> f64 {
    ar.psd(sigma_theta_sq, f)
}

/// Deterministic stand-in for a random impulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentWaveformParams {
    pub amplitude_k: f64,
    pub fall_a: f64,
    pub rise_b: f64,
    pub resonant_f0: Option<f64>,
    pub phase: f64,
}

impl EquivalentWaveformParams {
    pub fn new(
        amplitude_k: f64,
        fall_a: f64,
        rise_b: f64,
        resonant_f0: Option<f64>,
        phase: f64,
    ) -> Result<Self> {
        ensure_finite("amplitude_k", amplitude_k)?;
        ensure_finite("phase", phase)?;
        if !(fall_a > 0.0 && fall_a.is_finite()) {
            return Err(invalid(format!("fall_a must be positive, got {fall_a}")));
        }
        if !(rise_b > fall_a && rise_b.is_finite()) {
            return Err(invalid(format!(
                "rise_b must exceed fall_a, got a = {fall_a}, b = {rise_b}"
            )));
        }
        if let Some(f0) = resonant_f0 {
            if !(f0 > 0.0 && f0 < 0.5) {
                return Err(invalid(format!("resonant_f0 must lie in (0, 0.5), got {f0}")));
            }
        }
        Ok(Self { amplitude_k, fall_a, rise_b, resonant_f0, phase })
    }

    pub fn baseband(amplitude_k: f64, fall_a: f64, rise_b: f64) -> Result<Self> {
        Self::new(amplitude_k, fall_a, rise_b, None, 0.0)
    }
}

/// `K (e^{-at} - e^{-bt})`, without parameter validation.
pub fn double_exponential(k: f64, a: f64, b: f64, t: f64) -> f64 {
    k * ((-a * t).exp() - (-b * t).exp())
}

pub fn equivalent_waveform(p: &EquivalentWaveformParams, t: f64) -> f64 {
    let base = double_exponential(p.amplitude_k, p.fall_a, p.rise_b, t);
    match p.resonant_f0 {
        Some(f0) => base * (TAU * f0 * t + p.phase).cos(),
        None => base,
    }
}

/// Time of the baseband maximum, `ln(b/a) / (b - a)`.
pub fn equivalent_waveform_peak(p: &EquivalentWaveformParams) -> f64 {
    (p.rise_b / p.fall_a).ln() / (p.rise_b - p.fall_a)
}
