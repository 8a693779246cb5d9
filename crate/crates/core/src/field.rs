//! Poisson superposition of random impulses over Gaussian background:
//! `X_t = I_t + n_t`.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::rng::{self, NoiseRng};
use crate::stats::ShotParams;
use crate::trace::Trace;
use crate::waveform::{impulse_samples, ImpulseConfig};

/// Minimum ratio of trace length to impulse length.
pub const MIN_TRACE_TO_IMPULSE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    /// Mean number of active sources.
    pub lambda_r: f64,
    /// Mean emissions per source per unit time.
    pub lambda_t: f64,
    /// Mean impulse energy `<||U||^2>`.
    pub mean_energy: f64,
    /// Background-to-shot variance ratio.
    pub gamma_ratio: f64,
    pub trace_length: usize,
    pub impulse: ImpulseConfig,
    pub seed: u64,
    /// Samples per unit of time. Defaults to `trace_length`, i.e. the trace
    /// spans one unit and carries `lambda_r * lambda_t` arrivals on average.
    pub unit_samples: Option<u64>,
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_r", self.lambda_r),
            ("lambda_t", self.lambda_t),
            ("mean_energy", self.mean_energy),
        ] {
            ensure_finite(name, v)?;
            if v <= 0.0 {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        check_gamma(self.gamma_ratio)?;
        if self.trace_length < MIN_TRACE_TO_IMPULSE * self.impulse.length {
            return Err(invalid(format!(
                "trace_length {} must be at least {MIN_TRACE_TO_IMPULSE} x impulse length {}",
                self.trace_length, self.impulse.length
            )));
        }
        if self.unit_samples == Some(0) {
            return Err(invalid("unit_samples must be positive"));
        }
        Ok(())
    }

    /// Effective density `lambda_r * lambda_t` per unit time.
    pub fn density(&self) -> f64 {
        self.lambda_r * self.lambda_t
    }

    /// Arrival rate per sample.
    pub fn rate_per_sample(&self) -> f64 {
        let unit = self.unit_samples.unwrap_or(self.trace_length as u64);
        self.density() / unit as f64
    }

    pub fn expected_arrivals(&self) -> f64 {
        self.rate_per_sample() * self.trace_length as f64
    }

    /// Ensemble variance of the shot component, `lambda <||U||^2>`.
    pub fn expected_shot_variance(&self) -> f64 {
        self.rate_per_sample() * self.mean_energy
    }

    /// Double-exponential shot parameters reproducing this field's cumulants.
    ///
    /// The rates come from [`crate::waveform::ArCoefficients::corner_rates`].
    /// Odd `<K^m>` vanish by sign symmetry. Even moments are chosen so that
    /// `lambda <K^m> I_m` equals the Campbell cumulant of the simulated field,
    /// `lambda E[s^m] E[sum_t u_t^m]` with `s^2 ~ Exp(mean_energy)` and `u`
    /// the unit-energy raw impulse; the shape factor `E[sum_t u_t^m]` is
    /// averaged over `calibration_impulses` draws (it is exactly 1 for `m = 2`).
    /// The background variance is `gamma_ratio * lambda * mean_energy`.
    pub fn shot_params(&self, max_order: usize, calibration_impulses: usize) -> Result<ShotParams> {
        self.validate()?;
        if max_order < 4 {
            return Err(invalid("max_order must be at least 4"));
        }
        if calibration_impulses == 0 && max_order > 2 {
            return Err(invalid("calibration needs at least one impulse"));
        }
        let (a, b) = self.impulse.ar.corner_rates()?;
        let shape = self.shape_factors(max_order, calibration_impulses)?;
        let lambda = self.rate_per_sample();
        let mut k_moments = Vec::with_capacity(max_order);
        let mut factorial = 1.0;
        for m in 1..=max_order {
            if m % 2 == 1 {
                k_moments.push(0.0);
                continue;
            }
            let j = m / 2;
            factorial *= j as f64;
            let energy_moment = factorial * self.mean_energy.powi(j as i32);
            let integral = crate::stats::double_exp_power_integral(m, a, b);
            k_moments.push(energy_moment * shape[m - 1] / integral);
        }
        ShotParams::new(lambda, a, b, k_moments, self.gamma_ratio * lambda * self.mean_energy)
    }

    /// `E[sum_t u_t^m]` for unit-energy impulses, `m = 1..=max_order`.
    fn shape_factors(&self, max_order: usize, count: usize) -> Result<Vec<f64>> {
        let mut rng = rng::stream(self.seed, rng::CALIBRATION_STREAM);
        let mut sums = vec![0.0; max_order];
        let mut used = 0usize;
        for _ in 0..count {
            let raw = impulse_samples(&self.impulse, &mut rng);
            let energy: f64 = raw.iter().map(|x| x * x).sum();
            if energy == 0.0 {
                continue;
            }
            used += 1;
            let norm = energy.sqrt();
            for &x in &raw {
                let u = x / norm;
                let mut p = 1.0;
                for s in sums.iter_mut() {
                    p *= u;
                    *s += p;
                }
            }
        }
        if used == 0 {
            return Err(Error::DegenerateVariance(
                "every calibration impulse had zero energy".into(),
            ));
        }
        sums.iter_mut().for_each(|s| *s /= used as f64);
        sums[1] = 1.0;
        Ok(sums)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("gamma_ratio must lie in (0, 1), got {gamma}")))
    }
}

/// Sorted integer arrival times of a homogeneous Poisson process with
/// `lambda` events per sample on `[0, horizon)`.
///
/// Times are accumulated from exponential gaps and floored, so a longer
/// horizon extends the list without changing its prefix.
pub fn sample_arrivals<R: Rng + ?Sized>(lambda: f64, horizon: u64, rng: &mut R) -> Result<Vec<u64>> {
    ensure_finite("lambda", lambda)?;
    if lambda <= 0.0 {
        return Err(invalid(format!("arrival rate must be positive, got {lambda}")));
    }
    let mut times = Vec::new();
    let mut t = 0.0;
    let limit = horizon as f64;
    loop {
        let gap: f64 = rng.sample(Exp1);
        t += gap / lambda;
        if t >= limit {
            break;
        }
        times.push(t as u64);
    }
    Ok(times)
}

/// An impulse arrival: start sample and the ordinal selecting its RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub time: u64,
    pub ordinal: u64,
}

pub fn arrivals_from_times(times: &[u64]) -> Vec<Arrival> {
    times
        .iter()
        .enumerate()
        .map(|(i, &time)| Arrival { time, ordinal: i as u64 })
        .collect()
}

/// One energy-scaled impulse before placement in the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseDraw {
    /// Target energy drawn from `Exp(mean_energy)`.
    pub energy: f64,
    /// Rademacher sign applied to the amplitude.
    pub sign: f64,
    /// Scaled samples; their squared sum equals `energy`.
    pub samples: Vec<f64>,
}

/// Draws the impulse for `ordinal` from its own stream. `None` when the raw
/// impulse has zero energy (nothing to scale).
pub fn draw_impulse(
    impulse: &ImpulseConfig,
    mean_energy: f64,
    seed: u64,
    ordinal: u64,
) -> Option<ImpulseDraw> {
    let mut rng: NoiseRng = rng::impulse_stream(seed, ordinal);
    let energy = mean_energy * rng.sample::<f64, _>(Exp1);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut samples = impulse_samples(impulse, &mut rng);
    let raw_energy: f64 = samples.iter().map(|x| x * x).sum();
    if raw_energy == 0.0 {
        return None;
    }
    let scale = sign * (energy / raw_energy).sqrt();
    samples.iter_mut().for_each(|x| *x *= scale);
    Some(ImpulseDraw { energy, sign, samples })
}

/// Adds the impulses for `arrivals` into a zero trace of `cfg.trace_length`.
///
/// Impulses are synthesized in parallel and summed in arrival order.
pub fn superpose(cfg: &FieldConfig, arrivals: &[Arrival]) -> Result<Trace> {
    cfg.validate()?;
    let n = cfg.trace_length;
    let draws: Vec<Option<ImpulseDraw>> = arrivals
        .par_iter()
        .map(|a| {
            if (a.time as usize) < n {
                draw_impulse(&cfg.impulse, cfg.mean_energy, cfg.seed, a.ordinal)
            } else {
                None
            }
        })
        .collect();
    let mut out = vec![0.0; n];
    for (arrival, draw) in arrivals.iter().zip(draws) {
        let Some(draw) = draw else { continue };
        let start = arrival.time as usize;
        let end = (start + draw.samples.len()).min(n);
        for (o, s) in out[start..end].iter_mut().zip(&draw.samples) {
            *o += s;
        }
    }
    Ok(Trace::from_parts_unchecked(out, Some(cfg.seed)))
}

/// The shot component `I_t`, with arrivals drawn from `rng`.
pub fn simulate_shot_noise<R: Rng + ?Sized>(cfg: &FieldConfig, rng: &mut R) -> Result<Trace> {
    cfg.validate()?;
    let times = sample_arrivals(cfg.rate_per_sample(), cfg.trace_length as u64, rng)?;
    superpose(cfg, &arrivals_from_times(&times))
}

/// Adds white Gaussian noise with variance `gamma_ratio * Var(shot)`.
pub fn add_background<R: Rng + ?Sized>(shot: &Trace, gamma_ratio: f64, rng: &mut R) -> Result<Trace> {
    if shot.is_empty() {
        return Err(invalid("shot trace is empty"));
    }
    check_gamma(gamma_ratio)?;
    let var = shot.variance();
    if var == 0.0 {
        return Err(Error::DegenerateVariance(
            "shot trace has zero variance; background level is undefined".into(),
        ));
    }
    let sd = (gamma_ratio * var).sqrt();
    let samples = shot
        .samples()
        .iter()
        .map(|&x| x + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Trace::from_parts_unchecked(samples, shot.seed()))
}

/// Both components of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub shot: Trace,
    pub total: Trace,
    pub arrivals: Vec<Arrival>,
}

impl FieldRealization {
    /// Background samples `n_t = X_t - I_t`.
    pub fn background(&self) -> Vec<f64> {
        self.total
            .samples()
            .iter()
            .zip(self.shot.samples())
            .map(|(x, i)| x - i)
            .collect()
    }
}

pub fn simulate_components(cfg: &FieldConfig) -> Result<FieldRealization> {
    cfg.validate()?;
    let mut arrival_rng = rng::stream(cfg.seed, rng::ARRIVAL_STREAM);
    let times = sample_arrivals(cfg.rate_per_sample(), cfg.trace_length as u64, &mut arrival_rng)?;
    let arrivals = arrivals_from_times(&times);
    let shot = superpose(cfg, &arrivals)?;
    let mut bg_rng = rng::stream(cfg.seed, rng::BACKGROUND_STREAM);
    let total = add_background(&shot, cfg.gamma_ratio, &mut bg_rng)?;
    Ok(FieldRealization { shot, total, arrivals })
}

/// `X_t = I_t + n_t`, a pure function of `cfg` (including its seed).
pub fn simulate(cfg: &FieldConfig) -> Result<Trace> {
    simulate_components(cfg).map(|r| r.total)
}

/// `count` independent realizations with seeds derived from `cfg.seed`.
pub fn simulate_ensemble(cfg: &FieldConfig, count: usize) -> Result<Vec<FieldRealization>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut member = cfg.clone();
            member.seed = rng::derive_seed(cfg.seed, i);
            simulate_components(&member)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{ArCoefficients, EnvelopeParams};

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

    #[test]
    fn validation() {
        let mut c = small_config(1);
        assert!(c.validate().is_ok());
        c.trace_length = 2000;
        assert!(c.validate().is_err());
        let mut c = small_config(1);
        c.gamma_ratio = 1.0;
        assert!(c.validate().is_err());
        let mut c = small_config(1);
        c.lambda_t = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rate_scaling() {
        let c = small_config(1);
        assert_eq!(c.expected_arrivals(), 25.0);
        let mut d = c.clone();
        d.unit_samples = Some(4096);
        assert_eq!(d.expected_arrivals(), 50.0);
    }

    #[test]
    fn arrivals_sorted_and_rejects_zero_rate() {
        let mut r = rng::stream(3, 0);
        let t = sample_arrivals(0.01, 100_000, &mut r).unwrap();
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
        assert!(t.iter().all(|&x| x < 100_000));
        assert!(sample_arrivals(0.0, 10, &mut r).is_err());
    }

    #[test]
    fn no_arrivals_gives_silence() {
        let c = small_config(4);
        let t = superpose(&c, &[]).unwrap();
        assert!(t.samples().iter().all(|&x| x == 0.0));
        let bg = add_background(&t, 0.1, &mut rng::stream(0, 1));
        assert!(matches!(bg, Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn impulse_energy_matches_draw() {
        let c = small_config(5);
        let d = draw_impulse(&c.impulse, c.mean_energy, 5, 17).unwrap();
        let e: f64 = d.samples.iter().map(|x| x * x).sum();
        assert!((e - d.energy).abs() < 1e-10 * d.energy);
        assert!(d.sign == 1.0 || d.sign == -1.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let c = small_config(9);
        assert_eq!(simulate(&c).unwrap(), simulate(&c).unwrap());
        assert_ne!(simulate(&c).unwrap(), simulate(&small_config(10)).unwrap());
    }

    #[test]
    fn truncation_keeps_prefix() {
        let mut short = small_config(21);
        short.unit_samples = Some(8192);
        let mut long = short.clone();
        long.trace_length = 3 * 8192;
        let a = simulate_components(&short).unwrap();
        let b = simulate_components(&long).unwrap();
        assert_eq!(a.shot.samples(), &b.shot.samples()[..8192]);
        assert_eq!(a.arrivals[..], b.arrivals[..a.arrivals.len()]);
    }

    #[test]
    fn shot_params_reproduce_field_variance() {
        let c = small_config(2);
        let p = c.shot_params(6, 200).unwrap();
        let k2 = crate::stats::cumulant(2, &p).unwrap();
        let expected = c.expected_shot_variance() * (1.0 + c.gamma_ratio);
        assert!((k2 - expected).abs() < 1e-12 * expected);
        assert_eq!(p.k_moments[0], 0.0);
        assert_eq!(p.k_moments[2], 0.0);
        assert!(p.k_moments[3] > 0.0);
    }
}
