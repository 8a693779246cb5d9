//! Fitting alpha-stable and Middleton Class A models to amplitude samples and
//! scoring both against the empirical distribution.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Exp1, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::stats::{
    class_a_ccdf, class_a_pdf, histogram, kl_divergence, mse_tail, quantile_sorted, stable_ccdf,
    stable_pdf, ClassAParams, EmpiricalCcdf, GridDensity, SampleMoments, StableParams,
};
use crate::trace::Trace;

/// Fewest samples either estimator accepts.
pub const MIN_FIT_SAMPLES: usize = 100;
/// Fewest samples [`compare_fits`] accepts.
pub const MIN_COMPARE_SAMPLES: usize = 100_000;
/// Characteristic-function arguments used by the stable regression, applied
/// to standardized data.
pub const STABLE_CF_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
const STABLE_MAX_ITER: usize = 25;
const STABLE_ALPHA_MIN: f64 = 0.1;
/// Bounds of the bisection on the Class A index.
pub const CLASS_A_RANGE: (f64, f64) = (1e-3, 20.0);
/// Class A used when the samples are not leptokurtic: nearly Gaussian.
const GAUSSIAN_LIMIT_A: f64 = 20.0;
const GAUSSIAN_LIMIT_GAMMA: f64 = 1e6;
const MIN_GAMMA_PRIME: f64 = 1e-6;
/// Standard errors by which excess kurtosis must exceed zero for a Class A fit.
pub const LEPTOKURTIC_SE_MULTIPLE: f64 = 3.0;

/// Chambers-Mallows-Stuck draws from `S(alpha, beta, sigma, mu)`.
pub fn sample_stable<R: Rng + ?Sized>(p: &StableParams, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| stable_variate(p, rng)).collect()
}

fn stable_variate<R: Rng + ?Sized>(p: &StableParams, rng: &mut R) -> f64 {
    let (alpha, beta) = (p.alpha, p.beta);
    if alpha == 2.0 {
        let z: f64 = rng.sample(StandardNormal);
        return p.mu + p.sigma * std::f64::consts::SQRT_2 * z;
    }
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = rng.sample(Exp1);
    if alpha == 1.0 {
        let h = FRAC_PI_2 + beta * v;
        let x = (h * v.tan() - beta * (FRAC_PI_2 * w * v.cos() / h).ln()) * 2.0 / PI;
        let shift = if p.sigma > 0.0 { 2.0 / PI * beta * p.sigma * p.sigma.ln() } else { 0.0 };
        return p.sigma * x + shift + p.mu;
    }
    let t = beta * (PI * alpha / 2.0).tan();
    let b = t.atan() / alpha;
    let s = (1.0 + t * t).powf(0.5 / alpha);
    let x = s * (alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha)
        * ((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha);
    p.sigma * x + p.mu
}

/// Draws from the Class A mixture: a Poisson index, then a Gaussian with
/// that component's variance.
pub fn sample_class_a<R: Rng + ?Sized>(p: &ClassAParams, n: usize, rng: &mut R) -> Vec<f64> {
    let poisson = Poisson::new(p.overlap_a).expect("A is validated positive");
    (0..n)
        .map(|_| {
            let m = rng.sample(poisson) as usize;
            let z: f64 = rng.sample(StandardNormal);
            p.component_variance(m).sqrt() * z
        })
        .collect()
}

const ECF_CHUNK: usize = 1 << 14;

/// Empirical characteristic function `mean(exp(j t x))`, reduced over fixed
/// chunks in a fixed order so the result does not depend on the thread count.
pub fn empirical_cf(samples: &[f64], t: f64) -> Complex64 {
    let partial: Vec<(f64, f64)> = samples
        .par_chunks(ECF_CHUNK)
        .map(|c| {
            c.iter().fold((0.0, 0.0), |(re, im), &x| {
                let (s, co) = (t * x).sin_cos();
                (re + co, im + s)
            })
        })
        .collect();
    let (re, im) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples.len() as f64;
    Complex64::new(re / n, im / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableFit {
    pub params: StableParams,
    /// The regression left the parameter bounds and was clamped.
    pub clamped: bool,
    pub iterations: usize,
}

fn least_squares_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least squares for `y = c1 x1 + c2 x2` without intercept.
fn least_squares_two(x1: &[f64], x2: &[f64], y: &[f64]) -> (f64, f64) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let (a11, a12, a22) = (dot(x1, x1), dot(x1, x2), dot(x2, x2));
    let (b1, b2) = (dot(x1, y), dot(x2, y));
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= 1e-300 {
        return (b1 / a11, 0.0);
    }
    ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det)
}

/// Regression estimator on the empirical characteristic function.
///
/// Data are standardized with the current scale and location; `alpha` and
/// the scale come from regressing `ln(-ln |phi|^2)` on `ln t`, then the
/// location and `beta` from regressing `arg phi`. Repeats until the
/// standardized scale and location stop moving.
pub fn estimate_stable(samples: &[f64]) -> Result<StableFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData { got: samples.len(), need: MIN_FIT_SAMPLES });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(invalid("samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    if iqr <= 0.0 {
        return Err(Error::DegenerateVariance("interquartile range is zero".into()));
    }
    let mut scale = iqr / 1.9;
    let mut loc = quantile_sorted(&sorted, 0.5);
    let log_t: Vec<f64> = STABLE_CF_GRID.iter().map(|t| t.ln()).collect();
    let (mut alpha, mut beta) = (2.0, 0.0);
    let mut clamped = false;
    let mut iterations = 0;
    let mut z = vec![0.0; samples.len()];

    for iter in 1..=STABLE_MAX_ITER {
        iterations = iter;
        z.iter_mut().zip(samples).for_each(|(zi, &x)| *zi = (x - loc) / scale);
        let phis: Vec<Complex64> = STABLE_CF_GRID.iter().map(|&t| empirical_cf(&z, t)).collect();
        let mut y = Vec::with_capacity(phis.len());
        for (phi, t) in phis.iter().zip(STABLE_CF_GRID) {
            let m2 = phi.norm_sqr();
            if !(m2 > 0.0 && m2 < 1.0) {
                return Err(Error::NumericalFailure(format!(
                    "empirical |phi({t})|^2 = {m2} is outside (0, 1)"
                )));
            }
            y.push((-m2.ln()).ln());
        }
        let (slope, intercept) = least_squares_line(&log_t, &y);
        clamped = false;
        alpha = slope;
        if !(alpha > STABLE_ALPHA_MIN) {
            alpha = STABLE_ALPHA_MIN;
            clamped = true;
        } else if alpha > 2.0 {
            alpha = 2.0;
            clamped = true;
        }
        let sigma_z = (intercept.exp() / 2.0).powf(1.0 / slope.max(STABLE_ALPHA_MIN));

        // Im ln phi(t) = mu t + beta (sigma t)^alpha tan(pi alpha / 2), t > 0.
        let args: Vec<f64> = phis.iter().map(|p| p.arg()).collect();
        let skew_reg: Vec<f64> = STABLE_CF_GRID
            .iter()
            .map(|&t| {
                let st = sigma_z * t;
                if (alpha - 1.0).abs() < 1e-3 {
                    -2.0 / PI * st * t.ln()
                } else {
                    st.powf(alpha) * (PI * alpha / 2.0).tan()
                }
            })
            .collect();
        let (mu_z, beta_raw) = if alpha == 2.0 {
            (least_squares_two(&STABLE_CF_GRID, &vec![0.0; 10], &args).0, 0.0)
        } else {
            least_squares_two(&STABLE_CF_GRID, &skew_reg, &args)
        };
        beta = beta_raw;
        if !(-1.0..=1.0).contains(&beta) {
            beta = beta.clamp(-1.0, 1.0);
            clamped = true;
        }
        let prev_scale = scale;
        scale *= sigma_z;
        loc += prev_scale * mu_z;
        if !(scale.is_finite() && scale > 0.0 && loc.is_finite()) {
            return Err(Error::NumericalFailure("stable regression diverged".into()));
        }
        if (sigma_z - 1.0).abs() < 1e-9 && mu_z.abs() < 1e-9 {
            break;
        }
    }
    let params = StableParams::new(alpha, beta, scale, loc)?;
    Ok(StableFit { params, clamped, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAFit {
    pub params: ClassAParams,
    /// `A` hit a bisection bound or `gamma'` was floored.
    pub clamped: bool,
}

/// Method-of-moments Class A estimate.
///
/// The variance gives `sigma^2`. For the canonical mixture the normalized
/// fourth and sixth central moments satisfy
/// `mu_4 / (3 sigma^4) - 1 = 1 / (A (1 + gamma')^2) =: u` and
/// `mu_6 / (15 sigma^6) - 1 - 3u = u^2 (1 + gamma')`. With
/// `gamma'(A) = 1 / sqrt(A u) - 1` from the first relation, the second is
/// monotone in `A` and is solved by bisection on `[1e-3, min(20, 1/u)]`.
/// Samples whose excess kurtosis is within [`LEPTOKURTIC_SE_MULTIPLE`]
/// Gaussian standard errors of zero are rejected as not leptokurtic.
pub fn estimate_class_a(samples: &[f64]) -> Result<ClassAFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData { got: samples.len(), need: MIN_FIT_SAMPLES });
    }
    let m = SampleMoments::new(samples)?;
    let var = m.variance();
    if !(var > 0.0) {
        return Err(Error::DegenerateVariance("samples have zero variance".into()));
    }
    // Excess kurtosis must clear its Gaussian sampling noise, sqrt(24 / n).
    let threshold = LEPTOKURTIC_SE_MULTIPLE * (24.0 / samples.len() as f64).sqrt();
    if !(m.excess_kurtosis() > threshold) {
        return Err(Error::ModelMismatch(format!(
            "samples are not leptokurtic (excess kurtosis {:.4}, need > {threshold:.4})",
            m.excess_kurtosis()
        )));
    }
    let u = m.kurtosis() / 3.0 - 1.0;
    let v = m.central[6] / (15.0 * var * var * var) - 1.0 - 3.0 * u;
    let lo = CLASS_A_RANGE.0;
    let hi = CLASS_A_RANGE.1.min(1.0 / u);
    let mut clamped = false;
    let residual = |a: f64| u * u / (a * u).sqrt() - v;
    let a = if hi <= lo {
        clamped = true;
        lo
    } else if residual(hi) >= 0.0 {
        clamped = true;
        hi
    } else if residual(lo) <= 0.0 {
        clamped = true;
        lo
    } else {
        let (mut l, mut h) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (l + h);
            if residual(mid) > 0.0 {
                l = mid;
            } else {
                h = mid;
            }
            if h - l <= 1e-12 * h {
                break;
            }
        }
        0.5 * (l + h)
    };
    let mut gamma_prime = 1.0 / (a * u).sqrt() - 1.0;
    if !(gamma_prime >= MIN_GAMMA_PRIME) {
        gamma_prime = MIN_GAMMA_PRIME;
        clamped = true;
    }
    Ok(ClassAFit { params: ClassAParams::new(a, gamma_prime, var)?, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyScore<P> {
    pub params: P,
    pub kl: f64,
    pub mse: f64,
    pub clamped: bool,
}

/// Evaluation grids used by [`compare_fits`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDescription {
    pub pdf_lo: f64,
    pub pdf_hi: f64,
    pub bins: usize,
    pub tail_lo: f64,
    pub tail_hi: f64,
    pub tail_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub stable: FamilyScore<StableParams>,
    pub class_a: FamilyScore<ClassAParams>,
    /// The samples were not leptokurtic and the Class A entry is its
    /// near-Gaussian limit.
    pub class_a_degenerate: bool,
    pub sample_count: usize,
    pub grid: GridDescription,
}

pub const DEFAULT_BINS: usize = 200;
pub const DEFAULT_TAIL_POINTS: usize = 200;
/// Central probability mass covered by the pdf grid.
const PDF_RANGE_QUANTILES: (f64, f64) = (0.0005, 0.9995);

/// Fits both families and scores them.
///
/// The pdf is compared on `bins` equal bins spanning the 0.05% to 99.95%
/// sample quantiles (histogram normalized by the full sample count), with
/// model densities taken at the bin centres. The tail is compared through
/// the amplitude distribution `P(|X| > x)` on `tail_points` log-spaced
/// amplitudes from the median of `|X|` to its maximum.
pub fn compare_fits(trace: &Trace, bins: usize, tail_points: usize) -> Result<FitReport> {
    let x = trace.samples();
    if x.len() < MIN_COMPARE_SAMPLES {
        return Err(Error::InsufficientData { got: x.len(), need: MIN_COMPARE_SAMPLES });
    }
    if bins < 2 || tail_points < 2 {
        return Err(invalid("need at least two bins and two tail points"));
    }
    let (stable, class_a) = rayon::join(|| estimate_stable(x), || estimate_class_a(x));
    let stable = stable?;
    let (class_a, class_a_degenerate) = match class_a {
        Ok(fit) => (fit, false),
        Err(Error::ModelMismatch(msg)) => {
            log::warn!("Class A fit fell back to its Gaussian limit: {msg}");
            let var = trace.variance();
            let params = ClassAParams::new(GAUSSIAN_LIMIT_A, GAUSSIAN_LIMIT_GAMMA, var)?;
            (ClassAFit { params, clamped: true }, true)
        }
        Err(e) => return Err(e),
    };

    let ccdf = EmpiricalCcdf::new(x)?;
    let (lo, hi) = (ccdf.quantile(PDF_RANGE_QUANTILES.0), ccdf.quantile(PDF_RANGE_QUANTILES.1));
    if !(hi > lo) {
        return Err(Error::DegenerateVariance("central sample range is empty".into()));
    }
    let hist = histogram(x, bins, lo, hi)?;
    let empirical = hist.as_grid_density();
    let centers = empirical.grid.clone();

    let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let abs_ccdf = EmpiricalCcdf::new(&abs)?;
    let (tail_lo, tail_hi) = (abs_ccdf.quantile(0.5), abs_ccdf.max());
    if !(tail_lo > 0.0 && tail_hi > tail_lo) {
        return Err(Error::DegenerateVariance("amplitude tail range is empty".into()));
    }
    let tail_grid: Vec<f64> = (0..tail_points)
        .map(|i| {
            let s = i as f64 / (tail_points - 1) as f64;
            (tail_lo.ln() + s * (tail_hi.ln() - tail_lo.ln())).exp()
        })
        .collect();
    let empirical_tail: Vec<f64> = tail_grid.iter().map(|&g| abs_ccdf.eval(g)).collect();

    let sp = stable.params;
    let stable_density = centers
        .par_iter()
        .map(|&c| stable_pdf(c, &sp))
        .collect::<Result<Vec<_>>>()?;
    let stable_tail = tail_grid
        .par_iter()
        .map(|&g| Ok(stable_ccdf(g, &sp)? + 1.0 - stable_ccdf(-g, &sp)?))
        .collect::<Result<Vec<_>>>()?;
    let cp = class_a.params;
    let class_density: Vec<f64> = centers.iter().map(|&c| class_a_pdf(c, &cp)).collect();
    let class_tail: Vec<f64> = tail_grid.iter().map(|&g| 2.0 * class_a_ccdf(g, &cp)).collect();

    let score_stable = FamilyScore {
        params: sp,
        kl: kl_divergence(&empirical, &GridDensity::new(centers.clone(), stable_density)?)?,
        mse: mse_tail(&empirical_tail, &stable_tail, &tail_grid)?,
        clamped: stable.clamped,
    };
    let score_class = FamilyScore {
        params: cp,
        kl: kl_divergence(&empirical, &GridDensity::new(centers, class_density)?)?,
        mse: mse_tail(&empirical_tail, &class_tail, &tail_grid)?,
        clamped: class_a.clamped,
    };
    Ok(FitReport {
        stable: score_stable,
        class_a: score_class,
        class_a_degenerate,
        sample_count: x.len(),
        grid: GridDescription { pdf_lo: lo, pdf_hi: hi, bins, tail_lo, tail_hi, tail_points },
    })
}
