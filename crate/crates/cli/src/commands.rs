use std::path::{Path, PathBuf};

use noisefield::field::simulate_components;
use noisefield::fit::compare_fits;
use noisefield::spectral::{burg_estimate, carson_psd, integrated_relative_error, periodogram};
use noisefield::stats::{empirical_ccdf, empirical_pdf, skewness_kurtosis, CumulantSet, SampleMoments};
use noisefield::Trace;

use crate::config::{AnalysisSection, LoadedConfig, META_TABLE};
use crate::error::{CliError, CliResult};
use crate::io::{read_trace, write_columns, write_psd, write_trace, KeyValues};

pub const TRACE_FILE: &str = "trace.csv";
pub const TRACE_META_FILE: &str = "trace.meta";
pub const STATS_FILE: &str = "stats.txt";
pub const PDF_FILE: &str = "pdf.csv";
pub const CCDF_FILE: &str = "ccdf.csv";
pub const PSD_FILE: &str = "psd.txt";
pub const WELCH_FILE: &str = "welch.csv";
pub const BURG_FILE: &str = "burg.csv";
pub const CARSON_FILE: &str = "carson.csv";
pub const FIT_FILE: &str = "fit.txt";

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn output_dir(flag: Option<PathBuf>, config: Option<&LoadedConfig>) -> CliResult<PathBuf> {
    let dir = flag
        .or_else(|| config.and_then(|c| c.config.analysis.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn load_optional(path: Option<&Path>) -> CliResult<Option<LoadedConfig>> {
    path.map(LoadedConfig::read).transpose()
}

fn analysis_of(config: Option<&LoadedConfig>) -> AnalysisSection {
    config.map(|c| c.config.analysis.clone()).unwrap_or_default()
}

fn header(doc: &mut KeyValues, command: &str, input: &Path, trace: &Trace) {
    doc.text(&format!("{META_TABLE}.command"), command)
        .text(&format!("{META_TABLE}.version"), VERSION)
        .text(&format!("{META_TABLE}.input"), &input.display().to_string())
        .int(&format!("{META_TABLE}.samples"), trace.len());
}

pub fn simulate(config: &Path, seed: Option<u64>, out_dir: Option<PathBuf>) -> CliResult<()> {
    let mut loaded = LoadedConfig::read(config)?;
    if let Some(s) = seed {
        loaded.config.field.seed = s;
    }
    let cfg = loaded.config.field_config()?;
    let dir = output_dir(out_dir, Some(&loaded))?;
    log::info!("simulating {} samples, {} expected arrivals", cfg.trace_length, cfg.expected_arrivals());
    let realization = simulate_components(&cfg)?;

    let trace_path = dir.join(TRACE_FILE);
    write_trace(&trace_path, &realization.total)?;
    let mut meta = KeyValues::default();
    meta.comment("noisefield simulation record")
        .raw(&loaded.config.to_flat())
        .text(&format!("{META_TABLE}.version"), VERSION)
        .text(&format!("{META_TABLE}.trace"), TRACE_FILE)
        .int(&format!("{META_TABLE}.samples"), realization.total.len())
        .int(&format!("{META_TABLE}.arrivals"), realization.arrivals.len())
        .float(&format!("{META_TABLE}.shot_variance"), realization.shot.variance());
    meta.write(&dir.join(TRACE_META_FILE))?;
    log::info!("wrote {}", trace_path.display());
    Ok(())
}

pub fn analyze(trace: &Path, config: Option<&Path>, bins: Option<usize>, out_dir: Option<PathBuf>) -> CliResult<()> {
    let loaded = load_optional(config)?;
    let mut analysis = analysis_of(loaded.as_ref());
    if let Some(b) = bins {
        analysis.bins = b;
    }
    let x = read_trace(trace)?;
    let dir = output_dir(out_dir, loaded.as_ref())?;

    let m = SampleMoments::new(x.samples())?;
    let var = m.variance();
    let degenerate = var == 0.0;
    let mut doc = KeyValues::default();
    header(&mut doc, "analyze", trace, &x);
    doc.int("degenerate", degenerate)
        .float("mean", m.mean)
        .float("variance", var);
    if !degenerate {
        doc.float("skewness", m.skewness())
            .float("kurtosis", m.kurtosis())
            .float("excess_kurtosis", m.excess_kurtosis());
    }
    let c = &m.central;
    doc.float("cumulant.1", m.mean)
        .float("cumulant.2", c[2])
        .float("cumulant.3", c[3])
        .float("cumulant.4", c[4] - 3.0 * c[2] * c[2]);
    if let Some(l) = &loaded {
        let shot = l.config.field_config()?.shot_params(analysis.max_order, analysis.calibration_impulses)?;
        let model = CumulantSet::from_shot(&shot)?;
        for k in 1..=4 {
            doc.float(&format!("model.cumulant.{k}"), model.get(k));
        }
        let (skew, excess) = skewness_kurtosis(&model)?;
        doc.float("model.skewness", skew).float("model.excess_kurtosis", excess);
    }

    let hist = empirical_pdf(&x, analysis.bins)?;
    let ccdf = empirical_ccdf(&x)?;
    let tail: Vec<f64> = hist.edges.iter().map(|&e| ccdf.eval(e)).collect();
    doc.int("grid.bins", analysis.bins)
        .float("grid.lo", hist.edges[0])
        .float("grid.hi", *hist.edges.last().expect("bins >= 1"))
        .float("grid.bin_width", hist.bin_width());
    write_columns(&dir.join(PDF_FILE), &["x", "density"], &hist.centers(), &hist.density, &[])?;
    write_columns(&dir.join(CCDF_FILE), &["x", "ccdf"], &hist.edges, &tail, &[])?;
    doc.write(&dir.join(STATS_FILE))
}

pub fn psd(
    trace: &Path,
    config: Option<&Path>,
    segment: Option<usize>,
    order: Option<usize>,
    out_dir: Option<PathBuf>,
) -> CliResult<()> {
    let loaded = load_optional(config)?;
    let mut analysis = analysis_of(loaded.as_ref());
    if let Some(s) = segment {
        analysis.segment = s;
    }
    if let Some(o) = order {
        analysis.burg_order = o;
    }
    let x = read_trace(trace)?;
    let dir = output_dir(out_dir, loaded.as_ref())?;

    let welch = periodogram(&x, analysis.segment, analysis.overlap)?;
    let burg = burg_estimate(&x, analysis.burg_order)?;
    let burg_psd = burg.psd_on(&welch.frequencies)?.to_one_sided();

    let mut doc = KeyValues::default();
    header(&mut doc, "psd", trace, &x);
    doc.int("welch.segment", analysis.segment)
        .float("welch.overlap", analysis.overlap)
        .float("welch.total_power", welch.total_power())
        .int("burg.order", analysis.burg_order)
        .float("burg.innovation_variance", burg.innovation_variance)
        .float("burg.peak_frequency", burg_psd.peak_frequency());
    for (i, c) in burg.coefficients.iter().enumerate() {
        doc.float(&format!("burg.phi.{}", i + 1), *c);
    }
    write_psd(&dir.join(WELCH_FILE), &welch, "welch")?;
    write_psd(&dir.join(BURG_FILE), &burg_psd, "burg")?;

    if let Some(l) = &loaded {
        let shot = l.config.field_config()?.shot_params(analysis.max_order, analysis.calibration_impulses)?;
        let carson = carson_psd(&welch.frequencies, &shot)?.to_one_sided();
        doc.float("carson.fall_a", shot.fall_a)
            .float("carson.rise_b", shot.rise_b)
            .float("carson.lambda", shot.lambda)
            .float("carson.welch_relative_error", integrated_relative_error(&welch, &carson, true)?);
        write_psd(&dir.join(CARSON_FILE), &carson, "carson")?;
    }
    doc.write(&dir.join(PSD_FILE))
}

pub fn fit(trace: &Path, config: Option<&Path>, bins: Option<usize>, out_dir: Option<PathBuf>) -> CliResult<()> {
    let loaded = load_optional(config)?;
    let mut analysis = analysis_of(loaded.as_ref());
    if let Some(b) = bins {
        analysis.bins = b;
    }
    let x = read_trace(trace)?;
    let dir = output_dir(out_dir, loaded.as_ref())?;
    let r = compare_fits(&x, analysis.bins, analysis.tail_points)?;

    let mut doc = KeyValues::default();
    header(&mut doc, "fit", trace, &x);
    doc.int("sample_count", r.sample_count)
        .float("grid.pdf_lo", r.grid.pdf_lo)
        .float("grid.pdf_hi", r.grid.pdf_hi)
        .int("grid.bins", r.grid.bins)
        .float("grid.tail_lo", r.grid.tail_lo)
        .float("grid.tail_hi", r.grid.tail_hi)
        .int("grid.tail_points", r.grid.tail_points);
    if analysis.fit_stable {
        let s = &r.stable;
        doc.float("stable.alpha", s.params.alpha)
            .float("stable.beta", s.params.beta)
            .float("stable.sigma", s.params.sigma)
            .float("stable.mu", s.params.mu)
            .float("stable.kl", s.kl)
            .float("stable.mse", s.mse)
            .int("stable.clamped", s.clamped);
    }
    if analysis.fit_class_a {
        let c = &r.class_a;
        doc.float("class_a.overlap_a", c.params.overlap_a)
            .float("class_a.gamma_prime", c.params.gamma_prime)
            .float("class_a.sigma_sq", c.params.sigma_sq)
            .int("class_a.truncation_m", c.params.truncation_m)
            .float("class_a.kl", c.kl)
            .float("class_a.mse", c.mse)
            .int("class_a.clamped", c.clamped)
            .int("class_a.degenerate", r.class_a_degenerate);
    }
    doc.write(&dir.join(FIT_FILE))
}
