//! Run configuration: a TOML document with `[field]`, `[impulse]` and
//! `[analysis]` sections.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use noisefield::field::{FieldConfig, MIN_TRACE_TO_IMPULSE};
use noisefield::fit::{DEFAULT_BINS, DEFAULT_TAIL_POINTS};
use noisefield::spectral::{DEFAULT_OVERLAP, DEFAULT_SEGMENT};
use noisefield::stats::MIN_BINS;
use noisefield::waveform::{ArCoefficients, EnvelopeParams, ImpulseConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Table in metadata sidecars that carries provenance rather than parameters.
pub const META_TABLE: &str = "meta";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub field: FieldSection,
    pub impulse: ImpulseSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub lambda_r: f64,
    pub lambda_t: f64,
    pub mean_energy: f64,
    pub gamma_ratio: f64,
    pub trace_length: usize,
    pub seed: u64,
    #[serde(default)]
    pub unit_samples: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseSection {
    pub phi1: f64,
    pub phi2: f64,
    pub theta0: f64,
    pub mu_t: f64,
    pub sigma_t: f64,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub bins: usize,
    pub tail_points: usize,
    pub segment: usize,
    pub overlap: f64,
    pub burg_order: usize,
    /// Highest `<K^m>` order used for closed-form cumulants.
    pub max_order: usize,
    /// Impulses averaged when calibrating closed-form shot parameters.
    pub calibration_impulses: usize,
    pub fit_stable: bool,
    pub fit_class_a: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            tail_points: DEFAULT_TAIL_POINTS,
            segment: DEFAULT_SEGMENT,
            overlap: DEFAULT_OVERLAP,
            burg_order: 2,
            max_order: 4,
            calibration_impulses: 1000,
            fit_stable: true,
            fit_class_a: true,
            out_dir: None,
        }
    }
}

/// A parsed configuration together with its source, for error locations.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    source: String,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> CliResult<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(path, source)
    }

    /// Parses and validates. Accepts both sectioned files and the flat
    /// dotted-key form written to metadata sidecars.
    pub fn parse(path: &Path, source: String) -> CliResult<Self> {
        let parse_err = |message: String| CliError::ConfigParse { path: path.to_path_buf(), message };
        let mut table: toml::Table = toml::from_str(&source).map_err(|e| parse_err(e.to_string()))?;
        table.remove(META_TABLE);
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        let loaded = Self { config, path: path.to_path_buf(), source };
        loaded.validate()?;
        Ok(loaded)
    }

    fn field_error(&self, field: &str, message: impl Into<String>) -> CliError {
        CliError::ConfigField {
            path: self.path.clone(),
            line: locate(&self.source, field),
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn validate(&self) -> CliResult<()> {
        let f = &self.config.field;
        for (name, v) in [
            ("field.lambda_r", f.lambda_r),
            ("field.lambda_t", f.lambda_t),
            ("field.mean_energy", f.mean_energy),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(self.field_error(name, format!("must be a positive number, got {v}")));
            }
        }
        if !(f.gamma_ratio > 0.0 && f.gamma_ratio < 1.0) {
            return Err(self.field_error(
                "field.gamma_ratio",
                format!("must lie in (0, 1), got {}", f.gamma_ratio),
            ));
        }
        if f.unit_samples == Some(0) {
            return Err(self.field_error("field.unit_samples", "must be positive"));
        }
        if f.seed > i64::MAX as u64 {
            return Err(self.field_error("field.seed", "must fit in a signed 64-bit integer"));
        }

        let i = &self.config.impulse;
        if i.length == 0 {
            return Err(self.field_error("impulse.length", "must be positive"));
        }
        if f.trace_length < MIN_TRACE_TO_IMPULSE * i.length {
            return Err(self.field_error(
                "field.trace_length",
                format!(
                    "{} is shorter than {MIN_TRACE_TO_IMPULSE} x impulse.length ({})",
                    f.trace_length, i.length
                ),
            ));
        }
        ArCoefficients::new(i.phi1, i.phi2)
            .map_err(|e| self.field_error("impulse.phi1", format!("(phi1, phi2) = ({}, {}): {e}", i.phi1, i.phi2)))?;
        if !(i.theta0.is_finite() && i.theta0 >= 0.0) {
            return Err(self.field_error("impulse.theta0", format!("must be non-negative, got {}", i.theta0)));
        }
        if !i.mu_t.is_finite() {
            return Err(self.field_error("impulse.mu_t", "must be finite"));
        }
        if !(i.sigma_t.is_finite() && i.sigma_t > 0.0) {
            return Err(self.field_error("impulse.sigma_t", format!("must be positive, got {}", i.sigma_t)));
        }

        let a = &self.config.analysis;
        if a.bins < MIN_BINS {
            return Err(self.field_error("analysis.bins", format!("must be at least {MIN_BINS}, got {}", a.bins)));
        }
        if a.tail_points < 2 {
            return Err(self.field_error("analysis.tail_points", "must be at least 2"));
        }
        if a.segment < 2 {
            return Err(self.field_error("analysis.segment", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&a.overlap) {
            return Err(self.field_error("analysis.overlap", format!("must lie in [0, 1), got {}", a.overlap)));
        }
        if a.burg_order == 0 {
            return Err(self.field_error("analysis.burg_order", "must be at least 1"));
        }
        if a.max_order < 4 {
            return Err(self.field_error("analysis.max_order", "must be at least 4"));
        }
        if a.calibration_impulses == 0 {
            return Err(self.field_error("analysis.calibration_impulses", "must be at least 1"));
        }
        self.config.field_config().map_err(|e| self.field_error("field", e.to_string()))?;
        Ok(())
    }
}

impl RunConfig {
    pub fn impulse_config(&self) -> noisefield::Result<ImpulseConfig> {
        let i = &self.impulse;
        ImpulseConfig::new(
            ArCoefficients::new(i.phi1, i.phi2)?,
            EnvelopeParams::new(i.theta0, i.mu_t, i.sigma_t)?,
            i.length,
        )
    }

    pub fn field_config(&self) -> noisefield::Result<FieldConfig> {
        let f = &self.field;
        let cfg = FieldConfig {
            lambda_r: f.lambda_r,
            lambda_t: f.lambda_t,
            mean_energy: f.mean_energy,
            gamma_ratio: f.gamma_ratio,
            trace_length: f.trace_length,
            impulse: self.impulse_config()?,
            seed: f.seed,
            unit_samples: f.unit_samples,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flat `section.key = value` lines; parses back with [`LoadedConfig::parse`].
    /// The output directory is omitted since it does not affect results.
    pub fn to_flat(&self) -> String {
        let mut s = String::new();
        let f = &self.field;
        let _ = writeln!(s, "field.lambda_r = {:?}", f.lambda_r);
        let _ = writeln!(s, "field.lambda_t = {:?}", f.lambda_t);
        let _ = writeln!(s, "field.mean_energy = {:?}", f.mean_energy);
        let _ = writeln!(s, "field.gamma_ratio = {:?}", f.gamma_ratio);
        let _ = writeln!(s, "field.trace_length = {}", f.trace_length);
        let _ = writeln!(s, "field.seed = {}", f.seed);
        if let Some(u) = f.unit_samples {
            let _ = writeln!(s, "field.unit_samples = {u}");
        }
        let i = &self.impulse;
        let _ = writeln!(s, "impulse.phi1 = {:?}", i.phi1);
        let _ = writeln!(s, "impulse.phi2 = {:?}", i.phi2);
        let _ = writeln!(s, "impulse.theta0 = {:?}", i.theta0);
        let _ = writeln!(s, "impulse.mu_t = {:?}", i.mu_t);
        let _ = writeln!(s, "impulse.sigma_t = {:?}", i.sigma_t);
        let _ = writeln!(s, "impulse.length = {}", i.length);
        let a = &self.analysis;
        let _ = writeln!(s, "analysis.bins = {}", a.bins);
        let _ = writeln!(s, "analysis.tail_points = {}", a.tail_points);
        let _ = writeln!(s, "analysis.segment = {}", a.segment);
        let _ = writeln!(s, "analysis.overlap = {:?}", a.overlap);
        let _ = writeln!(s, "analysis.burg_order = {}", a.burg_order);
        let _ = writeln!(s, "analysis.max_order = {}", a.max_order);
        let _ = writeln!(s, "analysis.calibration_impulses = {}", a.calibration_impulses);
        let _ = writeln!(s, "analysis.fit_stable = {}", a.fit_stable);
        let _ = writeln!(s, "analysis.fit_class_a = {}", a.fit_class_a);
        s
    }
}

/// 1-based line of `section.key`, either under a `[section]` header or as a
/// dotted key.
fn locate(source: &str, field: &str) -> Option<usize> {
    let (section, key) = field.split_once('.')?;
    let mut current = String::new();
    for (n, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs = lhs.trim();
        if (current == section && lhs == key) || (current.is_empty() && lhs == field) {
            return Some(n + 1);
        }
    }
    None
}
