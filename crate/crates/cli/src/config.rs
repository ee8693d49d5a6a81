use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use splitring::analysis::{Metric, Objective, SweepAxis};
use splitring::fit::FitParam;
use splitring::model::{Ordering, RingParams};
use splitring::response::{BusInput, DEFAULT_GRID_POINTS};
use splitring::sfwm::SfwmParams;

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub ring: RingParams,
    pub ordering: Ordering,
    pub input: BusInput,
    pub sfwm: Option<SfwmParams>,
    /// Wavelength near which resonances and operating points are sought, m.
    pub lambda_center: f64,
    pub out_dir: Option<PathBuf>,
    pub spectrum: SpectrumConfig,
    pub herald: HeraldConfig,
    pub sweep: SweepConfig,
    pub optimize: OptimizeConfig,
    pub fit: FitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ring: RingParams::default(),
            ordering: Ordering::MidRing,
            input: BusInput::default(),
            sfwm: None,
            lambda_center: 1.55e-6,
            out_dir: None,
            spectrum: SpectrumConfig::default(),
            herald: HeraldConfig::default(),
            sweep: SweepConfig::default(),
            optimize: OptimizeConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

/// Either explicit values or `points` evenly spaced values from `start` to
/// `stop` inclusive.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, points } => match *points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..n)
                    .map(|i| if i == n - 1 { *stop } else { start + (stop - start) * i as f64 / (n - 1) as f64 })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub points: usize,
    /// Explicit `[lo, hi]` window in metres; one FSR around the resonance
    /// otherwise.
    pub window: Option<[f64; 2]>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { points: DEFAULT_GRID_POINTS, window: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeraldConfig {
    pub t_grid: Grid,
}

impl Default for HeraldConfig {
    fn default() -> Self {
        Self { t_grid: Grid::Range { start: 0.8, stop: 0.999, points: 200 } }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub grid: Grid,
    pub metrics: Vec<Metric>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Xi,
            grid: Grid::List(vec![0.98, 0.985, 0.99, 0.995, 1.0]),
            metrics: vec![Metric::Eta, Metric::JHeraldReduced, Metric::JHmReduced, Metric::MParam],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub objective: Objective,
    pub t_range: [f64; 2],
    pub coarse_points: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self { objective: Objective::HeraldRate, t_range: [0.5, 0.9999], coarse_points: 201 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Measured spectrum; relative paths are resolved against the config
    /// file's directory.
    pub data: Option<PathBuf>,
    pub free: Vec<String>,
    pub starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            data: None,
            free: ["t", "alpha", "xi", "zeta"].map(String::from).to_vec(),
            starts: 8,
        }
    }
}

impl FitConfig {
    pub fn free_params(&self) -> Result<Vec<FitParam>, Failure> {
        self.free
            .iter()
            .map(|s| s.parse().map_err(|e| Failure::Config(format!("fit.free: {e}"))))
            .collect()
    }
}

/// Apply `key.path=value` overrides. Values are read as JSON where possible
/// and as plain strings otherwise.
fn apply_override(root: &mut Value, assignment: &str) -> Result<(), Failure> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::Usage(format!("--set expects key=value, got '{assignment}'")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Failure::Usage(format!("--set key '{key}' has an empty component")));
        }
        let map = match node {
            Value::Object(m) => m,
            _ => return Err(Failure::Config(format!("{key}: '{}' is not a section", parts[..i].join(".")))),
        };
        if i == parts.len() - 1 {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one component")
}

fn field_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>, path: &Path, located: Option<(usize, usize)>) -> Failure {
    let field = err.path().to_string();
    let location = located.map(|(l, c)| format!(" (line {l}, column {c})")).unwrap_or_default();
    let inner = err.into_inner().to_string();
    let inner = inner.split(" at line ").next().unwrap_or(&inner).to_string();
    if field == "." {
        Failure::Config(format!("{}{location}: {inner}", path.display()))
    } else {
        Failure::Config(format!("{}{location}: {field}: {inner}", path.display()))
    }
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = if overrides.is_empty() {
        let mut de = serde_json::Deserializer::from_str(&text);
        let parsed = serde_path_to_error::deserialize(&mut de);
        match parsed {
            Ok(c) => c,
            Err(e) => {
                let loc = (e.inner().line(), e.inner().column());
                return Err(field_error(e, path, Some(loc)));
            }
        }
    } else {
        let mut value: Value = serde_json::from_str(&text).map_err(|e| {
            Failure::Config(format!("{} (line {}, column {}): {e}", path.display(), e.line(), e.column()))
        })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_path_to_error::deserialize(value).map_err(|e| field_error(e, path, None))?
    };
    let mut config = config;
    if let Some(data) = &config.fit.data {
        if data.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            config.fit.data = Some(base.join(data));
        }
    }
    validate(&config)?;
    Ok(config)
}

fn validate(c: &RunConfig) -> Result<(), Failure> {
    use splitring::error::Error;
    c.ring.validate().map_err(|e| match e {
        Error::InvalidParam { name, detail } => Failure::Config(format!("ring.{name}: {detail}")),
        other => Failure::Config(format!("ring: {other}")),
    })?;
    if let Some(s) = &c.sfwm {
        s.validate().map_err(|e| match e {
            Error::InvalidParam { name, detail } => Failure::Config(format!("sfwm.{name}: {detail}")),
            other => Failure::Config(format!("sfwm: {other}")),
        })?;
    }
    if !(c.lambda_center > 0.0 && c.lambda_center.is_finite()) {
        return Err(Failure::Config(format!("lambda_center: {} must be positive", c.lambda_center)));
    }
    if c.spectrum.points == 0 {
        return Err(Failure::Config("spectrum.points: must be at least 1".into()));
    }
    if let Some([lo, hi]) = c.spectrum.window {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Failure::Config(format!("spectrum.window: [{lo}, {hi}] must satisfy 0 < lo < hi")));
        }
    }
    let [lo, hi] = c.optimize.t_range;
    if !(lo > 0.0 && lo < hi && hi <= 1.0) {
        return Err(Failure::Config(format!("optimize.t_range: [{lo}, {hi}] must satisfy 0 < lo < hi <= 1")));
    }
    if c.optimize.coarse_points < 2 {
        return Err(Failure::Config("optimize.coarse_points: must be at least 2".into()));
    }
    if c.fit.starts == 0 {
        return Err(Failure::Config("fit.starts: must be at least 1".into()));
    }
    c.fit.free_params()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_creates_sections() {
        let mut v: Value = serde_json::json!({ "ring": { "t": 0.9 } });
        apply_override(&mut v, "ring.t=0.97").unwrap();
        apply_override(&mut v, "optimize.objective=efficiency").unwrap();
        assert_eq!(v["ring"]["t"], 0.97);
        assert_eq!(v["optimize"]["objective"], "efficiency");
        assert!(apply_override(&mut v, "ring.t").is_err());
        assert!(apply_override(&mut v, "ring.t.x=1").is_err());
    }

    #[test]
    fn range_grid_hits_endpoints() {
        let g = Grid::Range { start: 0.9, stop: 0.99, points: 4 };
        let v = g.values();
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], 0.9);
        assert_eq!(v[3], 0.99);
    }
}
