//! Resonance finding, split-peak metrics, coupling optimisation and generic
//! parameter sweeps.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Ordering, RingParams};
use crate::response::{fmt_f64, solve_steady_state, BusInput};
use crate::sfwm::{golden_max, herald_peak, heralding_report, HeraldingReport, PeakTarget};

pub const DEFAULT_RESONANCE_POINTS: usize = 4001;
pub const RESONANCE_LAMBDA_TOL: f64 = 1e-15;
/// Transmission variation below which a window counts as featureless.
pub const FLAT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceInfo {
    pub center_lambda: f64,
    /// One entry for a single dip, two for a split resonance.
    pub minima_lambdas: Vec<f64>,
    pub splitting: f64,
    /// Forward transmission at each minimum.
    pub depth_fwd: Vec<f64>,
    /// `|d₁ − d₂| / (d₁ + d₂)`; only defined for split resonances.
    pub asymmetry: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceSearch {
    pub points: usize,
    pub lambda_tol: f64,
    pub ordering: Ordering,
}

impl Default for ResonanceSearch {
    fn default() -> Self {
        Self {
            points: DEFAULT_RESONANCE_POINTS,
            lambda_tol: RESONANCE_LAMBDA_TOL,
            ordering: Ordering::MidRing,
        }
    }
}

fn forward_transmission(params: &RingParams, ordering: Ordering, lambda: f64) -> f64 {
    solve_steady_state(params, ordering, lambda, &BusInput::default())
        .map(|s| s.b2_fwd.norm_sqr())
        .unwrap_or(f64::NAN)
}

/// Minima of the forward transmission in `window`, grouped into resonances.
/// Minima closer than a quarter FSR belong to one split resonance.
pub fn find_resonances(
    params: &RingParams,
    window: (f64, f64),
    search: &ResonanceSearch,
) -> Result<Vec<ResonanceInfo>> {
    params.validate()?;
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidInput(format!("bad wavelength window ({lo}, {hi})")));
    }
    if search.points < 3 {
        return Err(Error::InvalidInput("resonance grid needs at least 3 points".into()));
    }
    let step = (hi - lo) / (search.points - 1) as f64;
    let grid: Vec<f64> = (0..search.points).map(|i| lo + step * i as f64).collect();
    let trans: Vec<f64> = grid
        .par_iter()
        .map(|&l| forward_transmission(params, search.ordering, l))
        .collect();

    let finite = trans.iter().copied().filter(|v| v.is_finite());
    let (min, max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(max - min >= FLAT_TOLERANCE) {
        return Err(Error::NoResonanceFound(format!(
            "transmission varies by less than {FLAT_TOLERANCE:e} over [{lo:e}, {hi:e}] m"
        )));
    }

    let mut minima: Vec<(f64, f64)> = (1..grid.len() - 1)
        .filter(|&i| trans[i] <= trans[i - 1] && trans[i] < trans[i + 1])
        .map(|i| {
            let (l, neg) = golden_max(
                |l| -forward_transmission(params, search.ordering, l),
                grid[i - 1],
                grid[i + 1],
                search.lambda_tol,
            );
            (l, -neg)
        })
        .collect();
    if minima.is_empty() {
        return Err(Error::NoResonanceFound(format!(
            "no transmission minimum inside [{lo:e}, {hi:e}] m"
        )));
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));

    let radius = params.fsr_near(0.5 * (lo + hi)) / 4.0;
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    for m in minima {
        match groups.last_mut() {
            Some(g) if m.0 - g.last().unwrap().0 < radius => g.push(m),
            _ => groups.push(vec![m]),
        }
    }
    Ok(groups.into_iter().map(resonance_from_group).collect())
}

fn resonance_from_group(mut group: Vec<(f64, f64)>) -> ResonanceInfo {
    if group.len() > 2 {
        group.sort_by(|a, b| a.1.total_cmp(&b.1));
        group.truncate(2);
        group.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let minima_lambdas: Vec<f64> = group.iter().map(|m| m.0).collect();
    let depth_fwd: Vec<f64> = group.iter().map(|m| m.1).collect();
    let (first, last) = (minima_lambdas[0], *minima_lambdas.last().unwrap());
    let asymmetry = match depth_fwd[..] {
        [a, b] if a + b > 0.0 => Some((a - b).abs() / (a + b)),
        [_, _] => Some(0.0),
        _ => None,
    };
    ResonanceInfo {
        center_lambda: 0.5 * (first + last),
        splitting: last - first,
        minima_lambdas,
        depth_fwd,
        asymmetry,
    }
}

/// Resonance nearest `lambda_center`, searched over one FSR around it.
pub fn resonance_near(
    params: &RingParams,
    lambda_center: f64,
    search: &ResonanceSearch,
) -> Result<ResonanceInfo> {
    let center = params.resonance_near(lambda_center);
    let half = params.fsr_near(center) / 2.0;
    find_resonances(params, (center - half, center + half), search)?
        .into_iter()
        .min_by(|a, b| {
            (a.center_lambda - center).abs().total_cmp(&(b.center_lambda - center).abs())
        })
        .ok_or_else(|| Error::NoResonanceFound("empty window".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    HeraldRate,
    HeraldMode,
    Efficiency,
}

impl Objective {
    /// Value of the objective at one coupling; every objective is read at
    /// the heralding-rate peak, except the heralding-mode rate, which is
    /// maximised over wavelength in its own right.
    pub fn evaluate(self, params: &RingParams, lambda_center: f64) -> Result<f64> {
        let input = BusInput::default();
        Ok(match self {
            Objective::HeraldRate => {
                herald_peak(params, None, lambda_center, &input, PeakTarget::HeraldRate)?.j_herald
            }
            Objective::HeraldMode => {
                herald_peak(params, None, lambda_center, &input, PeakTarget::HeraldModeRate)?.j_hm
            }
            Objective::Efficiency => {
                herald_peak(params, None, lambda_center, &input, PeakTarget::HeraldRate)?.eta
            }
        })
    }
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "herald_rate" => Ok(Objective::HeraldRate),
            "herald_mode" => Ok(Objective::HeraldMode),
            "efficiency" => Ok(Objective::Efficiency),
            other => Err(Error::InvalidInput(format!(
                "unknown objective '{other}' (expected herald_rate, herald_mode or efficiency)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub coarse_points: usize,
    pub t_tol: f64,
    /// Relative tolerance under which two objective values count as equal.
    pub tie_tol: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { coarse_points: 201, t_tol: 1e-6, tie_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Optimum {
    pub t: f64,
    pub value: f64,
}

/// Maximise `objective` over the coupling `t` in `t_range`.
///
/// A coarse grid locates the best cell, golden section refines it. Among
/// values equal within `tie_tol` the smallest `t` wins.
pub fn optimize_coupling(
    template: &RingParams,
    objective: Objective,
    t_range: (f64, f64),
    lambda_center: f64,
    options: &OptimizeOptions,
) -> Result<Optimum> {
    let (lo, hi) = t_range;
    if !(lo > 0.0 && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "coupling range ({lo}, {hi}) must satisfy 0 < lo < hi <= 1"
        )));
    }
    if options.coarse_points < 2 {
        return Err(Error::InvalidInput("coarse grid needs at least 2 points".into()));
    }
    let eval = |t: f64| objective.evaluate(&RingParams { t, ..*template }, lambda_center);
    let n = options.coarse_points;
    let grid: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect();
    let values: Vec<Result<f64>> = grid.par_iter().map(|&t| eval(t)).collect();

    let best = values
        .iter()
        .filter_map(|v| v.as_ref().ok().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        let first = values.into_iter().find_map(|v| v.err()).expect("grid is non-empty");
        return Err(Error::AllPointsFailed(Box::new(first)));
    }
    let equal = |v: f64, reference: f64| v >= reference - options.tie_tol * reference.abs().max(1e-300);
    let i = values
        .iter()
        .position(|v| matches!(v, Ok(x) if equal(*x, best)))
        .expect("best value comes from the grid");
    let coarse = Optimum { t: grid[i], value: *values[i].as_ref().unwrap() };

    let score = |t: f64| eval(t).unwrap_or(f64::NEG_INFINITY);
    let (t, value) = golden_max(score, grid[i.saturating_sub(1)], grid[(i + 1).min(n - 1)], options.t_tol);
    if value > coarse.value && !equal(coarse.value, value) {
        Ok(Optimum { t, value })
    } else {
        Ok(coarse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    T,
    Alpha,
    Xi,
    Zeta,
    Lambda,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::T => "t",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Xi => "xi",
            SweepAxis::Zeta => "zeta",
            SweepAxis::Lambda => "lambda_m",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" => Ok(SweepAxis::T),
            "alpha" => Ok(SweepAxis::Alpha),
            "xi" => Ok(SweepAxis::Xi),
            "zeta" => Ok(SweepAxis::Zeta),
            "lambda" | "lambda_m" => Ok(SweepAxis::Lambda),
            other => Err(Error::InvalidInput(format!(
                "unknown sweep axis '{other}' (expected t, alpha, xi, zeta or lambda)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Transmission,
    Eta,
    JHeraldReduced,
    JHmReduced,
    MParam,
    Splitting,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Transmission => "transmission",
            Metric::Eta => "eta",
            Metric::JHeraldReduced => "j_herald_reduced",
            Metric::JHmReduced => "j_hm_reduced",
            Metric::MParam => "m_param",
            Metric::Splitting => "splitting_m",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transmission" => Ok(Metric::Transmission),
            "eta" => Ok(Metric::Eta),
            "j_herald_reduced" => Ok(Metric::JHeraldReduced),
            "j_hm_reduced" => Ok(Metric::JHmReduced),
            "m_param" => Ok(Metric::MParam),
            "splitting" | "splitting_m" => Ok(Metric::Splitting),
            other => Err(Error::InvalidInput(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// One entry per requested metric, in request order.
    pub metrics: Vec<Result<f64>>,
}

/// Evaluate `metrics` along one axis.
///
/// Parameter axes are evaluated at each configuration's heralding-rate peak
/// near `lambda_center`; the wavelength axis evaluates at the grid value
/// itself. Splitting always refers to the resonance nearest the evaluation
/// wavelength.
pub fn sweep_engine(
    template: &RingParams,
    axis: SweepAxis,
    grid: &[f64],
    metrics: &[Metric],
    lambda_center: f64,
) -> Vec<SweepRow> {
    grid.par_iter()
        .map(|&value| SweepRow { value, metrics: sweep_point(template, axis, value, metrics, lambda_center) })
        .collect()
}

fn sweep_point(
    template: &RingParams,
    axis: SweepAxis,
    value: f64,
    metrics: &[Metric],
    lambda_center: f64,
) -> Vec<Result<f64>> {
    if metrics.is_empty() {
        return Vec::new();
    }
    let mut params = *template;
    match axis {
        SweepAxis::T => params.t = value,
        SweepAxis::Alpha => params.alpha = value,
        SweepAxis::Xi => params.xi = value,
        SweepAxis::Zeta => params.zeta = value,
        SweepAxis::Lambda => {}
    }
    let report: Result<HeraldingReport> = match axis {
        SweepAxis::Lambda => heralding_report(&params, None, value, &BusInput::default()),
        _ => herald_peak(&params, None, lambda_center, &BusInput::default(), PeakTarget::HeraldRate),
    };
    let lambda = match (&report, axis) {
        (_, SweepAxis::Lambda) => value,
        (Ok(r), _) => r.lambda,
        (Err(_), _) => lambda_center,
    };
    metrics
        .iter()
        .map(|m| match m {
            Metric::Transmission => {
                solve_steady_state(&params, Ordering::MidRing, lambda, &BusInput::default())
                    .map(|s| s.b2_fwd.norm_sqr())
            }
            Metric::Splitting => {
                resonance_near(&params, lambda, &ResonanceSearch::default()).map(|r| r.splitting)
            }
            Metric::Eta => report.clone().map(|r| r.eta),
            Metric::JHeraldReduced => report.clone().map(|r| r.j_herald_reduced()),
            Metric::JHmReduced => report.clone().map(|r| r.j_hm_reduced()),
            Metric::MParam => report.clone().map(|r| r.m_param),
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(
    axis: SweepAxis,
    metrics: &[Metric],
    rows: &[SweepRow],
    mut out: W,
) -> io::Result<()> {
    let mut header = vec![axis.name().to_string()];
    header.extend(metrics.iter().map(|m| m.name().to_string()));
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let mut cells = vec![fmt_f64(row.value)];
        cells.extend(row.metrics.iter().map(|v| fmt_f64(*v.as_ref().unwrap_or(&f64::NAN))));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names() {
        assert_eq!("herald_mode".parse::<Objective>().unwrap(), Objective::HeraldMode);
        assert!("speed".parse::<Objective>().is_err());
        assert_eq!("lambda".parse::<SweepAxis>().unwrap(), SweepAxis::Lambda);
        assert_eq!("splitting".parse::<Metric>().unwrap(), Metric::Splitting);
    }

    #[test]
    fn flat_window_has_no_resonance() {
        let p = RingParams { t: 1.0, ..Default::default() };
        let r = find_resonances(&p, (1.55e-6, 1.56e-6), &ResonanceSearch::default());
        assert!(matches!(r, Err(Error::NoResonanceFound(_))));
    }

    #[test]
    fn bad_inputs_rejected() {
        let p = RingParams::default();
        assert!(find_resonances(&p, (1.56e-6, 1.55e-6), &ResonanceSearch::default()).is_err());
        let opts = OptimizeOptions::default();
        assert!(optimize_coupling(&p, Objective::HeraldRate, (0.9, 0.8), 1.55e-6, &opts).is_err());
        assert!(optimize_coupling(&p, Objective::HeraldRate, (0.0, 0.8), 1.55e-6, &opts).is_err());
    }

    #[test]
    fn group_metrics() {
        let r = resonance_from_group(vec![(1.0, 0.2), (1.5, 0.1), (3.0, 0.6)]);
        assert_eq!(r.minima_lambdas, vec![1.0, 1.5]);
        assert!((r.asymmetry.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let single = resonance_from_group(vec![(2.0, 0.3)]);
        assert_eq!(single.splitting, 0.0);
        assert_eq!(single.asymmetry, None);
    }

    #[test]
    fn empty_metric_sweep_returns_grid() {
        let rows = sweep_engine(&RingParams::default(), SweepAxis::T, &[0.9, 0.95], &[], 1.55e-6);
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.metrics.is_empty()));
        let mut buf = Vec::new();
        write_sweep_csv(SweepAxis::T, &[], &rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().next(), Some("t"));
    }
}
