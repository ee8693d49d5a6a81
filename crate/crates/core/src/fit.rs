//! Least-squares fitting of measured forward transmission spectra.
//!
//! Both data and model are normalised to their own maximum over the measured
//! wavelengths before residuals are formed, so the fit is insensitive to the
//! absolute power scale of the measurement.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::io::Read;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Ordering, RingParams};
use crate::response::{fmt_f64, solve_steady_state, BusInput};

pub const MIN_FIT_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredSpectrum {
    pub lambda: Vec<f64>,
    pub power: Vec<f64>,
}

impl MeasuredSpectrum {
    pub fn new(lambda: Vec<f64>, power: Vec<f64>) -> Result<Self> {
        if lambda.len() != power.len() {
            return Err(Error::InvalidInput("wavelength and power columns differ in length".into()));
        }
        if let Some(i) = lambda.iter().chain(&power).position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at row {}", i % lambda.len().max(1) + 1)));
        }
        if let Some(i) = lambda.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "wavelengths must be strictly ascending (row {})",
                i + 2
            )));
        }
        Ok(Self { lambda, power })
    }

    /// Reads `lambda_m,power` CSV; lines starting with `#` are ignored.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidInput(format!("unreadable header: {e}")))?;
        if headers.iter().collect::<Vec<_>>() != ["lambda_m", "power"] {
            return Err(Error::InvalidInput(format!(
                "expected header 'lambda_m,power', found '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut lambda, mut power) = (Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record.map_err(|e| Error::InvalidInput(format!("malformed row: {e}")))?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .ok_or_else(|| Error::InvalidInput(format!("line {line}: missing column {}", i + 1)))?
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("line {line}: {e}")))
            };
            lambda.push(field(0)?);
            power.push(field(1)?);
        }
        Self::new(lambda, power)
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda_m,power\n");
        for (l, p) in self.lambda.iter().zip(&self.power) {
            let _ = writeln!(out, "{},{}", fmt_f64(*l), fmt_f64(*p));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FitParam {
    T,
    Alpha,
    Xi,
    Zeta,
    NEff,
    Tau,
}

impl FitParam {
    pub fn name(self) -> &'static str {
        match self {
            FitParam::T => "t",
            FitParam::Alpha => "alpha",
            FitParam::Xi => "xi",
            FitParam::Zeta => "zeta",
            FitParam::NEff => "n_eff",
            FitParam::Tau => "tau",
        }
    }

    fn get(self, p: &RingParams) -> f64 {
        match self {
            FitParam::T => p.t,
            FitParam::Alpha => p.alpha,
            FitParam::Xi => p.xi,
            FitParam::Zeta => p.zeta,
            FitParam::NEff => p.n_eff,
            FitParam::Tau => p.tau,
        }
    }

    fn set(self, p: &mut RingParams, v: f64) {
        match self {
            FitParam::T => p.t = v,
            FitParam::Alpha => p.alpha = v,
            FitParam::Xi => p.xi = v,
            FitParam::Zeta => p.zeta = v,
            FitParam::NEff => p.n_eff = v,
            FitParam::Tau => p.tau = v,
        }
    }

    /// Search interval. The effective index may move the resonance by at
    /// most half a free spectral range.
    fn bounds(self, initial: &RingParams, lambda_mid: f64) -> (f64, f64) {
        match self {
            FitParam::T | FitParam::Alpha | FitParam::Xi => (1e-6, 1.0),
            FitParam::Zeta | FitParam::Tau => (-PI, PI),
            FitParam::NEff => {
                let dn = 0.5 * initial.n_eff * initial.fsr_near(lambda_mid) / lambda_mid;
                (initial.n_eff - dn, initial.n_eff + dn)
            }
        }
    }
}

impl fmt::Display for FitParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" => Ok(FitParam::T),
            "alpha" => Ok(FitParam::Alpha),
            "xi" => Ok(FitParam::Xi),
            "zeta" => Ok(FitParam::Zeta),
            "n_e" | "n_eff" => Ok(FitParam::NEff),
            "tau" => Ok(FitParam::Tau),
            other => Err(Error::InvalidInput(format!(
                "'{other}' cannot be fitted (choose from t, alpha, xi, zeta, n_e, tau)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub ordering: Ordering,
    pub starts: usize,
    pub max_iter: usize,
    /// Converged once the best objective improves by less than this
    /// fraction over `stall_window` iterations.
    pub rel_tol: f64,
    pub stall_window: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ordering: Ordering::MidRing,
            starts: 8,
            max_iter: 20_000,
            rel_tol: 1e-10,
            stall_window: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: RingParams,
    pub free: Vec<FitParam>,
    /// Root-mean-square of normalised model minus normalised data.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let free: Vec<&str> = self.free.iter().map(|f| f.name()).collect();
        let mut out = String::new();
        let _ = writeln!(out, "converged = {}", self.converged);
        let _ = writeln!(out, "residual = {}", fmt_f64(self.residual));
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "free = {}", free.join(","));
        for (k, v) in [
            ("t", p.t),
            ("phi", p.phi),
            ("alpha", p.alpha),
            ("xi", p.xi),
            ("zeta", p.zeta),
            ("tau", p.tau),
            ("n_eff", p.n_eff),
            ("radius", p.radius),
        ] {
            let _ = writeln!(out, "{k} = {}", fmt_f64(v));
        }
        let placement = match p.placement {
            crate::model::Placement::InRing => "in_ring",
            crate::model::Placement::InCoupler => "in_coupler",
        };
        let _ = writeln!(out, "placement = {placement}");
        out
    }
}

fn normalized(values: &[f64]) -> Option<Vec<f64>> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (max > 0.0 && max.is_finite()).then(|| values.iter().map(|v| v / max).collect())
}

struct Problem<'a> {
    data: Vec<f64>,
    lambda: &'a [f64],
    base: RingParams,
    free: Vec<FitParam>,
    bounds: Vec<(f64, f64)>,
    ordering: Ordering,
}

impl Problem<'_> {
    fn params_at(&self, x: &[f64]) -> RingParams {
        let mut p = self.base;
        for (f, v) in self.free.iter().zip(x) {
            f.set(&mut p, *v);
        }
        p
    }

    fn model(&self, p: &RingParams) -> Option<Vec<f64>> {
        let input = BusInput::default();
        let t: Option<Vec<f64>> = self
            .lambda
            .iter()
            .map(|&l| solve_steady_state(p, self.ordering, l, &input).ok().map(|s| s.b2_fwd.norm_sqr()))
            .collect();
        normalized(&t?)
    }

    /// Sum of squared normalised residuals; infinite where the model fails.
    fn objective(&self, x: &[f64]) -> f64 {
        match self.model(&self.params_at(x)) {
            Some(m) => m.iter().zip(&self.data).map(|(a, b)| (a - b) * (a - b)).sum(),
            None => f64::INFINITY,
        }
    }

    fn reflect(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            let w = hi - lo;
            let mut y = (*v - lo).rem_euclid(2.0 * w);
            if y > w {
                y = 2.0 * w - y;
            }
            *v = lo + y;
        }
    }
}

struct Run {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder–Mead simplex descent inside the problem's bounds.
fn nelder_mead(problem: &Problem, start: Vec<f64>, options: &FitOptions) -> Run {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for j in 0..n {
        let (lo, hi) = problem.bounds[j];
        let mut v = start.clone();
        let step = 0.05 * (hi - lo);
        v[j] += if v[j] + step <= hi { step } else { -step };
        problem.reflect(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| problem.objective(v)).collect();
    let mut history: Vec<f64> = Vec::new();

    let point = |centroid: &[f64], worst: &[f64], coef: f64| -> Vec<f64> {
        let mut p: Vec<f64> = centroid.iter().zip(worst).map(|(c, w)| c + coef * (c - w)).collect();
        problem.reflect(&mut p);
        p
    };

    for iter in 0..options.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        history.push(best);
        if best == 0.0 {
            return Run { x: simplex.swap_remove(0), f: best, iterations: iter, converged: true };
        }
        if history.len() > options.stall_window {
            let old = history[history.len() - 1 - options.stall_window];
            if old.is_finite() && old - best <= options.rel_tol * old {
                return Run { x: simplex.swap_remove(0), f: best, iterations: iter, converged: true };
            }
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let reflected = point(&centroid, &simplex[n], 1.0);
        let fr = problem.objective(&reflected);
        if fr < values[0] {
            let expanded = point(&centroid, &simplex[n], 2.0);
            let fe = problem.objective(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (candidate, fc) = if fr < values[n] {
                let p = point(&centroid, &simplex[n], 0.5);
                let f = problem.objective(&p);
                (p, f)
            } else {
                let p = point(&centroid, &simplex[n], -0.5);
                let f = problem.objective(&p);
                (p, f)
            };
            if fc < values[n].min(fr) {
                simplex[n] = candidate;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    for j in 0..n {
                        simplex[i][j] = best[j] + 0.5 * (simplex[i][j] - best[j]);
                    }
                    values[i] = problem.objective(&simplex[i]);
                }
            }
        }
    }
    let i = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Run { x: simplex.swap_remove(i), f: values[i], iterations: options.max_iter, converged: false }
}

/// Repeated simplex descent from one start, re-seeding the simplex at the
/// current best point while that still improves the objective.
fn descend(problem: &Problem, start: Vec<f64>, options: &FitOptions) -> Run {
    let mut run = nelder_mead(problem, start, options);
    for _ in 0..4 {
        let next = nelder_mead(problem, run.x.clone(), options);
        let improved = next.f < run.f * (1.0 - options.rel_tol);
        let iterations = run.iterations + next.iterations;
        if next.f <= run.f {
            run = Run { iterations, ..next };
        } else {
            run.iterations = iterations;
        }
        if !improved {
            break;
        }
    }
    run
}

/// Deterministic multi-start points: the initial guess and symmetric
/// perturbations of it, with the backscatter phase sign flipped on every
/// other start.
fn starts(problem: &Problem, x0: &[f64], count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let mut x = x0.to_vec();
            if k > 0 {
                for (j, f) in problem.free.iter().enumerate() {
                    let (lo, hi) = problem.bounds[j];
                    let sign = if (k >> (j % 3)) & 1 == 1 { 1.0 } else { -1.0 };
                    let delta = sign * 0.01 * (1.0 + (k / 2) as f64) * (hi - lo);
                    if *f == FitParam::Zeta && k % 2 == 1 {
                        x[j] = -x[j];
                    }
                    x[j] += delta;
                }
                problem.reflect(&mut x);
            }
            x
        })
        .collect()
}

/// Fit `free` parameters of `initial` to `data`.
///
/// A fit whose best start failed to converge is still returned, with
/// `converged` cleared.
pub fn fit_spectrum(
    data: &MeasuredSpectrum,
    initial: &RingParams,
    free: &[FitParam],
    options: &FitOptions,
) -> Result<FitResult> {
    initial.validate()?;
    if data.len() < MIN_FIT_ROWS {
        return Err(Error::InvalidInput(format!(
            "fitting needs at least {MIN_FIT_ROWS} rows, got {}",
            data.len()
        )));
    }
    let mut free = free.to_vec();
    free.sort();
    free.dedup();
    if free.is_empty() {
        return Err(Error::InvalidInput("no free parameters".into()));
    }
    let normalized_data = normalized(&data.power)
        .ok_or_else(|| Error::NoResonanceFound("measured power is never positive".into()))?;
    let (min, max) = normalized_data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if max - min < 1e-6 {
        return Err(Error::NoResonanceFound("measured transmission is flat".into()));
    }

    let lambda_mid = 0.5 * (data.lambda[0] + data.lambda[data.len() - 1]);
    let bounds: Vec<(f64, f64)> = free.iter().map(|f| f.bounds(initial, lambda_mid)).collect();
    let problem = Problem {
        data: normalized_data,
        lambda: &data.lambda,
        base: *initial,
        free: free.clone(),
        bounds,
        ordering: options.ordering,
    };
    let mut x0: Vec<f64> = free.iter().map(|f| f.get(initial)).collect();
    problem.reflect(&mut x0);

    let runs: Vec<Run> = starts(&problem, &x0, options.starts.max(1))
        .into_par_iter()
        .map(|s| descend(&problem, s, options))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.f < a.f { b } else { a })
        .expect("at least one start");
    if !best.f.is_finite() {
        return Err(Error::SingularSystem("model undefined at every start".into()));
    }
    Ok(FitResult {
        params: problem.params_at(&best.x),
        free,
        residual: (best.f / data.len() as f64).sqrt(),
        iterations: best.iterations,
        converged: best.converged,
    })
}

/// Noise-free spectrum of `params` sampled on `lambda`.
pub fn synthetic_spectrum(params: &RingParams, ordering: Ordering, lambda: Vec<f64>) -> Result<MeasuredSpectrum> {
    let input = BusInput::default();
    let power = lambda
        .iter()
        .map(|&l| solve_steady_state(params, ordering, l, &input).map(|s| s.b2_fwd.norm_sqr()))
        .collect::<Result<Vec<f64>>>()?;
    MeasuredSpectrum::new(lambda, power)
}
