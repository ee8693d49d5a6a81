//! Steady-state solution of the ring: bus transmission, ring fields, loss
//! flux and pump powers.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    block_extract, c, solve_2x2, Complex, Matrix2, Matrix6, ModePair, Vector2,
};
use crate::model::{compose_at_phase, round_trip_phase, Ordering, Placement, RingParams};

/// Fields injected into the bus, `(B₁→, B₁←)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusInput {
    pub fwd: Complex,
    pub bwd: Complex,
}

impl Default for BusInput {
    fn default() -> Self {
        Self {
            fwd: c(1.0, 0.0),
            bwd: c(0.0, 0.0),
        }
    }
}

impl BusInput {
    pub fn forward(amplitude: f64) -> Self {
        Self {
            fwd: c(amplitude, 0.0),
            bwd: c(0.0, 0.0),
        }
    }

    pub fn power(&self) -> f64 {
        self.fwd.norm_sqr() + self.bwd.norm_sqr()
    }

    pub fn as_vector(&self) -> Vector2 {
        Vector2::new(self.fwd, self.bwd)
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.fwd.re, self.fwd.im, self.bwd.re, self.bwd.im]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("bus input must be finite".into()))
        }
    }
}

/// Solved fields at one wavelength.
///
/// Ring fields are the end-of-round-trip values for [`Ordering::EndOfRing`]
/// and the half-way (ring-average) values for [`Ordering::MidRing`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub lambda: f64,
    pub theta: f64,
    pub b2_fwd: Complex,
    pub b2_bwd: Complex,
    pub r_fwd: Complex,
    pub r_bwd: Complex,
    pub l_fwd: Complex,
    pub l_bwd: Complex,
    /// `|R→|²`
    pub p_fwd: f64,
    /// `|R←|²`
    pub p_bwd: f64,
}

impl SteadyState {
    /// Total power leaving through the bus and loss channels.
    pub fn output_power(&self) -> f64 {
        self.b2_fwd.norm_sqr()
            + self.b2_bwd.norm_sqr()
            + self.l_fwd.norm_sqr()
            + self.l_bwd.norm_sqr()
    }

    pub fn ring(&self) -> Vector2 {
        Vector2::new(self.r_fwd, self.r_bwd)
    }
}

fn outputs_from_ring(
    u: &Matrix6,
    ring: Vector2,
    b: Vector2,
    lambda: f64,
    theta: f64,
) -> SteadyState {
    let bus = block_extract(u, ModePair::Bus, ModePair::Ring) * ring
        + block_extract(u, ModePair::Bus, ModePair::Bus) * b;
    let loss = block_extract(u, ModePair::Loss, ModePair::Ring) * ring
        + block_extract(u, ModePair::Loss, ModePair::Bus) * b;
    SteadyState {
        lambda,
        theta,
        b2_fwd: bus[0],
        b2_bwd: bus[1],
        r_fwd: ring[0],
        r_bwd: ring[1],
        l_fwd: loss[0],
        l_bwd: loss[1],
        p_fwd: ring[0].norm_sqr(),
        p_bwd: ring[1].norm_sqr(),
    }
}

/// Fixed point of a given total interaction: `R = (I − U_RR)⁻¹ U_RB b`.
pub fn steady_state_from_matrix(
    u: &Matrix6,
    input: &BusInput,
    lambda: f64,
    theta: f64,
) -> Result<SteadyState> {
    input.validate()?;
    let b = input.as_vector();
    let rr = block_extract(u, ModePair::Ring, ModePair::Ring);
    let rb = block_extract(u, ModePair::Ring, ModePair::Bus);
    let ring = solve_2x2(&(Matrix2::identity() - rr), &(rb * b)).map_err(|e| match e {
        Error::SingularSystem(d) => {
            Error::SingularSystem(format!("no steady state at lambda = {lambda:.9e} m ({d})"))
        }
        other => other,
    })?;
    Ok(outputs_from_ring(u, ring, b, lambda, theta))
}

/// Steady state at a round-trip phase rather than a wavelength.
pub fn solve_at_phase(
    params: &RingParams,
    ordering: Ordering,
    theta: f64,
    input: &BusInput,
) -> Result<SteadyState> {
    let u = compose_at_phase(params, ordering, theta, false)?;
    let lambda = 4.0 * PI * PI * params.n_eff * params.radius / (theta - params.tau);
    steady_state_from_matrix(&u, input, lambda, theta)
}

pub fn solve_steady_state(
    params: &RingParams,
    ordering: Ordering,
    lambda: f64,
    input: &BusInput,
) -> Result<SteadyState> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParam {
            name: "lambda",
            detail: format!("{lambda} must be positive"),
        });
    }
    let theta = round_trip_phase(lambda, params);
    let u = compose_at_phase(params, ordering, theta, false)?;
    steady_state_from_matrix(&u, input, lambda, theta)
}

/// Complex in-coupler backscatter coefficient entering the printed
/// in-coupler transmission formula.
fn coupler_xi(params: &RingParams) -> Complex {
    Complex::from_polar(params.xi, -params.zeta / 2.0)
}

/// `B₂→` from the printed closed forms (unit forward input, zero backward
/// input, coupling phase taken as zero), evaluated exactly as printed.
///
/// These forms are kept as a cross-check. They reproduce the matrix model
/// only through [`mapped_closed_form_transmission`].
pub fn closed_form_transmission(params: &RingParams, lambda: f64) -> Result<Complex> {
    params.validate()?;
    closed_form_at_phase(params, round_trip_phase(lambda, params))
}

fn closed_form_at_phase(params: &RingParams, theta: f64) -> Result<Complex> {
    let t = params.t;
    if t == 0.0 {
        return Err(Error::InvalidParam {
            name: "t",
            detail: "closed forms divide by t; t must be > 0".into(),
        });
    }
    let a = params.alpha;
    let e = Complex::from_polar(1.0, -theta);
    let tae = e * (t * a);
    Ok(match params.placement {
        Placement::InRing => {
            let xi = params.xi;
            let num = (e * (a * xi) + 1.0 / t) * (t * t - 1.0);
            let den = tae * tae + tae * (2.0 * xi) + 1.0;
            c(1.0 / t, 0.0) - num / den
        }
        Placement::InCoupler => {
            let xi = coupler_xi(params);
            let num = (xi - tae) * (t - 1.0 / t);
            let den = tae * tae - tae * (xi + xi.conj()) + 1.0;
            xi / t - num / den
        }
    })
}

/// The printed closed forms after the convention map that aligns them with
/// the end-of-ring matrix model: the sign of the resonant term is flipped
/// (`B = 2·lead − printed`), and the in-ring form is evaluated at `θ + π`.
pub fn mapped_closed_form_transmission(params: &RingParams, lambda: f64) -> Result<Complex> {
    params.validate()?;
    let theta = round_trip_phase(lambda, params);
    let (lead, shifted) = match params.placement {
        Placement::InRing => (c(1.0 / params.t, 0.0), theta + PI),
        Placement::InCoupler => (coupler_xi(params) / params.t, theta),
    };
    Ok(lead * 2.0 - closed_form_at_phase(params, shifted)?)
}

/// Iteration settings for [`roundtrip_sum_oracle`].
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

/// Spectral radius of a 2×2 matrix.
pub fn spectral_radius(m: &Matrix2) -> f64 {
    let half_trace = (m[(0, 0)] + m[(1, 1)]) * 0.5;
    let disc = (half_trace * half_trace - m.determinant()).sqrt();
    (half_trace + disc).norm().max((half_trace - disc).norm())
}

/// Steady state by summing ring circulations, `Rₙ₊₁ = U_RR Rₙ + U_RB b`,
/// starting from an empty ring. Independent of the direct 2×2 solve.
pub fn roundtrip_sum_oracle(
    params: &RingParams,
    ordering: Ordering,
    lambda: f64,
    input: &BusInput,
    options: OracleOptions,
) -> Result<SteadyState> {
    input.validate()?;
    let theta = round_trip_phase(lambda, params);
    let u = compose_at_phase(params, ordering, theta, false)?;
    let rr = block_extract(&u, ModePair::Ring, ModePair::Ring);
    let drive = block_extract(&u, ModePair::Ring, ModePair::Bus) * input.as_vector();

    if spectral_radius(&rr) >= 1.0 - 1e-15 {
        return Err(Error::NoConvergence(0));
    }

    let mut ring = Vector2::zeros();
    for _ in 0..options.max_iter {
        let next = rr * ring + drive;
        let step = (next - ring).norm();
        ring = next;
        if step == 0.0 || step < options.tol * ring.norm() {
            return Ok(outputs_from_ring(&u, ring, input.as_vector(), lambda, theta));
        }
    }
    Err(Error::NoConvergence(options.max_iter))
}

/// Wavelength grid covering one free spectral range, centred on the
/// resonance nearest `lambda_center`. Endpoints sit half an FSR either side.
pub fn fsr_grid(params: &RingParams, lambda_center: f64, points: usize) -> Vec<f64> {
    let center = params.resonance_near(lambda_center);
    let fsr = params.fsr_near(center);
    match points {
        0 => Vec::new(),
        1 => vec![center],
        n => (0..n)
            .map(|i| center - 0.5 * fsr + fsr * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub const DEFAULT_GRID_POINTS: usize = 2001;

/// One row of a transmission spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub lambda: f64,
    pub values: Result<SpectrumPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub t_fwd: f64,
    pub t_bwd: f64,
    pub r_fwd_mag: f64,
    pub r_bwd_mag: f64,
}

impl SpectrumPoint {
    fn from_state(s: &SteadyState, input_power: f64) -> Self {
        let norm = if input_power > 0.0 { input_power } else { 1.0 };
        let amp = norm.sqrt();
        Self {
            t_fwd: s.b2_fwd.norm_sqr() / norm,
            t_bwd: s.b2_bwd.norm_sqr() / norm,
            r_fwd_mag: s.r_fwd.norm() / amp,
            r_bwd_mag: s.r_bwd.norm() / amp,
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("wavelength grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "wavelength grid must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Transmission and ring-field magnitudes over a wavelength grid, normalised
/// to the input power. Failed points are kept as error rows.
pub fn spectrum_sweep(
    params: &RingParams,
    ordering: Ordering,
    grid: &[f64],
    input: &BusInput,
) -> Result<Vec<SpectrumRow>> {
    params.validate()?;
    check_grid(grid)?;
    let power = input.power();
    Ok(grid
        .par_iter()
        .map(|&lambda| SpectrumRow {
            lambda,
            values: solve_steady_state(params, ordering, lambda, input)
                .map(|s| SpectrumPoint::from_state(&s, power)),
        })
        .collect())
}

pub const SPECTRUM_CSV_HEADER: &str = "lambda_m,T_fwd,T_bwd,R_fwd_mag,R_bwd_mag";

/// 17 significant digits, round-trippable.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NaN".to_string()
    }
}

/// Write a spectrum as CSV. Error rows carry `NaN` in every value column.
pub fn write_spectrum_csv<W: Write>(rows: &[SpectrumRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{SPECTRUM_CSV_HEADER}")?;
    for row in rows {
        let vals = match &row.values {
            Ok(p) => [p.t_fwd, p.t_bwd, p.r_fwd_mag, p.r_bwd_mag],
            Err(_) => [f64::NAN; 4],
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(row.lambda),
            fmt_f64(vals[0]),
            fmt_f64(vals[1]),
            fmt_f64(vals[2]),
            fmt_f64(vals[3])
        )?;
    }
    Ok(())
}
