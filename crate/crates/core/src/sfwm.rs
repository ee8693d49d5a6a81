//! Spontaneous four-wave mixing in the ring: pair generation, photon
//! survival, heralding rates and efficiency.
//!
//! Photon-number proportions propagate like intensities, so wherever a
//! transfer block is "squared" it is the power-transfer matrix `|U_ij|²`
//! acting on a vector of proportions. Pump powers are squared moduli of the
//! ring-average (mid-ring) fields.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    block_extract, c, modulus_squared, solve_2x2, solve_2x2_matrix, Matrix2, Matrix6, ModePair,
    Vector2,
};
use crate::model::{compose_at_phase, round_trip_phase, Ordering, RingParams};
use crate::response::{fmt_f64, spectral_radius, steady_state_from_matrix, BusInput};

/// Vacuum permittivity, F/m (CODATA 2018).
pub const EPSILON_0: f64 = 8.8541878128e-12;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Material and waveguide constants for the pair-generation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfwmParams {
    /// Third-order susceptibility, m²/V².
    pub chi3: f64,
    /// Waveguide cross-sectional area, m².
    pub a_eff: f64,
    /// Effective index at the pump.
    pub n_p: f64,
    /// Pump wavelength, m.
    pub lambda_p: f64,
}

impl SfwmParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("chi3", self.chi3),
            ("a_eff", self.a_eff),
            ("n_p", self.n_p),
            ("lambda_p", self.lambda_p),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    detail: format!("{v} must be positive and finite"),
                });
            }
        }
        Ok(())
    }
}

/// `β = 3π² ε₀ c χ⁽³⁾ r / (2 n_p² λ A_eff)`.
pub fn beta_coefficient(p: &SfwmParams, radius: f64) -> f64 {
    3.0 * PI * PI * EPSILON_0 * SPEED_OF_LIGHT * p.chi3 * radius
        / (2.0 * p.n_p * p.n_p * p.lambda_p * p.a_eff)
}

/// Pair generation rates `(β² P→², β² P←²)` driven by each pump direction.
pub fn pair_generation_rate(p_fwd: f64, p_bwd: f64, beta: f64) -> (f64, f64) {
    let b2 = beta * beta;
    (b2 * p_fwd * p_fwd, b2 * p_bwd * p_bwd)
}

/// Ring-average pump and photon-propagation matrices at one phase.
struct Propagators {
    pump: Matrix6,
    photon: Matrix6,
}

impl Propagators {
    fn at(params: &RingParams, theta: f64) -> Result<Self> {
        Ok(Self {
            pump: compose_at_phase(params, Ordering::MidRing, theta, false)?,
            photon: compose_at_phase(params, Ordering::MidRing, theta, true)?,
        })
    }

    /// `(|U_BR|², |U_RR|²)` of the photon propagator.
    fn power_blocks(&self) -> (Matrix2, Matrix2) {
        (
            modulus_squared(&block_extract(&self.photon, ModePair::Bus, ModePair::Ring)),
            modulus_squared(&block_extract(&self.photon, ModePair::Ring, ModePair::Ring)),
        )
    }
}

fn survival_from(props: &Propagators, q: f64) -> Result<[f64; 2]> {
    let (bus_ring, ring_ring) = props.power_blocks();
    let source = Vector2::new(c(1.0, 0.0), c(q * q, 0.0));
    let trapped = solve_2x2(&(Matrix2::identity() - ring_ring), &source).map_err(|e| match e {
        Error::SingularSystem(d) => Error::SingularSystem(format!("photon trapped in ring ({d})")),
        other => other,
    })?;
    let pr = bus_ring * trapped;
    Ok([pr[0].re, pr[1].re])
}

/// Proportions `(Pr_B→, Pr_B←)` of photons created in the ring (forward
/// unit source, backward source `q²`) that leave through the bus:
/// `|U_BR|² (I − |U_RR|²)⁻¹ (1, q²)ᵀ`.
pub fn survival_proportions(params: &RingParams, lambda: f64, q: f64) -> Result<[f64; 2]> {
    survival_at_phase(params, round_trip_phase(lambda, params), q)
}

pub fn survival_at_phase(params: &RingParams, theta: f64, q: f64) -> Result<[f64; 2]> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::InvalidParam {
            name: "q",
            detail: format!("{q} must be finite and non-negative"),
        });
    }
    survival_from(&Propagators::at(params, theta)?, q)
}

/// Survival proportions by iterating the photon round trip directly:
/// the ring proportions are re-injected with the source each pass,
/// amplitudes `√(Pr_R + source)` are propagated through the photon matrix
/// and their powers collected, until the ring proportions stop changing.
pub fn survival_recursion(
    params: &RingParams,
    theta: f64,
    q: f64,
    tol: f64,
    max_iter: usize,
) -> Result<[f64; 2]> {
    let u = compose_at_phase(params, Ordering::MidRing, theta, true)?;
    let source = [1.0, q * q];
    let propagate = |ring: [f64; 2], row: usize| -> f64 {
        (0..2)
            .map(|j| (u[(row, j)] * (ring[j] + source[j]).sqrt()).norm_sqr())
            .sum()
    };
    let mut ring = [0.0, 0.0];
    for _ in 0..max_iter {
        let next = [propagate(ring, 0), propagate(ring, 1)];
        let step = (next[0] - ring[0]).abs() + (next[1] - ring[1]).abs();
        ring = next;
        if step <= tol * (ring[0] + ring[1]) {
            return Ok([propagate(ring, 2), propagate(ring, 3)]);
        }
    }
    Err(Error::NoConvergence(max_iter))
}

/// Vernon's `M = U_BR²(I − U_RR² − U_BR²) / [(I − U_RR²)²(I + U_RR)²]`.
///
/// `U_BR²`, `U_RR²` are photon power-transfer matrices, `(I + U_RR)²` is the
/// power-transfer matrix of the pump amplitude block. The quotient is the
/// left-applied inverse and the forward component is read for a forward
/// unit input.
fn vernon_m_from(props: &Propagators) -> Result<f64> {
    let (x, y) = props.power_blocks();
    let id = Matrix2::identity();
    let pump_rr = block_extract(&props.pump, ModePair::Ring, ModePair::Ring);
    let w = modulus_squared(&(id + pump_rr));
    let numerator = x * (id - y - x);
    let denominator = (id - y) * (id - y) * w;
    let m = solve_2x2_matrix(&denominator, &numerator)?;
    Ok(m[(0, 0)].re)
}

pub fn vernon_m(params: &RingParams, lambda: f64) -> Result<f64> {
    vernon_m_at_phase(params, round_trip_phase(lambda, params))
}

pub fn vernon_m_at_phase(params: &RingParams, theta: f64) -> Result<f64> {
    let props = Propagators::at(params, theta)?;
    let rr = block_extract(&props.pump, ModePair::Ring, ModePair::Ring);
    if spectral_radius(&rr) >= 1.0 - 1e-15 {
        return Err(Error::SingularSystem("round trip without loss or coupling".into()));
    }
    vernon_m_from(&props)
}

/// Everything known about SFWM heralding at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeraldingReport {
    pub lambda: f64,
    pub theta: f64,
    /// Rate coefficient; 1 in reduced units.
    pub beta: f64,
    pub p_fwd: f64,
    pub p_bwd: f64,
    pub j_4wm_fwd: f64,
    pub j_4wm_bwd: f64,
    /// Backward to forward pump power ratio.
    pub q: f64,
    pub pr_fwd: f64,
    pub pr_bwd: f64,
    pub j_hm: f64,
    pub j_herald: f64,
    pub eta: f64,
    /// Vernon's M evaluated from the block formula.
    pub m_param: f64,
    /// The M that makes `J_Herald = β² η⁴ (1−η)² M⁻² |B₁→|⁴` hold exactly.
    pub m_implied: f64,
    /// `|B₁→|²` of the driving input.
    pub input_fwd_power: f64,
}

impl HeraldingReport {
    pub fn j_herald_reduced(&self) -> f64 {
        self.j_herald / (self.beta * self.beta)
    }

    pub fn j_hm_reduced(&self) -> f64 {
        self.j_hm / (self.beta * self.beta)
    }

    pub fn j_4wm_reduced(&self) -> f64 {
        self.j_4wm_fwd / (self.beta * self.beta)
    }

    /// Right-hand side of the rate-efficiency relation, with the given `M`.
    pub fn rate_from_efficiency(&self, m: f64) -> f64 {
        let eta = self.eta;
        self.beta * self.beta * eta.powi(4) * (1.0 - eta).powi(2) / (m * m)
            * self.input_fwd_power.powi(2)
    }
}

fn beta_or_reduced(params: &RingParams, sfwm: Option<&SfwmParams>) -> Result<f64> {
    match sfwm {
        Some(s) => {
            s.validate()?;
            Ok(beta_coefficient(s, params.radius))
        }
        None => Ok(1.0),
    }
}

fn report_from(
    props: &Propagators,
    beta: f64,
    input: &BusInput,
    lambda: f64,
    theta: f64,
) -> Result<HeraldingReport> {
    let state = steady_state_from_matrix(&props.pump, input, lambda, theta)?;
    let q = if input.power() == 0.0 {
        0.0
    } else if state.p_fwd == 0.0 {
        return Err(Error::DivisionByZero(
            "forward pump power is zero, backward/forward ratio undefined",
        ));
    } else {
        state.p_bwd / state.p_fwd
    };
    let pr = survival_from(props, q)?;
    let (j_fwd, j_bwd) = pair_generation_rate(state.p_fwd, state.p_bwd, beta);
    let eta = pr[0];
    let input_fwd_power = input.fwd.norm_sqr();
    Ok(HeraldingReport {
        lambda,
        theta,
        beta,
        p_fwd: state.p_fwd,
        p_bwd: state.p_bwd,
        j_4wm_fwd: j_fwd,
        j_4wm_bwd: j_bwd,
        q,
        pr_fwd: pr[0],
        pr_bwd: pr[1],
        j_hm: j_fwd * eta,
        j_herald: j_fwd * eta * eta,
        eta,
        m_param: vernon_m_from(props)?,
        m_implied: eta * (1.0 - eta) * input_fwd_power / state.p_fwd,
        input_fwd_power,
    })
}

pub fn heralding_report(
    params: &RingParams,
    sfwm: Option<&SfwmParams>,
    lambda: f64,
    input: &BusInput,
) -> Result<HeraldingReport> {
    params.validate()?;
    let theta = round_trip_phase(lambda, params);
    let beta = beta_or_reduced(params, sfwm)?;
    report_from(&Propagators::at(params, theta)?, beta, input, lambda, theta)
}

pub fn heralding_report_at_phase(
    params: &RingParams,
    sfwm: Option<&SfwmParams>,
    theta: f64,
    input: &BusInput,
) -> Result<HeraldingReport> {
    params.validate()?;
    let lambda = 4.0 * PI * PI * params.n_eff * params.radius / (theta - params.tau);
    let beta = beta_or_reduced(params, sfwm)?;
    report_from(&Propagators::at(params, theta)?, beta, input, lambda, theta)
}

/// Quantity maximised when locating an operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakTarget {
    HeraldRate,
    HeraldModeRate,
}

impl PeakTarget {
    fn value(self, r: &HeraldingReport) -> f64 {
        match self {
            PeakTarget::HeraldRate => r.j_herald,
            PeakTarget::HeraldModeRate => r.j_hm,
        }
    }
}

const PEAK_COARSE_POINTS: usize = 128;
const PEAK_PHASE_TOL: f64 = 1e-11;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximisation of `f` on `[lo, hi]`.
pub(crate) fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Locate the operating point maximising `target` within one free spectral
/// range around the resonance nearest `lambda_center`.
///
/// Candidates are a coarse phase grid plus the phases predicted from the
/// round-trip eigenvalues; the best candidate is refined by golden section.
pub fn herald_peak(
    params: &RingParams,
    sfwm: Option<&SfwmParams>,
    lambda_center: f64,
    input: &BusInput,
    target: PeakTarget,
) -> Result<HeraldingReport> {
    params.validate()?;
    let beta = beta_or_reduced(params, sfwm)?;
    let center = round_trip_phase(params.resonance_near(lambda_center), params);
    let eval = |theta: f64| -> Result<HeraldingReport> {
        let props = Propagators::at(params, theta)?;
        report_from(&props, beta, input, 0.0, theta)
    };
    let score = |theta: f64| eval(theta).map(|r| target.value(&r)).unwrap_or(f64::NEG_INFINITY);

    let step = 2.0 * PI / PEAK_COARSE_POINTS as f64;
    let mut candidates: Vec<(f64, f64)> = (0..PEAK_COARSE_POINTS)
        .map(|i| center - PI + step * (i as f64 + 0.5))
        .map(|th| (th, step))
        .collect();

    let pump_rr = block_extract(
        &compose_at_phase(params, Ordering::MidRing, center, false)?,
        ModePair::Ring,
        ModePair::Ring,
    );
    let half_trace = (pump_rr[(0, 0)] + pump_rr[(1, 1)]) * 0.5;
    let disc = (half_trace * half_trace - pump_rr.determinant()).sqrt();
    for mu in [half_trace + disc, half_trace - disc] {
        if mu.norm() > 0.0 {
            let width = (1.0 - mu.norm()).abs().clamp(1e-9, step);
            candidates.push((center + mu.arg(), 2.0 * width));
        }
    }

    let (best_theta, best_score, half_width) = candidates
        .iter()
        .map(|&(th, w)| (th, score(th), w))
        .fold((center, f64::NEG_INFINITY, step), |acc, cur| {
            if cur.1 > acc.1 {
                cur
            } else {
                acc
            }
        });
    if best_score == f64::NEG_INFINITY {
        return eval(center).map(|_| unreachable!("all candidates failed"));
    }
    let (theta, _) = golden_max(
        score,
        best_theta - half_width,
        best_theta + half_width,
        PEAK_PHASE_TOL,
    );
    let theta = if score(theta) >= best_score { theta } else { best_theta };
    let lambda = params.lambda_for_phase(theta, lambda_center);
    heralding_report_at_phase(params, sfwm, theta, input).map(|r| HeraldingReport { lambda, ..r })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub report: Result<HeraldingReport>,
}

/// Rate against efficiency as the coupling is varied. Each row is evaluated
/// at that configuration's heralding-rate peak near `lambda_center`.
pub fn rate_vs_efficiency_curve(
    template: &RingParams,
    t_grid: &[f64],
    sfwm: Option<&SfwmParams>,
    lambda_center: f64,
) -> Result<Vec<CurveRow>> {
    if t_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::InvalidInput("coupling grid must lie in (0, 1]".into()));
    }
    Ok(t_grid
        .par_iter()
        .map(|&t| {
            let params = RingParams { t, ..*template };
            CurveRow {
                t,
                report: herald_peak(
                    &params,
                    sfwm,
                    lambda_center,
                    &BusInput::default(),
                    PeakTarget::HeraldRate,
                ),
            }
        })
        .collect())
}

pub const CURVE_CSV_HEADER: &str = "t,eta,j_herald_reduced,j_hm_reduced,m_param";

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for row in rows {
        let vals = match &row.report {
            Ok(r) => [r.eta, r.j_herald_reduced(), r.j_hm_reduced(), r.m_param],
            Err(_) => [f64::NAN; 4],
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(row.t),
            fmt_f64(vals[0]),
            fmt_f64(vals[1]),
            fmt_f64(vals[2]),
            fmt_f64(vals[3])
        )?;
    }
    Ok(())
}
