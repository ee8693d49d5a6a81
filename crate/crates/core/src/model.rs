//! Process matrices of the ring and their composition into the total
//! six-mode interaction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, embed_pair, Complex, Matrix2, Matrix6, ModeIndex, UnitarySqrt};

/// Where the forward/backward mode coupling happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    InRing,
    #[default]
    InCoupler,
}

/// Whether the ring field is read at the end of a round trip or halfway
/// round, where it represents the ring average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    EndOfRing,
    #[default]
    MidRing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    Coupler,
    Loss,
    BackRing,
    BackCoupler,
    /// In-coupler backscatter as seen by a generated photon: scattering
    /// backward→forward is removed because such a photon no longer belongs
    /// to its pair. Not unitary.
    BackPhoton,
}

/// Physical and model parameters of one resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RingParams {
    /// Self-coupling (transmission) magnitude of the bus-ring coupler.
    pub t: f64,
    /// Coupling phase, rad.
    pub phi: f64,
    /// Round-trip amplitude loss coefficient (1 = lossless).
    pub alpha: f64,
    /// Backscatter coefficient (1 = no backscatter).
    pub xi: f64,
    /// Backscatter phase, rad.
    pub zeta: f64,
    /// Phase offset added to the round-trip phase, rad.
    pub tau: f64,
    /// Effective refractive index.
    pub n_eff: f64,
    /// Ring radius, m.
    pub radius: f64,
    pub placement: Placement,
}

impl Default for RingParams {
    fn default() -> Self {
        Self {
            t: 0.98,
            phi: 0.0,
            alpha: 0.98,
            xi: 0.99,
            zeta: 0.0,
            tau: 0.0,
            n_eff: 2.4,
            radius: 15e-6,
            placement: Placement::InCoupler,
        }
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidParam {
            name,
            detail: format!("{v} is outside [0, 1]"),
        });
    }
    Ok(())
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidParam {
            name,
            detail: format!("{v} is not finite"),
        });
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParam {
            name,
            detail: format!("{v} must be positive and finite"),
        });
    }
    Ok(())
}

impl RingParams {
    pub fn validate(&self) -> Result<()> {
        check_unit("t", self.t)?;
        check_unit("alpha", self.alpha)?;
        check_unit("xi", self.xi)?;
        check_finite("phi", self.phi)?;
        check_finite("zeta", self.zeta)?;
        check_finite("tau", self.tau)?;
        check_positive("n_eff", self.n_eff)?;
        check_positive("radius", self.radius)?;
        Ok(())
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    /// Free spectral range near `lambda`, m (first-order estimate).
    pub fn fsr_near(&self, lambda: f64) -> f64 {
        lambda * lambda / (2.0 * PI * self.n_eff * self.radius)
    }

    /// Wavelength of the resonance order closest to `lambda`, i.e. where the
    /// round-trip phase is a multiple of 2π.
    pub fn resonance_near(&self, lambda: f64) -> f64 {
        let k = 4.0 * PI * PI * self.n_eff * self.radius;
        let order = ((k / lambda + self.tau) / (2.0 * PI)).round();
        k / (2.0 * PI * order - self.tau)
    }

    /// Wavelength at which the round-trip phase equals `theta`, on the
    /// branch nearest `lambda_hint`.
    pub fn lambda_for_phase(&self, theta: f64, lambda_hint: f64) -> f64 {
        let k = 4.0 * PI * PI * self.n_eff * self.radius;
        let base = k / lambda_hint + self.tau;
        let shift = ((base - theta) / (2.0 * PI)).round() * 2.0 * PI;
        k / (theta + shift - self.tau)
    }
}

/// Round-trip phase `θ(λ) = 4π² n_e r / λ + τ`.
pub fn round_trip_phase(lambda: f64, params: &RingParams) -> f64 {
    4.0 * PI * PI * params.n_eff * params.radius / lambda + params.tau
}

/// Loss sub-matrix on a (ring, loss) mode pair.
pub fn loss_block(alpha: f64, theta: f64) -> Matrix2 {
    let s = (1.0 - alpha * alpha).max(0.0).sqrt();
    Matrix2::new(
        cis(-theta) * alpha,
        cis(theta) * s,
        -cis(-theta) * s,
        cis(theta) * alpha,
    )
}

/// In-ring backscatter sub-matrix on (forward, backward).
pub fn back_ring_block(xi: f64, zeta: f64) -> Matrix2 {
    let s = (1.0 - xi * xi).max(0.0).sqrt();
    Matrix2::new(
        Complex::new(xi, 0.0),
        cis(zeta) * s,
        -cis(-zeta) * s,
        Complex::new(xi, 0.0),
    )
}

/// In-coupler backscatter sub-matrix on (forward, backward).
pub fn back_coupler_block(xi: f64, zeta: f64) -> Matrix2 {
    let s = (1.0 - xi * xi).max(0.0).sqrt();
    Matrix2::new(
        cis(-zeta / 2.0) * xi,
        cis(zeta / 2.0) * s,
        -cis(-zeta / 2.0) * s,
        cis(zeta / 2.0) * xi,
    )
}

/// Photon-propagation variant of [`back_coupler_block`].
pub fn back_photon_block(xi: f64, zeta: f64) -> Matrix2 {
    let s = (1.0 - xi * xi).max(0.0).sqrt();
    Matrix2::new(
        cis(-zeta / 2.0) * xi,
        Complex::new(0.0, 0.0),
        -cis(-zeta / 2.0) * s,
        Complex::new(1.0, 0.0),
    )
}

/// Bus-ring coupler sub-matrix on (bus, ring).
pub fn coupler_block(t: f64, phi: f64) -> Matrix2 {
    let s = (1.0 - t * t).max(0.0).sqrt();
    Matrix2::new(
        cis(-2.0 * phi) * t,
        Complex::new(s, 0.0),
        -cis(-2.0 * phi) * s,
        Complex::new(t, 0.0),
    )
}

/// Six-mode embedding of one process.
pub fn build_process(kind: ProcessKind, params: &RingParams, theta: f64) -> Result<Matrix6> {
    params.validate()?;
    check_finite("theta", theta)?;
    use ModeIndex::*;
    let mut u = Matrix6::identity();
    match kind {
        ProcessKind::Coupler => {
            let t = coupler_block(params.t, params.phi);
            embed_pair(&mut u, BusFwd, RingFwd, &t);
            embed_pair(&mut u, BusBwd, RingBwd, &t);
        }
        ProcessKind::Loss => {
            let a = loss_block(params.alpha, theta);
            embed_pair(&mut u, RingFwd, LossFwd, &a);
            embed_pair(&mut u, RingBwd, LossBwd, &a);
        }
        ProcessKind::BackRing => {
            embed_pair(&mut u, RingFwd, RingBwd, &back_ring_block(params.xi, params.zeta));
        }
        ProcessKind::BackCoupler | ProcessKind::BackPhoton => {
            let b = if kind == ProcessKind::BackCoupler {
                back_coupler_block(params.xi, params.zeta)
            } else {
                back_photon_block(params.xi, params.zeta)
            };
            embed_pair(&mut u, RingFwd, RingBwd, &b);
            embed_pair(&mut u, BusFwd, BusBwd, &b);
            embed_pair(&mut u, LossFwd, LossBwd, &b);
        }
    }
    Ok(u)
}

/// Principal square root of a process, taken block by block on the 2×2
/// sub-matrices it embeds. Agrees with the 6×6 principal root.
pub fn half_process(kind: ProcessKind, params: &RingParams, theta: f64) -> Result<Matrix6> {
    params.validate()?;
    use ModeIndex::*;
    let mut u = Matrix6::identity();
    match kind {
        ProcessKind::Loss => {
            let a = loss_block(params.alpha, theta).principal_sqrt()?;
            embed_pair(&mut u, RingFwd, LossFwd, &a);
            embed_pair(&mut u, RingBwd, LossBwd, &a);
        }
        ProcessKind::BackRing => {
            let b = back_ring_block(params.xi, params.zeta).principal_sqrt()?;
            embed_pair(&mut u, RingFwd, RingBwd, &b);
        }
        ProcessKind::Coupler | ProcessKind::BackCoupler => {
            return build_process(kind, params, theta)?.principal_sqrt();
        }
        ProcessKind::BackPhoton => {
            return Err(Error::InvalidParam {
                name: "kind",
                detail: "the photon backscatter process is not unitary".into(),
            })
        }
    }
    Ok(u)
}

/// Total interaction at a given round-trip phase.
///
/// With `photon` set, in-coupler backscatter uses [`ProcessKind::BackPhoton`]
/// and the result is no longer unitary.
pub fn compose_at_phase(
    params: &RingParams,
    ordering: Ordering,
    theta: f64,
    photon: bool,
) -> Result<Matrix6> {
    let cpl = build_process(ProcessKind::Coupler, params, theta)?;
    let back_kind = match (params.placement, photon) {
        (Placement::InRing, _) => ProcessKind::BackRing,
        (Placement::InCoupler, false) => ProcessKind::BackCoupler,
        (Placement::InCoupler, true) => ProcessKind::BackPhoton,
    };
    match ordering {
        Ordering::EndOfRing => {
            let loss = build_process(ProcessKind::Loss, params, theta)?;
            let back = build_process(back_kind, params, theta)?;
            Ok(cpl * back * loss)
        }
        Ordering::MidRing => {
            let half_loss = half_process(ProcessKind::Loss, params, theta)?;
            match params.placement {
                Placement::InRing => {
                    let half_back = half_process(ProcessKind::BackRing, params, theta)?;
                    Ok(half_loss * half_back * cpl * half_back * half_loss)
                }
                Placement::InCoupler => {
                    let back = build_process(back_kind, params, theta)?;
                    Ok(half_loss * cpl * back * half_loss)
                }
            }
        }
    }
}

/// Total unitary interaction at wavelength `lambda`.
pub fn compose_total(params: &RingParams, ordering: Ordering, lambda: f64) -> Result<Matrix6> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParam {
            name: "lambda",
            detail: format!("{lambda} must be positive"),
        });
    }
    compose_at_phase(params, ordering, round_trip_phase(lambda, params), false)
}
