//! Fixed-size complex matrix helpers for the six-mode scattering model.
//!
//! Modes are ordered `(R→, R←, B→, B←, L→, L←)`. Every 2×2 block used by the
//! model is a (forward, backward) pair of one of the three mode families.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Complex = Complex64;
pub type Matrix2 = SMatrix<Complex64, 2, 2>;
pub type Matrix6 = SMatrix<Complex64, 6, 6>;
pub type Vector2 = SVector<Complex64, 2>;
pub type Vector6 = SVector<Complex64, 6>;

/// Maximum entrywise deviation of `M†M` from the identity tolerated for a
/// matrix flagged as unitary.
pub const UNITARY_TOL: f64 = 1e-12;
/// Residual bound guaranteed by [`solve_2x2`], relative to `‖b‖`.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-12;
/// Round-trip accuracy of [`UnitarySqrt::principal_sqrt`].
pub const SQRT_ROUNDTRIP_TOL: f64 = 1e-10;
/// Precondition tolerance on unitarity for the square root.
pub const SQRT_UNITARY_PRECONDITION: f64 = 1e-10;
/// Eigenvalues closer than this to −1 make the principal branch ambiguous.
pub const BRANCH_CUT_TOL: f64 = 1e-9;
/// Default condition-number cap for [`solve_2x2`].
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Position of each mode in the six-component field vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModeIndex {
    RingFwd = 0,
    RingBwd = 1,
    BusFwd = 2,
    BusBwd = 3,
    LossFwd = 4,
    LossBwd = 5,
}

impl ModeIndex {
    pub const ALL: [ModeIndex; 6] = [
        ModeIndex::RingFwd,
        ModeIndex::RingBwd,
        ModeIndex::BusFwd,
        ModeIndex::BusBwd,
        ModeIndex::LossFwd,
        ModeIndex::LossBwd,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// A forward/backward mode family: ring, bus or loss channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModePair {
    Ring,
    Bus,
    Loss,
}

impl ModePair {
    pub const ALL: [ModePair; 3] = [ModePair::Ring, ModePair::Bus, ModePair::Loss];

    pub fn fwd(self) -> ModeIndex {
        match self {
            ModePair::Ring => ModeIndex::RingFwd,
            ModePair::Bus => ModeIndex::BusFwd,
            ModePair::Loss => ModeIndex::LossFwd,
        }
    }

    pub fn bwd(self) -> ModeIndex {
        match self {
            ModePair::Ring => ModeIndex::RingBwd,
            ModePair::Bus => ModeIndex::BusBwd,
            ModePair::Loss => ModeIndex::LossBwd,
        }
    }

    fn offset(self) -> usize {
        self.fwd().index()
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

/// `e^{iφ}`
#[inline]
pub fn cis(phase: f64) -> Complex {
    Complex::from_polar(1.0, phase)
}

/// The 2×2 sub-matrix `U_{row,col}`, forward components first.
pub fn block_extract(u: &Matrix6, row: ModePair, col: ModePair) -> Matrix2 {
    u.fixed_view::<2, 2>(row.offset(), col.offset()).into_owned()
}

/// Overwrite the `(row, col)` block of `u` with `block`.
pub fn block_insert(u: &mut Matrix6, row: ModePair, col: ModePair, block: &Matrix2) {
    u.fixed_view_mut::<2, 2>(row.offset(), col.offset())
        .copy_from(block);
}

/// Place a 2×2 sub-matrix acting on modes `(a, b)` into `u`, i.e. set
/// `u[a,a], u[a,b], u[b,a], u[b,b]`.
pub fn embed_pair(u: &mut Matrix6, a: ModeIndex, b: ModeIndex, m: &Matrix2) {
    let (a, b) = (a.index(), b.index());
    u[(a, a)] = m[(0, 0)];
    u[(a, b)] = m[(0, 1)];
    u[(b, a)] = m[(1, 0)];
    u[(b, b)] = m[(1, 1)];
}

/// `max |(M†M − I)_{ij}|`.
pub fn unitarity_deviation<const N: usize>(m: &SMatrix<Complex64, N, N>) -> f64 {
    let g = m.adjoint() * m;
    let mut worst = 0.0_f64;
    for i in 0..N {
        for j in 0..N {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Largest entry modulus of `a − b`.
pub fn max_abs_diff<const R: usize, const C: usize>(
    a: &SMatrix<Complex64, R, C>,
    b: &SMatrix<Complex64, R, C>,
) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Elementwise squared modulus, `|M_ij|²`, as a real-valued complex matrix.
/// This is the power-transfer matrix of an amplitude matrix.
pub fn modulus_squared<const R: usize, const C: usize>(
    m: &SMatrix<Complex64, R, C>,
) -> SMatrix<Complex64, R, C> {
    m.map(|z| c(z.norm_sqr(), 0.0))
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
///
/// Fails with [`Error::SingularSystem`] when `|det A| < 1e-300` or when the
/// Frobenius condition number exceeds `cond_cap`.
pub fn solve_2x2_capped(a: &Matrix2, b: &Vector2, cond_cap: f64) -> Result<Vector2> {
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    if !(det.norm() >= 1e-300) {
        return Err(Error::SingularSystem(format!("|det| = {:.3e}", det.norm())));
    }
    let cond = a.norm() * a.norm() / det.norm();
    if !cond.is_finite() || cond > cond_cap {
        return Err(Error::SingularSystem(format!(
            "condition number {cond:.3e} exceeds cap {cond_cap:.1e}"
        )));
    }

    // pivot on the larger first-column entry
    let (p, q) = if a[(0, 0)].norm() >= a[(1, 0)].norm() {
        (0, 1)
    } else {
        (1, 0)
    };
    let factor = a[(q, 0)] / a[(p, 0)];
    let u11 = a[(q, 1)] - factor * a[(p, 1)];
    let y1 = b[q] - factor * b[p];
    let x1 = y1 / u11;
    let x0 = (b[p] - a[(p, 1)] * x1) / a[(p, 0)];
    Ok(Vector2::new(x0, x1))
}

/// [`solve_2x2_capped`] with the default condition cap of `1e12`.
pub fn solve_2x2(a: &Matrix2, b: &Vector2) -> Result<Vector2> {
    solve_2x2_capped(a, b, DEFAULT_CONDITION_CAP)
}

/// `A⁻¹ B` for a 2×2 right-hand side, column by column.
pub fn solve_2x2_matrix(a: &Matrix2, b: &Matrix2) -> Result<Matrix2> {
    let c0 = solve_2x2(a, &b.column(0).into_owned())?;
    let c1 = solve_2x2(a, &b.column(1).into_owned())?;
    Ok(Matrix2::from_columns(&[c0, c1]))
}

fn check_branch(eigenvalue: Complex) -> Result<()> {
    if (eigenvalue + 1.0).norm() < BRANCH_CUT_TOL {
        return Err(Error::BranchAmbiguity(format!(
            "{:.6}{:+.6}i",
            eigenvalue.re, eigenvalue.im
        )));
    }
    Ok(())
}

/// Principal square root of a unitary matrix: eigenvalue arguments are
/// halved from `(−π, π]` into `(−π/2, π/2]`.
pub trait UnitarySqrt: Sized {
    fn principal_sqrt(&self) -> Result<Self>;
}

impl UnitarySqrt for Matrix2 {
    fn principal_sqrt(&self) -> Result<Self> {
        let dev = unitarity_deviation(self);
        if dev > SQRT_UNITARY_PRECONDITION {
            return Err(Error::NotUnitary(dev));
        }
        let half_trace = (self[(0, 0)] + self[(1, 1)]) * 0.5;
        let det = self.determinant();
        let disc = (half_trace * half_trace - det).sqrt();
        let (l1, l2) = (half_trace + disc, half_trace - disc);
        check_branch(l1)?;
        check_branch(l2)?;
        let (s1, s2) = (l1.sqrt(), l2.sqrt());
        // Cayley-Hamilton: S² − (s1+s2) S + s1 s2 I = 0 with S² = M.
        Ok((self + Matrix2::identity() * (s1 * s2)) / (s1 + s2))
    }
}

impl UnitarySqrt for Matrix6 {
    fn principal_sqrt(&self) -> Result<Self> {
        let dev = unitarity_deviation(self);
        if dev > SQRT_UNITARY_PRECONDITION {
            return Err(Error::NotUnitary(dev));
        }
        // A unitary matrix is normal, so its Schur form is diagonal.
        let (q, t) = nalgebra::Schur::new(*self).unpack();
        let mut roots = Matrix6::zeros();
        for i in 0..6 {
            let lambda = t[(i, i)];
            check_branch(lambda)?;
            roots[(i, i)] = lambda.sqrt();
        }
        Ok(q * roots * q.adjoint())
    }
}
