//! Complex linear algebra used throughout the crate.
//!
//! Everything here is a pure function of its inputs. The decomposition routes
//! (thin SVD, best rank-one fit) normalise the phase of every right singular
//! vector so that its largest-magnitude entry is real and positive; this makes
//! estimator outputs reproducible bit-for-bit for a given backend.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, the carrier for channels, signals and estimates.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Default relative tolerance used to decide the numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Entrywise tolerance used when validating projector inputs.
pub const PROJECTOR_TOL: f64 = 1e-10;

/// Squared Frobenius norm.
pub fn frob2(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest entry modulus, zero for an empty matrix.
pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn ensure_finite(a: &ComplexMatrix, context: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput(format!("{context}: empty matrix")));
    }
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{context}: non-finite entry")))
    }
}

/// Thin singular value decomposition truncated to numerical rank.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// n x r, orthonormal columns.
    pub u: ComplexMatrix,
    /// Non-increasing, all strictly above the rank threshold.
    pub singular_values: Vec<f64>,
    /// m x r, orthonormal columns.
    pub v: ComplexMatrix,
    pub rank: usize,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.adjoint()
    }
}

/// Full thin decomposition with min(n, m) terms, sorted and phase-normalised.
pub(crate) fn svd_sorted(a: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<f64>, ComplexMatrix)> {
    let fa = faer::Mat::<faer::c64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let svd = fa
        .thin_svd()
        .map_err(|e| Error::InvalidInput(format!("svd did not converge: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let k = order.len();
    let mut us = ComplexMatrix::zeros(a.nrows(), k);
    let mut vs = ComplexMatrix::zeros(a.ncols(), k);
    let mut sv = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut pivot = Complex64::new(0.0, 0.0);
        for i in 0..a.ncols() {
            if v[(i, src)].norm() > pivot.norm() {
                pivot = v[(i, src)];
            }
        }
        let phase = if pivot.norm() > 0.0 {
            (pivot / pivot.norm()).conj()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..a.ncols() {
            vs[(i, dst)] = v[(i, src)] * phase;
        }
        for i in 0..a.nrows() {
            us[(i, dst)] = u[(i, src)] * phase;
        }
        sv.push(s[src]);
    }
    Ok((us, sv, vs))
}

/// Thin SVD keeping the singular values above `rank_tol` times the largest.
pub fn svd_thin(a: &ComplexMatrix, rank_tol: f64) -> Result<ThinSvd> {
    ensure_finite(a, "svd_thin")?;
    if !(rank_tol >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "svd_thin: rank_tol must be >= 0, got {rank_tol}"
        )));
    }
    let (u, s, v) = svd_sorted(a)?;
    let top = s.first().copied().unwrap_or(0.0);
    let rank = if top > 0.0 {
        s.iter().take_while(|&&x| x > rank_tol * top).count()
    } else {
        0
    };
    Ok(ThinSvd {
        u: u.columns(0, rank).into_owned(),
        singular_values: s[..rank].to_vec(),
        v: v.columns(0, rank).into_owned(),
        rank,
    })
}

/// Dominant term `u * delta * v^H` of a singular value decomposition.
#[derive(Debug, Clone)]
pub struct RankOne {
    /// Unit-norm column.
    pub u: ComplexMatrix,
    pub delta: f64,
    /// Unit-norm column.
    pub v: ComplexMatrix,
    /// Set when the input was the zero matrix; `u` and `v` are then `e1`.
    pub degenerate: bool,
}

impl RankOne {
    pub fn to_matrix(&self) -> ComplexMatrix {
        (&self.u * self.v.adjoint()).scale(self.delta)
    }
}

/// Best rank-one approximation in the Frobenius norm (Eckart-Young).
pub fn best_rank_one(a: &ComplexMatrix) -> Result<RankOne> {
    ensure_finite(a, "best_rank_one")?;
    let (u, s, v) = svd_sorted(a)?;
    let delta = s.first().copied().unwrap_or(0.0);
    if delta == 0.0 {
        let mut e_u = ComplexMatrix::zeros(a.nrows(), 1);
        let mut e_v = ComplexMatrix::zeros(a.ncols(), 1);
        e_u[(0, 0)] = Complex64::new(1.0, 0.0);
        e_v[(0, 0)] = Complex64::new(1.0, 0.0);
        return Ok(RankOne {
            u: e_u,
            delta: 0.0,
            v: e_v,
            degenerate: true,
        });
    }
    Ok(RankOne {
        u: u.columns(0, 1).into_owned(),
        delta,
        v: v.columns(0, 1).into_owned(),
        degenerate: false,
    })
}

/// Checks that `p` is square, Hermitian and idempotent within `tol` entrywise.
pub fn check_projector(p: &ComplexMatrix, tol: f64) -> Result<()> {
    ensure_finite(p, "projector")?;
    if !p.is_square() {
        return Err(Error::InvalidInput(format!(
            "projector must be square, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    let herm = max_abs(&(p - p.adjoint()));
    if herm > tol {
        return Err(Error::InvalidInput(format!(
            "projector is not Hermitian (deviation {herm:.3e})"
        )));
    }
    let idem = max_abs(&(p * p - p));
    if idem > tol {
        return Err(Error::InvalidInput(format!(
            "projector is not idempotent (deviation {idem:.3e})"
        )));
    }
    Ok(())
}

/// Returns `rhs * (a I + b P)^-1` for an orthogonal projector `P`.
///
/// Uses `(aI + bP)^-1 = I/a - b/(a(a+b)) P`, which holds because `P^2 = P`.
pub fn solve_identity_plus_projector(
    a: f64,
    b: f64,
    p: &ComplexMatrix,
    rhs: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidInput(format!("scale a must be > 0, got {a}")));
    }
    if !(b >= 0.0) || !b.is_finite() {
        return Err(Error::InvalidInput(format!(
            "scale b must be >= 0, got {b}"
        )));
    }
    check_projector(p, PROJECTOR_TOL)?;
    if rhs.ncols() != p.nrows() {
        return Err(Error::dims(
            "solve_identity_plus_projector",
            (rhs.nrows(), p.nrows()),
            rhs.shape(),
        ));
    }
    let c = b / (a * (a + b));
    Ok(rhs.scale(1.0 / a) - (rhs * p).scale(c))
}
