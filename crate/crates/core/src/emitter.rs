//! PanA side: least-squares estimate of the direct channel from the P1 pilot
//! blocks and the scaled nullspace projector built from it.

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, svd_sorted, ComplexMatrix};

/// Below this gap between the K-th and (K+1)-th singular values the
/// suppressed subspace is not well defined.
pub const SUBSPACE_GAP_TOL: f64 = 1e-10;

/// Scaled orthogonal projector `P_s = Lambda (I - V_K V_K^H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    /// M x M, rank M - K.
    pub p: ComplexMatrix,
    /// M x (M - K), orthonormal basis of range(P).
    pub q: ComplexMatrix,
    /// `sqrt(M / (M - K))`
    pub lambda: f64,
    pub p_s: ComplexMatrix,
    pub k: usize,
    /// M x K, the suppressed directions.
    pub v_k: ComplexMatrix,
    /// Set when sigma_K and sigma_{K+1} are too close to separate.
    pub subspace_ambiguous: bool,
}

impl Projector {
    /// No projection (K = 0).
    pub fn identity(m: usize) -> Self {
        let id = ComplexMatrix::identity(m, m);
        Projector {
            p: id.clone(),
            q: id.clone(),
            lambda: 1.0,
            p_s: id,
            k: 0,
            v_k: ComplexMatrix::zeros(m, 0),
            subspace_ambiguous: false,
        }
    }

    pub fn m(&self) -> usize {
        self.p.nrows()
    }

    /// Projector that removes the span of the orthonormal columns `v_k`.
    pub fn from_orthonormal(v_k: ComplexMatrix) -> Result<Self> {
        let (m, k) = v_k.shape();
        if k >= m {
            return Err(Error::InvalidK { k, m });
        }
        if k == 0 {
            return Ok(Projector::identity(m));
        }
        let p = ComplexMatrix::identity(m, m) - &v_k * v_k.adjoint();
        // Completing V_K to a unitary basis: the trailing M - K columns of the
        // QR factor of [V_K | I] span the orthogonal complement.
        let mut ext = ComplexMatrix::zeros(m, k + m);
        ext.columns_mut(0, k).copy_from(&v_k);
        ext.columns_mut(k, m).fill_with_identity();
        let full_q = ext.qr().q();
        let q = full_q.columns(k, m - k).into_owned();
        let lambda = (m as f64 / (m - k) as f64).sqrt();
        let p_s = p.scale(lambda);
        Ok(Projector {
            p,
            q,
            lambda,
            p_s,
            k,
            v_k,
            subspace_ambiguous: false,
        })
    }
}

/// `G_BA_hat = (1/J_p) sum_j Y^p_j Phi^H (Phi Phi^H)^{-1}` (M x N). The
/// reader-side estimate of `G_AB` is its transpose.
pub fn ls_estimate_direct(
    yp: &[ComplexMatrix],
    phi: &ComplexMatrix,
    j_p: usize,
) -> Result<ComplexMatrix> {
    if j_p == 0 || yp.len() != j_p {
        return Err(Error::InvalidInput(format!(
            "expected {j_p} pilot blocks, got {}",
            yp.len()
        )));
    }
    let m = yp[0].nrows();
    let mut acc = ComplexMatrix::zeros(m, phi.ncols());
    for y in yp {
        if y.shape() != (m, phi.ncols()) {
            return Err(Error::dims(
                "ls_estimate_direct Y^p",
                (m, phi.ncols()),
                y.shape(),
            ));
        }
        acc += y;
    }
    acc.unscale_mut(j_p as f64);
    let gram = phi * phi.adjoint();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("pilot Gram matrix is not positive definite".into()))?;
    // X = S A^{-1} with A Hermitian  <=>  X^H = A^{-1} S^H.
    let s_h = (acc * phi.adjoint()).adjoint();
    Ok(chol.solve(&s_h).adjoint())
}

/// Scaled projector onto the orthogonal complement of the K dominant right
/// singular vectors of `g_hat_ab` (N x M).
pub fn build_projector(g_hat_ab: &ComplexMatrix, k: usize) -> Result<Projector> {
    ensure_finite(g_hat_ab, "build_projector")?;
    let (n, m) = g_hat_ab.shape();
    if k >= m {
        return Err(Error::InvalidK { k, m });
    }
    if k == 0 {
        return Ok(Projector::identity(m));
    }
    if k > n {
        return Err(Error::InvalidInput(format!(
            "K = {k} exceeds the {n} available right singular directions"
        )));
    }
    let (_, s, v) = svd_sorted(g_hat_ab)?;
    let next = s.get(k).copied().unwrap_or(0.0);
    let ambiguous = s[k - 1] - next < SUBSPACE_GAP_TOL;
    let mut pr = Projector::from_orthonormal(v.columns(0, k).into_owned())?;
    pr.subspace_ambiguous = ambiguous;
    Ok(pr)
}
