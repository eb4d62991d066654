//! Dense linear-algebra routines shared by the estimators, POD reduction
//! and the MPC: regularized symmetric solves, Moore-Penrose pseudoinverse
//! and energy-thresholded truncated SVD.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Default relative singular-value cutoff for [`pinv`].
pub const DEFAULT_PINV_RTOL: f64 = 1e-12;

/// Jitter levels (relative to the mean diagonal) tried when the SPD
/// factorization of a nearly singular Gram matrix fails.
const JITTER_LEVELS: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Solve `(K + lambda I) X = B` for symmetric PSD `K` via Cholesky,
/// escalating diagonal jitter before giving up.
pub fn ridge_solve(k: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let chol = ridge_factorize(k, lambda)?;
    Ok(chol.solve(b))
}

/// Cholesky factorization of `K + lambda I` with jitter escalation.
///
/// The factor is reusable for repeated right-hand sides (multi-observable
/// readouts reuse the fit-time factorization through this).
pub fn ridge_factorize(k: &DMatrix<f64>, lambda: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::input("ridge_solve requires a square matrix".to_string()));
    }
    if !(lambda > 0.0) {
        return Err(Error::input(format!(
            "ridge regularization must be positive, got {lambda}"
        )));
    }
    check_symmetric(k, 1e-8)?;
    let mean_diag = k.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut attempted = Vec::new();
    for jitter_rel in std::iter::once(0.0).chain(JITTER_LEVELS.iter().copied()) {
        let shift = lambda + jitter_rel * mean_diag;
        let mut reg = k.clone();
        for i in 0..n {
            reg[(i, i)] += shift;
        }
        if let Some(chol) = reg.cholesky() {
            return Ok(chol);
        }
        attempted.push(jitter_rel);
    }
    Err(Error::numerical(format!(
        "SPD factorization failed after jitter levels {attempted:?} (relative to mean diagonal {mean_diag:.3e})"
    )))
}

fn check_symmetric(k: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    let scale = k.amax().max(f64::MIN_POSITIVE);
    for i in 0..k.nrows() {
        for j in (i + 1)..k.ncols() {
            if (k[(i, j)] - k[(j, i)]).abs() > rel_tol * scale {
                return Err(Error::input(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    k[(i, j)],
                    k[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Moore-Penrose pseudoinverse, zeroing singular values below `rtol * sigma_max`.
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    if rtol < 0.0 {
        return Err(Error::input(format!("pinv rtol must be >= 0, got {rtol}")));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let smax = svd.singular_values.max();
    let cutoff = rtol * smax;
    let inv_s = DVector::from_fn(svd.singular_values.len(), |i, _| {
        let s = svd.singular_values[i];
        if s > cutoff && s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    });
    // pinv = V * S^+ * U^T
    let mut scaled_ut = u.transpose();
    for (i, row) in inv_s.iter().enumerate() {
        scaled_ut.row_mut(i).scale_mut(*row);
    }
    Ok(vt.transpose() * scaled_ut)
}

/// Energy-truncated decomposition of a symmetric PSD matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// Orthonormal modes, one column per retained direction.
    pub basis: DMatrix<f64>,
    /// Retained singular values, non-increasing.
    pub singular_values: DVector<f64>,
    /// Fraction of squared-singular-value energy captured, in (0, 1].
    pub energy_fraction: f64,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

/// Truncated SVD of a symmetric PSD matrix keeping the smallest `r` whose
/// cumulative squared-singular-value energy reaches `tau` percent.
///
/// Ties at the truncation boundary are kept together (r rounds up), so the
/// retained subspace is basis-independent.
pub fn truncated_svd(k: &DMatrix<f64>, tau: f64) -> Result<TruncatedSvd> {
    if !(tau > 0.0 && tau <= 100.0) {
        return Err(Error::input(format!(
            "energy threshold must lie in (0, 100], got {tau}"
        )));
    }
    check_symmetric(k, 1e-8)?;
    let eig = k.clone().symmetric_eigen();
    let n = k.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let largest = eig.eigenvalues[order[0]].max(0.0);
    if eig.eigenvalues[order[n - 1]] < -1e-8 * largest.max(1.0) {
        return Err(Error::numerical(format!(
            "matrix is not PSD: smallest eigenvalue {} vs largest {largest}",
            eig.eigenvalues[order[n - 1]]
        )));
    }
    let sigma: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::numerical("zero matrix has no energy to truncate".to_string()));
    }
    let mut r = n;
    let mut cum = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        cum += s * s;
        if cum / total * 100.0 >= tau {
            r = i + 1;
            break;
        }
    }
    // keep singular values tied with the boundary one
    while r < n && sigma[r] == sigma[r - 1] {
        r += 1;
    }
    let captured: f64 = sigma[..r].iter().map(|s| s * s).sum();
    let basis = DMatrix::from_fn(n, r, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(TruncatedSvd {
        basis,
        singular_values: DVector::from_vec(sigma[..r].to_vec()),
        energy_fraction: captured / total,
    })
}
