//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Relative tolerance for positive semi-definiteness checks.
pub const PSD_REL_TOL: f64 = 1e-10;

/// Relative eigenvalue floor below which an innovation covariance is jittered.
pub const JITTER_REL: f64 = 1e-12;

/// Replaces `m` by `(m + m^T) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s).eigenvalues.min()
}

/// PSD check with eigenvalues allowed down to `-rel_tol * max(|trace|, ||m||_F)`.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.trace().abs().max(m.norm());
    min_eigenvalue(m) >= -rel_tol * scale
}

/// Symmetric square root `S` with `S S^T = m` for a PSD matrix; negative
/// eigenvalues from rounding are clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Solves `s x = rhs` for symmetric `s` that should be positive definite.
///
/// When the smallest eigenvalue of `s` is below `1e-12 * trace(s)` the
/// system is regularized with `1e-12 * trace(s) * I` (absolute floor `1e-12`
/// for a zero matrix) before the Cholesky solve.
pub fn solve_spd_jittered(s: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut sym = s.clone();
    symmetrize(&mut sym);
    let trace = sym.trace();
    let floor = JITTER_REL * trace.abs();
    if sym.nrows() > 0 && min_eigenvalue(&sym) <= floor {
        let jitter = floor.max(JITTER_REL);
        for i in 0..sym.nrows() {
            sym[(i, i)] += jitter;
        }
    }
    cholesky_solve(&sym, rhs)
}

/// Cholesky solve of `s x = rhs` without regularization.
pub fn cholesky_solve(s: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    let x = chol.solve(rhs);
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Numerical("non-finite solution of linear system".into()))
    }
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Largest absolute elementwise difference between two equally sized matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Block-diagonal matrix `[a 0; 0 b]`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub fn outer(v: &DVector<f64>) -> DMatrix<f64> {
    v * v.transpose()
}

pub fn unit_vector(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}
