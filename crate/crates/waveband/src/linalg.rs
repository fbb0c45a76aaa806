//! Dense complex linear algebra helpers shared by the pipeline stages.
//!
//! All decompositions go through nalgebra. Singular vectors are phase-fixed
//! (first component of significant modulus made real positive) so that
//! repeated runs on identical input produce bit-identical factors.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

use crate::error::{Error, Result};

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Result of a phase-fixed singular value decomposition `A = U diag(s) V^H`.
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

/// SVD with a deterministic phase convention on the singular vectors.
pub fn svd(a: &CMatrix) -> Result<Svd> {
    let svd = a
        .clone()
        .try_svd(true, true, 1.0e-13, 10_000)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let mut u = svd.u.unwrap();
    let mut v_t = svd.v_t.unwrap();
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();

    // Phase convention: make the largest-modulus component of each left
    // singular vector real positive, rotating the matching row of V^H.
    for j in 0..u.ncols() {
        let col = u.column(j);
        let mut best = 0usize;
        let mut best_norm = 0.0f64;
        for (i, z) in col.iter().enumerate() {
            if z.norm() > best_norm {
                best_norm = z.norm();
                best = i;
            }
        }
        if best_norm > 0.0 {
            let phase = col[best] / best_norm;
            let conj = phase.conj();
            for z in u.column_mut(j).iter_mut() {
                *z *= conj;
            }
            if j < v_t.nrows() {
                for z in v_t.row_mut(j).iter_mut() {
                    *z *= phase;
                }
            }
        }
    }
    Ok(Svd {
        u,
        singular_values: s,
        v: v_t.adjoint(),
    })
}

/// Hermitian eigendecomposition `A = Q diag(l) Q^H` with real eigenvalues,
/// sorted ascending.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("hermitian_eigen needs a square matrix".into()));
    }
    let se = a
        .clone()
        .try_symmetric_eigen(1.0e-13, 10_000)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let n = a.nrows();
    let mut q = CMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (out, &i) in idx.iter().enumerate() {
        q.set_column(out, &se.eigenvectors.column(i));
        vals.push(se.eigenvalues[i]);
    }
    Ok((q, vals))
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &CMatrix) -> f64 {
    match svd(a) {
        Ok(s) => s.singular_values.iter().cloned().fold(0.0, f64::max),
        Err(_) => a.norm(),
    }
}

/// Smallest singular value.
pub fn sigma_min(a: &CMatrix) -> f64 {
    match svd(a) {
        Ok(s) => s
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min),
        Err(_) => 0.0,
    }
}

/// Hermitian part `(A + A^H)/2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * cr(0.5)
}

/// Deviation from Hermitian symmetry in Frobenius norm.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    (a - a.adjoint()).norm() * 0.5
}

/// Positive square root of a Hermitian PSD matrix; eigenvalues below zero
/// are clipped. Fails when a significantly negative eigenvalue shows up.
pub fn hermitian_sqrt(a: &CMatrix, neg_tol_rel: f64) -> Result<CMatrix> {
    let (q, vals) = hermitian_eigen(a)?;
    let scale = vals.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(min) = vals.first() {
        if *min < -neg_tol_rel * scale.max(1.0e-300) {
            return Err(Error::NotPsd(format!(
                "eigenvalue {min:.3e} below -{neg_tol_rel:.1e} * {scale:.3e}"
            )));
        }
    }
    let n = a.nrows();
    let mut d = CMatrix::zeros(n, n);
    for (i, v) in vals.iter().enumerate() {
        d[(i, i)] = cr(v.max(0.0).sqrt());
    }
    Ok(&q * d * q.adjoint())
}

/// Unitary polar factor: `A = Phi |A|` with `Phi = U V^H`, `|A| = V S V^H`.
pub fn polar(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let Svd {
        u,
        singular_values,
        v,
    } = svd(a)?;
    let smax = singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin < 1.0e-13 * smax {
        return Err(Error::Polar(format!(
            "rank-deficient input: sigma_min/sigma_max = {:.3e}",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let phi = &u * v.adjoint();
    let n = v.nrows();
    let mut s = CMatrix::zeros(n, n);
    for (i, sv) in singular_values.iter().enumerate() {
        s[(i, i)] = cr(*sv);
    }
    let abs = &v * s * v.adjoint();
    Ok((phi, abs))
}

/// Solve `A x = b` for a square invertible matrix via LU with partial pivoting.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Degeneracy("LU solve failed: singular matrix".into()))
}

/// Matrix inverse via LU.
pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Degeneracy("matrix is not invertible".into()))
}

/// Inverse of a small Hermitian positive definite matrix.
pub fn hpd_inverse(a: &CMatrix) -> Result<CMatrix> {
    a.clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::NotPsd("Cholesky failed: matrix not positive definite".into()))
}

/// Condition number from singular values.
pub fn condition_number(a: &CMatrix) -> f64 {
    match svd(a) {
        Ok(s) => {
            let max = s.singular_values.iter().cloned().fold(0.0, f64::max);
            let min = s
                .singular_values
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min > 0.0 {
                max / min
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Hermitian square root and its inverse for a positive definite matrix.
pub fn hpd_sqrt_and_inv_sqrt(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let (q, vals) = hermitian_eigen(a)?;
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPsd("matrix is not positive definite".into()));
    }
    let n = a.nrows();
    let mut d = CMatrix::zeros(n, n);
    let mut di = CMatrix::zeros(n, n);
    for (i, v) in vals.iter().enumerate() {
        d[(i, i)] = cr(v.sqrt());
        di[(i, i)] = cr(1.0 / v.sqrt());
    }
    Ok((&q * d * q.adjoint(), &q * di * q.adjoint()))
}
