//! Triangular factorization of the connecting operator, two ways: the
//! formula route `V = Phi_{D*_{sqrt C}} sqrt C` and an exact nest-respecting
//! Cholesky; plus the model control operator and the orthogonalizer
//! consistency check.

use crate::core::{DiscreteOperator, Grid, NestPartition, Role};
use crate::error::{Error, Result};
use crate::linalg::{cr, CMatrix};
use crate::nest_diagonal::{diagonal_limit, polar_unitary, PFamilyMode};

/// Ridge added to `C` when it is numerically singular, relative to
/// `sigma_max`; recorded in the factorization output.
pub const RIDGE_REL: f64 = 1.0e-12;

/// Hermitian PSD square root of `C` (role C enforced on input).
pub fn operator_sqrt(c: &DiscreteOperator) -> Result<DiscreteOperator> {
    if c.role != Role::C {
        return Err(Error::Config("operator_sqrt expects the connecting operator".into()));
    }
    let r = crate::linalg::hermitian_sqrt(&c.matrix, 1.0e-6)?;
    DiscreteOperator::new(r, c.h, c.n, Role::Other)
}

/// Diagonal-formula route: `V = Phi * sqrt C` with `Phi` the unitary polar
/// factor of `D*_{sqrt C}`, the diagonal of the square root taken along the
/// delayed-control nest.
pub fn factorize_formula(
    c: &DiscreteOperator,
    grid: &Grid,
    schedule: &[NestPartition],
    rank_tol: f64,
) -> Result<DiscreteOperator> {
    let root = operator_sqrt(c)?;
    let (d, report) = diagonal_limit(
        &root,
        grid,
        schedule,
        PFamilyMode::SpanFromA { rank_tol },
        None,
        1.0e-10,
    )?;
    let d = d.ok_or_else(|| {
        Error::Divergence(format!(
            "diagonal of sqrt C did not converge over {} levels",
            report.levels.len()
        ))
    })?;
    let (phi, _) = polar_unitary(&d)?;
    DiscreteOperator::new(&phi.matrix * &root.matrix, c.h, c.n, Role::V)
}

/// Exact finite-dimensional route: conjugate by the reversal so the
/// delayed-control nest becomes leading-coordinate subspaces, Cholesky
/// there, map back. The factor is lower triangular in the original order,
/// so `X_s V X_s = V X_s` holds exactly. Returns the ridge (if any) that
/// was added to a numerically singular input.
pub fn factorize_cholesky_nest(
    c: &DiscreteOperator,
    grid: &Grid,
) -> Result<(DiscreteOperator, Option<f64>)> {
    if c.role != Role::C {
        return Err(Error::Config("factorization expects the connecting operator".into()));
    }
    let dim = c.matrix.nrows();
    let pi = DiscreteOperator::reflection(grid);
    if pi.matrix.nrows() != dim {
        return Err(Error::Dimension("operator does not live on this grid".into()));
    }
    let smax = crate::linalg::spectral_norm(&c.matrix);
    let smin = crate::linalg::sigma_min(&c.matrix);
    let mut ridge = None;
    let mut m = &pi.matrix * &c.matrix * &pi.matrix;
    if smin < RIDGE_REL * smax {
        let r = RIDGE_REL * smax;
        m += CMatrix::identity(dim, dim) * cr(r);
        ridge = Some(r);
    }
    let chol = nalgebra::Cholesky::new(m).ok_or_else(|| {
        Error::Factorization("Cholesky breakdown: connecting operator is not positive definite".into())
    })?;
    let l = chol.l();
    // nalgebra's complex Cholesky happily takes the square root of a
    // negative pivot; a valid factor has a positive real diagonal.
    for i in 0..dim {
        let d = l[(i, i)];
        if !d.re.is_finite() || d.re <= 0.0 || d.im.abs() > 1.0e-10 * smax.sqrt().max(1.0) {
            return Err(Error::Factorization(format!(
                "non-positive Cholesky pivot at slot {i}: {d}"
            )));
        }
    }
    let mut v = &pi.matrix * l.adjoint() * &pi.matrix;
    // Entrywise Cholesky forces triangular diagonal blocks; the factor the
    // wave model needs has Hermitian positive diagonal blocks instead. The
    // two differ by a block-diagonal unitary gauge, fixed here by the polar
    // factor of each diagonal block. Exact no-op when n = 1.
    if c.n > 1 {
        let mut u = CMatrix::identity(dim, dim);
        for k in 0..dim / c.n {
            let b = v.view((k * c.n, k * c.n), (c.n, c.n)).clone_owned();
            let (p, _) = crate::linalg::polar(&b)?;
            u.view_mut((k * c.n, k * c.n), (c.n, c.n))
                .copy_from(&p.adjoint());
        }
        v = u * v;
    }
    Ok((DiscreteOperator::new(v, c.h, c.n, Role::V)?, ridge))
}

/// Gauge comparison of two factors of the same `C`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FactorComparison {
    /// `||V1* V1 - V2* V2||`.
    pub residual_gap: f64,
    /// `||U* U - Id||` for the gauge `U = V2 V1^{-1}`.
    pub unitary_defect: f64,
    /// Frobenius mass of `U` outside the per-slot `n x n` diagonal blocks,
    /// relative to its total mass.
    pub offblock_mass: f64,
}

pub fn compare_factors(
    v1: &DiscreteOperator,
    v2: &DiscreteOperator,
) -> Result<FactorComparison> {
    if v1.matrix.nrows() != v2.matrix.nrows() || v1.n != v2.n {
        return Err(Error::Dimension("factors live on different spaces".into()));
    }
    let residual_gap = (v1.matrix.adjoint() * &v1.matrix
        - v2.matrix.adjoint() * &v2.matrix)
        .norm();
    let v1_inv = crate::linalg::inverse(&v1.matrix)?;
    let u = &v2.matrix * v1_inv;
    let dim = u.nrows();
    let unitary_defect = (u.adjoint() * &u - CMatrix::identity(dim, dim)).norm();
    let n = v1.n;
    let mut off = 0.0f64;
    let mut total = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let mass = u[(i, j)].norm_sqr();
            total += mass;
            if i / n != j / n {
                off += mass;
            }
        }
    }
    let offblock_mass = if total > 0.0 { (off / total).sqrt() } else { 0.0 };
    Ok(FactorComparison {
        residual_gap,
        unitary_defect,
        offblock_mass,
    })
}

/// `W-tilde = Y-tilde V Y`: the model control operator, with both reversals
/// realized by the same midpoint permutation.
pub fn model_control_operator(v: &DiscreteOperator, grid: &Grid) -> Result<DiscreteOperator> {
    if v.role != Role::V {
        return Err(Error::Config("model control operator needs a factor V".into()));
    }
    let y = DiscreteOperator::reflection(grid);
    if y.matrix.nrows() != v.matrix.nrows() {
        return Err(Error::Dimension("factor does not live on this grid".into()));
    }
    DiscreteOperator::new(&y.matrix * &v.matrix * &y.matrix, v.h, v.n, Role::W)
}

/// `||Phi^{T'} restricted to the shared corner - Phi^T||`: the orthogonalizer
/// computed at a longer horizon, restricted to the leading block that the
/// shorter horizon occupies, against the one computed at `T` directly.
///
/// On the midpoint grid the reversal `Y-tilde` sends the delayed controls
/// realizing `F^T` inside `F^{T'}` to the leading wave coordinates, so the
/// shared corner sits at the top left on both sides.
pub fn orthogonalizer_consistency(
    phi_t: &DiscreteOperator,
    phi_tp: &DiscreteOperator,
) -> Result<f64> {
    if (phi_t.h - phi_tp.h).abs() > 1.0e-12 * phi_t.h || phi_t.n != phi_tp.n {
        return Err(Error::Grid(
            "orthogonalizers must share the step and channel count".into(),
        ));
    }
    let small = phi_t.matrix.nrows();
    let big = phi_tp.matrix.nrows();
    if small > big {
        return Err(Error::Grid("first operator must be the shorter horizon".into()));
    }
    let corner = phi_tp.matrix.view((0, 0), (small, small)).into_owned();
    Ok(crate::linalg::spectral_norm(&(corner - &phi_t.matrix)))
}

/// The orthogonalizer `Phi = Y-tilde V W^{-1}`, mapping the wave picture to
/// the model picture. Unitary because `V* V = C = W* W`; the residual
/// unitarity defect is checked and rejected if it is out of scale.
pub fn orthogonalizer(
    w: &DiscreteOperator,
    v: &DiscreteOperator,
    grid: &Grid,
) -> Result<DiscreteOperator> {
    if w.role != Role::W {
        return Err(Error::Config("orthogonalizer needs the control operator".into()));
    }
    if v.role != Role::V {
        return Err(Error::Config("orthogonalizer needs a triangular factor".into()));
    }
    let y = DiscreteOperator::reflection(grid);
    let dim = y.matrix.nrows();
    if w.matrix.nrows() != dim || v.matrix.nrows() != dim {
        return Err(Error::Dimension("operators do not live on this grid".into()));
    }
    let w_inv = crate::linalg::inverse(&w.matrix)?;
    let phi = &y.matrix * &v.matrix * w_inv;
    let defect = (phi.adjoint() * &phi - CMatrix::identity(dim, dim)).norm();
    if defect > 1.0e-6 * (dim as f64).sqrt() {
        return Err(Error::Numerical(format!(
            "orthogonalizer unitarity defect {defect:.3e}"
        )));
    }
    DiscreteOperator::new(phi, w.h, w.n, Role::Phi)
}
