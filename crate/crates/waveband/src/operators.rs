//! Assembly of the discretized control operator `W`, the connecting
//! operator `C = W* W`, the reachable-set projections `P_s` and the eikonal
//! operator `E` built from them.

use crate::core::{BoundaryControl, DiscreteOperator, Grid, HermitianPotential, NestPartition, Role};
use crate::error::{Error, Result};
use crate::forward::{solve_goursat_kernel, solve_wave_fd, KernelField};
use crate::linalg::{cr, CMatrix, CVector};

/// Singular values above `DEFAULT_RANK_TOL * sigma_max` count toward the
/// reachable-set rank; `W` is an isomorphism, so the cut sits far below the
/// bulk of its spectrum.
pub const DEFAULT_RANK_TOL: f64 = 1.0e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyMethod {
    Fd,
    Kernel,
}

impl AssemblyMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "fd" => Ok(AssemblyMethod::Fd),
            "kernel" => Ok(AssemblyMethod::Kernel),
            other => Err(Error::Config(format!(
                "unknown control-operator assembly method '{other}' (use fd or kernel)"
            ))),
        }
    }
}

/// Assemble `W`: control midpoint samples in, final-time wave on the
/// `x`-midpoints of `[0, T]` out.
pub fn assemble_control_operator(
    potential: &HermitianPotential,
    grid: &Grid,
    method: AssemblyMethod,
) -> Result<DiscreteOperator> {
    match method {
        AssemblyMethod::Kernel => {
            let kernel = solve_goursat_kernel(potential, grid)?;
            assemble_control_from_kernel(&kernel, grid)
        }
        AssemblyMethod::Fd => assemble_control_fd(potential, grid),
    }
}

/// Kernel route: the representation `u(x, T) = f(T - x) + int w f` sampled
/// at the `x`-midpoints. The reversal part is an exact permutation; the
/// Volterra part is midpoint-weighted quadrature of the transmutation
/// kernel. For `q = 0` this gives the reversal exactly.
pub fn assemble_control_from_kernel(
    kernel: &KernelField,
    grid: &Grid,
) -> Result<DiscreteOperator> {
    let n = grid.n_channels();
    if kernel.n() != n || (kernel.h() - grid.h()).abs() > 1.0e-12 * grid.h() {
        return Err(Error::Config(
            "kernel field does not match the grid it is applied on".into(),
        ));
    }
    let slots = grid.n_steps();
    let h = grid.h();
    let mut m = CMatrix::zeros(slots * n, slots * n);
    for i in 1..=slots {
        // f(T - x_i) lands on midpoint N + 1 - i.
        let col = slots - i; // zero-based column block of midpoint N + 1 - i
        for ch in 0..n {
            m[((i - 1) * n + ch, col * n + ch)] += cr(1.0);
        }
        // int_{x_i}^{T} w(x_i, s) f(T - s) ds over s-midpoints k = i..N,
        // half a cell at k = i.
        for k in i..=slots {
            let weight = if k == i { 0.5 * h } else { h };
            let w = kernel.at_midpoints(i, k);
            let colk = slots - k; // f index N + 1 - k, zero-based
            for r in 0..n {
                for c in 0..n {
                    m[((i - 1) * n + r, colk * n + c)] += w[(r, c)] * cr(weight);
                }
            }
        }
    }
    DiscreteOperator::new(m, h, n, Role::W)
}

/// FD route: one wave simulation per canonical basis control (a hat of
/// half-width `h` centered at a `t`-midpoint, which is exactly a coordinate
/// vector in the midpoint representation), final slice resampled at the
/// `x`-midpoints of `[0, T]`.
fn assemble_control_fd(
    potential: &HermitianPotential,
    grid: &Grid,
) -> Result<DiscreteOperator> {
    let n = grid.n_channels();
    let slots = grid.n_steps();
    let mut m = CMatrix::zeros(slots * n, slots * n);
    for j in 1..=slots {
        for ch in 0..n {
            // Node samples of the hat centered at midpoint j: 1/2 at the two
            // adjacent nodes.
            let samples: Vec<CVector> = (0..=slots)
                .map(|node| {
                    let mut v = CVector::zeros(n);
                    if node + 1 == j || node == j {
                        v[ch] = cr(0.5);
                    }
                    v
                })
                .collect();
            let ctrl = BoundaryControl::new(samples, grid.h(), false)?;
            let field = solve_wave_fd(potential, &ctrl, grid)?;
            let slice = field.final_slice_midpoint(grid.n_steps());
            for idx in 0..slots * n {
                m[(idx, (j - 1) * n + ch)] = slice[idx];
            }
        }
    }
    DiscreteOperator::new(m, grid.h(), n, Role::W)
}

/// `C = W* W`; Hermitian PSD by construction, re-symmetrized to kill
/// rounding before the role gate.
pub fn compute_connecting(w: &DiscreteOperator) -> Result<DiscreteOperator> {
    if w.role != Role::W {
        return Err(Error::Config("connecting operator needs a role-W input".into()));
    }
    let c = crate::linalg::hermitian_part(&(w.matrix.adjoint() * &w.matrix));
    let (_, evals) = crate::linalg::hermitian_eigen(&c)?;
    let scale = evals.last().copied().unwrap_or(0.0).max(1.0);
    if evals.first().copied().unwrap_or(0.0) < -1.0e-10 * scale {
        return Err(Error::NotPsd(format!(
            "connecting operator has eigenvalue {:.3e}",
            evals[0]
        )));
    }
    DiscreteOperator::new(c, w.h, w.n, Role::C)
}

/// Orthogonal projection onto the reachable set `W {f : supp f in [T-s, T]}`
/// by singular-value thresholding of the trailing column block.
pub fn reachable_projection(
    w: &DiscreteOperator,
    grid: &Grid,
    s: f64,
    tol: f64,
) -> Result<DiscreteOperator> {
    if w.role != Role::W {
        return Err(Error::Config("reachable set needs a role-W input".into()));
    }
    let slots = grid.n_steps();
    let n = grid.n_channels();
    if w.slots() != slots || w.n != n {
        return Err(Error::Dimension("operator does not live on this grid".into()));
    }
    let m_idx = grid.node_index(s)?; // s = m h, delayed controls occupy the last m midpoints
    let p = trailing_span_projection(&w.matrix, m_idx * n, tol)?;
    DiscreteOperator::new(p, grid.h(), n, Role::Other)
}

/// Orthogonal projection onto the span of the last `cols` columns of `a`,
/// by singular-value thresholding. `cols = 0` gives the zero projection.
pub fn trailing_span_projection(a: &CMatrix, cols: usize, tol: f64) -> Result<CMatrix> {
    let dim = a.nrows();
    if cols > a.ncols() {
        return Err(Error::Dimension(format!(
            "asked for {cols} trailing columns of a {}-column matrix",
            a.ncols()
        )));
    }
    if cols == 0 {
        return Ok(CMatrix::zeros(dim, dim));
    }
    let block = a.columns(a.ncols() - cols, cols).into_owned();
    let svd = crate::linalg::svd(&block)?;
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&sv| sv > tol * smax)
        .count();
    let ur = svd.u.columns(0, rank).into_owned();
    Ok(crate::linalg::hermitian_part(&(&ur * ur.adjoint())))
}

/// The exact cutoff projection onto `x`-midpoints `<= s` (a 0/1 diagonal);
/// the `q = 0` reachable projection, and the comparison point for the
/// `||P_s - X_s|| -> 0` property.
pub fn cutoff_projection(grid: &Grid, s: f64) -> Result<DiscreteOperator> {
    let m_idx = grid.node_index(s)?;
    let slots = grid.n_steps();
    let n = grid.n_channels();
    let mut p = CMatrix::zeros(slots * n, slots * n);
    for j in 0..m_idx {
        for ch in 0..n {
            p[(j * n + ch, j * n + ch)] = cr(1.0);
        }
    }
    DiscreteOperator::new(p, grid.h(), n, Role::Other)
}

/// `E = sum s_k (P_{s_k} - P_{s_{k-1}})` over a partition; requires the
/// family to be a nest (monotone projections).
pub fn assemble_eikonal(
    projections: &[DiscreteOperator],
    partition: &NestPartition,
    grid: &Grid,
) -> Result<DiscreteOperator> {
    let times = partition.knot_times();
    if projections.len() != times.len() {
        return Err(Error::Dimension(format!(
            "{} projections for {} partition knots",
            projections.len(),
            times.len()
        )));
    }
    let dim = grid.dim();
    for p in projections {
        if p.matrix.nrows() != dim || p.matrix.ncols() != dim {
            return Err(Error::Dimension("projection off the grid dimension".into()));
        }
    }
    // Nest monotonicity: P_{k-1} P_k = P_{k-1}.
    for k in 1..projections.len() {
        let dev = (&projections[k - 1].matrix * &projections[k].matrix
            - &projections[k - 1].matrix)
            .norm();
        if dev > 1.0e-8 * (dim as f64).sqrt().max(1.0) {
            return Err(Error::NestViolation(format!(
                "projection family is not monotone at knot {k} (defect {dev:.3e})"
            )));
        }
    }
    let mut e = CMatrix::zeros(dim, dim);
    for k in 1..projections.len() {
        let dp = &projections[k].matrix - &projections[k - 1].matrix;
        e += dp * cr(times[k]);
    }
    let e = crate::linalg::hermitian_part(&e);
    let (_, evals) = crate::linalg::hermitian_eigen(&e)?;
    let t = grid.horizon();
    let lo = evals.first().copied().unwrap_or(0.0);
    let hi = evals.last().copied().unwrap_or(0.0);
    if lo < -1.0e-10 * t.max(1.0) || hi > t + 1.0e-10 * t.max(1.0) {
        return Err(Error::Numerical(format!(
            "eikonal spectrum [{lo:.3e}, {hi:.3e}] escapes [0, T]"
        )));
    }
    DiscreteOperator::new(e, grid.h(), grid.n_channels(), Role::E)
}

/// Convenience: the cutoff family at the knots of a partition.
pub fn cutoff_family(partition: &NestPartition, grid: &Grid) -> Result<Vec<DiscreteOperator>> {
    partition
        .knot_times()
        .iter()
        .map(|&s| cutoff_projection(grid, s))
        .collect()
}

/// Reachable-projection family at the knots of a partition.
pub fn projection_family(
    w: &DiscreteOperator,
    partition: &NestPartition,
    grid: &Grid,
    tol: f64,
) -> Result<Vec<DiscreteOperator>> {
    partition
        .knot_times()
        .iter()
        .map(|&s| reachable_projection(w, grid, s, tol))
        .collect()
}
