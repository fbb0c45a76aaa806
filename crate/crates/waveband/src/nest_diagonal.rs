//! Partition sums `D^Xi_A`, the diagonal limit with its convergence
//! certificate, and the polar-decomposition utility used to extract the
//! orthogonalizer.

use crate::core::{DiscreteOperator, Grid, NestPartition, Role};
use crate::error::{Error, Result};
use crate::linalg::{cr, CMatrix};
use crate::operators::trailing_span_projection;

/// Uniform partition of `[0, T]` into `parts` intervals.
pub fn make_partition(grid: &Grid, parts: usize) -> Result<NestPartition> {
    let n_steps = grid.n_steps();
    if parts == 0 || n_steps % parts != 0 {
        return Err(Error::Grid(format!(
            "{parts} partition intervals do not divide N = {n_steps}"
        )));
    }
    let step = n_steps / parts;
    NestPartition::new((0..=parts).map(|k| k * step).collect(), grid.h(), n_steps)
}

/// Refining schedule of uniform partitions ending at `delta = h`, each level
/// halving the interval count of the next.
pub fn refining_schedule(grid: &Grid, levels: usize) -> Result<Vec<NestPartition>> {
    if levels == 0 {
        return Err(Error::Config("schedule needs at least one level".into()));
    }
    let mut parts = vec![grid.n_steps()];
    while parts.len() < levels && parts.last().unwrap() % 2 == 0 && *parts.last().unwrap() > 2 {
        parts.push(parts.last().unwrap() / 2);
    }
    parts.reverse();
    parts.into_iter().map(|p| make_partition(grid, p)).collect()
}

/// Cutoff `X_s` in control space: keeps the samples with `t >= T - s`
/// (the delayed controls), i.e. the trailing coordinates.
pub fn control_cutoff(grid: &Grid, s: f64) -> Result<DiscreteOperator> {
    let m_idx = grid.node_index(s)?;
    let slots = grid.n_steps();
    let n = grid.n_channels();
    let mut x = CMatrix::zeros(slots * n, slots * n);
    for j in slots - m_idx..slots {
        for ch in 0..n {
            x[(j * n + ch, j * n + ch)] = cr(1.0);
        }
    }
    DiscreteOperator::new(x, grid.h(), n, Role::Other)
}

/// Control cutoffs at the knots of a partition.
pub fn control_cutoff_family(
    partition: &NestPartition,
    grid: &Grid,
) -> Result<Vec<DiscreteOperator>> {
    partition
        .knot_times()
        .iter()
        .map(|&s| control_cutoff(grid, s))
        .collect()
}

/// The partition sum `D^Xi_A = sum_k (P_k - P_{k-1}) A (X_k - X_{k-1})`.
pub fn diagonal_sum(
    a: &DiscreteOperator,
    partition: &NestPartition,
    p_family: &[DiscreteOperator],
    x_family: &[DiscreteOperator],
) -> Result<DiscreteOperator> {
    let knots = partition.knots().len();
    if p_family.len() != knots || x_family.len() != knots {
        return Err(Error::Dimension(format!(
            "families of sizes {} / {} for a partition with {knots} knots",
            p_family.len(),
            x_family.len()
        )));
    }
    let (rows, cols) = (a.matrix.nrows(), a.matrix.ncols());
    for p in p_family {
        if p.matrix.nrows() != rows || p.matrix.ncols() != rows {
            return Err(Error::Dimension("P family off the output space".into()));
        }
    }
    for x in x_family {
        if x.matrix.nrows() != cols || x.matrix.ncols() != cols {
            return Err(Error::Dimension("X family off the input space".into()));
        }
    }
    let mut d = CMatrix::zeros(rows, cols);
    for k in 1..knots {
        let dp = &p_family[k].matrix - &p_family[k - 1].matrix;
        let dx = &x_family[k].matrix - &x_family[k - 1].matrix;
        d += dp * &a.matrix * dx;
    }
    DiscreteOperator::new(d, a.h, a.n, Role::D)
}

/// Source of the left (`P_s`) projection family for the diagonal.
#[derive(Debug, Clone, Copy)]
pub enum PFamilyMode {
    /// Exact 0/1 cutoffs on the leading coordinates of the output space —
    /// the fast path justified by `U^s = L_2([0, s])`.
    WaveCutoff,
    /// Projections onto the span of `A` restricted to delayed controls —
    /// the abstract path, built from `A` itself by SVD thresholding.
    SpanFromA { rank_tol: f64 },
}

fn p_family_for(
    a: &DiscreteOperator,
    partition: &NestPartition,
    grid: &Grid,
    mode: PFamilyMode,
) -> Result<Vec<DiscreteOperator>> {
    match mode {
        PFamilyMode::WaveCutoff => crate::operators::cutoff_family(partition, grid),
        PFamilyMode::SpanFromA { rank_tol } => partition
            .knots()
            .iter()
            .map(|&k| {
                let p = trailing_span_projection(&a.matrix, k * a.n, rank_tol)?;
                DiscreteOperator::new(p, a.h, a.n, Role::Other)
            })
            .collect(),
    }
}

/// One level of the convergence certificate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DiagonalLevel {
    pub delta: f64,
    pub dev_from_reflection: f64,
    pub sigma_min: f64,
    /// `sqrt(omega) * delta` when the kernel constant is known.
    pub bound: Option<f64>,
    pub diff_from_prev: Option<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DiagonalReport {
    pub levels: Vec<DiagonalLevel>,
    pub omega: Option<f64>,
    pub diverged: bool,
}

/// Run the partition sums down a refining schedule. Returns the
/// finest-level operator (or `None` when the level differences stop
/// decreasing — the divergence flag) together with the certificate.
pub fn diagonal_limit(
    a: &DiscreteOperator,
    grid: &Grid,
    schedule: &[NestPartition],
    mode: PFamilyMode,
    omega: Option<f64>,
    tol: f64,
) -> Result<(Option<DiscreteOperator>, DiagonalReport)> {
    if schedule.is_empty() {
        return Err(Error::Config("empty partition schedule".into()));
    }
    let reflection = DiscreteOperator::reflection(grid);
    let mut levels = Vec::with_capacity(schedule.len());
    let mut prev: Option<DiscreteOperator> = None;
    let mut diffs: Vec<f64> = Vec::new();
    for partition in schedule {
        let p_family = p_family_for(a, partition, grid, mode)?;
        let x_family = control_cutoff_family(partition, grid)?;
        let d = diagonal_sum(a, partition, &p_family, &x_family)?;
        let diff = prev
            .as_ref()
            .map(|p| crate::linalg::spectral_norm(&(&d.matrix - &p.matrix)));
        if let Some(df) = diff {
            diffs.push(df);
        }
        let delta = partition.delta();
        levels.push(DiagonalLevel {
            delta,
            dev_from_reflection: crate::linalg::spectral_norm(
                &(&d.matrix - &reflection.matrix),
            ),
            sigma_min: crate::linalg::sigma_min(&d.matrix),
            bound: omega.map(|om| om.sqrt() * delta),
            diff_from_prev: diff,
        });
        prev = Some(d);
    }
    // Converging sums contract roughly linearly in delta, so across the
    // schedule the level difference must drop well below its starting value;
    // a stalled or growing tail is flagged as divergence.
    let diverged = diffs.len() >= 2
        && *diffs.last().unwrap() > tol
        && *diffs.last().unwrap() > 0.75 * diffs[0];
    let report = DiagonalReport {
        levels,
        omega,
        diverged,
    };
    Ok((if diverged { None } else { prev }, report))
}

/// Unitary polar factor of `D*`: `D* = Phi |D*|`.
pub fn polar_unitary(d: &DiscreteOperator) -> Result<(DiscreteOperator, DiscreteOperator)> {
    let smax = crate::linalg::spectral_norm(&d.matrix);
    let smin = crate::linalg::sigma_min(&d.matrix);
    if smin <= 1.0e-10 * smax {
        return Err(Error::Polar(format!(
            "diagonal is rank deficient (sigma_min/sigma_max = {:.3e})",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let (phi, modulus) = crate::linalg::polar(&d.matrix.adjoint())?;
    Ok((
        DiscreteOperator::new(phi, d.h, d.n, Role::Phi)?,
        DiscreteOperator::new(modulus, d.h, d.n, Role::Other)?,
    ))
}

/// `||Phi E Phi* - (T Id - t-hat)||` at one partition level: the polar
/// factor of the partition diagonal of `W` transfers the eikonal operator
/// to `T Id` minus multiplication by the time variable, up to `O(delta)`.
pub fn eikonal_diagonalization_gap(
    w: &DiscreteOperator,
    grid: &Grid,
    partition: &NestPartition,
) -> Result<f64> {
    if w.role != Role::W {
        return Err(Error::Config("eikonal transfer needs the control operator".into()));
    }
    let p_family = crate::operators::cutoff_family(partition, grid)?;
    let x_family = control_cutoff_family(partition, grid)?;
    let d = diagonal_sum(w, partition, &p_family, &x_family)?;
    let (phi, _) = polar_unitary(&d)?;
    let e = crate::operators::assemble_eikonal(&p_family, partition, grid)?;
    let t_hat = DiscreteOperator::time_multiplication(grid);
    let dim = grid.dim();
    let target = CMatrix::identity(dim, dim) * cr(grid.horizon()) - &t_hat.matrix;
    let lhs = &phi.matrix * &e.matrix * phi.matrix.adjoint();
    Ok(crate::linalg::spectral_norm(&(lhs - target)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{BoundaryControl, HermitianPotential};
    use crate::forward::solve_goursat_kernel;
    use crate::operators::DEFAULT_RANK_TOL;
    use std::f64::consts::PI;

    fn setup(n_steps: usize, spec: &str) -> (Grid, DiscreteOperator, f64) {
        let grid = Grid::with_horizon(n_steps, 1.0, 1, 1.0).unwrap();
        let pot = HermitianPotential::builtin(spec, 1, grid.h(), grid.x_steps()).unwrap();
        let kernel = solve_goursat_kernel(&pot, &grid).unwrap();
        let w = crate::operators::assemble_control_from_kernel(&kernel, &grid).unwrap();
        (grid, w, kernel.omega())
    }

    #[test]
    fn partition_basics() {
        let grid = Grid::with_horizon(8, 1.0, 1, 1.0).unwrap();
        let p = make_partition(&grid, 4).unwrap();
        assert_eq!(p.knots(), &[0, 2, 4, 6, 8]);
        assert!((p.delta() - 0.25).abs() < 1e-15);
        let fine = make_partition(&grid, 8).unwrap();
        assert!((fine.delta() - grid.h()).abs() < 1e-15);
        assert!(make_partition(&grid, 3).is_err());
    }

    #[test]
    fn cutoffs_are_nested_indicators() {
        let grid = Grid::with_horizon(8, 1.0, 1, 1.0).unwrap();
        let xt = control_cutoff(&grid, 1.0).unwrap();
        assert!((&xt.matrix - CMatrix::identity(8, 8)).norm() == 0.0);
        let x0 = control_cutoff(&grid, 0.0).unwrap();
        assert_eq!(x0.matrix.norm(), 0.0);
        let xh = control_cutoff(&grid, 0.5).unwrap();
        let f = crate::linalg::CVector::from_element(8, cr(1.0));
        let xf = xh.apply(&f).unwrap();
        for j in 0..8 {
            let expect = if j >= 4 { 1.0 } else { 0.0 };
            assert_eq!(xf[j], cr(expect));
        }
        // Nested: X_s X_s' = X_min.
        let xq = control_cutoff(&grid, 0.25).unwrap();
        assert_eq!((&xh.matrix * &xq.matrix - &xq.matrix).norm(), 0.0);
    }

    #[test]
    fn free_diagonal_is_reflection_for_every_partition() {
        let (grid, w, _) = setup(16, "zero");
        let r = DiscreteOperator::reflection(&grid);
        for parts in [2usize, 4, 8, 16] {
            let partition = make_partition(&grid, parts).unwrap();
            let p_family = crate::operators::cutoff_family(&partition, &grid).unwrap();
            let x_family = control_cutoff_family(&partition, &grid).unwrap();
            let d = diagonal_sum(&w, &partition, &p_family, &x_family).unwrap();
            assert_eq!((&d.matrix - &r.matrix).norm(), 0.0, "parts = {parts}");
        }
    }

    #[test]
    fn partition_sum_satisfies_the_delta_omega_estimate() {
        let (grid, w, omega) = setup(64, "const:1");
        let r = DiscreteOperator::reflection(&grid);
        let ctrl = BoundaryControl::scalar_profile(&grid, 0, true, |t| (PI * t).sin()).unwrap();
        let f = ctrl.to_midpoint_vector();
        let f_norm2 = f.norm_squared() * grid.h();
        let mut errors = Vec::new();
        for parts in [16usize, 32] {
            let partition = make_partition(&grid, parts).unwrap();
            let p_family = crate::operators::cutoff_family(&partition, &grid).unwrap();
            let x_family = control_cutoff_family(&partition, &grid).unwrap();
            let d = diagonal_sum(&w, &partition, &p_family, &x_family).unwrap();
            let err2 = (d.apply(&f).unwrap() - r.apply(&f).unwrap()).norm_squared() * grid.h();
            let delta = partition.delta();
            assert!(
                err2 <= delta * delta * omega * f_norm2 + 1e-14,
                "parts {parts}: {err2} > {}",
                delta * delta * omega * f_norm2
            );
            errors.push(err2);
        }
        // Halving delta at least halves the error bound; empirically the
        // error itself drops by ~4 (it is quadratic in delta).
        assert!(errors[1] <= 0.5 * errors[0], "{errors:?}");
    }

    #[test]
    fn adjoint_relation_is_exact() {
        let (grid, w, _) = setup(16, "const:1");
        let partition = make_partition(&grid, 4).unwrap();
        let p_family = crate::operators::cutoff_family(&partition, &grid).unwrap();
        let x_family = control_cutoff_family(&partition, &grid).unwrap();
        let d = diagonal_sum(&w, &partition, &p_family, &x_family).unwrap();
        let wstar = w.adjoint(Role::Other);
        let dstar = diagonal_sum(&wstar, &partition, &x_family, &p_family).unwrap();
        assert!((dstar.matrix - d.matrix.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn diagonal_limit_certificate() {
        let (grid, w, omega) = setup(64, "const:1");
        let schedule = refining_schedule(&grid, 5).unwrap();
        assert_eq!(schedule.len(), 5);
        assert!((schedule.last().unwrap().delta() - grid.h()).abs() < 1e-15);
        let (d, report) = diagonal_limit(
            &w,
            &grid,
            &schedule,
            PFamilyMode::WaveCutoff,
            Some(omega),
            1e-10,
        )
        .unwrap();
        let d = d.expect("converged");
        assert!(!report.diverged);
        let last = report.levels.last().unwrap();
        assert!(
            last.dev_from_reflection <= last.bound.unwrap(),
            "dev {} > bound {:?}",
            last.dev_from_reflection,
            last.bound
        );
        // Level differences decrease; sigma_min stays away from zero.
        let diffs: Vec<f64> = report
            .levels
            .iter()
            .filter_map(|l| l.diff_from_prev)
            .collect();
        assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
        for l in &report.levels {
            assert!(l.sigma_min > 0.5, "sigma_min dipped: {}", l.sigma_min);
        }
        assert!(crate::linalg::sigma_min(&d.matrix) > 0.5);
    }

    #[test]
    fn cutoff_and_span_families_agree() {
        let (grid, w, omega) = setup(32, "const:1");
        let schedule = refining_schedule(&grid, 3).unwrap();
        let (d1, _) = diagonal_limit(
            &w,
            &grid,
            &schedule,
            PFamilyMode::WaveCutoff,
            Some(omega),
            1e-10,
        )
        .unwrap();
        let (d2, _) = diagonal_limit(
            &w,
            &grid,
            &schedule,
            PFamilyMode::SpanFromA {
                rank_tol: DEFAULT_RANK_TOL,
            },
            Some(omega),
            1e-10,
        )
        .unwrap();
        let gap = (&d1.unwrap().matrix - &d2.unwrap().matrix).norm();
        assert!(gap < 1e-8, "family routes disagree by {gap}");
    }

    #[test]
    fn divergence_flag_on_nonconverging_input() {
        // The partition sum keeps the band of width delta around the
        // anti-diagonal; an input whose mass grows toward the anti-diagonal
        // makes every removed shell larger than the last, so the level
        // differences never decrease.
        let grid = Grid::with_horizon(16, 1.0, 1, 1.0).unwrap();
        let dim = grid.dim();
        let a = CMatrix::from_fn(dim, dim, |i, j| {
            let dist = ((i + j) as f64 - (dim - 1) as f64).abs();
            if dist == 0.0 {
                cr(0.0)
            } else {
                cr(4.0f64.powf(-dist))
            }
        });
        let a = DiscreteOperator::new(a, grid.h(), 1, Role::Other).unwrap();
        let schedule = refining_schedule(&grid, 4).unwrap();
        let (op, report) = diagonal_limit(
            &a,
            &grid,
            &schedule,
            PFamilyMode::WaveCutoff,
            None,
            1e-10,
        )
        .unwrap();
        assert!(report.diverged);
        assert!(op.is_none());
    }

    #[test]
    fn polar_unitary_cases() {
        let grid = Grid::with_horizon(8, 1.0, 1, 1.0).unwrap();
        let r = DiscreteOperator::reflection(&grid);
        let d = DiscreteOperator::new(r.matrix.clone(), grid.h(), 1, Role::D).unwrap();
        let (phi, modulus) = polar_unitary(&d).unwrap();
        assert!((&phi.matrix - d.matrix.adjoint()).norm() < 1e-12);
        assert!((&modulus.matrix - CMatrix::identity(8, 8)).norm() < 1e-12);

        let two = DiscreteOperator::new(
            CMatrix::identity(8, 8) * cr(2.0),
            grid.h(),
            1,
            Role::D,
        )
        .unwrap();
        let (phi, modulus) = polar_unitary(&two).unwrap();
        assert!((&phi.matrix - CMatrix::identity(8, 8)).norm() < 1e-12);
        assert!((&modulus.matrix - CMatrix::identity(8, 8) * cr(2.0)).norm() < 1e-12);

        let zero = DiscreteOperator::new(CMatrix::zeros(8, 8), grid.h(), 1, Role::D).unwrap();
        assert!(matches!(polar_unitary(&zero), Err(Error::Polar(_))));
    }

    #[test]
    fn pipeline_polar_factor_reconstructs() {
        let (grid, w, omega) = setup(32, "const:1");
        let schedule = refining_schedule(&grid, 4).unwrap();
        let (d, _) = diagonal_limit(
            &w,
            &grid,
            &schedule,
            PFamilyMode::WaveCutoff,
            Some(omega),
            1e-10,
        )
        .unwrap();
        let d = d.unwrap();
        let (phi, modulus) = polar_unitary(&d).unwrap();
        let dim = grid.dim();
        assert!(
            (phi.matrix.adjoint() * &phi.matrix - CMatrix::identity(dim, dim)).norm() < 1e-10
        );
        assert!((&phi.matrix * &modulus.matrix - d.matrix.adjoint()).norm() < 1e-10);
    }

    #[test]
    fn eikonal_transfer_gap_scales_with_delta() {
        for spec in ["zero", "const:1"] {
            let (grid, w, _) = setup(64, spec);
            let mut gaps = Vec::new();
            for parts in [32usize, 64] {
                let partition = make_partition(&grid, parts).unwrap();
                gaps.push(eikonal_diagonalization_gap(&w, &grid, &partition).unwrap());
            }
            assert!(gaps[0] <= 2.0 / 32.0, "{spec}: gap {} at delta 1/32", gaps[0]);
            assert!(
                gaps[1] <= 0.6 * gaps[0] + 1e-12,
                "{spec}: no refinement gain {gaps:?}"
            );
        }
    }
}
