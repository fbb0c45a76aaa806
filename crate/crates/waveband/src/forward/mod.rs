//! Forward solvers for the boundary-control wave system on the half-line:
//! an explicit characteristic-aligned finite-difference scheme and the
//! transmutation-kernel representation, each usable as an oracle for the
//! other.

mod fd;
mod kernel;

pub use fd::{fd_residual_max, solve_wave_fd};
pub use kernel::{apply_control_kernel, kernel_wave_field, solve_goursat_kernel, KernelField};

use crate::core::{BoundaryControl, Grid, HermitianPotential};
use crate::error::Result;

/// Outcome of comparing the two solvers at `h` and `h/2`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CrossValidationReport {
    pub l2_error_coarse: f64,
    pub l2_error_fine: f64,
    pub ratio_under_refinement: f64,
}

/// Compare `solve_wave_fd` against the kernel representation at the final
/// time on the grid and on its refinement. Both solvers consume the same
/// samples, so potential and control interpolation errors cancel in the
/// difference; the ratio tracks the shared second-order truncation error.
pub fn cross_validate_solvers(
    potential: &HermitianPotential,
    control: &BoundaryControl,
    grid: &Grid,
) -> Result<CrossValidationReport> {
    if !control.smooth() {
        return Err(crate::error::Error::Config(
            "cross validation needs a smooth control".into(),
        ));
    }
    let coarse = final_slice_discrepancy(potential, control, grid)?;
    let fine_grid = grid.refined()?;
    let fine_pot = refine_potential(potential);
    let fine_ctrl = refine_control(control)?;
    let fine = final_slice_discrepancy(&fine_pot, &fine_ctrl, &fine_grid)?;
    let ratio = if fine > 0.0 { coarse / fine } else { f64::INFINITY };
    Ok(CrossValidationReport {
        l2_error_coarse: coarse,
        l2_error_fine: fine,
        ratio_under_refinement: ratio,
    })
}

/// L2 norm over `[0, T]` of `u_fd(., T) - u_kernel(., T)`.
pub fn final_slice_discrepancy(
    potential: &HermitianPotential,
    control: &BoundaryControl,
    grid: &Grid,
) -> Result<f64> {
    let field = solve_wave_fd(potential, control, grid)?;
    let kern = solve_goursat_kernel(potential, grid)?;
    let t = grid.horizon();
    let u_kernel = apply_control_kernel(&kern, control, grid, t)?;
    let j = grid.n_steps();
    let mut sum = 0.0;
    for i in 0..=grid.n_steps() {
        let d = (field.at(i, j) - &u_kernel[i]).norm_squared();
        let w = if i == 0 || i == grid.n_steps() { 0.5 } else { 1.0 };
        sum += w * d;
    }
    Ok((sum * grid.h()).sqrt())
}

/// Four-point (cubic) midpoint interpolation of node-sampled data; keeps the
/// discrete high-order differences of smooth data intact under refinement.
fn refine_samples<T, F>(samples: &[T], lincomb: F) -> Vec<T>
where
    T: Clone,
    F: Fn(&[(&T, f64)]) -> T,
{
    let m = samples.len() - 1;
    let mut out = Vec::with_capacity(2 * m + 1);
    for i in 0..m {
        out.push(samples[i].clone());
        // Midpoint between nodes i and i+1.
        let mid = if i == 0 {
            let w = [0.3125, 0.9375, -0.3125, 0.0625];
            lincomb(&[
                (&samples[0], w[0]),
                (&samples[1], w[1]),
                (&samples[2], w[2]),
                (&samples[3], w[3]),
            ])
        } else if i + 2 > m {
            let w = [0.0625, -0.3125, 0.9375, 0.3125];
            lincomb(&[
                (&samples[m - 3], w[0]),
                (&samples[m - 2], w[1]),
                (&samples[m - 1], w[2]),
                (&samples[m], w[3]),
            ])
        } else {
            lincomb(&[
                (&samples[i - 1], -1.0 / 16.0),
                (&samples[i], 9.0 / 16.0),
                (&samples[i + 1], 9.0 / 16.0),
                (&samples[i + 2], -1.0 / 16.0),
            ])
        };
        out.push(mid);
    }
    out.push(samples[m].clone());
    out
}

/// Potential resampled on the halved step via cubic interpolation.
pub fn refine_potential(p: &HermitianPotential) -> HermitianPotential {
    let refined = refine_samples(p.samples(), |terms| {
        let mut acc = terms[0].0 * crate::linalg::cr(terms[0].1);
        for (m, w) in &terms[1..] {
            acc += *m * crate::linalg::cr(*w);
        }
        // Interpolation preserves Hermitian symmetry up to rounding;
        // re-symmetrize so the constructor's 1e-12 gate holds.
        crate::linalg::hermitian_part(&acc)
    });
    HermitianPotential::new(refined, p.h() / 2.0, format!("{}+refined", p.source()))
        .expect("refined potential stays Hermitian")
}

/// Control resampled on the halved step via cubic interpolation.
pub fn refine_control(f: &BoundaryControl) -> Result<BoundaryControl> {
    let samples: Vec<crate::linalg::CVector> = {
        let src: Vec<crate::linalg::CVector> =
            (0..=f.n_steps()).map(|j| f.node(j).clone()).collect();
        refine_samples(&src, |terms| {
            let mut acc = terms[0].0 * crate::linalg::cr(terms[0].1);
            for (v, w) in &terms[1..] {
                acc += *v * crate::linalg::cr(*w);
            }
            acc
        })
    };
    BoundaryControl::new(samples, f.h() / 2.0, f.smooth())
}
