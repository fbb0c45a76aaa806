use crate::core::{BoundaryControl, Grid, HermitianPotential, WaveField};
use crate::error::{Error, Result};
use crate::linalg::{cr, CVector};

/// Explicit cross scheme on the characteristic grid `dt = dx = h`:
///
/// `u(x, t+h) = u(x+h, t) + u(x-h, t) - u(x, t-h) - h^2 q(x) u(x, t)`
///
/// with the boundary row set from the control and the right edge held at
/// zero (never reached by waves while `X_max >= T`). At CFL = 1 the zero
/// potential propagates exactly, so all error is potential-induced.
pub fn solve_wave_fd(
    potential: &HermitianPotential,
    control: &BoundaryControl,
    grid: &Grid,
) -> Result<WaveField> {
    let n = grid.n_channels();
    if control.n_channels() != n {
        return Err(Error::Dimension(format!(
            "control has {} channels, grid has {n}",
            control.n_channels()
        )));
    }
    if control.n_steps() != grid.n_steps() {
        return Err(Error::Dimension(format!(
            "control has {} steps, grid has {}",
            control.n_steps(),
            grid.n_steps()
        )));
    }
    potential.require_coverage(grid.x_max())?;
    if (potential.h() - grid.h()).abs() > 1.0e-12 * grid.h() {
        return Err(Error::Grid(format!(
            "potential step {} does not match grid step {}",
            potential.h(),
            grid.h()
        )));
    }

    let m = grid.x_steps();
    let nt = grid.n_steps();
    let hh = grid.h() * grid.h();

    // values[i][j] = u(x_i, t_j)
    let mut values = vec![vec![CVector::zeros(n); nt + 1]; m + 1];
    for (i, col) in values.iter_mut().enumerate() {
        if i == 0 {
            for (j, v) in col.iter_mut().enumerate() {
                *v = control.node(j).clone();
            }
        }
    }
    // u(., 0) = u_t(., 0) = 0 gives a zero first interior level as well.
    for j in 1..nt {
        for i in 1..m {
            let q = potential.node(i);
            let next = &values[i + 1][j] + &values[i - 1][j]
                - &values[i][j - 1]
                - (q * &values[i][j]) * cr(hh);
            values[i][j + 1] = next;
        }
        // Right edge stays zero by finite propagation speed.
    }

    WaveField::new(values, grid.h())
}

/// Maximum norm over interior nodes of the discrete PDE residual
///
/// `(u_tt - u_xx)_h + q u`
///
/// evaluated with the same cross stencil. Used as the oracle that a
/// kernel-generated field solves the wave equation.
pub fn fd_residual_max(
    field: &WaveField,
    potential: &HermitianPotential,
    skip_boundary_layers: usize,
) -> Result<f64> {
    let m = field.x_nodes() - 1;
    let nt = field.t_nodes() - 1;
    let h = field.h();
    let hh = h * h;
    let mut worst = 0.0f64;
    let lo = 1 + skip_boundary_layers;
    for i in lo..m.saturating_sub(skip_boundary_layers) {
        for j in lo..nt.saturating_sub(skip_boundary_layers) {
            let u_tt = (field.at(i, j + 1) - field.at(i, j) * cr(2.0) + field.at(i, j - 1))
                / cr(hh);
            let u_xx = (field.at(i + 1, j) - field.at(i, j) * cr(2.0) + field.at(i - 1, j))
                / cr(hh);
            let r = u_tt - u_xx + potential.node(i) * field.at(i, j);
            worst = worst.max(r.norm());
        }
    }
    Ok(worst)
}
