use crate::core::{BoundaryControl, Grid, HermitianPotential, WaveField};
use crate::error::{Error, Result};
use crate::linalg::{cr, CMatrix, CVector};

/// Transmutation kernel `w(x, s)` on the triangle `0 <= x <= s <= T`,
/// stored on the characteristic lattice `xi = s - x = m h`,
/// `eta = s + x = l h`, which carries both the node pairs `(i h, j h)` and
/// the midpoint pairs `((i - 1/2) h, (j - 1/2) h)`.
#[derive(Debug, Clone)]
pub struct KernelField {
    /// rows[l][m], `0 <= m <= min(l, 2N - l)`.
    rows: Vec<Vec<CMatrix>>,
    h: f64,
    n: usize,
    omega: f64,
}

impl KernelField {
    /// Value at characteristic coordinates `xi = m h`, `eta = l h`.
    pub fn at_char(&self, m: usize, l: usize) -> &CMatrix {
        &self.rows[l][m]
    }

    /// Value at the node pair `x = i h`, `s = j h` (`i <= j`, `i + j <= 2N`).
    pub fn at_nodes(&self, i: usize, j: usize) -> &CMatrix {
        self.at_char(j - i, j + i)
    }

    /// Value at the midpoint pair `x = (i - 1/2) h`, `s = (j - 1/2) h`
    /// (`1 <= i <= j`).
    pub fn at_midpoints(&self, i: usize, j: usize) -> &CMatrix {
        self.at_char(j - i, i + j - 1)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `omega = max ||w||^2` (squared spectral norm) over the triangle; the
    /// constant in the diagonal estimate.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Largest jump between characteristic-lattice neighbors, a discrete
    /// continuity certificate (expected `O(h)` for bounded potentials).
    pub fn max_neighbor_jump(&self) -> f64 {
        let mut worst = 0.0f64;
        for l in 1..self.rows.len() {
            for m in 0..self.rows[l].len() {
                if m < self.rows[l - 1].len() {
                    worst = worst.max((&self.rows[l][m] - &self.rows[l - 1][m]).norm());
                }
                if m > 0 {
                    worst = worst.max((&self.rows[l][m] - &self.rows[l][m - 1]).norm());
                }
            }
        }
        worst
    }
}

/// Solve the Goursat problem for the transmutation kernel:
///
/// `w_ss - w_xx + q(x) w = 0` on `0 < x < s`, `w(0, s) = 0`,
/// `w(x, x) = -1/2 * int_0^x q`.
///
/// In characteristic coordinates the equation is `4 w_{xi eta} = -q w`;
/// each unit cell is closed with the trapezoidal source average, which
/// makes the update implicit in one `n x n` solve per distinct `x`-column.
pub fn solve_goursat_kernel(potential: &HermitianPotential, grid: &Grid) -> Result<KernelField> {
    potential.require_coverage(grid.horizon())?;
    if (potential.h() - grid.h()).abs() > 1.0e-12 * grid.h() {
        return Err(Error::Grid(format!(
            "potential step {} does not match grid step {}",
            potential.h(),
            grid.h()
        )));
    }
    let n = grid.n_channels();
    if potential.n() != n {
        return Err(Error::Dimension(format!(
            "potential is {}x{}, grid has n = {n}",
            potential.n(),
            potential.n()
        )));
    }
    let h = grid.h();
    let lmax = 2 * grid.n_steps();

    // Cumulative trapezoid of q on the half-step lattice for the
    // characteristic data w(x, x) = -1/2 int_0^x q.
    let mut diag = Vec::with_capacity(lmax + 1);
    let mut cum = CMatrix::zeros(n, n);
    diag.push(CMatrix::zeros(n, n));
    for k in 1..=lmax {
        cum += (potential.half_node(k - 1) + potential.half_node(k)) * cr(h / 4.0);
        diag.push(&cum * cr(-0.5));
    }

    // Source factors per x-column: x_c = (l - m) h / 2 depends on l - m only.
    let kappa = h * h / 16.0;
    let mut inv_factor = Vec::with_capacity(lmax + 1);
    let mut q_half = Vec::with_capacity(lmax + 1);
    for k in 0..=lmax {
        let qc = potential.half_node(k);
        let f = (CMatrix::identity(n, n) + &qc * cr(kappa))
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular Goursat cell factor".into()))?;
        inv_factor.push(f);
        q_half.push(qc);
    }

    // March in increasing eta; each cell needs (m-1, l), (m, l-1), (m-1, l-1).
    let mut rows: Vec<Vec<CMatrix>> = Vec::with_capacity(lmax + 1);
    for l in 0..=lmax {
        let mmax = l.min(lmax - l);
        let mut row: Vec<CMatrix> = Vec::with_capacity(mmax + 1);
        for m in 0..=mmax {
            let w = if m == 0 {
                // Characteristic diagonal x = s.
                diag[l].clone()
            } else if m == l {
                // Boundary column x = 0.
                CMatrix::zeros(n, n)
            } else {
                let a = &row[m - 1];
                let b = &rows[l - 1][m];
                let c = &rows[l - 1][m - 1];
                let k = l - m;
                let rhs = a + b - c - &q_half[k] * ((a + b + c) * cr(kappa));
                &inv_factor[k] * rhs
            };
            row.push(w);
        }
        rows.push(row);
    }

    // omega via the largest singular value of each sample.
    let mut omega = 0.0f64;
    for row in &rows {
        for w in row {
            if w.norm() == 0.0 {
                continue;
            }
            let gram = w.adjoint() * w;
            let (_, vals) = crate::linalg::hermitian_eigen(&gram)?;
            if let Some(v) = vals.last() {
                omega = omega.max(*v);
            }
        }
    }

    Ok(KernelField {
        rows,
        h,
        n,
        omega,
    })
}

/// Evaluate the kernel representation
///
/// `u(x, t) = f(t - x) + int_x^t w(x, s) f(t - s) ds`
///
/// at the node grid of `[0, X_max]` for a grid-aligned `t <= T`, with
/// trapezoid quadrature on the node lattice and `f` treated as zero for
/// negative arguments.
pub fn apply_control_kernel(
    kernel: &KernelField,
    control: &BoundaryControl,
    grid: &Grid,
    t: f64,
) -> Result<Vec<CVector>> {
    let jt = grid.node_index(t)?;
    let n = grid.n_channels();
    if control.n_channels() != n || control.n_steps() != grid.n_steps() {
        return Err(Error::Dimension("control does not match the grid".into()));
    }
    let mut out = Vec::with_capacity(grid.x_steps() + 1);
    for i in 0..=grid.x_steps() {
        if i > jt {
            out.push(CVector::zeros(n));
            continue;
        }
        let mut u = control.node(jt - i).clone();
        if jt > i {
            let mut acc = CVector::zeros(n);
            for k in i..=jt {
                let weight = if k == i || k == jt { 0.5 } else { 1.0 };
                let term = kernel.at_nodes(i, k) * control.node(jt - k);
                acc += term * cr(weight);
            }
            u += acc * cr(grid.h());
        }
        out.push(u);
    }
    Ok(out)
}

/// Wave field generated from the kernel representation at every time node;
/// the input to the PDE-residual oracle.
pub fn kernel_wave_field(
    kernel: &KernelField,
    control: &BoundaryControl,
    grid: &Grid,
) -> Result<WaveField> {
    let mut columns = vec![Vec::with_capacity(grid.n_steps() + 1); grid.x_steps() + 1];
    for j in 0..=grid.n_steps() {
        let slice = apply_control_kernel(kernel, control, grid, j as f64 * grid.h())?;
        for (i, v) in slice.into_iter().enumerate() {
            columns[i].push(v);
        }
    }
    WaveField::new(columns, grid.h())
}
