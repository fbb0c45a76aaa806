use crate::core::Grid;
use crate::error::{Error, Result};
use crate::linalg::{cr, CMatrix, CVector};

pub const HERMITIAN_ASSEMBLY_TOL: f64 = 1.0e-10;

/// Role label of an assembled operator matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    W,
    C,
    V,
    D,
    Phi,
    E,
    Lmodel,
    Q,
    Other,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::W => "W",
            Role::C => "C",
            Role::V => "V",
            Role::D => "D",
            Role::Phi => "Phi",
            Role::E => "E",
            Role::Lmodel => "Lmodel",
            Role::Q => "Q",
            Role::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Result<Role> {
        Ok(match s {
            "W" => Role::W,
            "C" => Role::C,
            "V" => Role::V,
            "D" => Role::D,
            "Phi" => Role::Phi,
            "E" => Role::E,
            "Lmodel" => Role::Lmodel,
            "Q" => Role::Q,
            "other" => Role::Other,
            _ => return Err(Error::Parse(format!("unknown operator role '{s}'"))),
        })
    }
}

/// Dense matrix representing a linear map on discretized `L_2([0,T]; C^n)`
/// (midpoint samples, uniform quadrature weight `h`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    pub matrix: CMatrix,
    pub h: f64,
    pub n: usize,
    pub role: Role,
}

impl DiscreteOperator {
    pub fn new(matrix: CMatrix, h: f64, n: usize, role: Role) -> Result<Self> {
        if matrix.nrows() % n != 0 || matrix.ncols() % n != 0 {
            return Err(Error::Dimension(format!(
                "operator is {}x{}, dimensions must be divisible by n = {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let op = DiscreteOperator { matrix, h, n, role };
        if matches!(role, Role::C | Role::Q) {
            let dev = crate::linalg::hermitian_deviation(&op.matrix);
            let scale = op.matrix.norm().max(1.0);
            if dev > HERMITIAN_ASSEMBLY_TOL * scale {
                return Err(Error::Numerical(format!(
                    "role {} operator deviates from Hermitian by {dev:.3e}",
                    role.as_str()
                )));
            }
        }
        Ok(op)
    }

    /// Number of time slots (rows / n).
    pub fn slots(&self) -> usize {
        self.matrix.nrows() / self.n
    }

    pub fn apply(&self, f: &CVector) -> Result<CVector> {
        if f.len() != self.matrix.ncols() {
            return Err(Error::Dimension(format!(
                "operator expects input of length {}, got {}",
                self.matrix.ncols(),
                f.len()
            )));
        }
        Ok(&self.matrix * f)
    }

    /// Adjoint with respect to the uniform `h`-weighted inner product:
    /// the plain conjugate transpose.
    pub fn adjoint(&self, role: Role) -> DiscreteOperator {
        DiscreteOperator {
            matrix: self.matrix.adjoint(),
            h: self.h,
            n: self.n,
            role,
        }
    }

    /// Reflection `(Yf)(t) = f(T - t)`: an exact permutation on midpoints.
    pub fn reflection(grid: &Grid) -> DiscreteOperator {
        let n = grid.n_channels();
        let slots = grid.n_steps();
        let mut m = CMatrix::zeros(slots * n, slots * n);
        for j in 0..slots {
            let rj = slots - 1 - j;
            for ch in 0..n {
                m[(rj * n + ch, j * n + ch)] = cr(1.0);
            }
        }
        DiscreteOperator {
            matrix: m,
            h: grid.h(),
            n,
            role: Role::Other,
        }
    }

    /// Multiplication by the time variable `t` at the midpoints.
    pub fn time_multiplication(grid: &Grid) -> DiscreteOperator {
        let n = grid.n_channels();
        let slots = grid.n_steps();
        let mut m = CMatrix::zeros(slots * n, slots * n);
        for j in 0..slots {
            for ch in 0..n {
                m[(j * n + ch, j * n + ch)] = cr(grid.midpoint(j + 1));
            }
        }
        DiscreteOperator {
            matrix: m,
            h: grid.h(),
            n,
            role: Role::Other,
        }
    }
}

/// Partition `0 = s_0 < s_1 < ... < s_K = T` of the nest range, with knots
/// stored as node indices (units of `h`).
#[derive(Debug, Clone, PartialEq)]
pub struct NestPartition {
    knots: Vec<usize>,
    h: f64,
}

impl NestPartition {
    pub fn new(knots: Vec<usize>, h: f64, n_steps: usize) -> Result<Self> {
        if knots.len() < 2 || knots[0] != 0 || *knots.last().unwrap() != n_steps {
            return Err(Error::Grid(format!(
                "partition knots must run from 0 to N = {n_steps}"
            )));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("partition knots must be strictly increasing".into()));
        }
        Ok(NestPartition { knots, h })
    }

    pub fn knots(&self) -> &[usize] {
        &self.knots
    }

    pub fn knot_times(&self) -> Vec<f64> {
        self.knots.iter().map(|&k| k as f64 * self.h).collect()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Range `delta = max(s_k - s_{k-1})`.
    pub fn delta(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 * self.h)
            .fold(0.0, f64::max)
    }

    pub fn intervals(&self) -> usize {
        self.knots.len() - 1
    }
}
