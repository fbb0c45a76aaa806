use crate::core::Grid;
use crate::error::{Error, Result};
use crate::linalg::{cr, CVector};

/// Bound on `|f(h) - f(0)| / h` accepted for a smooth control. Lipschitz
/// controls vanishing at `t = 0` stay well below it; a jump at `t = 0`
/// scales like `1/h` and is rejected.
const SMOOTH_SLOPE_BOUND: f64 = 50.0;

/// Boundary control sampled at the nodes `t_i = i h` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryControl {
    samples: Vec<CVector>,
    h: f64,
    smooth: bool,
}

impl BoundaryControl {
    pub fn new(samples: Vec<CVector>, h: f64, smooth: bool) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Dimension("control needs at least two samples".into()));
        }
        let n = samples[0].len();
        if samples.iter().any(|v| v.len() != n) {
            return Err(Error::Dimension("control samples have mixed channel dimension".into()));
        }
        if smooth {
            let scale = samples.iter().map(|v| v.norm()).fold(1.0f64, f64::max);
            if samples[0].norm() > 1.0e-10 * scale {
                return Err(Error::Numerical(
                    "smooth control must vanish at t = 0".into(),
                ));
            }
            let slope = (&samples[1] - &samples[0]).norm() / h;
            if slope > SMOOTH_SLOPE_BOUND * scale {
                return Err(Error::Numerical(format!(
                    "smooth control jumps at t = 0: |f(h) - f(0)|/h = {slope:.3e}"
                )));
            }
        }
        Ok(BoundaryControl { samples, h, smooth })
    }

    /// Sample a closed-form control on the node grid of `[0, T]`.
    pub fn from_fn(grid: &Grid, smooth: bool, f: impl Fn(f64) -> CVector) -> Result<Self> {
        let samples = (0..=grid.n_steps())
            .map(|j| f(j as f64 * grid.h()))
            .collect();
        Self::new(samples, grid.h(), smooth)
    }

    /// Scalar-profile control in channel `channel` of dimension `n`.
    pub fn scalar_profile(
        grid: &Grid,
        channel: usize,
        smooth: bool,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let n = grid.n_channels();
        Self::from_fn(grid, smooth, |t| {
            CVector::from_fn(n, |i, _| if i == channel { cr(f(t)) } else { cr(0.0) })
        })
    }

    pub fn n_channels(&self) -> usize {
        self.samples[0].len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn smooth(&self) -> bool {
        self.smooth
    }

    /// Number of steps `N`; there are `N + 1` samples.
    pub fn n_steps(&self) -> usize {
        self.samples.len() - 1
    }

    /// Value at node `t_j = j h`.
    pub fn node(&self, j: usize) -> &CVector {
        &self.samples[j]
    }

    /// Value at the midpoint `t = (j - 1/2) h` by neighbor averaging.
    pub fn midpoint(&self, j: usize) -> CVector {
        (&self.samples[j - 1] + &self.samples[j]) * cr(0.5)
    }

    /// Midpoint-sampled vector in the operator function space `C^{N n}`.
    pub fn to_midpoint_vector(&self) -> CVector {
        let n = self.n_channels();
        let big_n = self.n_steps();
        let mut out = CVector::zeros(big_n * n);
        for j in 1..=big_n {
            let v = self.midpoint(j);
            for ch in 0..n {
                out[(j - 1) * n + ch] = v[ch];
            }
        }
        out
    }

    /// Control delayed by `m` steps: `f_m(t) = f(t - m h)`, zero-padded.
    pub fn delayed(&self, m: usize) -> Result<Self> {
        let n = self.n_channels();
        let samples = (0..self.samples.len())
            .map(|j| {
                if j >= m {
                    self.samples[j - m].clone()
                } else {
                    CVector::zeros(n)
                }
            })
            .collect();
        Self::new(samples, self.h, self.smooth)
    }

    /// Linear combination `a f + b g`.
    pub fn linear_combination(a: crate::linalg::C64, f: &Self, b: crate::linalg::C64, g: &Self) -> Result<Self> {
        if f.samples.len() != g.samples.len() || f.n_channels() != g.n_channels() {
            return Err(Error::Dimension("controls have different sampling".into()));
        }
        let samples = f
            .samples
            .iter()
            .zip(g.samples.iter())
            .map(|(x, y)| x * a + y * b)
            .collect();
        Self::new(samples, f.h, f.smooth && g.smooth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(64, 1.0 / 64.0, 1, 1.0).unwrap()
    }

    #[test]
    fn sine_control_is_smooth() {
        let g = grid();
        let f = BoundaryControl::scalar_profile(&g, 0, true, |t| (std::f64::consts::PI * t).sin());
        assert!(f.is_ok());
    }

    #[test]
    fn jump_control_rejected_as_smooth() {
        let g = grid();
        let f = BoundaryControl::scalar_profile(&g, 0, true, |t| if t > 0.0 { 1.0 } else { 0.0 });
        assert!(f.is_err());
        let f = BoundaryControl::scalar_profile(&g, 0, false, |t| if t > 0.0 { 1.0 } else { 0.0 });
        assert!(f.is_ok());
    }

    #[test]
    fn midpoint_vector_layout() {
        let g = Grid::new(8, 0.125, 2, 1.0).unwrap();
        let f = BoundaryControl::from_fn(&g, false, |t| {
            CVector::from_vec(vec![cr(t), cr(2.0 * t)])
        })
        .unwrap();
        let v = f.to_midpoint_vector();
        assert_eq!(v.len(), 16);
        let t3 = g.midpoint(3);
        assert!((v[4].re - t3).abs() < 1e-14);
        assert!((v[5].re - 2.0 * t3).abs() < 1e-14);
    }
}
