use crate::error::{Error, Result};

/// Uniform space/time discretization with characteristic-aligned steps
/// `dx = dt = h`. The horizon is always `T = N h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    h: f64,
    n_steps: usize,
    n_channels: usize,
    x_steps: usize,
}

impl Grid {
    /// Build a grid from the interior step count `N`, the step `h`, the
    /// channel dimension `n` and the half-line truncation length `X_max`
    /// (rounded up to the grid).
    pub fn new(n_steps: usize, h: f64, n_channels: usize, x_max: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Grid(format!("step h must be positive, got {h}")));
        }
        if n_steps < 8 {
            return Err(Error::Grid(format!("need N >= 8, got {n_steps}")));
        }
        if n_channels < 1 {
            return Err(Error::Grid("channel dimension n must be >= 1".into()));
        }
        let t = n_steps as f64 * h;
        if x_max < t - 1.0e-12 * t {
            return Err(Error::Grid(format!(
                "X_max = {x_max} must be >= T = {t}: waves from the boundary fill [0, T]"
            )));
        }
        let x_steps = (x_max / h - 1.0e-9).ceil().max(n_steps as f64) as usize;
        Ok(Grid {
            h,
            n_steps,
            n_channels,
            x_steps,
        })
    }

    /// Grid from `N` and the horizon `T`, with `h = T / N`.
    pub fn with_horizon(n_steps: usize, t: f64, n_channels: usize, x_max: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::Grid(format!("horizon T must be positive, got {t}")));
        }
        Self::new(n_steps, t / n_steps as f64, n_channels, x_max)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Interior step count `N`.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Channel dimension (defect index) `n`.
    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// Time horizon `T = N h`.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.h
    }

    /// Number of spatial steps covering `[0, X_max]`.
    pub fn x_steps(&self) -> usize {
        self.x_steps
    }

    pub fn x_max(&self) -> f64 {
        self.x_steps as f64 * self.h
    }

    /// Dimension of a discretized `L_2([0,T]; C^n)` element.
    pub fn dim(&self) -> usize {
        self.n_steps * self.n_channels
    }

    /// Midpoint `t = (j - 1/2) h` for slot `j` in `1..=N`.
    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 - 0.5) * self.h
    }

    /// All midpoints of `[0, T]`.
    pub fn midpoints(&self) -> Vec<f64> {
        (1..=self.n_steps).map(|j| self.midpoint(j)).collect()
    }

    /// Checks that `s` lies on the node grid of `[0, T]` and returns `s / h`.
    pub fn node_index(&self, s: f64) -> Result<usize> {
        let r = s / self.h;
        let k = r.round();
        if (r - k).abs() > 1.0e-9 || k < 0.0 || k > self.n_steps as f64 {
            return Err(Error::Grid(format!("s = {s} is not a grid node of [0, {}]", self.horizon())));
        }
        Ok(k as usize)
    }

    /// Refined grid with half the step and doubled counts.
    pub fn refined(&self) -> Result<Self> {
        Grid::new(self.n_steps * 2, self.h / 2.0, self.n_channels, self.x_max())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_is_nh() {
        let g = Grid::new(16, 0.125, 2, 4.0).unwrap();
        assert_eq!(g.horizon(), 2.0);
        assert_eq!(g.dim(), 32);
        assert_eq!(g.x_steps(), 32);
    }

    #[test]
    fn rejects_small_n_and_short_xmax() {
        assert!(Grid::new(4, 0.1, 1, 10.0).is_err());
        assert!(Grid::new(16, 0.125, 1, 1.0).is_err());
    }

    #[test]
    fn node_index_alignment() {
        let g = Grid::new(8, 0.125, 1, 1.0).unwrap();
        assert_eq!(g.node_index(0.5).unwrap(), 4);
        assert!(g.node_index(0.3).is_err());
    }
}
