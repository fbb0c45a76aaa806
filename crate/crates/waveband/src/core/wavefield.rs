use crate::error::{Error, Result};
use crate::linalg::{cr, CVector};

/// Wave values `u(x_i, t_j)` on the node lattice of `[0, X_max] x [0, T]`,
/// stored as `values[i][j]` with `x_i = i h`, `t_j = j h`.
#[derive(Debug, Clone)]
pub struct WaveField {
    values: Vec<Vec<CVector>>,
    h: f64,
}

impl WaveField {
    pub fn new(values: Vec<Vec<CVector>>, h: f64) -> Result<Self> {
        if values.is_empty() || values[0].is_empty() {
            return Err(Error::Dimension("empty wave field".into()));
        }
        let nt = values[0].len();
        if values.iter().any(|col| col.len() != nt) {
            return Err(Error::Dimension("ragged wave field storage".into()));
        }
        Ok(WaveField { values, h })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn x_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn t_nodes(&self) -> usize {
        self.values[0].len()
    }

    pub fn n_channels(&self) -> usize {
        self.values[0][0].len()
    }

    pub fn at(&self, i: usize, j: usize) -> &CVector {
        &self.values[i][j]
    }

    /// Node-sampled slice `u(., t_j)`.
    pub fn time_slice(&self, j: usize) -> Vec<CVector> {
        self.values.iter().map(|col| col[j].clone()).collect()
    }

    /// Midpoint-sampled final slice restricted to `x in [0, T]`, as an
    /// element of the discretized state space `C^{N n}` (neighbor averages).
    pub fn final_slice_midpoint(&self, n_steps: usize) -> CVector {
        let n = self.n_channels();
        let j = self.t_nodes() - 1;
        let mut out = CVector::zeros(n_steps * n);
        for i in 1..=n_steps {
            let v = (&self.values[i - 1][j] + &self.values[i][j]) * cr(0.5);
            for ch in 0..n {
                out[(i - 1) * n + ch] = v[ch];
            }
        }
        out
    }

    /// Largest `|u(x_i, t_j)|` over nodes violating the light cone
    /// `x <= t + 2h`.
    pub fn light_cone_leak(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, col) in self.values.iter().enumerate() {
            for (j, v) in col.iter().enumerate() {
                if (i as f64) * self.h > (j as f64) * self.h + 2.0 * self.h + 1.0e-12 {
                    worst = worst.max(v.norm());
                }
            }
        }
        worst
    }

    /// Comma-separated export `x, t, Re/Im channel values`, optionally a
    /// single time slice.
    pub fn export_csv(&self, slice: Option<usize>) -> String {
        let mut out = String::from("# x,t,channels Re/Im\n");
        let js: Vec<usize> = match slice {
            Some(j) => vec![j],
            None => (0..self.t_nodes()).collect(),
        };
        for i in 0..self.x_nodes() {
            for &j in &js {
                let mut row = vec![
                    format!("{}", i as f64 * self.h),
                    format!("{}", j as f64 * self.h),
                ];
                for z in self.values[i][j].iter() {
                    row.push(format!("{}", z.re));
                    row.push(format!("{}", z.im));
                }
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        out
    }
}
