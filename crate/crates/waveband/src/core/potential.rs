use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::linalg::{c, cr, CMatrix};

const HERMITIAN_INPUT_TOL: f64 = 1.0e-12;

/// Sampled `n x n` Hermitian matrix field `q(x)` on a truncated half-line,
/// with samples at the nodes `x_i = i h`, `i = 0..=x_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPotential {
    samples: Vec<CMatrix>,
    h: f64,
    n: usize,
    source: String,
}

impl HermitianPotential {
    pub fn new(samples: Vec<CMatrix>, h: f64, source: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dimension("potential needs at least one sample".into()));
        }
        let n = samples[0].nrows();
        for (i, q) in samples.iter().enumerate() {
            if q.nrows() != n || q.ncols() != n {
                return Err(Error::Dimension(format!(
                    "sample {i} is {}x{}, expected {n}x{n}",
                    q.nrows(),
                    q.ncols()
                )));
            }
            if q.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Numerical(format!("non-finite entry in sample {i}")));
            }
            let scale = q.norm().max(1.0);
            if (q - q.adjoint()).norm() > HERMITIAN_INPUT_TOL * scale {
                return Err(Error::Numerical(format!(
                    "sample {i} deviates from Hermitian beyond {HERMITIAN_INPUT_TOL:.0e}"
                )));
            }
        }
        Ok(HermitianPotential {
            samples,
            h,
            n,
            source: source.into(),
        })
    }

    /// Sample a closed-form matrix field on `x_i = i h`, `i = 0..=x_steps`.
    pub fn from_fn(
        h: f64,
        x_steps: usize,
        n: usize,
        source: impl Into<String>,
        f: impl Fn(f64) -> CMatrix,
    ) -> Result<Self> {
        let samples = (0..=x_steps).map(|i| f(i as f64 * h)).collect();
        let _ = n;
        Self::new(samples, h, source)
    }

    /// Builtin potential grammar:
    /// `zero`, `const:<c>`, `bump:<amp>,<center>,<width>`,
    /// `diag:<c1>,...,<cn>`, `hbump:<amp>,<center>,<width>` (2x2 Hermitian),
    /// `file:<path>`.
    ///
    /// `bump` is `1 + amp * exp(-(x-center)^2 / width)` times the identity:
    /// the unit background keeps the potential uniformly positive so the
    /// defect frame exists.
    pub fn builtin(spec: &str, n: usize, h: f64, x_steps: usize) -> Result<Self> {
        let spec = spec.trim();
        if let Some(path) = spec.strip_prefix("file:") {
            return Self::load(std::path::Path::new(path.trim()));
        }
        let ident = CMatrix::identity(n, n);
        if spec == "zero" {
            return Self::from_fn(h, x_steps, n, spec, |_| CMatrix::zeros(n, n));
        }
        if let Some(v) = spec.strip_prefix("const:") {
            let v: f64 = parse_f64(v)?;
            return Self::from_fn(h, x_steps, n, spec, |_| &ident * cr(v));
        }
        if let Some(rest) = spec.strip_prefix("bump:") {
            let p = parse_f64_list(rest, 3)?;
            let (amp, center, width) = (p[0], p[1], p[2]);
            if width <= 0.0 {
                return Err(Error::Config("bump width must be positive".into()));
            }
            return Self::from_fn(h, x_steps, n, spec, |x| {
                &ident * cr(1.0 + amp * (-(x - center).powi(2) / width).exp())
            });
        }
        if let Some(rest) = spec.strip_prefix("diag:") {
            let vals: Vec<f64> = rest
                .split(',')
                .map(parse_f64)
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(Error::Config(format!(
                    "diag potential needs {n} entries, got {}",
                    vals.len()
                )));
            }
            return Self::from_fn(h, x_steps, n, spec, |_| {
                CMatrix::from_fn(n, n, |i, j| if i == j { cr(vals[i]) } else { cr(0.0) })
            });
        }
        if let Some(rest) = spec.strip_prefix("hbump:") {
            if n != 2 {
                return Err(Error::Config("hbump is a 2x2 potential; set n = 2".into()));
            }
            let p = parse_f64_list(rest, 3)?;
            let (amp, center, width) = (p[0], p[1], p[2]);
            if width <= 0.0 {
                return Err(Error::Config("hbump width must be positive".into()));
            }
            // Fixed Hermitian mixing block with complex off-diagonal coupling.
            let mix = CMatrix::from_row_slice(
                2,
                2,
                &[c(1.0, 0.0), c(0.3, 0.2), c(0.3, -0.2), c(0.8, 0.0)],
            );
            let id2 = CMatrix::identity(2, 2);
            return Self::from_fn(h, x_steps, 2, spec, |x| {
                &id2 + &mix * cr(amp * (-(x - center).powi(2) / width).exp())
            });
        }
        Err(Error::Config(format!("unknown potential spec '{spec}'")))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn x_max(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.h
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Sample at the node `x_i = i h`.
    pub fn node(&self, i: usize) -> &CMatrix {
        &self.samples[i]
    }

    pub fn samples(&self) -> &[CMatrix] {
        &self.samples
    }

    /// Value on the half-step lattice `x = k h / 2`: nodes for even `k`,
    /// neighbor averages for odd `k` (second-order interpolation).
    pub fn half_node(&self, k: usize) -> CMatrix {
        if k % 2 == 0 {
            self.samples[k / 2].clone()
        } else {
            (&self.samples[(k - 1) / 2] + &self.samples[(k + 1) / 2]) * cr(0.5)
        }
    }

    /// Checks that the samples cover `[0, x]`.
    pub fn require_coverage(&self, x: f64) -> Result<()> {
        if self.x_max() + 1.0e-9 * self.h < x {
            return Err(Error::Coverage(format!(
                "potential covers [0, {}], need [0, {x}]",
                self.x_max()
            )));
        }
        Ok(())
    }

    /// Smallest eigenvalue over the samples with `x >= x_from` (Hermitian
    /// samples, so Gershgorin-free exact check via eigenvalues).
    pub fn min_eigenvalue_beyond(&self, x_from: f64) -> Result<f64> {
        let start = (x_from / self.h).floor().max(0.0) as usize;
        let mut min = f64::INFINITY;
        for q in self.samples.iter().skip(start.min(self.samples.len() - 1)) {
            let (_, vals) = crate::linalg::hermitian_eigen(q)?;
            if let Some(v) = vals.first() {
                min = min.min(*v);
            }
        }
        Ok(min)
    }

    /// Write in the interchange format: a header line
    /// `# n=<n> h=<h> Xmax=<X_max>` followed by one comma-separated row per
    /// sample: `x, Re q_11, Im q_11, ...` in row-major order.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# n={} h={} Xmax={}\n", self.n, self.h, self.x_max()));
        for (i, q) in self.samples.iter().enumerate() {
            let mut row = vec![format!("{}", i as f64 * self.h)];
            for r in 0..self.n {
                for c in 0..self.n {
                    row.push(format!("{}", q[(r, c)].re));
                    row.push(format!("{}", q[(r, c)].im));
                }
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty potential file".into()))?;
        let fields = parse_header(header)?;
        let n = *fields
            .get("n")
            .ok_or_else(|| Error::Parse("missing n in potential header".into()))?
            as usize;
        let h = fields
            .iter()
            .find(|(k, _)| *k == "h")
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Parse("missing h in potential header".into()))?;
        let mut samples = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(parse_f64)
                .collect::<Result<_>>()?;
            if vals.len() != 1 + 2 * n * n {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    ln + 2,
                    vals.len(),
                    1 + 2 * n * n
                )));
            }
            let q = CMatrix::from_fn(n, n, |r, c| {
                Complex::new(vals[1 + 2 * (r * n + c)], vals[2 + 2 * (r * n + c)])
            });
            samples.push(q);
        }
        Self::new(samples, h, format!("file:{}", path.display()))
    }
}

fn parse_f64(s: impl AsRef<str>) -> Result<f64> {
    s.as_ref()
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad number '{}': {e}", s.as_ref())))
}

fn parse_f64_list(s: &str, count: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = s.split(',').map(parse_f64).collect::<Result<_>>()?;
    if vals.len() != count {
        return Err(Error::Config(format!(
            "expected {count} comma-separated numbers, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

pub(crate) fn parse_header(line: &str) -> Result<std::collections::BTreeMap<String, f64>> {
    let line = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("header line must start with '#'".into()))?;
    let mut map = std::collections::BTreeMap::new();
    for item in line.split_whitespace() {
        if let Some((k, v)) = item.split_once('=') {
            // Role labels and other non-numeric fields are skipped here and
            // reparsed by the caller when needed.
            if let Ok(x) = v.parse::<f64>() {
                map.insert(k.to_string(), x);
            }
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_const_and_diag() {
        let p = HermitianPotential::builtin("const:2.5", 1, 0.1, 10).unwrap();
        assert_eq!(p.node(3)[(0, 0)], cr(2.5));
        let d = HermitianPotential::builtin("diag:1,4", 2, 0.1, 10).unwrap();
        assert_eq!(d.node(0)[(1, 1)], cr(4.0));
        assert_eq!(d.node(0)[(0, 1)], cr(0.0));
    }

    #[test]
    fn rejects_non_hermitian() {
        let bad = vec![CMatrix::from_row_slice(
            2,
            2,
            &[cr(1.0), c(0.5, 0.1), c(0.5, 0.1), cr(1.0)],
        )];
        assert!(HermitianPotential::new(bad, 0.1, "bad").is_err());
    }

    #[test]
    fn file_round_trip_is_bit_identical() {
        let p = HermitianPotential::builtin("hbump:0.5,0.4,0.02", 2, 1.0 / 128.0, 200).unwrap();
        let dir = std::env::temp_dir().join("waveband_pot_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.csv");
        p.save(&path).unwrap();
        let q = HermitianPotential::load(&path).unwrap();
        assert_eq!(p.samples(), q.samples());
        assert_eq!(p.h(), q.h());
    }

    #[test]
    fn half_node_interpolates() {
        let p = HermitianPotential::builtin("const:3", 1, 0.5, 4).unwrap();
        assert_eq!(p.half_node(3)[(0, 0)], cr(3.0));
    }
}
