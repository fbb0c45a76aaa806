//! Interchange formats for operators. This is the entry point for handing a
//! connecting operator to the factorization stage without re-simulating.

use nalgebra::Complex;

use crate::core::operator::{DiscreteOperator, Role};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Dense complex table with a `# role=<role> N=<N> n=<n> h=<h>` header and
/// one comma-separated row of Re/Im pairs per matrix row.
pub fn save_operator(op: &DiscreteOperator, path: &std::path::Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# role={} N={} n={} h={}\n",
        op.role.as_str(),
        op.slots(),
        op.n,
        op.h
    ));
    for i in 0..op.matrix.nrows() {
        let mut row = Vec::with_capacity(2 * op.matrix.ncols());
        for j in 0..op.matrix.ncols() {
            row.push(format!("{}", op.matrix[(i, j)].re));
            row.push(format!("{}", op.matrix[(i, j)].im));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_operator(path: &std::path::Path) -> Result<DiscreteOperator> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty operator file".into()))?
        .trim();
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("operator header must start with '#'".into()))?;
    let mut role = Role::Other;
    let mut n = 0usize;
    let mut h = 0.0f64;
    for item in header.split_whitespace() {
        if let Some((k, v)) = item.split_once('=') {
            match k {
                "role" => role = Role::parse(v)?,
                "n" => {
                    n = v
                        .parse()
                        .map_err(|e| Error::Parse(format!("bad n '{v}': {e}")))?
                }
                "h" => {
                    h = v
                        .parse()
                        .map_err(|e| Error::Parse(format!("bad h '{v}': {e}")))?
                }
                _ => {}
            }
        }
    }
    if n == 0 || h <= 0.0 {
        return Err(Error::Parse("operator header must set n and h".into()));
    }
    let mut rows: Vec<Vec<Complex<f64>>> = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad number '{s}': {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() % 2 != 0 {
            return Err(Error::Parse("operator rows must hold Re/Im pairs".into()));
        }
        rows.push(
            vals.chunks(2)
                .map(|p| Complex::new(p[0], p[1]))
                .collect(),
        );
    }
    if rows.is_empty() {
        return Err(Error::Parse("operator file has no matrix rows".into()));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged operator rows".into()));
    }
    let m = CMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    DiscreteOperator::new(m, h, n, role)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn operator_round_trip() {
        let m = CMatrix::from_fn(4, 4, |i, j| c(i as f64 + 0.25, j as f64 - 1.5));
        let op = DiscreteOperator::new(m, 0.125, 2, Role::W).unwrap();
        let dir = std::env::temp_dir().join("waveband_op_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("op.csv");
        save_operator(&op, &path).unwrap();
        let back = load_operator(&path).unwrap();
        assert_eq!(op.matrix, back.matrix);
        assert_eq!(op.h, back.h);
        assert_eq!(op.n, back.n);
        assert_eq!(op.role, back.role);
    }

    #[test]
    fn non_hermitian_c_rejected_on_load() {
        let m = CMatrix::from_fn(2, 2, |i, j| c((i + 2 * j) as f64, 0.0));
        let op = DiscreteOperator::new(m, 0.5, 1, Role::W).unwrap();
        let dir = std::env::temp_dir().join("waveband_op_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.csv");
        save_operator(&op, &path).unwrap();
        // Rewrite the header with role C; the asymmetric payload must fail.
        let text = std::fs::read_to_string(&path).unwrap();
        let text = text.replacen("role=W", "role=C", 1);
        std::fs::write(&path, text).unwrap();
        assert!(load_operator(&path).is_err());
    }
}
