use crate::error::{Error, Result};
use crate::linalg::{cr, CMatrix, CVector};

/// Second difference of a `C^n`-valued sampled function stored as an
/// `(m n)`-vector of `n`-blocks. Interior points get the central stencil
/// `(f_{i-1} - 2 f_i + f_{i+1}) / h^2`; endpoints get the 4-point one-sided
/// stencil `(2, -5, 4, -1) / h^2`, exact on cubics.
pub fn second_difference(f: &CVector, n_channels: usize, h: f64) -> Result<CVector> {
    let m = block_count(f.len(), n_channels)?;
    let mut out = CVector::zeros(f.len());
    let hh = h * h;
    let get = |i: usize, ch: usize| f[i * n_channels + ch];
    if m == 3 {
        for ch in 0..n_channels {
            let v = (get(0, ch) - 2.0 * get(1, ch) + get(2, ch)) / cr(hh);
            for i in 0..3 {
                out[i * n_channels + ch] = v;
            }
        }
        return Ok(out);
    }
    for ch in 0..n_channels {
        for i in 0..m {
            let v = if i == 0 {
                2.0 * get(0, ch) - 5.0 * get(1, ch) + 4.0 * get(2, ch) - get(3, ch)
            } else if i == m - 1 {
                2.0 * get(m - 1, ch) - 5.0 * get(m - 2, ch) + 4.0 * get(m - 3, ch)
                    - get(m - 4, ch)
            } else {
                get(i - 1, ch) - 2.0 * get(i, ch) + get(i + 1, ch)
            };
            out[i * n_channels + ch] = v / cr(hh);
        }
    }
    Ok(out)
}

/// Matrix of `second_difference` on `m` blocks of `n` channels.
pub fn second_difference_matrix(m: usize, n_channels: usize, h: f64) -> Result<CMatrix> {
    block_count(m * n_channels, n_channels)?;
    let dim = m * n_channels;
    let mut a = CMatrix::zeros(dim, dim);
    let hh = h * h;
    let mut set = |i: usize, j: usize, v: f64| {
        for ch in 0..n_channels {
            a[(i * n_channels + ch, j * n_channels + ch)] = cr(v / hh);
        }
    };
    if m == 3 {
        for i in 0..3 {
            set(i, 0, 1.0);
            set(i, 1, -2.0);
            set(i, 2, 1.0);
        }
        return Ok(a);
    }
    set(0, 0, 2.0);
    set(0, 1, -5.0);
    set(0, 2, 4.0);
    set(0, 3, -1.0);
    for i in 1..m - 1 {
        set(i, i - 1, 1.0);
        set(i, i, -2.0);
        set(i, i + 1, 1.0);
    }
    set(m - 1, m - 1, 2.0);
    set(m - 1, m - 2, -5.0);
    set(m - 1, m - 3, 4.0);
    set(m - 1, m - 4, -1.0);
    Ok(a)
}

fn block_count(len: usize, n_channels: usize) -> Result<usize> {
    if n_channels == 0 || len % n_channels != 0 {
        return Err(Error::Dimension(format!(
            "vector of length {len} is not a stack of {n_channels}-blocks"
        )));
    }
    let m = len / n_channels;
    if m < 3 {
        return Err(Error::Dimension(format!(
            "second difference needs at least 3 sample blocks, got {m}"
        )));
    }
    Ok(m)
}
