use crate::core::Grid;
use crate::error::{Error, Result};
use crate::linalg::{C64, CVector};

/// `h`-weighted pairing of two discretized `L_2([0,T]; C^n)` elements,
/// conjugate-linear in the first argument.
pub fn inner_product(f: &CVector, g: &CVector, grid: &Grid) -> Result<C64> {
    if f.len() != g.len() {
        return Err(Error::Dimension(format!(
            "inner product of lengths {} and {}",
            f.len(),
            g.len()
        )));
    }
    Ok(f.dotc(g) * crate::linalg::cr(grid.h()))
}

/// Norm induced by `inner_product`.
pub fn l2_norm(f: &CVector, grid: &Grid) -> f64 {
    f.norm() * grid.h().sqrt()
}

/// Composite Simpson weights on `m + 1` equispaced nodes with step `h`.
/// For odd `m` the last three intervals use the 3/8 rule. Used for the
/// defect-space pairings on `[0, X_max]`, where trapezoid accuracy is not
/// enough for the stated Gram-matrix tolerances.
pub fn simpson_weights(m: usize, h: f64) -> Vec<f64> {
    assert!(m >= 3, "need at least 3 intervals");
    let mut w = vec![0.0; m + 1];
    let simpson_end = if m % 2 == 0 { m } else { m - 3 };
    if simpson_end >= 2 {
        w[0] += h / 3.0;
        w[simpson_end] += h / 3.0;
        for k in 1..simpson_end {
            w[k] += if k % 2 == 1 { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
        }
    }
    if m % 2 == 1 {
        // 3/8 rule on the trailing [m-3, m].
        let c = 3.0 * h / 8.0;
        w[m - 3] += c;
        w[m - 2] += 3.0 * c;
        w[m - 1] += 3.0 * c;
        w[m] += c;
    }
    w
}

/// Simpson quadrature of node samples `f_0..f_m` with step `h`.
pub fn simpson_quadrature(samples: &[C64], h: f64) -> C64 {
    let m = samples.len() - 1;
    let w = simpson_weights(m, h);
    samples
        .iter()
        .zip(w.iter())
        .map(|(f, &wk)| f * crate::linalg::cr(wk))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cr;

    #[test]
    fn unit_constant_on_unit_interval() {
        let g = Grid::new(8, 1.0 / 8.0, 1, 1.0).unwrap();
        let f = CVector::from_element(8, cr(1.0));
        let v = inner_product(&f, &f, &g).unwrap();
        assert!((v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-15);
    }

    #[test]
    fn orthogonal_channels() {
        let g = Grid::new(8, 1.0 / 8.0, 2, 1.0).unwrap();
        let mut f = CVector::zeros(16);
        let mut h = CVector::zeros(16);
        for j in 0..8 {
            let t = g.midpoint(j + 1);
            f[2 * j] = cr(t);
            h[2 * j + 1] = cr(t);
        }
        let v = inner_product(&f, &h, &g).unwrap();
        assert_eq!(v, cr(0.0));
    }

    #[test]
    fn sin_squared_integral() {
        // Independent oracle: int_0^1 sin^2(pi t) dt = 1/2.
        let g = Grid::new(256, 1.0 / 256.0, 1, 1.0).unwrap();
        let f = CVector::from_fn(256, |j, _| cr((std::f64::consts::PI * g.midpoint(j + 1)).sin()));
        let v = inner_product(&f, &f, &g).unwrap();
        assert!((v.re - 0.5).abs() < 1e-4, "got {}", v.re);
    }

    #[test]
    fn conjugate_symmetry() {
        let g = Grid::new(8, 1.0 / 8.0, 1, 1.0).unwrap();
        let f = CVector::from_fn(8, |j, _| crate::linalg::c(j as f64, 1.0));
        let gvec = CVector::from_fn(8, |j, _| crate::linalg::c(1.0, -(j as f64)));
        let a = inner_product(&f, &gvec, &g).unwrap();
        let b = inner_product(&gvec, &f, &g).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
    }

    #[test]
    fn length_mismatch_is_error() {
        let g = Grid::new(8, 1.0 / 8.0, 1, 1.0).unwrap();
        let f = CVector::zeros(8);
        let h = CVector::zeros(9);
        assert!(inner_product(&f, &h, &g).is_err());
    }

    #[test]
    fn simpson_exact_on_cubics_and_decay() {
        let h = 0.01;
        let m = 2000;
        let samples: Vec<_> = (0..=m).map(|k| cr((k as f64 * h).powi(3))).collect();
        let v = simpson_quadrature(&samples, h);
        let exact = (m as f64 * h).powi(4) / 4.0;
        assert!((v.re - exact).abs() < 1e-9 * exact);

        let samples: Vec<_> = (0..=m).map(|k| cr((-2.0 * k as f64 * h).exp())).collect();
        let v = simpson_quadrature(&samples, h);
        assert!((v.re - 0.5).abs() < 1e-8, "got {}", v.re);
    }

    #[test]
    fn simpson_weights_odd_interval_count() {
        let w = simpson_weights(7, 0.1);
        let total: f64 = w.iter().sum();
        assert!((total - 0.7).abs() < 1e-14);
    }
}
