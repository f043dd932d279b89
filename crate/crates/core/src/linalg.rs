//! Small dense helpers shared by the coalescence recursions.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{Accum, Par};

use crate::Matrix;

/// `U M U^T` for a symmetric `M`, with `U` given by its transpose `u_t` (`N x C`).
pub(crate) fn sandwich_symmetric(u_t: &Matrix, m: &Matrix) -> Matrix {
    let c = u_t.ncols();
    let mut x = Matrix::zeros(c, m.ncols());
    faer::linalg::matmul::matmul(x.as_mut(), Accum::Replace, u_t.transpose(), m.as_ref(), 1.0, Par::Seq);
    let mut y = Matrix::zeros(c, c);
    triangular::matmul(
        y.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        x.as_ref(),
        BlockStructure::Rectangular,
        u_t.as_ref(),
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    for j in 0..c {
        for i in 0..j {
            y[(i, j)] = y[(j, i)];
        }
    }
    y
}

/// `sum_{k,l} m(k,l) a_k b_l`.
pub(crate) fn quad_form(m: &Matrix, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(m.nrows(), a.len());
    debug_assert_eq!(m.ncols(), b.len());
    (0..m.ncols())
        .map(|l| {
            let col = m.col_as_slice(l);
            b[l] * col.iter().zip(a).map(|(x, y)| x * y).sum::<f64>()
        })
        .sum()
}

/// `m v`.
pub(crate) fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for (l, &vl) in v.iter().enumerate() {
        if vl == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(m.col_as_slice(l)) {
            *o += x * vl;
        }
    }
    out
}

pub(crate) fn total(m: &Matrix) -> f64 {
    (0..m.ncols()).map(|j| m.col_as_slice(j).iter().sum::<f64>()).sum()
}

pub(crate) fn ones_minus_identity(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sandwich_matches_naive() {
        let n = 7;
        let c = 4;
        let u_t = Matrix::from_fn(n, c, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0);
        let m = Matrix::from_fn(n, n, |i, j| ((i + j) % 5) as f64 - 1.5 + (i * j) as f64 * 0.01);
        let y = sandwich_symmetric(&u_t, &m);
        for a in 0..c {
            for b in 0..c {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += u_t[(i, a)] * m[(i, j)] * u_t[(j, b)];
                    }
                }
                assert!((y[(a, b)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quad_form_and_mat_vec() {
        let m = Matrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        let a = [1.0, -1.0, 2.0];
        let b = [0.5, 0.0, 1.0];
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += m[(i, j)] * a[i] * b[j];
            }
        }
        assert_eq!(quad_form(&m, &a, &b), s);
        let mv = mat_vec(&m, &b);
        let ab: f64 = mv.iter().zip(&a).map(|(x, y)| x * y).sum();
        assert!((ab - s).abs() < 1e-12);
        assert_eq!(total(&m), 36.0);
    }
}
