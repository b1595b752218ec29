//! Small dense solvers: fixed-size LU with partial pivoting and a Cholesky
//! solve for heap-allocated symmetric positive definite systems.

use alloc::vec;
use alloc::vec::Vec;

pub type Matrix<const N: usize> = [[f64; N]; N];

#[derive(Debug, Clone)]
pub struct Lu<const N: usize> {
    lu: Matrix<N>,
    perm: [usize; N],
}

impl<const N: usize> Lu<N> {
    /// Returns `None` for a numerically singular matrix.
    pub fn factor(mut a: Matrix<N>) -> Option<Self> {
        let mut perm = [0usize; N];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        for k in 0..N {
            let mut piv = k;
            let mut best = a[k][k].abs();
            for (i, row) in a.iter().enumerate().skip(k + 1) {
                if row[k].abs() > best {
                    best = row[k].abs();
                    piv = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return None;
            }
            if piv != k {
                a.swap(piv, k);
                perm.swap(piv, k);
            }
            let d = a[k][k];
            for i in k + 1..N {
                let l = a[i][k] / d;
                a[i][k] = l;
                if l != 0.0 {
                    for j in k + 1..N {
                        a[i][j] -= l * a[k][j];
                    }
                }
            }
        }
        Some(Lu { lu: a, perm })
    }

    pub fn solve(&self, b: &[f64; N]) -> [f64; N] {
        let mut x = [0.0; N];
        for i in 0..N {
            let mut s = b[self.perm[i]];
            for j in 0..i {
                s -= self.lu[i][j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..N).rev() {
            let mut s = x[i];
            for j in i + 1..N {
                s -= self.lu[i][j] * x[j];
            }
            x[i] = s / self.lu[i][i];
        }
        x
    }
}

pub fn mat_vec<const N: usize>(a: &Matrix<N>, x: &[f64; N]) -> [f64; N] {
    let mut y = [0.0; N];
    for (yi, row) in y.iter_mut().zip(a) {
        *yi = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
    y
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major, `n x n`).
/// `None` if a pivot is not positive.
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = crate::math::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Some(y)
}
