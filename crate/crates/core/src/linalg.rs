//! Small dense linear-algebra helpers built around a Cholesky factor.
//!
//! Every solve, inverse and log-determinant in the crate goes through
//! [`Cholesky`], so SPD failures surface as [`Error::NotPositiveDefinite`]
//! with the index of the leading minor that broke.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factor `a`, failing on the first non-positive pivot.
    pub fn new(a: &DMatrix<f64>, what: &str) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "{what}: expected square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    what: what.to_string(),
                    minor: j + 1,
                    context: None,
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    /// Factor `a`; on failure retry once with `1e-10 · tr(a)/p` added to the
    /// diagonal.
    pub fn new_jittered(a: &DMatrix<f64>, what: &str) -> Result<Self> {
        match Self::new(a, what) {
            Ok(c) => Ok(c),
            Err(first) => {
                let p = a.nrows().max(1) as f64;
                let jitter = 1e-10 * a.trace().abs() / p;
                if !(jitter > 0.0) {
                    return Err(first);
                }
                let mut b = a.clone();
                for i in 0..a.nrows() {
                    b[(i, i)] += jitter;
                }
                Self::new(&b, what)
            }
        }
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// ln |A| = 2 Σ ln L_ii.
    pub fn ln_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    fn forward(&self, b: &mut DVector<f64>) {
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    fn backward(&self, b: &mut DVector<f64>) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// Solve `L z = b` (whitening).
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.forward(&mut x);
        x
    }

    /// `A⁻¹`, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::<f64>::zeros(n);
            e[j] = 1.0;
            let col = self.solve(&e);
            inv.set_column(j, &col);
        }
        symmetrize(&inv)
    }

    /// `L v`, used to colour standard-normal draws.
    pub fn mul_l(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.l * v
    }
}

/// (A + Aᵀ)/2.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Inverse of an SPD matrix via Cholesky (with one jitter retry).
pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(Cholesky::new_jittered(a, what)?.inverse())
}

/// ln |A| for SPD `A`.
pub fn spd_ln_det(a: &DMatrix<f64>, what: &str) -> Result<f64> {
    Ok(Cholesky::new_jittered(a, what)?.ln_det())
}

/// tr(A B) without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Numerical rank from the pivots of a Cholesky-like elimination on XᵀX.
pub fn gram_rank(xtx: &DMatrix<f64>) -> usize {
    let n = xtx.nrows();
    let scale = (0..n).map(|i| xtx[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale * n as f64;
    let mut a = xtx.clone();
    let mut rank = 0;
    for j in 0..n {
        // pivot on the largest remaining diagonal
        let (piv, val) = (j..n)
            .map(|i| (i, a[(i, i)]))
            .fold((j, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if !(val > tol) {
            break;
        }
        a.swap_rows(j, piv);
        a.swap_columns(j, piv);
        rank += 1;
        let d = a[(j, j)];
        for i in (j + 1)..n {
            let f = a[(i, j)] / d;
            for k in (j + 1)..n {
                a[(i, k)] -= f * a[(j, k)];
            }
        }
        for i in (j + 1)..n {
            a[(i, j)] = 0.0;
            a[(j, i)] = 0.0;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_and_inverts() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let c = Cholesky::new(&a, "a").unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = c.solve(&b);
        assert!((&a * &x - &b).norm() < 1e-12);
        let inv = c.inverse();
        assert!((&a * &inv - DMatrix::identity(3, 3)).norm() < 1e-12);
        let det = a.determinant();
        assert!((c.ln_det() - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn reports_failing_minor() {
        // second leading minor is 1*1 - 2*2 < 0
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match Cholesky::new(&a, "sigma") {
            Err(Error::NotPositiveDefinite { what, minor, .. }) => {
                assert_eq!(what, "sigma");
                assert_eq!(minor, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jitter_rescues_semidefinite_but_not_indefinite() {
        let psd = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(Cholesky::new(&psd, "psd").is_err());
        assert!(Cholesky::new_jittered(&psd, "psd").is_ok());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(Cholesky::new_jittered(&indef, "indef").is_err());
    }

    #[test]
    fn rank_of_gram() {
        let x = DMatrix::from_row_slice(4, 3, &[1., 1., 2., 1., 2., 4., 1., 3., 6., 1., 4., 8.]);
        assert_eq!(gram_rank(&(x.transpose() * &x)), 2);
        let x = DMatrix::from_row_slice(3, 2, &[1., 0., 1., 1., 1., 2.]);
        assert_eq!(gram_rank(&(x.transpose() * &x)), 2);
    }
}
