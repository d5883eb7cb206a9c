//! Constant-coefficient tridiagonal systems, factored once and solved many times.

use crate::error::{Error, Result};

/// LU factors of a tridiagonal matrix (Thomas algorithm without pivoting).
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    sub: Vec<f64>,
    // reciprocal pivots and modified super-diagonal
    inv_pivot: Vec<f64>,
    sup: Vec<f64>,
}

impl TridiagonalLu {
    /// `sub[k]` multiplies `x[k-1]` and `sup[k]` multiplies `x[k+1]` in row `k`;
    /// `sub[0]` and `sup[n-1]` are ignored.
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let n = diag.len();
        assert!(sub.len() == n && sup.len() == n, "band lengths differ");
        let mut inv_pivot = vec![0.0; n];
        let mut modified = vec![0.0; n];
        for k in 0..n {
            let pivot = if k == 0 {
                diag[0]
            } else {
                diag[k] - sub[k] * modified[k - 1]
            };
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularTridiagonal { row: k });
            }
            inv_pivot[k] = 1.0 / pivot;
            modified[k] = if k + 1 < n {
                sup[k] * inv_pivot[k]
            } else {
                0.0
            };
        }
        Ok(Self {
            sub: sub.to_vec(),
            inv_pivot,
            sup: modified,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for k in 1..n {
            rhs[k] = (rhs[k] - self.sub[k] * rhs[k - 1]) * self.inv_pivot[k];
        }
        for k in (0..n.saturating_sub(1)).rev() {
            rhs[k] -= self.sup[k] * rhs[k + 1];
        }
    }
}

/// One-shot solve of a tridiagonal system.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let lu = TridiagonalLu::factor(sub, diag, sup)?;
    let mut x = rhs.to_vec();
    lu.solve_in_place(&mut x);
    Ok(x)
}
