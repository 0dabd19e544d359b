//! Ridge least squares on dense design matrices and a compressed sparse row
//! matrix for reservoir updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `min ||X W - Y||² + lambda ||W||²` through the normal equations.
pub fn ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let mut gram = x.tr_mul(x);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = x.tr_mul(y);
    solve_spd(gram, rhs)
}

/// Solves a symmetric positive (semi)definite system, falling back to LU when
/// Cholesky rejects it.
pub fn solve_spd(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        let sol = ch.solve(&b);
        if sol.iter().all(|v| v.is_finite()) {
            return Ok(sol);
        }
    }
    let sol = a.lu().solve(&b).ok_or(Error::Singular)?;
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(Error::Singular)
    }
}

/// Ridge fit with an unpenalized intercept (features and targets are centered
/// before the solve). Returns `(weights p×q, intercept q)`.
pub fn ridge_with_intercept(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = x.nrows() as f64;
    let xm = x.row_mean();
    let ym = y.row_mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &xm;
    }
    let mut yc = y.clone();
    for mut row in yc.row_iter_mut() {
        row -= &ym;
    }
    debug_assert!(n > 0.0);
    let w = ridge(&xc, &yc, lambda)?;
    let intercept = (ym - xm * &w).transpose();
    Ok((w, intercept))
}

/// Square matrix in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets sorted by row.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut row_start = vec![0; n + 1];
        for &(r, _, _) in triplets {
            row_start[r + 1] += 1;
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        Self {
            n,
            row_start,
            cols: triplets.iter().map(|t| t.1).collect(),
            vals: triplets.iter().map(|t| t.2).collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn scale(&mut self, c: f64) {
        self.vals.iter_mut().for_each(|v| *v *= c);
    }

    /// `out = self * x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.row_start[i], self.row_start[i + 1]);
            *o = self.cols[a..b].iter().zip(&self.vals[a..b]).map(|(&c, v)| v * x[c]).sum();
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_start[i]..self.row_start[i + 1] {
                m[(i, self.cols[k])] = self.vals[k];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_matches_dense_product() {
        let t = [(0, 1, 2.0), (1, 0, -1.0), (1, 2, 3.0), (2, 2, 0.5)];
        let m = Csr::from_triplets(3, &t);
        let x = [1.0, 2.0, 4.0];
        let mut out = [0.0; 3];
        m.mul_vec(&x, &mut out);
        let dense = m.to_dense() * DVector::from_column_slice(&x);
        assert_eq!(out.to_vec(), dense.as_slice().to_vec());
        assert_eq!(m.nnz(), 4);
    }

    #[test]
    fn ridge_recovers_exact_linear_map_in_small_lambda_limit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let w_true = DMatrix::from_row_slice(2, 1, &[3.0, -2.0]);
        let y = &x * &w_true;
        let w = ridge(&x, &y, 1e-12).unwrap();
        assert!((w - w_true).abs().max() < 1e-9);
    }

    #[test]
    fn intercept_is_not_shrunk() {
        let x = DMatrix::from_row_slice(5, 1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = x.map(|v| 0.5 * v + 10.0);
        let (w, b) = ridge_with_intercept(&x, &y, 1e-10).unwrap();
        assert!((w[(0, 0)] - 0.5).abs() < 1e-9);
        assert!((b[0] - 10.0).abs() < 1e-8);
    }
}
