use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x -> w^T x`, no intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::SchemaMismatch(format!(
                "linear statistic has {} weights, row has {} features",
                self.weights.len(),
                row.len()
            )));
        }
        Ok(self.weights.iter().zip(row).map(|(w, x)| w * x).sum())
    }
}

/// Singular values below this fraction of the largest are treated as zero.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// Minimum-norm least-squares solver built from a one-sided Jacobi SVD of
/// the design matrix. Factor once, then solve for many right-hand sides.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    rows: usize,
    cols: usize,
    // retained singular triplets (u_j unit-norm, sigma_j, v_j)
    u: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    v: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LeastSquares {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (rows, cols) = x.shape();
        let mut a: Vec<Vec<f64>> = (0..cols).map(|j| x.column(j).iter().copied().collect()).collect();
        let mut v: Vec<Vec<f64>> = (0..cols)
            .map(|j| {
                let mut e = vec![0.0; cols];
                e[j] = 1.0;
                e
            })
            .collect();

        // Hestenes sweeps: rotate column pairs until mutually orthogonal.
        for _sweep in 0..60 {
            let mut rotated = false;
            for i in 0..cols {
                for j in (i + 1)..cols {
                    let alpha = dot(&a[i], &a[i]);
                    let beta = dot(&a[j], &a[j]);
                    let gamma = dot(&a[i], &a[j]);
                    if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for (ai, aj) in rotate_pair(&mut a, i, j) {
                        let (p, q) = (*ai, *aj);
                        *ai = c * p - s * q;
                        *aj = s * p + c * q;
                    }
                    for (vi, vj) in rotate_pair(&mut v, i, j) {
                        let (p, q) = (*vi, *vj);
                        *vi = c * p - s * q;
                        *vj = s * p + c * q;
                    }
                }
            }
            if !rotated {
                break;
            }
        }

        let norms: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
        let largest = norms.iter().copied().fold(0.0, f64::max);
        let mut out = Self {
            rows,
            cols,
            u: Vec::new(),
            sigma: Vec::new(),
            v: Vec::new(),
        };
        for ((col, vj), sigma) in a.into_iter().zip(v).zip(norms) {
            if largest > 0.0 && sigma > RANK_TOL * largest {
                out.u.push(col.iter().map(|x| x / sigma).collect());
                out.sigma.push(sigma);
                out.v.push(vj);
            }
        }
        out
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Retained singular triplets `(u_j, sigma_j, v_j)`, largest first.
    pub fn triplets(&self) -> Vec<(&[f64], f64, &[f64])> {
        let mut order: Vec<usize> = (0..self.sigma.len()).collect();
        order.sort_by(|&a, &b| self.sigma[b].total_cmp(&self.sigma[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .map(|j| (self.u[j].as_slice(), self.sigma[j], self.v[j].as_slice()))
            .collect()
    }

    /// Weight vector of minimum norm among the least-squares minimizers.
    pub fn solve(&self, targets: &[f64]) -> Result<Vec<f64>> {
        if targets.len() != self.rows {
            return Err(Error::SchemaMismatch(format!(
                "{} targets for {} rows",
                targets.len(),
                self.rows
            )));
        }
        let mut w = vec![0.0; self.cols];
        for ((u, &s), v) in self.u.iter().zip(&self.sigma).zip(&self.v) {
            let coef = dot(u, targets) / s;
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi += coef * vi;
            }
        }
        Ok(w)
    }

    /// Projection of `targets` onto the column space.
    pub fn fitted(&self, targets: &[f64]) -> Result<Vec<f64>> {
        if targets.len() != self.rows {
            return Err(Error::SchemaMismatch(format!(
                "{} targets for {} rows",
                targets.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.rows];
        for u in &self.u {
            let coef = dot(u, targets);
            for (o, ui) in out.iter_mut().zip(u) {
                *o += coef * ui;
            }
        }
        Ok(out)
    }
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize) -> impl Iterator<Item = (&mut f64, &mut f64)> {
    let (lo, hi) = cols.split_at_mut(j);
    lo[i].iter_mut().zip(hi[0].iter_mut())
}

pub fn fit_linear_ls(x: &DMatrix<f64>, targets: &[f64]) -> Result<LinearModel> {
    if x.nrows() == 0 {
        return Err(Error::invalid("least squares needs at least one row"));
    }
    let weights = LeastSquares::new(x).solve(targets)?;
    Ok(LinearModel { weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent route: Gaussian elimination with partial pivoting on the
    /// normal equations X^T X w = X^T t (full column rank only).
    #[allow(clippy::needless_range_loop)]
    fn normal_equations(x: &DMatrix<f64>, t: &[f64]) -> Vec<f64> {
        let p = x.ncols();
        let mut a = vec![vec![0.0; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                a[i][j] = (0..x.nrows()).map(|r| x[(r, i)] * x[(r, j)]).sum();
            }
            a[i][p] = (0..x.nrows()).map(|r| x[(r, i)] * t[r]).sum();
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let m = fit_linear_ls(&x, &[1.0, 2.0]).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_targets_give_zero_weights() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m = fit_linear_ls(&x, &[0.0; 3]).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
    }

    #[test]
    fn matches_normal_equations_on_random_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let data: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x = DMatrix::from_row_slice(6, 2, &data);
            let t: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = fit_linear_ls(&x, &t).unwrap().weights;
            let oracle = normal_equations(&x, &t);
            for (a, b) in w.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-9, "{w:?} vs {oracle:?}");
            }
        }
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        // duplicated column: minimizers are w0 + w1 = 1; min norm is (0.5, 0.5)
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let ls = LeastSquares::new(&x);
        assert_eq!(ls.rank(), 1);
        let w = ls.solve(&[1.0, 2.0, 3.0]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn residual_orthogonal_to_column_space(
            data in prop::collection::vec(-3.0f64..3.0, 24),
            t in prop::collection::vec(-1.0f64..1.0, 8),
        ) {
            // 8 x 3 with a dependent third column to exercise rank deficiency
            let mut x = DMatrix::from_row_slice(8, 3, &data[..24]);
            for r in 0..8 {
                x[(r, 2)] = x[(r, 0)] - 2.0 * x[(r, 1)];
            }
            let w = fit_linear_ls(&x, &t).unwrap().weights;
            let resid: Vec<f64> = (0..8)
                .map(|r| (0..3).map(|c| x[(r, c)] * w[c]).sum::<f64>() - t[r])
                .collect();
            for c in 0..3 {
                let g: f64 = (0..8).map(|r| x[(r, c)] * resid[r]).sum();
                prop_assert!(g.abs() <= 1e-8, "X^T r = {g}");
            }
        }
    }
}
