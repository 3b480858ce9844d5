use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use super::{check_selection, Method, MprReport, TildeA, Witness};
use crate::datamodel::Dataset;
use crate::error::{Error, Result};
use crate::similarity::Selection;
use crate::statclasses::{target_sq_norm, DesignMatrix, FeatureView, LeastSquares};

/// Rank-`l` thin SVD of the concatenated design matrix.
#[derive(Debug, Clone)]
pub struct SvdContext {
    pub u_l: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_l: DMatrix<f64>,
}

impl SvdContext {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        if x.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("design matrix is all zeros"));
        }
        // nalgebra's bidiagonal SVD can lose accuracy on exactly
        // rank-deficient designs (one-hot label blocks), so use Jacobi.
        let ls = LeastSquares::new(x);
        let triplets = ls.triplets();
        let u_l = DMatrix::from_columns(
            &triplets
                .iter()
                .map(|(u, _, _)| DVector::from_column_slice(u))
                .collect::<Vec<_>>(),
        );
        let v_l = DMatrix::from_columns(
            &triplets
                .iter()
                .map(|(_, _, v)| DVector::from_column_slice(v))
                .collect::<Vec<_>>(),
        );
        let singular_values = triplets.iter().map(|(_, s, _)| *s).collect();
        Ok(Self {
            u_l,
            singular_values,
            v_l,
        })
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `z = U_l^T a~`.
    pub fn project(&self, tilde: &TildeA) -> DVector<f64> {
        self.u_l.tr_mul(&DVector::from_column_slice(&tilde.values))
    }

    /// `sqrt(mk/(m+k)) * ||U_l^T a~||`.
    pub fn mpr(&self, tilde: &TildeA) -> f64 {
        target_sq_norm(tilde.m, tilde.k).sqrt() * self.project(tilde).norm()
    }

    /// Maximizing weights `w* = V_l S_l^{-1} w~*` with
    /// `w~* = sqrt(mk/(m+k)) z / ||z||`; zero when `z = 0`.
    pub fn optimal_weights(&self, tilde: &TildeA) -> Vec<f64> {
        let z = self.project(tilde);
        let norm = z.norm();
        if norm == 0.0 {
            return vec![0.0; self.v_l.nrows()];
        }
        let scale = target_sq_norm(tilde.m, tilde.k).sqrt() / norm;
        let mut coef = z * scale;
        for (c, s) in coef.iter_mut().zip(&self.singular_values) {
            *c /= s;
        }
        (&self.v_l * coef).iter().copied().collect()
    }

    /// Values of the optimal normalized statistic on every row,
    /// `sqrt(mk/(m+k)) U_l z / ||z||`.
    pub fn optimal_values(&self, tilde: &TildeA) -> Option<Vec<f64>> {
        let z = self.project(tilde);
        let norm = z.norm();
        if norm == 0.0 {
            return None;
        }
        let scale = target_sq_norm(tilde.m, tilde.k).sqrt() / norm;
        Some((&self.u_l * z).iter().map(|v| v * scale).collect())
    }
}

pub fn mpr_closed_form_linear(
    sel: &Selection,
    retrieval: &Dataset,
    curated: &Dataset,
    view: FeatureView,
) -> Result<MprReport> {
    check_selection(sel, retrieval)?;
    let design = DesignMatrix::new(retrieval, curated, view)?;
    let svd = SvdContext::new(&design.x)?;
    let tilde = TildeA::from_selection(sel, curated.len());
    Ok(MprReport {
        value: svd.mpr(&tilde),
        method: Method::ClosedLinear,
        witness: Witness::LinearWeights {
            weights: svd.optimal_weights(&tilde),
        },
        diagnostics: BTreeMap::from([("svd_rank".into(), json!(svd.rank()))]),
    })
}
