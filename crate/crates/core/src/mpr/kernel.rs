use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_selection, Method, MprReport, Witness};
use crate::datamodel::Dataset;
use crate::error::{Error, Result};
use crate::similarity::Selection;
use crate::statclasses::{combined_schema, encode, FeatureView};

/// Radicands in `[-NEG_TOL, 0)` are rounding noise and clamp to zero.
const NEG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Gaussian { sigma: f64 },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            Kernel::Gaussian { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Kernel::Linear => "linear".into(),
            Kernel::Gaussian { sigma } => format!("gaussian:{sigma}"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "linear" {
            return Ok(Kernel::Linear);
        }
        if let Some(rest) = s.strip_prefix("gaussian:") {
            let sigma: f64 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad gaussian bandwidth `{rest}`")))?;
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::invalid("gaussian bandwidth must be positive"));
            }
            return Ok(Kernel::Gaussian { sigma });
        }
        Err(Error::invalid(format!(
            "unknown kernel `{s}` (expected linear or gaussian:SIGMA)"
        )))
    }
}

// Pairwise summation keeps the reduction order fixed regardless of length.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Distinct points with signed weight `count_R/k - count_C/m`. Merging
/// exact duplicates first makes matched multisets cancel to zero exactly
/// instead of leaving a rounding residue under the square root.
fn signed_points(r: Vec<Vec<f64>>, c: Vec<Vec<f64>>) -> Vec<(Vec<f64>, f64)> {
    let (k, m) = (r.len() as f64, c.len() as f64);
    let mut counts: BTreeMap<Vec<u64>, (Vec<f64>, usize, usize)> = BTreeMap::new();
    for (rows, retrieved) in [(r, true), (c, false)] {
        for x in rows {
            let key = x.iter().map(|v| (v + 0.0).to_bits()).collect();
            let entry = counts.entry(key).or_insert((x, 0, 0));
            if retrieved {
                entry.1 += 1;
            } else {
                entry.2 += 1;
            }
        }
    }
    counts
        .into_values()
        .map(|(x, cr, cc)| (x, cr as f64 / k - cc as f64 / m))
        .filter(|(_, w)| *w != 0.0)
        .collect()
}

/// Kernel mean discrepancy between the retrieved set and the curated set:
/// `[ (1/k^2) sum K(r,r') - (2/(mk)) sum K(r,c) + (1/m^2) sum K(c,c') ]^(1/2)`.
pub fn mpr_rkhs(
    sel: &Selection,
    retrieval: &Dataset,
    curated: &Dataset,
    kernel: Kernel,
    view: FeatureView,
) -> Result<MprReport> {
    check_selection(sel, retrieval)?;
    if let Kernel::Gaussian { sigma } = kernel {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::invalid("gaussian bandwidth must be positive"));
        }
    }
    let schema = combined_schema(retrieval, curated, view)?;
    let r: Vec<Vec<f64>> = sel
        .indices()
        .into_iter()
        .map(|i| encode(&retrieval.items()[i], &schema, view))
        .collect::<Result<_>>()?;
    let c: Vec<Vec<f64>> = curated
        .items()
        .iter()
        .map(|it| encode(it, &schema, view))
        .collect::<Result<_>>()?;

    let points = signed_points(r, c);
    let radicand = match kernel {
        // explicit feature map: the squared norm of the mean difference
        Kernel::Linear => {
            let dim = points.first().map_or(0, |(x, _)| x.len());
            (0..dim)
                .map(|j| pairwise_sum(&points.iter().map(|(x, w)| w * x[j]).collect::<Vec<_>>()).powi(2))
                .sum()
        }
        Kernel::Gaussian { .. } => pairwise_sum(
            &points
                .iter()
                .map(|(x, wx)| {
                    wx * pairwise_sum(&points.iter().map(|(y, wy)| wy * kernel.eval(x, y)).collect::<Vec<_>>())
                })
                .collect::<Vec<_>>(),
        ),
    };
    let value = if radicand >= 0.0 {
        radicand.sqrt()
    } else if radicand >= -NEG_TOL {
        0.0
    } else {
        return Err(Error::NegativeRadicand(radicand));
    };
    Ok(MprReport {
        value,
        method: Method::Rkhs,
        witness: Witness::None,
        diagnostics: BTreeMap::from([
            ("kernel".into(), json!(kernel.name())),
            ("radicand".into(), json!(radicand)),
        ]),
    })
}
