//! The MPR metric, computed four ways: exhaustively over a finite
//! indicator class, through a regression oracle over the normalized class,
//! in closed form for linear statistics, and as a kernel mean discrepancy.

mod closed_form;
mod kernel;
mod oracle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use closed_form::{mpr_closed_form_linear, SvdContext};
pub use kernel::{mpr_rkhs, Kernel};
pub use oracle::{Oracle, OracleAnswer, OracleSpec, DEFAULT_TREE_DEPTH};

use crate::datamodel::Dataset;
use crate::error::{Error, Result};
use crate::similarity::Selection;
use crate::statclasses::{Indicator, NormalizedStatistic};

/// Signed weights turning MPR into a correlation: `a_i / k` on the
/// retrieval block, `-1/m` on the curated block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeA {
    pub values: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

impl TildeA {
    pub fn from_selection(sel: &Selection, m: usize) -> Self {
        Self::build(&sel.as_f64(), sel.k(), m)
    }

    /// Same construction for a relaxed `a` in `[0, 1]^n`.
    pub fn from_fractional(a: &[f64], k: usize, m: usize) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::invalid("k and m must be positive"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite selection weight"));
        }
        Ok(Self::build(a, k, m))
    }

    fn build(a: &[f64], k: usize, m: usize) -> Self {
        let inv_k = 1.0 / k as f64;
        let inv_m = 1.0 / m as f64;
        let mut values = Vec::with_capacity(a.len() + m);
        values.extend(a.iter().map(|&ai| ai * inv_k));
        values.extend(std::iter::repeat_n(-inv_m, m));
        Self {
            values,
            n: a.len(),
            m,
            k,
        }
    }

    pub fn correlate(&self, c: &[f64]) -> f64 {
        self.values.iter().zip(c).map(|(a, b)| a * b).sum()
    }
}

pub fn build_tilde_a(sel: &Selection, m: usize) -> TildeA {
    TildeA::from_selection(sel, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactFinite,
    Oracle,
    ClosedLinear,
    Rkhs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    Indicator {
        index: usize,
        description: String,
        indicator: Indicator,
    },
    Normalized(NormalizedStatistic),
    LinearWeights {
        weights: Vec<f64>,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MprReport {
    pub value: f64,
    pub method: Method,
    pub witness: Witness,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl MprReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_selection(sel: &Selection, retrieval: &Dataset) -> Result<()> {
    if sel.n() != retrieval.len() {
        return Err(Error::invalid(format!(
            "selection covers {} items, retrieval pool has {}",
            sel.n(),
            retrieval.len()
        )));
    }
    Ok(())
}

/// `max_c |mean_R c - mean_C c|` over the listed indicators; the witness
/// is the first maximizer.
pub fn mpr_exact_finite(
    sel: &Selection,
    retrieval: &Dataset,
    curated: &Dataset,
    indicators: &[Indicator],
) -> Result<MprReport> {
    check_selection(sel, retrieval)?;
    if indicators.is_empty() {
        return Err(Error::invalid("indicator list is empty"));
    }
    let chosen = sel.indices();
    let mut best: Option<(usize, f64)> = None;
    for (i, ind) in indicators.iter().enumerate() {
        let mut r_sum = 0.0;
        for &j in &chosen {
            r_sum += ind.evaluate(&retrieval.items()[j])?;
        }
        let mut c_sum = 0.0;
        for it in curated.items() {
            c_sum += ind.evaluate(it)?;
        }
        let gap = (r_sum / chosen.len() as f64 - c_sum / curated.len() as f64).abs();
        if best.is_none_or(|(_, b)| gap > b) {
            best = Some((i, gap));
        }
    }
    let (index, value) = best.expect("indicator list is nonempty");
    Ok(MprReport {
        value,
        method: Method::ExactFinite,
        witness: Witness::Indicator {
            index,
            description: indicators[index].describe(),
            indicator: indicators[index].clone(),
        },
        diagnostics: BTreeMap::from([("class_size".into(), json!(indicators.len()))]),
    })
}

/// MPR over the normalized class by regressing `+a~` and `-a~` and keeping
/// the larger normalized correlation.
pub fn mpr_via_oracle(sel: &Selection, retrieval: &Dataset, curated: &Dataset, spec: &OracleSpec) -> Result<MprReport> {
    check_selection(sel, retrieval)?;
    let oracle = Oracle::new(spec, retrieval, curated)?;
    let answer = oracle.query(&TildeA::from_selection(sel, curated.len()))?;
    let method = match spec {
        OracleSpec::Finite { .. } => Method::ExactFinite,
        _ => Method::Oracle,
    };
    let mut diagnostics = answer.diagnostics;
    diagnostics.insert("oracle".into(), json!(spec.name()));
    Ok(MprReport {
        value: answer.value,
        method,
        witness: answer.witness,
        diagnostics,
    })
}

#[cfg(test)]
mod tests;
