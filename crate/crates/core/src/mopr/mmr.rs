use serde::{Deserialize, Serialize};

use super::{check_k, mean_over, measure_mpr, prepare_curation};
use crate::datamodel::{Dataset, Query};
use crate::error::{Error, Result};
use crate::mpr::OracleSpec;
use crate::similarity::{cosine_similarity, similarities, top_k_scores, Selection};

/// Maximal marginal relevance: greedily add the item maximizing
/// `lambda * sim(item, q) - (1 - lambda) * max_{j selected} sim(item, j)`.
/// The first pick is the most similar item; ties go to the lower index.
pub fn mmr_retrieve(retrieval: &Dataset, q: &Query, k: usize, lambda: f64) -> Result<Selection> {
    let n = retrieval.len();
    check_k(n, k)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let scores = similarities(retrieval, q)?.0;
    let items = retrieval.items();
    let mut chosen = vec![false; n];
    // max similarity to the selected set, per candidate
    let mut redundancy = vec![f64::NEG_INFINITY; n];
    let mut order = Vec::with_capacity(k);
    for step in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            let value = if step == 0 {
                scores[i]
            } else {
                lambda * scores[i] - (1.0 - lambda) * redundancy[i]
            };
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((i, value));
            }
        }
        let (pick, _) = best.expect("k <= n leaves a candidate");
        chosen[pick] = true;
        order.push(pick);
        for i in (0..n).filter(|&i| !chosen[i]) {
            let sim = cosine_similarity(&items[i].embedding, &items[pick].embedding)?;
            redundancy[i] = redundancy[i].max(sim);
        }
    }
    Selection::from_indices(n, &order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmrPoint {
    pub lambda: f64,
    pub mpr_achieved: f64,
    pub mean_similarity: f64,
    pub sim_frac_topk: f64,
    pub mpr_frac_topk: f64,
}

/// One MMR run per `lambda`, measured with the given oracle and normalized
/// against plain top-k.
pub fn mmr_sweep(
    retrieval: &Dataset,
    curated: &Dataset,
    q: &Query,
    k: usize,
    lambdas: &[f64],
    oracle: &OracleSpec,
    curation_pool_size: Option<usize>,
) -> Result<Vec<MmrPoint>> {
    let curated = prepare_curation(curated, q, curation_pool_size)?;
    let scores = similarities(retrieval, q)?.0;
    let top = top_k_scores(&scores, k)?;
    let top_sim = mean_over(&top, &scores);
    let top_mpr = measure_mpr(&top, retrieval, &curated, oracle)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let sel = mmr_retrieve(retrieval, q, k, lambda)?;
            let mpr = measure_mpr(&sel, retrieval, &curated, oracle)?;
            let sim = mean_over(&sel, &scores);
            Ok(MmrPoint {
                lambda,
                mpr_achieved: mpr,
                mean_similarity: sim,
                sim_frac_topk: super::sweep::fraction(sim, top_sim),
                mpr_frac_topk: super::sweep::fraction(mpr, top_mpr),
            })
        })
        .collect()
}
