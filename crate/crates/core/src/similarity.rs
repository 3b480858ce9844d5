//! Cosine similarity, exact top-k retrieval and query-conditioned curation.

use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, Query};
use crate::error::{Error, Result};

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::SchemaMismatch(format!(
            "vector lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// One cosine score per retrieval-pool item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityVector(pub Vec<f64>);

impl SimilarityVector {
    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Binary retrieval indicator with exactly `k` ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selection {
    indicator: Vec<bool>,
    k: usize,
}

impl Selection {
    pub fn from_indicator(indicator: Vec<bool>) -> Result<Self> {
        let k = indicator.iter().filter(|&&b| b).count();
        if k == 0 {
            return Err(Error::invalid("selection must contain at least one item"));
        }
        Ok(Self { indicator, k })
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut indicator = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::invalid(format!("index {i} out of range for n = {n}")));
            }
            if indicator[i] {
                return Err(Error::invalid(format!("index {i} selected twice")));
            }
            indicator[i] = true;
        }
        Self::from_indicator(indicator)
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.indicator.len()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.indicator
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.indicator.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Sum of scores over selected items.
    pub fn objective(&self, scores: &[f64]) -> f64 {
        self.indicator
            .iter()
            .zip(scores)
            .filter(|(b, _)| **b)
            .map(|(_, s)| s)
            .sum()
    }
}

/// Indices of the `k` largest values, ties broken by lower index. The
/// returned indices are in rank order.
pub(crate) fn rank_top(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn similarities(dataset: &Dataset, q: &Query) -> Result<SimilarityVector> {
    q.check_dim(dataset.schema())?;
    dataset
        .items()
        .iter()
        .map(|it| cosine_similarity(&it.embedding, &q.embedding))
        .collect::<Result<Vec<_>>>()
        .map(SimilarityVector)
}

pub fn top_k_scores(scores: &[f64], k: usize) -> Result<Selection> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    Selection::from_indices(n, &rank_top(scores, k))
}

pub fn top_k(dataset: &Dataset, q: &Query, k: usize) -> Result<(Selection, SimilarityVector)> {
    let sims = similarities(dataset, q)?;
    let sel = top_k_scores(sims.scores(), k)?;
    Ok((sel, sims))
}

/// Keeps the `pool_size` curated items most similar to `q`, in their
/// original order.
pub fn condition_curation(curated: &Dataset, q: &Query, pool_size: usize) -> Result<Dataset> {
    if pool_size == 0 {
        return Err(Error::invalid("pool size must be positive"));
    }
    if pool_size >= curated.len() {
        return Ok(curated.clone());
    }
    let sims = similarities(curated, q)?;
    let mut keep = rank_top(sims.scores(), pool_size);
    keep.sort_unstable();
    curated.subset(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Item, Role};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn top_k_examples() {
        let sel = top_k_scores(&[0.9, 0.1, 0.5], 2).unwrap();
        assert_eq!(sel.indicator(), &[true, false, true]);
        let sel = top_k_scores(&[0.5, 0.5, 0.1], 1).unwrap();
        assert_eq!(sel.indicator(), &[true, false, false]);
        let sel = top_k_scores(&[0.2, 0.3, 0.1], 3).unwrap();
        assert!(sel.indicator().iter().all(|&b| b));
        assert!(top_k_scores(&[0.2], 2).is_err());
        assert!(top_k_scores(&[0.2], 0).is_err());
    }

    fn scored_dataset(scores: &[f64]) -> (Dataset, Query) {
        // embedding (s, sqrt(1 - s^2)) has cosine s with the query (1, 0)
        let items = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                Item::new(
                    format!("c{i}"),
                    vec![s, (1.0 - s * s).sqrt()],
                    BTreeMap::from([("g".to_string(), (i % 2) as u32)]),
                )
            })
            .collect();
        let q = Query {
            id: "q".into(),
            embedding: vec![1.0, 0.0],
        };
        (Dataset::new(items, Role::Curated).unwrap(), q)
    }

    #[test]
    fn condition_curation_examples() {
        let (ds, q) = scored_dataset(&[0.1, 0.9, 0.4, 0.7]);
        assert_eq!(condition_curation(&ds, &q, 4).unwrap(), ds);
        assert_eq!(condition_curation(&ds, &q, 10).unwrap(), ds);

        let one = condition_curation(&ds, &q, 1).unwrap();
        assert_eq!(one.items()[0].id, "c1");

        // two highest are c1 (0.9) and c3 (0.7), kept in file order
        let two = condition_curation(&ds, &q, 2).unwrap();
        let ids: Vec<_> = two.items().iter().map(|it| it.id.as_str()).collect();
        assert_eq!(ids, ["c1", "c3"]);
    }

    fn brute_force_best(scores: &[f64], k: usize) -> f64 {
        let n = scores.len();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let total: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| scores[i]).sum();
            best = best.max(total);
        }
        best
    }

    proptest! {
        #[test]
        fn top_k_is_optimal_over_all_subsets(
            scores in prop::collection::vec(-1.0f64..1.0, 1..12),
            kf in 0.0f64..1.0,
        ) {
            let k = 1 + ((scores.len() - 1) as f64 * kf) as usize;
            let sel = top_k_scores(&scores, k).unwrap();
            prop_assert_eq!(sel.k(), k);
            let best = brute_force_best(&scores, k);
            prop_assert!((sel.objective(&scores) - best).abs() <= 1e-12);
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            u in prop::collection::vec(-5.0f64..5.0, 3),
            v in prop::collection::vec(-5.0f64..5.0, 3),
            alpha in 0.01f64..100.0,
            beta in 0.01f64..100.0,
        ) {
            prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
            let base = cosine_similarity(&u, &v).unwrap();
            prop_assert!((base - cosine_similarity(&v, &u).unwrap()).abs() <= 1e-15);
            let su: Vec<f64> = u.iter().map(|x| alpha * x).collect();
            let sv: Vec<f64> = v.iter().map(|x| beta * x).collect();
            prop_assert!((base - cosine_similarity(&su, &sv).unwrap()).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&base));
        }
    }
}
