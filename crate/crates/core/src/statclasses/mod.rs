//! Representation statistics and the regression oracles that realize the
//! supremum in the MPR definition.
//!
//! A statistic is evaluated over a feature view of an item: the one-hot
//! label encoding, the raw embedding, or both concatenated. Indicator
//! statistics read category codes directly and take values in {-1, +1}.

mod linear;
mod mlp;
mod tree;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use linear::{fit_linear_ls, LeastSquares, LinearModel};
pub use mlp::{fit_mlp, Mlp, MlpConfig, MlpFit};
pub use tree::{fit_tree, RegressionTree, TreeNode};

use crate::datamodel::{Dataset, Item, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureView {
    #[default]
    Labels,
    Embedding,
    Concat,
}

impl FeatureView {
    pub fn width(self, schema: &Schema) -> usize {
        match self {
            FeatureView::Labels => schema.one_hot_width(),
            FeatureView::Embedding => schema.dim,
            FeatureView::Concat => schema.dim + schema.one_hot_width(),
        }
    }
}

impl std::str::FromStr for FeatureView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labels" => Ok(FeatureView::Labels),
            "embedding" => Ok(FeatureView::Embedding),
            "concat" => Ok(FeatureView::Concat),
            other => Err(Error::invalid(format!("unknown feature view `{other}`"))),
        }
    }
}

fn push_one_hot(out: &mut Vec<f64>, item: &Item, schema: &Schema) -> Result<()> {
    for (axis, code) in schema.axes.iter().zip(item.codes(schema)?) {
        if code >= axis.cardinality {
            return Err(Error::SchemaMismatch(format!(
                "item `{}`: code {code} outside cardinality {} of `{}`",
                item.id, axis.cardinality, axis.name
            )));
        }
        let start = out.len();
        out.resize(start + axis.cardinality as usize, 0.0);
        out[start + code as usize] = 1.0;
    }
    Ok(())
}

/// Feature vector of one item under `view`.
pub fn encode(item: &Item, schema: &Schema, view: FeatureView) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(view.width(schema));
    if matches!(view, FeatureView::Embedding | FeatureView::Concat) {
        if item.embedding.len() != schema.dim {
            return Err(Error::SchemaMismatch(format!(
                "item `{}` has dimension {}, schema expects {}",
                item.id,
                item.embedding.len(),
                schema.dim
            )));
        }
        out.extend_from_slice(&item.embedding);
    }
    if matches!(view, FeatureView::Labels | FeatureView::Concat) {
        push_one_hot(&mut out, item, schema)?;
    }
    Ok(out)
}

/// Common schema of two datasets; embedding dimensions only need to agree
/// when the view reads embeddings.
pub fn combined_schema(retrieval: &Dataset, curated: &Dataset, view: FeatureView) -> Result<Schema> {
    match view {
        FeatureView::Labels => retrieval.schema().union_labels(curated.schema()),
        _ => retrieval.schema().union(curated.schema()),
    }
}

/// Row-wise concatenation of the retrieval pool and the curated set under
/// a common schema.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
    pub schema: Schema,
    pub view: FeatureView,
}

impl DesignMatrix {
    pub fn new(retrieval: &Dataset, curated: &Dataset, view: FeatureView) -> Result<Self> {
        let schema = combined_schema(retrieval, curated, view)?;
        let (n, m) = (retrieval.len(), curated.len());
        let p = view.width(&schema);
        let mut x = DMatrix::zeros(n + m, p);
        for (r, item) in retrieval.items().iter().chain(curated.items()).enumerate() {
            let row = encode(item, &schema, view)?;
            for (c, v) in row.into_iter().enumerate() {
                x[(r, c)] = v;
            }
        }
        Ok(Self { x, n, m, schema, view })
    }

    pub fn rows(&self) -> usize {
        self.n + self.m
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.x.row(r).iter().copied().collect()
    }
}

/// Conjunction of `label == code` conditions, mapped to +1 when every
/// condition holds and -1 otherwise (swapped when `negate` is set).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    pub conditions: Vec<(String, u32)>,
    #[serde(default)]
    pub negate: bool,
}

impl Indicator {
    pub fn new(conditions: Vec<(String, u32)>) -> Self {
        Self {
            conditions,
            negate: false,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            conditions: self.conditions.clone(),
            negate: !self.negate,
        }
    }

    pub fn evaluate(&self, item: &Item) -> Result<f64> {
        let sign = if self.negate { -1.0 } else { 1.0 };
        for (name, code) in &self.conditions {
            match item.labels.get(name) {
                Some(c) if c == code => {}
                Some(_) => return Ok(-sign),
                None => {
                    return Err(Error::SchemaMismatch(format!(
                        "item `{}` lacks label `{name}`",
                        item.id
                    )))
                }
            }
        }
        Ok(sign)
    }

    pub fn describe(&self) -> String {
        let body = if self.conditions.is_empty() {
            "always".to_string()
        } else {
            self.conditions
                .iter()
                .map(|(n, c)| format!("{n}=={c}"))
                .collect::<Vec<_>>()
                .join(" && ")
        };
        if self.negate {
            format!("!({body})")
        } else {
            body
        }
    }

    /// One indicator per intersectional cell.
    pub fn cells(schema: &Schema) -> Vec<Indicator> {
        schema
            .cells()
            .into_iter()
            .map(|cell| Indicator::new(schema.axes.iter().zip(cell).map(|(a, c)| (a.name.clone(), c)).collect()))
            .collect()
    }

    /// One indicator per (axis, category).
    pub fn marginals(schema: &Schema) -> Vec<Indicator> {
        schema
            .axes
            .iter()
            .flat_map(|a| (0..a.cardinality).map(move |c| Indicator::new(vec![(a.name.clone(), c)])))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Indicator(Indicator),
    Linear(LinearModel),
    Tree(RegressionTree),
    Mlp(Mlp),
}

/// A representation statistic `c` together with the feature view it reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepStatistic {
    #[serde(flatten)]
    pub model: Model,
    pub view: FeatureView,
}

impl RepStatistic {
    pub fn new(model: Model, view: FeatureView) -> Self {
        Self { model, view }
    }

    pub fn indicator(ind: Indicator) -> Self {
        Self::new(Model::Indicator(ind), FeatureView::Labels)
    }

    /// Value on a feature row already encoded under `self.view`.
    /// Indicators have no feature-row form.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        match &self.model {
            Model::Indicator(_) => Err(Error::invalid(
                "indicator statistics are evaluated on items, not feature rows",
            )),
            Model::Linear(m) => m.predict(row),
            Model::Tree(t) => t.predict(row),
            Model::Mlp(m) => m.predict(row),
        }
    }

    pub fn evaluate(&self, item: &Item, schema: &Schema) -> Result<f64> {
        match &self.model {
            Model::Indicator(ind) => ind.evaluate(item),
            _ => self.predict_row(&encode(item, schema, self.view)?),
        }
    }

    /// `c(X)` over every row of a design matrix.
    pub fn evaluate_design(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        if design.view != self.view && !matches!(self.model, Model::Indicator(_)) {
            return Err(Error::SchemaMismatch(format!(
                "statistic reads {:?} features, design matrix holds {:?}",
                self.view, design.view
            )));
        }
        (0..design.rows()).map(|r| self.predict_row(&design.row(r))).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// A statistic rescaled into the normalized class, where the squared
/// values over the concatenated rows sum to `mk/(m+k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedStatistic {
    pub base: RepStatistic,
    pub scale: f64,
    pub context_norm: f64,
}

impl NormalizedStatistic {
    pub fn evaluate(&self, item: &Item, schema: &Schema) -> Result<f64> {
        Ok(self.scale * self.base.evaluate(item, schema)?)
    }
}

/// `mk/(m+k)`, the squared norm every normalized statistic carries.
pub fn target_sq_norm(m: usize, k: usize) -> f64 {
    let (m, k) = (m as f64, k as f64);
    m * k / (m + k)
}

/// Returns `(scale, ||c(X)||)` for values of `c` over the concatenated rows.
pub fn normalization_scale(values: &[f64], m: usize, k: usize) -> Result<(f64, f64)> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::DegenerateStatistic);
    }
    Ok((target_sq_norm(m, k).sqrt() / norm, norm))
}

pub fn normalize_to_cprime(
    stat: &RepStatistic,
    retrieval: &Dataset,
    curated: &Dataset,
    k: usize,
) -> Result<NormalizedStatistic> {
    let schema = combined_schema(retrieval, curated, stat.view)?;
    let values = retrieval
        .items()
        .iter()
        .chain(curated.items())
        .map(|it| stat.evaluate(it, &schema))
        .collect::<Result<Vec<_>>>()?;
    let (scale, context_norm) = normalization_scale(&values, curated.len(), k)?;
    Ok(NormalizedStatistic {
        base: stat.clone(),
        scale,
        context_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{LabelAxis, Role};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn item(id: &str, emb: Vec<f64>, gender: u32) -> Item {
        Item::new(id, emb, BTreeMap::from([("gender".to_string(), gender)]))
    }

    fn schema() -> Schema {
        Schema::new(2, vec![LabelAxis::new("gender", 2)]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let s = schema();
        let it = item("a", vec![3.0, 5.0], 1);
        let ind = RepStatistic::indicator(Indicator::new(vec![("gender".into(), 1)]));
        assert_eq!(ind.evaluate(&it, &s).unwrap(), 1.0);
        let other = item("b", vec![3.0, 5.0], 0);
        assert_eq!(ind.evaluate(&other, &s).unwrap(), -1.0);

        let lin = RepStatistic::new(
            Model::Linear(LinearModel {
                weights: vec![2.0, 0.0],
            }),
            FeatureView::Embedding,
        );
        assert_eq!(lin.evaluate(&it, &s).unwrap(), 6.0);

        let leaf = RepStatistic::new(Model::Tree(RegressionTree::constant(0.7)), FeatureView::Concat);
        assert_eq!(leaf.evaluate(&it, &s).unwrap(), 0.7);
        assert_eq!(leaf.evaluate(&other, &s).unwrap(), 0.7);
    }

    #[test]
    fn evaluate_rejects_schema_mismatch() {
        let s = schema();
        let lin = RepStatistic::new(
            Model::Linear(LinearModel {
                weights: vec![1.0, 1.0],
            }),
            FeatureView::Concat,
        );
        assert!(lin.evaluate(&item("a", vec![1.0, 1.0], 0), &s).is_err());
        let short = item("b", vec![1.0], 0);
        assert!(encode(&short, &s, FeatureView::Embedding).is_err());
    }

    #[test]
    fn one_hot_encoding_follows_axis_order() {
        let s = Schema::new(1, vec![LabelAxis::new("race", 3), LabelAxis::new("gender", 2)]).unwrap();
        let it = Item::new(
            "x",
            vec![0.5],
            BTreeMap::from([("gender".to_string(), 1), ("race".to_string(), 2)]),
        );
        assert_eq!(
            encode(&it, &s, FeatureView::Concat).unwrap(),
            vec![0.5, 0.0, 1.0, 0.0, 0.0, 1.0]
        );
    }

    fn two_by_two() -> (Dataset, Dataset) {
        let r = Dataset::new(
            vec![item("r0", vec![1.0, 0.0], 0), item("r1", vec![1.0, 0.0], 1)],
            Role::Retrieval,
        )
        .unwrap();
        let c = Dataset::new(
            vec![item("c0", vec![0.0, 0.0], 0), item("c1", vec![0.0, 0.0], 1)],
            Role::Curated,
        )
        .unwrap();
        (r, c)
    }

    #[test]
    fn normalization_examples() {
        // c(X) = (1, 1, 1, 1): norm 2, m = k = 2, target norm 1 -> scale 1/2
        let (r, c) = two_by_two();
        let ones = RepStatistic::new(Model::Tree(RegressionTree::constant(1.0)), FeatureView::Labels);
        let norm = normalize_to_cprime(&ones, &r, &c, 2).unwrap();
        assert_relative_eq!(norm.context_norm, 2.0);
        assert_relative_eq!(norm.scale, 0.5);

        let again = RepStatistic::new(Model::Tree(RegressionTree::constant(0.5)), FeatureView::Labels);
        let idem = normalize_to_cprime(&again, &r, &c, 2).unwrap();
        assert!((idem.scale - 1.0).abs() <= 1e-12);

        let zero = RepStatistic::new(Model::Tree(RegressionTree::constant(0.0)), FeatureView::Labels);
        assert!(matches!(
            normalize_to_cprime(&zero, &r, &c, 2),
            Err(Error::DegenerateStatistic)
        ));
    }

    #[test]
    fn statistic_json_round_trip() {
        let stat = RepStatistic::new(
            Model::Linear(LinearModel {
                weights: vec![0.25, -1.5],
            }),
            FeatureView::Embedding,
        );
        let json = stat.to_json().unwrap();
        assert!(json.contains("\"kind\":\"linear\""));
        assert!(json.contains("\"view\":\"embedding\""));
        let back: RepStatistic = serde_json::from_str(&json).unwrap();
        assert_eq!(back, stat);
    }

    proptest! {
        #[test]
        fn normalization_quotients_out_positive_scaling(
            w in prop::collection::vec(-3.0f64..3.0, 2),
            alpha in 0.01f64..50.0,
        ) {
            prop_assume!(w.iter().any(|x| x.abs() > 1e-3));
            let (r, c) = two_by_two();
            let stat = RepStatistic::new(Model::Linear(LinearModel { weights: w.clone() }), FeatureView::Labels);
            let scaled = RepStatistic::new(
                Model::Linear(LinearModel { weights: w.iter().map(|x| alpha * x).collect() }),
                FeatureView::Labels,
            );
            let a = normalize_to_cprime(&stat, &r, &c, 1).unwrap();
            let b = normalize_to_cprime(&scaled, &r, &c, 1).unwrap();
            let s = r.schema();
            let mut sq = 0.0;
            for it in r.items().iter().chain(c.items()) {
                let va = a.evaluate(it, s).unwrap();
                prop_assert!((va - b.evaluate(it, s).unwrap()).abs() <= 1e-10);
                sq += va * va;
            }
            prop_assert!((sq - target_sq_norm(2, 1)).abs() <= 1e-8 * target_sq_norm(2, 1));
        }
    }
}
