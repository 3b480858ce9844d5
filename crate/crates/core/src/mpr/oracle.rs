//! Oracles answering "which statistic is most disproportionately
//! represented under these weights?" for a fixed pair of datasets.

use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;

use super::{TildeA, Witness};
use crate::datamodel::Dataset;
use crate::error::{Error, Result};
use crate::statclasses::{
    fit_mlp, fit_tree, normalization_scale, DesignMatrix, FeatureView, Indicator, LeastSquares, LinearModel, MlpConfig,
    Model, NormalizedStatistic, RepStatistic,
};

pub const DEFAULT_TREE_DEPTH: usize = 3;

/// Which class the oracle searches and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSpec {
    Linear {
        view: FeatureView,
    },
    Tree {
        view: FeatureView,
        depth: usize,
    },
    Mlp {
        view: FeatureView,
        config: MlpConfig,
    },
    /// Exhaustive search over a finite list of ±1 indicators; values are
    /// not normalized.
    Finite {
        indicators: Vec<Indicator>,
    },
}

impl OracleSpec {
    pub fn linear(view: FeatureView) -> Self {
        OracleSpec::Linear { view }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OracleSpec::Linear { .. } => "linear",
            OracleSpec::Tree { .. } => "tree",
            OracleSpec::Mlp { .. } => "mlp",
            OracleSpec::Finite { .. } => "finite",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleAnswer {
    /// `|sum_i c(x_i) a~_i|` for the returned statistic.
    pub value: f64,
    /// The statistic evaluated on all n + m rows (retrieval first).
    pub values: Vec<f64>,
    pub witness: Witness,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

enum Engine {
    Linear(LeastSquares),
    Tree(usize),
    Mlp(MlpConfig),
    Finite {
        indicators: Vec<Indicator>,
        values: Vec<Vec<f64>>,
    },
}

/// An oracle bound to one retrieval pool and one curated set.
pub struct Oracle {
    spec: OracleSpec,
    design: Option<DesignMatrix>,
    engine: Engine,
    n: usize,
    m: usize,
}

impl Oracle {
    pub fn new(spec: &OracleSpec, retrieval: &Dataset, curated: &Dataset) -> Result<Self> {
        let (n, m) = (retrieval.len(), curated.len());
        let design_for = |view| DesignMatrix::new(retrieval, curated, view);
        let (design, engine) = match spec {
            OracleSpec::Linear { view } => {
                let d = design_for(*view)?;
                let ls = LeastSquares::new(&d.x);
                (Some(d), Engine::Linear(ls))
            }
            OracleSpec::Tree { view, depth } => {
                if *depth == 0 {
                    return Err(Error::invalid("tree depth must be at least 1"));
                }
                (Some(design_for(*view)?), Engine::Tree(*depth))
            }
            OracleSpec::Mlp { view, config } => (Some(design_for(*view)?), Engine::Mlp(config.clone())),
            OracleSpec::Finite { indicators } => {
                if indicators.is_empty() {
                    return Err(Error::invalid("finite class must contain an indicator"));
                }
                let values = indicators
                    .iter()
                    .map(|ind| {
                        retrieval
                            .items()
                            .iter()
                            .chain(curated.items())
                            .map(|it| ind.evaluate(it))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                (
                    None,
                    Engine::Finite {
                        indicators: indicators.clone(),
                        values,
                    },
                )
            }
        };
        Ok(Self {
            spec: spec.clone(),
            design,
            engine,
            n,
            m,
        })
    }

    pub fn spec(&self) -> &OracleSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn query(&self, tilde: &TildeA) -> Result<OracleAnswer> {
        if tilde.n != self.n || tilde.m != self.m {
            return Err(Error::invalid(format!(
                "weights built for n = {}, m = {}; oracle holds n = {}, m = {}",
                tilde.n, tilde.m, self.n, self.m
            )));
        }
        match &self.engine {
            Engine::Finite { indicators, values } => {
                let mut best: Option<(usize, f64)> = None;
                for (i, v) in values.iter().enumerate() {
                    let gap = tilde.correlate(v).abs();
                    if best.is_none_or(|(_, b)| gap > b) {
                        best = Some((i, gap));
                    }
                }
                let (index, value) = best.expect("finite class is nonempty");
                Ok(OracleAnswer {
                    value,
                    values: values[index].clone(),
                    witness: Witness::Indicator {
                        index,
                        description: indicators[index].describe(),
                        indicator: indicators[index].clone(),
                    },
                    diagnostics: BTreeMap::from([("class_size".into(), json!(indicators.len()))]),
                })
            }
            _ => self.query_regression(tilde),
        }
    }

    fn fit(&self, targets: &[f64]) -> Result<(Model, Vec<f64>)> {
        let design = self.design.as_ref().expect("regression oracles hold a design");
        let rows = |model: &Model| -> Result<Vec<f64>> {
            let stat = RepStatistic::new(model.clone(), design.view);
            stat.evaluate_design(design)
        };
        match &self.engine {
            Engine::Linear(ls) => {
                let weights = ls.solve(targets)?;
                let fitted = ls.fitted(targets)?;
                Ok((Model::Linear(LinearModel { weights }), fitted))
            }
            Engine::Tree(depth) => {
                let tree = fit_tree(&design.x, targets, *depth)?;
                let model = Model::Tree(tree);
                let fitted = rows(&model)?;
                Ok((model, fitted))
            }
            Engine::Mlp(cfg) => {
                // the class is closed under scaling, so fit unit-RMS targets
                let rms = (targets.iter().map(|t| t * t).sum::<f64>() / targets.len() as f64).sqrt();
                let scaled: Vec<f64> = if rms > 0.0 {
                    targets.iter().map(|t| t / rms).collect()
                } else {
                    targets.to_vec()
                };
                let fit = fit_mlp(&design.x, &scaled, cfg)?;
                let model = Model::Mlp(fit.model);
                let fitted = rows(&model)?;
                Ok((model, fitted))
            }
            Engine::Finite { .. } => unreachable!("finite oracle does not regress"),
        }
    }

    fn query_regression(&self, tilde: &TildeA) -> Result<OracleAnswer> {
        let design = self.design.as_ref().expect("regression oracles hold a design");
        let mut best: Option<OracleAnswer> = None;
        for sign in [1.0, -1.0] {
            let targets: Vec<f64> = tilde.values.iter().map(|v| sign * v).collect();
            let (model, fitted) = self.fit(&targets)?;
            let Ok((scale, norm)) = normalization_scale(&fitted, self.m, tilde.k) else {
                continue;
            };
            let values: Vec<f64> = fitted.iter().map(|f| scale * f).collect();
            let value = tilde.correlate(&values).abs();
            if best.as_ref().is_some_and(|b| value <= b.value) {
                continue;
            }
            let mse = fitted.iter().zip(&targets).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / targets.len() as f64;
            let mut diagnostics = BTreeMap::from([
                ("context_norm".to_string(), json!(norm)),
                ("oracle_mse".to_string(), json!(mse)),
                ("target_sign".to_string(), json!(sign)),
            ]);
            if let Engine::Linear(ls) = &self.engine {
                diagnostics.insert("rank".into(), json!(ls.rank()));
            }
            best = Some(OracleAnswer {
                value,
                values,
                witness: Witness::Normalized(NormalizedStatistic {
                    base: RepStatistic::new(model, design.view),
                    scale,
                    context_norm: norm,
                }),
                diagnostics,
            });
        }
        best.ok_or(Error::NoIdentifiableStatistic)
    }
}
