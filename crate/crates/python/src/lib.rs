//! Python bindings. Reports and traces cross the boundary as plain dicts
//! (via their JSON form); datasets, queries and selections are classes.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use mpr_core::bounds::{self, BudgetConstant, GapBound};
use mpr_core::cli::default_finite_class;
use mpr_core::datamodel::{self, Dataset, Item, Query, Role, SyntheticSpec};
use mpr_core::error::Error;
use mpr_core::mopr::{self, MoprConfig, OracleInput};
use mpr_core::mpr::{self as metric, Kernel, OracleSpec, DEFAULT_TREE_DEPTH};
use mpr_core::similarity::{self, Selection};
use mpr_core::statclasses::{FeatureView, MlpConfig};

create_exception!(mpr, MprError, PyException);

fn err(e: Error) -> PyErr {
    MprError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, json: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (json,))?.unbind())
}

fn parse_role(role: &str) -> PyResult<Role> {
    match role {
        "retrieval" => Ok(Role::Retrieval),
        "curated" => Ok(Role::Curated),
        other => Err(MprError::new_err(format!(
            "unknown role `{other}` (expected retrieval or curated)"
        ))),
    }
}

fn parse_view(view: &str) -> PyResult<FeatureView> {
    view.parse().map_err(err)
}

#[pyclass(name = "Dataset", module = "mpr", frozen)]
pub struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (path, role = "retrieval"))]
    fn load(path: PathBuf, role: &str) -> PyResult<Self> {
        let inner = datamodel::load_dataset(path, parse_role(role)?).map_err(err)?;
        Ok(Self { inner })
    }

    /// Builds a dataset from parallel ids, embedding rows and per-axis label codes.
    #[staticmethod]
    #[pyo3(signature = (ids, embeddings, labels, role = "retrieval"))]
    fn from_arrays(
        ids: Vec<String>,
        embeddings: Vec<Vec<f64>>,
        labels: HashMap<String, Vec<u32>>,
        role: &str,
    ) -> PyResult<Self> {
        if ids.len() != embeddings.len() || labels.values().any(|v| v.len() != ids.len()) {
            return Err(MprError::new_err(
                "ids, embeddings and label columns must have equal length",
            ));
        }
        let items = ids
            .into_iter()
            .zip(embeddings)
            .enumerate()
            .map(|(i, (id, emb))| {
                let l: BTreeMap<String, u32> = labels.iter().map(|(k, v)| (k.clone(), v[i])).collect();
                Item::new(id, emb, l)
            })
            .collect();
        let inner = Dataset::new(items, parse_role(role)?).map_err(err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        datamodel::save_dataset(&self.inner, path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.items().iter().map(|it| it.id.clone()).collect()
    }

    fn embeddings(&self) -> Vec<Vec<f64>> {
        self.inner.items().iter().map(|it| it.embedding.clone()).collect()
    }

    fn labels(&self) -> HashMap<String, Vec<u32>> {
        let mut out: HashMap<String, Vec<u32>> = HashMap::new();
        for axis in &self.inner.schema().axes {
            let col = self.inner.items().iter().map(|it| it.labels[&axis.name]).collect();
            out.insert(axis.name.clone(), col);
        }
        out
    }

    /// `(name, cardinality)` for every label axis.
    fn axes(&self) -> Vec<(String, u32)> {
        self.inner
            .schema()
            .axes
            .iter()
            .map(|a| (a.name.clone(), a.cardinality))
            .collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.schema().dim
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(len={}, dim={}, role={:?}, axes={:?})",
            self.inner.len(),
            self.inner.schema().dim,
            self.inner.role(),
            self.axes()
        )
    }
}

#[pyclass(name = "Query", module = "mpr", frozen)]
pub struct PyQuery {
    inner: Query,
}

#[pymethods]
impl PyQuery {
    #[new]
    #[pyo3(signature = (embedding, id = "q".to_string()))]
    fn new(embedding: Vec<f64>, id: String) -> Self {
        Self {
            inner: Query { id, embedding },
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: datamodel::load_query(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        datamodel::save_query(&self.inner, path).map_err(err)
    }

    #[getter]
    fn embedding(&self) -> Vec<f64> {
        self.inner.embedding.clone()
    }

    fn __repr__(&self) -> String {
        format!("Query(id={:?}, dim={})", self.inner.id, self.inner.embedding.len())
    }
}

#[pyclass(name = "Selection", module = "mpr", frozen)]
pub struct PySelection {
    inner: Selection,
}

#[pymethods]
impl PySelection {
    #[new]
    fn new(n: usize, indices: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: Selection::from_indices(n, &indices).map_err(err)?,
        })
    }

    fn indices(&self) -> Vec<usize> {
        self.inner.indices()
    }

    fn indicator(&self) -> Vec<bool> {
        self.inner.indicator().to_vec()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Sum of `scores` over the selected items.
    fn objective(&self, scores: Vec<f64>) -> PyResult<f64> {
        if scores.len() != self.inner.n() {
            return Err(MprError::new_err("scores must have one entry per pool item"));
        }
        Ok(self.inner.objective(&scores))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Selection(n={}, k={}, indices={:?})",
            self.inner.n(),
            self.inner.k(),
            self.inner.indices()
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn oracle_spec(
    oracle: &str,
    view: &str,
    tree_depth: usize,
    mlp_hidden: usize,
    mlp_epochs: usize,
    mlp_step: f64,
    seed: u64,
    retrieval: &Dataset,
    curated: &Dataset,
) -> PyResult<OracleSpec> {
    let view = parse_view(view)?;
    Ok(match oracle {
        "linear" => OracleSpec::Linear { view },
        "tree" => OracleSpec::Tree {
            view,
            depth: tree_depth,
        },
        "mlp" => OracleSpec::Mlp {
            view,
            config: MlpConfig {
                hidden: mlp_hidden,
                epochs: mlp_epochs,
                step_size: mlp_step,
                seed,
                ..MlpConfig::default()
            },
        },
        "finite" => OracleSpec::Finite {
            indicators: default_finite_class(retrieval, curated).map_err(err)?,
        },
        other => {
            return Err(MprError::new_err(format!(
                "unknown oracle `{other}` (expected linear, tree, mlp or finite)"
            )))
        }
    })
}

/// Biased 2x5 synthetic benchmark: `(retrieval, curated, query)`.
#[pyfunction]
#[pyo3(signature = (n, m, d, seed = 0, balanced_curation = None))]
fn synthetic(
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
    balanced_curation: Option<usize>,
) -> PyResult<(PyDataset, PyDataset, PyQuery)> {
    let (r, mut c, q) =
        datamodel::generate_synthetic(&SyntheticSpec::biased_two_by_five(n, m, d, seed)).map_err(err)?;
    if let Some(size) = balanced_curation {
        c = datamodel::build_balanced_curation(&r.schema().axes, size).map_err(err)?;
    }
    Ok((PyDataset { inner: r }, PyDataset { inner: c }, PyQuery { inner: q }))
}

#[pyfunction]
fn similarities(retrieval: &PyDataset, query: &PyQuery) -> PyResult<Vec<f64>> {
    Ok(similarity::similarities(&retrieval.inner, &query.inner).map_err(err)?.0)
}

#[pyfunction]
fn top_k(retrieval: &PyDataset, query: &PyQuery, k: usize) -> PyResult<PySelection> {
    let (inner, _) = similarity::top_k(&retrieval.inner, &query.inner, k).map_err(err)?;
    Ok(PySelection { inner })
}

/// MPR of a selection. `oracle="finite"` searches every cell and marginal
/// indicator exactly; the other oracles search the normalized class.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (
    selection, retrieval, curated, oracle = "linear", view = "labels",
    tree_depth = DEFAULT_TREE_DEPTH, mlp_hidden = 64, mlp_epochs = 300, mlp_step = 0.1, seed = 0
))]
#[pyo3(name = "mpr")]
fn measure(
    py: Python<'_>,
    selection: &PySelection,
    retrieval: &PyDataset,
    curated: &PyDataset,
    oracle: &str,
    view: &str,
    tree_depth: usize,
    mlp_hidden: usize,
    mlp_epochs: usize,
    mlp_step: f64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let (r, c) = (&retrieval.inner, &curated.inner);
    let spec = oracle_spec(oracle, view, tree_depth, mlp_hidden, mlp_epochs, mlp_step, seed, r, c)?;
    let report = py
        .detach(|| match &spec {
            OracleSpec::Finite { indicators } => metric::mpr_exact_finite(&selection.inner, r, c, indicators),
            spec => metric::mpr_via_oracle(&selection.inner, r, c, spec),
        })
        .map_err(err)?;
    to_py(py, &report.to_json().map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (selection, retrieval, curated, view = "labels"))]
fn mpr_closed_form(
    py: Python<'_>,
    selection: &PySelection,
    retrieval: &PyDataset,
    curated: &PyDataset,
    view: &str,
) -> PyResult<Py<PyAny>> {
    let report = metric::mpr_closed_form_linear(&selection.inner, &retrieval.inner, &curated.inner, parse_view(view)?)
        .map_err(err)?;
    to_py(py, &report.to_json().map_err(err)?)
}

/// Kernel mean discrepancy; `kernel` is `linear` or `gaussian:SIGMA`.
#[pyfunction]
#[pyo3(signature = (selection, retrieval, curated, kernel = "linear", view = "embedding"))]
fn mpr_rkhs(
    py: Python<'_>,
    selection: &PySelection,
    retrieval: &PyDataset,
    curated: &PyDataset,
    kernel: &str,
    view: &str,
) -> PyResult<Py<PyAny>> {
    let kernel: Kernel = kernel.parse().map_err(err)?;
    let report = metric::mpr_rkhs(
        &selection.inner,
        &retrieval.inner,
        &curated.inner,
        kernel,
        parse_view(view)?,
    )
    .map_err(err)?;
    to_py(py, &report.to_json().map_err(err)?)
}

/// Cutting-plane retrieval; returns `(selection, trace)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (
    retrieval, curated, query, k, rho, oracle = "linear", view = "labels",
    iterations = mopr::DEFAULT_ITERATIONS, oracle_input = "rounded", curation_pool = None,
    tree_depth = DEFAULT_TREE_DEPTH, mlp_hidden = 64, mlp_epochs = 300, mlp_step = 0.1, seed = 0
))]
fn mopr_retrieve(
    py: Python<'_>,
    retrieval: &PyDataset,
    curated: &PyDataset,
    query: &PyQuery,
    k: usize,
    rho: f64,
    oracle: &str,
    view: &str,
    iterations: usize,
    oracle_input: &str,
    curation_pool: Option<usize>,
    tree_depth: usize,
    mlp_hidden: usize,
    mlp_epochs: usize,
    mlp_step: f64,
    seed: u64,
) -> PyResult<(PySelection, Py<PyAny>)> {
    let (r, c) = (&retrieval.inner, &curated.inner);
    let cfg = MoprConfig {
        rho,
        max_iterations: iterations,
        oracle: oracle_spec(oracle, view, tree_depth, mlp_hidden, mlp_epochs, mlp_step, seed, r, c)?,
        curation_pool_size: curation_pool,
        oracle_input: match oracle_input {
            "rounded" => OracleInput::Rounded,
            "fractional" => OracleInput::Fractional,
            other => return Err(MprError::new_err(format!("unknown oracle input `{other}`"))),
        },
    };
    let (sel, trace) = py
        .detach(|| mopr::mopr_retrieve(r, c, &query.inner, k, &cfg))
        .map_err(err)?;
    Ok((PySelection { inner: sel }, to_py(py, &trace.to_json().map_err(err)?)?))
}

/// Cutting planes on the closed-form linear constraint; returns `(selection, trace)`.
#[pyfunction]
#[pyo3(signature = (retrieval, curated, query, k, rho, iterations = mopr::DEFAULT_ITERATIONS, view = "labels"))]
#[allow(clippy::too_many_arguments)]
fn mopr_qp(
    py: Python<'_>,
    retrieval: &PyDataset,
    curated: &PyDataset,
    query: &PyQuery,
    k: usize,
    rho: f64,
    iterations: usize,
    view: &str,
) -> PyResult<(PySelection, Py<PyAny>)> {
    let view = parse_view(view)?;
    let (sel, trace) = py
        .detach(|| mopr::mopr_qp_linear(&retrieval.inner, &curated.inner, &query.inner, k, rho, iterations, view))
        .map_err(err)?;
    Ok((PySelection { inner: sel }, to_py(py, &trace.to_json().map_err(err)?)?))
}

#[pyfunction]
fn mmr_retrieve(retrieval: &PyDataset, query: &PyQuery, k: usize, lam: f64) -> PyResult<PySelection> {
    let inner = mopr::mmr_retrieve(&retrieval.inner, &query.inner, k, lam).map_err(err)?;
    Ok(PySelection { inner })
}

/// One MOPR run per `rho` (descending); returns one dict per grid point.
#[pyfunction]
#[pyo3(signature = (retrieval, curated, query, k, grid, oracle = "linear", view = "labels",
    iterations = mopr::DEFAULT_ITERATIONS, jobs = 1))]
#[allow(clippy::too_many_arguments)]
fn pareto_sweep(
    py: Python<'_>,
    retrieval: &PyDataset,
    curated: &PyDataset,
    query: &PyQuery,
    k: usize,
    grid: Vec<f64>,
    oracle: &str,
    view: &str,
    iterations: usize,
    jobs: usize,
) -> PyResult<Py<PyAny>> {
    let (r, c) = (&retrieval.inner, &curated.inner);
    let template = MoprConfig {
        max_iterations: iterations,
        ..MoprConfig::new(
            0.0,
            oracle_spec(oracle, view, DEFAULT_TREE_DEPTH, 64, 300, 0.1, 0, r, c)?,
        )
    };
    let rows = py
        .detach(|| mopr::pareto_sweep(r, c, &query.inner, k, &template, &grid, jobs))
        .map_err(err)?;
    let json = serde_json::to_string(&rows).map_err(|e| MprError::new_err(e.to_string()))?;
    to_py(py, &json)
}

#[pyfunction]
fn vc_rademacher_bound(vc: u64, m: u64) -> PyResult<f64> {
    bounds::vc_rademacher_bound(vc, m).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (rademacher, m, delta, symmetrized = false))]
fn generalization_bound(rademacher: f64, m: u64, delta: f64, symmetrized: bool) -> PyResult<f64> {
    let form = if symmetrized {
        GapBound::Symmetrized
    } else {
        GapBound::Stated
    };
    bounds::generalization_bound_with(rademacher, m, delta, form).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (vc, epsilon, delta, queries, tight = false))]
fn query_budget(vc: u64, epsilon: f64, delta: f64, queries: u64, tight: bool) -> PyResult<u64> {
    let constant = if tight {
        BudgetConstant::Tight
    } else {
        BudgetConstant::Standard
    };
    bounds::query_budget(vc, epsilon, delta, queries, constant).map_err(err)
}

#[pymodule]
fn mpr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MprError", m.py().get_type::<MprError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyQuery>()?;
    m.add_class::<PySelection>()?;
    for f in [
        wrap_pyfunction!(synthetic, m)?,
        wrap_pyfunction!(similarities, m)?,
        wrap_pyfunction!(top_k, m)?,
        wrap_pyfunction!(measure, m)?,
        wrap_pyfunction!(mpr_closed_form, m)?,
        wrap_pyfunction!(mpr_rkhs, m)?,
        wrap_pyfunction!(mopr_retrieve, m)?,
        wrap_pyfunction!(mopr_qp, m)?,
        wrap_pyfunction!(mmr_retrieve, m)?,
        wrap_pyfunction!(pareto_sweep, m)?,
        wrap_pyfunction!(vc_rademacher_bound, m)?,
        wrap_pyfunction!(generalization_bound, m)?,
        wrap_pyfunction!(query_budget, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
