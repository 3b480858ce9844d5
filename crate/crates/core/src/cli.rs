//! Command-line front end. Every artifact is written next to a
//! `<file>.config.json` sidecar holding the resolved arguments, so any run
//! can be repeated bit-for-bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::bounds::{
    gap_experiment, generalization_bound_with, query_budget, vc_rademacher_bound, BoundReport, BudgetConstant,
    GapBound, GapConfig, KnownPopulation,
};
use crate::datamodel::{
    build_balanced_curation, fmt_f64, generate_synthetic, load_dataset, load_query, save_dataset, save_query, Dataset,
    Query, Role, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::mopr::{
    measure_mpr, mmr_retrieve, mmr_sweep, mopr_qp_linear, mopr_retrieve, pareto_sweep, write_sweep_csv, MoprConfig,
    MoprTrace, OracleInput, DEFAULT_ITERATIONS,
};
use crate::mpr::{
    mpr_closed_form_linear, mpr_exact_finite, mpr_rkhs, mpr_via_oracle, Kernel, OracleSpec, DEFAULT_TREE_DEPTH,
};
use crate::similarity::{condition_curation, similarities, top_k_scores, Selection};
use crate::solver::{round_top_k, solve_ip_exact, solve_lp, violated_cuts, Cut, DEFAULT_IP_LIMIT};
use crate::statclasses::{FeatureView, Indicator, MlpConfig};

#[derive(Debug, Parser)]
#[command(
    name = "mpr",
    version,
    about = "Multi-group proportional representation in retrieval"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic retrieval pool, curated set and query.
    Gen(GenArgs),
    /// Measure the MPR of a selection (top-k by default).
    Mpr(MprArgs),
    /// Retrieve k items with MOPR or a baseline.
    Retrieve(RetrieveArgs),
    /// Sweep rho and write the similarity/MPR trade-off curve.
    Sweep(SweepArgs),
    /// Evaluate the sample-complexity bounds.
    Bounds(BoundsArgs),
    /// Compare the rounded LP with the exact integer optimum.
    CompareIp(CompareIpArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON synthetic spec; overrides --n/--m/--d (its own seed is replaced by --seed).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Replace the sampled curated set by an exactly balanced one of this size.
    #[arg(long)]
    pub balanced_curation: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub retrieval: PathBuf,
    #[arg(long)]
    pub curated: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    /// Keep only the curated items most similar to the query.
    #[arg(long)]
    pub curation_pool: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Linear,
    Tree,
    Mlp,
    Finite,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long, value_enum, default_value_t = OracleKind::Linear)]
    pub oracle: OracleKind,
    #[arg(long, default_value = "labels")]
    pub feature_view: FeatureView,
    #[arg(long, default_value_t = DEFAULT_TREE_DEPTH)]
    pub tree_depth: usize,
    #[arg(long, default_value_t = 64)]
    pub mlp_hidden: usize,
    #[arg(long, default_value_t = 300)]
    pub mlp_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub mlp_step: f64,
    /// Seed for every randomized component (MLP initialization).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MprArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Items to retrieve when no selection file is given.
    #[arg(long)]
    pub k: Option<usize>,
    /// Selection file (an `id` column) as written by `retrieve`.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Use the closed-form linear value instead of the oracle.
    #[arg(long, conflicts_with = "kernel")]
    pub closed_form: bool,
    /// Use the kernel discrepancy (`linear` or `gaussian:SIGMA`).
    #[arg(long)]
    pub kernel: Option<Kernel>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Mopr,
    MoprQp,
    Topk,
    Mmr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputArg {
    Rounded,
    Fractional,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Algo::Mopr)]
    pub algo: Algo,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value_t = InputArg::Rounded)]
    pub oracle_input: InputArg,
    /// MMR trade-off between similarity (1) and diversity (0).
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Selection output (`id,similarity` CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON trace of the cutting-plane run.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k: usize,
    /// Descending comma-separated rho values.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid_points")]
    pub rho_grid: Option<Vec<f64>>,
    /// Evenly spaced grid from MPR(top-k) down to 0.
    #[arg(long, default_value_t = 10)]
    pub grid_points: usize,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value_t = InputArg::Rounded)]
    pub oracle_input: InputArg,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an MMR baseline curve over lambda = 0, 0.1, ..., 1.
    #[arg(long)]
    pub mmr_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long, default_value_t = 3)]
    pub vc: u64,
    /// Curated-set size.
    #[arg(long, default_value_t = 500)]
    pub m: u64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Number of queries M the budget must cover.
    #[arg(long, default_value_t = 10)]
    pub queries: u64,
    /// Rademacher complexity to plug in; the VC bound is used when absent.
    #[arg(long)]
    pub rademacher: Option<f64>,
    /// Use the smaller (tighter) budget constant.
    #[arg(long)]
    pub tight_constant: bool,
    /// Use the fully symmetrized gap bound `2R + sqrt(log(2/delta)/(2m))`.
    #[arg(long)]
    pub symmetrized: bool,
    /// Run the coverage experiment with this dataset as the retrieved set
    /// against a uniform population over its label cells.
    #[arg(long)]
    pub gap_retrieval: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 2000)]
    pub rademacher_trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareIpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', conflicts_with = "rho")]
    pub rho_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_IP_LIMIT)]
    pub n_limit: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::invalid(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Mpr(a) => cmd_mpr(a),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::CompareIp(a) => cmd_compare_ip(a),
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".config.json");
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_sidecar<A: Serialize>(path: &Path, command: &str, args: &A, extra: serde_json::Value) -> Result<()> {
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
        "result": extra,
    });
    write_json(&sidecar_path(path), &doc)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SyntheticSpec>(&text)?
        }
        None => SyntheticSpec::biased_two_by_five(a.n, a.m, a.d, a.seed),
    };
    spec.seed = a.seed;
    let (retrieval, mut curated, query) = generate_synthetic(&spec)?;
    if let Some(size) = a.balanced_curation {
        curated = build_balanced_curation(&retrieval.schema().axes, size)?;
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let resolved = json!({ "spec": spec });
    for (name, ds) in [("retrieval.csv", &retrieval), ("curated.csv", &curated)] {
        let path = a.out.join(name);
        save_dataset(ds, &path)?;
        write_sidecar(&path, "gen", a, resolved.clone())?;
    }
    let path = a.out.join("query.csv");
    save_query(&query, &path)?;
    write_sidecar(&path, "gen", a, resolved)
}

struct Loaded {
    retrieval: Dataset,
    curated: Dataset,
    query: Query,
}

fn load(d: &DataArgs) -> Result<Loaded> {
    let retrieval = load_dataset(&d.retrieval, Role::Retrieval)?;
    let mut curated = load_dataset(&d.curated, Role::Curated)?;
    let query = load_query(&d.query)?;
    if let Some(size) = d.curation_pool {
        curated = condition_curation(&curated, &query, size)?;
    }
    Ok(Loaded {
        retrieval,
        curated,
        query,
    })
}

/// Every single-cell and single-category indicator of the shared schema.
pub fn default_finite_class(retrieval: &Dataset, curated: &Dataset) -> Result<Vec<Indicator>> {
    let schema = retrieval.schema().union_labels(curated.schema())?;
    let mut class = Indicator::cells(&schema);
    if schema.axes.len() > 1 {
        class.extend(Indicator::marginals(&schema));
    }
    Ok(class)
}

fn oracle_spec(o: &OracleArgs, retrieval: &Dataset, curated: &Dataset) -> Result<OracleSpec> {
    Ok(match o.oracle {
        OracleKind::Linear => OracleSpec::Linear { view: o.feature_view },
        OracleKind::Tree => OracleSpec::Tree {
            view: o.feature_view,
            depth: o.tree_depth,
        },
        OracleKind::Mlp => OracleSpec::Mlp {
            view: o.feature_view,
            config: MlpConfig {
                hidden: o.mlp_hidden,
                epochs: o.mlp_epochs,
                step_size: o.mlp_step,
                seed: o.seed,
                zero_output_init: false,
            },
        },
        OracleKind::Finite => OracleSpec::Finite {
            indicators: default_finite_class(retrieval, curated)?,
        },
    })
}

fn read_selection(ds: &Dataset, path: &Path) -> Result<Selection> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") {
        return Err(Error::MalformedHeader(format!(
            "selection file {} must start with an `id` column",
            path.display()
        )));
    }
    let index: std::collections::HashMap<&str, usize> = ds
        .items()
        .iter()
        .enumerate()
        .map(|(i, it)| (it.id.as_str(), i))
        .collect();
    let mut chosen = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default();
        let i = *index.get(id).ok_or_else(|| Error::Row {
            row: row + 1,
            message: format!("unknown item id `{id}`"),
        })?;
        chosen.push(i);
    }
    Selection::from_indices(ds.len(), &chosen)
}

fn write_selection(ds: &Dataset, sel: &Selection, scores: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?);
    w.write_record(["id", "similarity"])?;
    for i in sel.indices() {
        w.write_record([ds.items()[i].id.clone(), fmt_f64(scores[i])])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_json(path, value)
        }
        None => {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn cmd_mpr(a: &MprArgs) -> Result<()> {
    let d = load(&a.data)?;
    let sel = match (&a.selection, a.k) {
        (Some(p), _) => read_selection(&d.retrieval, p)?,
        (None, Some(k)) => top_k_scores(&similarities(&d.retrieval, &d.query)?.0, k)?,
        (None, None) => return Err(Error::invalid("give either --selection or --k")),
    };
    let report = if let Some(kernel) = a.kernel {
        mpr_rkhs(&sel, &d.retrieval, &d.curated, kernel, a.oracle.feature_view)?
    } else if a.closed_form {
        mpr_closed_form_linear(&sel, &d.retrieval, &d.curated, a.oracle.feature_view)?
    } else if a.oracle.oracle == OracleKind::Finite {
        let class = default_finite_class(&d.retrieval, &d.curated)?;
        mpr_exact_finite(&sel, &d.retrieval, &d.curated, &class)?
    } else {
        let spec = oracle_spec(&a.oracle, &d.retrieval, &d.curated)?;
        mpr_via_oracle(&sel, &d.retrieval, &d.curated, &spec)?
    };
    emit_json(a.out.as_deref(), &report)?;
    if let Some(out) = &a.out {
        write_sidecar(out, "mpr", a, json!({ "k": sel.k(), "value": report.value }))?;
    }
    Ok(())
}

fn input_mode(i: InputArg) -> OracleInput {
    match i {
        InputArg::Rounded => OracleInput::Rounded,
        InputArg::Fractional => OracleInput::Fractional,
    }
}

fn cmd_retrieve(a: &RetrieveArgs) -> Result<()> {
    let d = load(&a.data)?;
    let scores = similarities(&d.retrieval, &d.query)?.0;
    let spec = oracle_spec(&a.oracle, &d.retrieval, &d.curated)?;
    let (sel, trace): (Selection, Option<MoprTrace>) = match a.algo {
        Algo::Topk => (top_k_scores(&scores, a.k)?, None),
        Algo::Mmr => (mmr_retrieve(&d.retrieval, &d.query, a.k, a.lambda)?, None),
        Algo::Mopr => {
            let cfg = MoprConfig {
                rho: a.rho,
                max_iterations: a.iterations,
                oracle: spec.clone(),
                curation_pool_size: None,
                oracle_input: input_mode(a.oracle_input),
            };
            let (sel, trace) = mopr_retrieve(&d.retrieval, &d.curated, &d.query, a.k, &cfg)?;
            (sel, Some(trace))
        }
        Algo::MoprQp => {
            let (sel, trace) = mopr_qp_linear(
                &d.retrieval,
                &d.curated,
                &d.query,
                a.k,
                a.rho,
                a.iterations,
                a.oracle.feature_view,
            )?;
            (sel, Some(trace))
        }
    };
    let achieved = match a.algo {
        Algo::MoprQp => mpr_closed_form_linear(&sel, &d.retrieval, &d.curated, a.oracle.feature_view)?.value,
        _ => measure_mpr(&sel, &d.retrieval, &d.curated, &spec)?,
    };
    write_selection(&d.retrieval, &sel, &scores, &a.out)?;
    let summary = json!({
        "k": sel.k(),
        "mpr_achieved": achieved,
        "mean_similarity": sel.objective(&scores) / sel.k() as f64,
        "halted_by": trace.as_ref().and_then(|t| t.outcome.as_ref()).map(|o| o.halted_by),
        "iterations": trace.as_ref().map(|t| t.iterations()),
        "effective_rho": trace.as_ref().map(|t| t.effective_rho),
    });
    write_sidecar(&a.out, "retrieve", a, summary.clone())?;
    if let Some(path) = &a.trace {
        emit_json(Some(path), &trace)?;
        write_sidecar(path, "retrieve", a, summary)?;
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let d = load(&a.data)?;
    let spec = oracle_spec(&a.oracle, &d.retrieval, &d.curated)?;
    let scores = similarities(&d.retrieval, &d.query)?.0;
    let top = top_k_scores(&scores, a.k)?;
    let top_mpr = measure_mpr(&top, &d.retrieval, &d.curated, &spec)?;
    let grid = match &a.rho_grid {
        Some(g) => g.clone(),
        None => {
            if a.grid_points == 0 {
                return Err(Error::invalid("--grid-points must be positive"));
            }
            let steps = a.grid_points.saturating_sub(1).max(1) as f64;
            (0..a.grid_points).map(|i| top_mpr * (1.0 - i as f64 / steps)).collect()
        }
    };
    let template = MoprConfig {
        rho: 0.0,
        max_iterations: a.iterations,
        oracle: spec.clone(),
        curation_pool_size: None,
        oracle_input: input_mode(a.oracle_input),
    };
    let rows = pareto_sweep(&d.retrieval, &d.curated, &d.query, a.k, &template, &grid, a.jobs)?;
    write_sweep_csv(&rows, create(&a.out)?)?;
    let resolved = json!({ "rho_grid": grid, "topk_mpr": top_mpr });
    write_sidecar(&a.out, "sweep", a, resolved)?;

    if let Some(path) = &a.mmr_out {
        let lambdas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let points = mmr_sweep(&d.retrieval, &d.curated, &d.query, a.k, &lambdas, &spec, None)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(create(path)?);
        w.write_record([
            "lambda",
            "mpr_achieved",
            "mean_similarity",
            "sim_frac_topk",
            "mpr_frac_topk",
        ])?;
        for p in &points {
            w.write_record([
                fmt_f64(p.lambda),
                fmt_f64(p.mpr_achieved),
                fmt_f64(p.mean_similarity),
                fmt_f64(p.sim_frac_topk),
                fmt_f64(p.mpr_frac_topk),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        write_sidecar(path, "sweep", a, json!({ "lambdas": lambdas }))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BoundsOutput {
    vc_rademacher_bound: f64,
    rademacher_used: f64,
    generalization_bound: f64,
    query_budget: u64,
    query_budget_tight: u64,
    budget_check: f64,
    gap_experiment: Option<BoundReport>,
}

fn cmd_bounds(a: &BoundsArgs) -> Result<()> {
    let form = if a.symmetrized {
        GapBound::Symmetrized
    } else {
        GapBound::Stated
    };
    let vc_bound = vc_rademacher_bound(a.vc, a.m)?;
    let rad = a.rademacher.unwrap_or(vc_bound);
    let constant = if a.tight_constant {
        BudgetConstant::Tight
    } else {
        BudgetConstant::Standard
    };
    let budget = query_budget(a.vc, a.epsilon, a.delta, a.queries, constant)?;
    let tight = query_budget(a.vc, a.epsilon, a.delta, a.queries, BudgetConstant::Tight)?;
    let budget_check =
        vc_rademacher_bound(a.vc, budget)? + ((2.0 * a.queries as f64 / a.delta).ln() / (8.0 * budget as f64)).sqrt();
    let gap = match &a.gap_retrieval {
        Some(path) => {
            let retrieved = load_dataset(path, Role::Retrieval)?;
            let pop = KnownPopulation::uniform_cells(&retrieved.schema().axes)?;
            let class = Indicator::marginals(retrieved.schema());
            let cfg = GapConfig {
                m: a.m as usize,
                trials: a.trials,
                delta: a.delta,
                seed: a.seed,
                rademacher_trials: a.rademacher_trials,
                bound: form,
            };
            let mut report = gap_experiment(&pop, &class, retrieved.items(), &cfg)?;
            report.parameters.vc = Some(a.vc);
            Some(report)
        }
        None => None,
    };
    let output = BoundsOutput {
        vc_rademacher_bound: vc_bound,
        rademacher_used: rad,
        generalization_bound: generalization_bound_with(rad, a.m, a.delta, form)?,
        query_budget: budget,
        query_budget_tight: tight,
        budget_check,
        gap_experiment: gap,
    };
    emit_json(a.out.as_deref(), &output)?;
    if let Some(out) = &a.out {
        write_sidecar(out, "bounds", a, serde_json::Value::Null)?;
    }
    Ok(())
}

fn cmd_compare_ip(a: &CompareIpArgs) -> Result<()> {
    let d = load(&a.data)?;
    let n = d.retrieval.len();
    if n > a.n_limit {
        return Err(Error::TooLarge { n, limit: a.n_limit });
    }
    let scores = similarities(&d.retrieval, &d.query)?.0;
    let class = default_finite_class(&d.retrieval, &d.curated)?;
    let values: Vec<(Vec<f64>, f64)> = class
        .iter()
        .map(|ind| {
            let pool = d
                .retrieval
                .items()
                .iter()
                .map(|it| ind.evaluate(it))
                .collect::<Result<Vec<_>>>()?;
            let cur = d
                .curated
                .items()
                .iter()
                .map(|it| ind.evaluate(it))
                .sum::<Result<f64>>()?;
            Ok((pool, cur / d.curated.len() as f64))
        })
        .collect::<Result<_>>()?;
    let grid = match (&a.rho_grid, a.rho) {
        (Some(g), _) => g.clone(),
        (None, Some(r)) => vec![r],
        (None, None) => {
            let top = top_k_scores(&scores, a.k)?;
            let top_mpr = mpr_exact_finite(&top, &d.retrieval, &d.curated, &class)?.value;
            (0..5).map(|i| top_mpr * (1.0 - i as f64 / 8.0)).collect()
        }
    };

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(&a.out)?);
    w.write_record([
        "rho",
        "lp_objective",
        "rounded_objective",
        "rounded_feasible",
        "ip_objective",
        "fractional_entries",
    ])?;
    for &rho in &grid {
        let cuts: Vec<Cut> = values
            .iter()
            .map(|(pool, mean)| Cut::from_statistic(pool, *mean, a.k, rho))
            .collect();
        let lp = solve_lp(&scores, &cuts, a.k)?;
        let ip = match solve_ip_exact(&scores, &cuts, a.k, a.n_limit) {
            Ok(ip) => Some(ip),
            Err(Error::Infeasible) => None,
            Err(e) => return Err(e),
        };
        let ip_field = ip.as_ref().map(|s| fmt_f64(s.objective)).unwrap_or_default();
        if lp.is_optimal() {
            let rounded = round_top_k(&lp.a, a.k)?;
            let feasible = violated_cuts(&rounded, &cuts).is_empty();
            w.write_record([
                fmt_f64(rho),
                fmt_f64(lp.objective),
                fmt_f64(rounded.objective(&scores)),
                feasible.to_string(),
                ip_field,
                lp.fractional.to_string(),
            ])?;
        } else {
            w.write_record([
                fmt_f64(rho),
                String::new(),
                String::new(),
                String::new(),
                ip_field,
                String::new(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    write_sidecar(
        &a.out,
        "compare-ip",
        a,
        json!({ "rho_grid": grid, "class_size": class.len() }),
    )
}
