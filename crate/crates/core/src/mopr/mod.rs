//! Cutting-plane retrieval under an MPR constraint.
//!
//! Each round solves the relaxed retrieval LP, rounds it to the top `k`
//! entries, asks an oracle for the most violated statistic and, if the
//! violation exceeds `rho`, adds that statistic as a linear cut.

mod mmr;
mod sweep;

use serde::{Deserialize, Serialize};

pub use mmr::{mmr_retrieve, mmr_sweep, MmrPoint};
pub use sweep::{pareto_sweep, write_sweep_csv, ParetoPoint, SweepRow, SWEEP_HEADER};

use crate::datamodel::{Dataset, Query};
use crate::error::{Error, Result};
use crate::mpr::{mpr_closed_form_linear, mpr_via_oracle, Oracle, OracleSpec, SvdContext, TildeA};
use crate::similarity::{condition_curation, similarities, Selection};
use crate::solver::{round_top_k, solve_lp, Cut, CutSides, LpSolution};
use crate::statclasses::{DesignMatrix, FeatureView};

pub const DEFAULT_ITERATIONS: usize = 50;
/// Cuts whose coefficients agree within this sup-norm distance are duplicates.
pub const DUPLICATE_TOL: f64 = 1e-9;
/// Slack when comparing an oracle violation with `rho`.
pub const VIOLATION_TOL: f64 = 1e-9;
pub const RELAX_FACTOR: f64 = 1.05;
pub const MAX_RELAXATIONS: usize = 5;
/// A zero `rho` that proves infeasible is first relaxed to this value.
pub const RELAX_FLOOR: f64 = 1e-3;

/// Which weights the oracle sees each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleInput {
    /// The rounded top-k selection.
    #[default]
    Rounded,
    /// The fractional LP iterate.
    Fractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoprConfig {
    pub rho: f64,
    pub max_iterations: usize,
    pub oracle: OracleSpec,
    pub curation_pool_size: Option<usize>,
    #[serde(default)]
    pub oracle_input: OracleInput,
}

impl MoprConfig {
    pub fn new(rho: f64, oracle: OracleSpec) -> Self {
        Self {
            rho,
            max_iterations: DEFAULT_ITERATIONS,
            oracle,
            curation_pool_size: None,
            oracle_input: OracleInput::Rounded,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::invalid(format!(
                "rho must be a non-negative number, got {}",
                self.rho
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("iteration cap must be at least 1"));
        }
        if self.curation_pool_size == Some(0) {
            return Err(Error::invalid("curation pool size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaltedBy {
    ConstraintSatisfied,
    IterationCap,
    /// Neither the rounded nor the fractional iterate produced a new
    /// separating cut, so further rounds would repeat themselves.
    Stalled,
}

impl HaltedBy {
    pub fn as_str(self) -> &'static str {
        match self {
            HaltedBy::ConstraintSatisfied => "constraint-satisfied",
            HaltedBy::IterationCap => "iteration-cap",
            HaltedBy::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lp_objective: f64,
    pub fractional_entries: usize,
    pub active_cuts: usize,
    /// Oracle value on the iterate it was shown.
    pub violation: f64,
    pub rho: f64,
    pub cut_added: bool,
    /// Set when the rounded witness was unusable and the fractional
    /// iterate supplied the cut.
    pub fractional_fallback: bool,
    pub duplicates_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoprOutcome {
    pub selection: Selection,
    pub achieved_mpr: f64,
    pub mean_similarity: f64,
    pub halted_by: HaltedBy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoprTrace {
    pub records: Vec<IterationRecord>,
    pub cuts: Vec<Cut>,
    pub effective_rho: f64,
    pub relaxations: usize,
    pub outcome: Option<MoprOutcome>,
}

impl MoprTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Supplies the violated statistic for a weight vector, as values on all
/// n + m rows, or `None` when nothing is identifiable.
trait Separator {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn sides(&self) -> CutSides;
    fn separate(&self, tilde: &TildeA) -> Result<Option<(f64, Vec<f64>)>>;
}

struct OracleSeparator(Oracle);

impl Separator for OracleSeparator {
    fn n(&self) -> usize {
        self.0.n()
    }
    fn m(&self) -> usize {
        self.0.m()
    }
    fn sides(&self) -> CutSides {
        CutSides::Both
    }
    fn separate(&self, tilde: &TildeA) -> Result<Option<(f64, Vec<f64>)>> {
        match self.0.query(tilde) {
            Ok(ans) => Ok(Some((ans.value, ans.values))),
            Err(Error::NoIdentifiableStatistic) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Supporting hyperplanes of the closed-form linear MPR.
struct NormSeparator {
    svd: SvdContext,
    n: usize,
    m: usize,
}

impl Separator for NormSeparator {
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.m
    }
    fn sides(&self) -> CutSides {
        CutSides::Upper
    }
    fn separate(&self, tilde: &TildeA) -> Result<Option<(f64, Vec<f64>)>> {
        // the optimal statistic's values are the subgradient scaled by k
        Ok(self
            .svd
            .optimal_values(tilde)
            .map(|values| (self.svd.mpr(tilde), values)))
    }
}

fn cut_from_values(values: &[f64], n: usize, k: usize, rho: f64, sides: CutSides) -> Cut {
    let curated = &values[n..];
    let mean = curated.iter().sum::<f64>() / curated.len() as f64;
    let mut cut = Cut::from_statistic(&values[..n], mean, k, rho);
    cut.sides = sides;
    cut
}

fn is_duplicate(cut: &Cut, cuts: &[Cut]) -> bool {
    cuts.iter().any(|c| {
        c.coefficients
            .iter()
            .zip(&cut.coefficients)
            .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL)
    })
}

fn mean_over(sel: &Selection, s: &[f64]) -> f64 {
    sel.objective(s) / sel.k() as f64
}

struct Run<'a> {
    scores: &'a [f64],
    k: usize,
    max_iterations: usize,
    input: OracleInput,
    trace: MoprTrace,
}

impl Run<'_> {
    fn solve(&mut self) -> Result<LpSolution> {
        loop {
            let lp = solve_lp(self.scores, &self.trace.cuts, self.k)?;
            if lp.is_optimal() {
                return Ok(lp);
            }
            if self.trace.relaxations == MAX_RELAXATIONS {
                return Err(Error::PersistentInfeasibility {
                    effective_rho: self.trace.effective_rho,
                    trace: Box::new(self.trace.clone()),
                });
            }
            self.trace.relaxations += 1;
            let rho = (self.trace.effective_rho * RELAX_FACTOR).max(RELAX_FLOOR);
            self.trace.effective_rho = rho;
            for cut in &mut self.trace.cuts {
                cut.bound = rho;
            }
        }
    }

    /// Returns the final rounded selection and why the loop stopped.
    fn execute(&mut self, sep: &dyn Separator) -> Result<(Selection, HaltedBy)> {
        let (n, m, k) = (sep.n(), sep.m(), self.k);
        for t in 1..=self.max_iterations {
            let lp = self.solve()?;
            let sel = round_top_k(&lp.a, k)?;
            let rho = self.trace.effective_rho;
            let rounded = TildeA::from_selection(&sel, m);
            let fractional = TildeA::from_fractional(&lp.a, k, m)?;
            let (first, second) = match self.input {
                OracleInput::Rounded => (&rounded, Some(&fractional)),
                OracleInput::Fractional => (&fractional, None),
            };
            let answer = sep.separate(first)?;
            let violation = answer.as_ref().map_or(0.0, |(v, _)| *v);
            let mut record = IterationRecord {
                iteration: t,
                lp_objective: lp.objective,
                fractional_entries: lp.fractional,
                active_cuts: lp.active_cuts,
                violation,
                rho,
                cut_added: false,
                fractional_fallback: false,
                duplicates_dropped: 0,
            };
            if violation <= rho + VIOLATION_TOL {
                self.trace.records.push(record);
                return Ok((sel, HaltedBy::ConstraintSatisfied));
            }

            // A usable cut is new and cuts off the current LP point.
            let usable = |cut: &Cut, cuts: &[Cut], dropped: &mut usize| {
                if is_duplicate(cut, cuts) {
                    *dropped += 1;
                    false
                } else {
                    cut.violation(&lp.a) > VIOLATION_TOL
                }
            };
            let sides = sep.sides();
            let mut chosen = None;
            if let Some((_, values)) = &answer {
                let cut = cut_from_values(values, n, k, rho, sides);
                if usable(&cut, &self.trace.cuts, &mut record.duplicates_dropped) {
                    chosen = Some(cut);
                }
            }
            if chosen.is_none() {
                if let Some(tilde) = second {
                    if let Some((v, values)) = sep.separate(tilde)? {
                        let cut = cut_from_values(&values, n, k, rho, sides);
                        if v > rho + VIOLATION_TOL && usable(&cut, &self.trace.cuts, &mut record.duplicates_dropped) {
                            chosen = Some(cut);
                            record.fractional_fallback = true;
                        }
                    }
                }
            }
            let stalled = chosen.is_none();
            if let Some(cut) = chosen {
                self.trace.cuts.push(cut);
                record.cut_added = true;
            }
            self.trace.records.push(record);
            if stalled {
                return Ok((sel, HaltedBy::Stalled));
            }
            if t == self.max_iterations {
                return Ok((sel, HaltedBy::IterationCap));
            }
        }
        unreachable!("iteration cap is at least 1")
    }
}

fn prepare_curation(curated: &Dataset, q: &Query, pool: Option<usize>) -> Result<Dataset> {
    match pool {
        Some(size) => condition_curation(curated, q, size),
        None => Ok(curated.clone()),
    }
}

/// MPR of a selection under an oracle class; an unidentifiable statistic
/// means every statistic in the class agrees, i.e. MPR 0.
pub fn measure_mpr(sel: &Selection, retrieval: &Dataset, curated: &Dataset, spec: &OracleSpec) -> Result<f64> {
    match mpr_via_oracle(sel, retrieval, curated, spec) {
        Ok(rep) => Ok(rep.value),
        Err(Error::NoIdentifiableStatistic) => Ok(0.0),
        Err(e) => Err(e),
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    Ok(())
}

pub fn mopr_retrieve(
    retrieval: &Dataset,
    curated: &Dataset,
    q: &Query,
    k: usize,
    cfg: &MoprConfig,
) -> Result<(Selection, MoprTrace)> {
    cfg.validate()?;
    check_k(retrieval.len(), k)?;
    let curated = prepare_curation(curated, q, cfg.curation_pool_size)?;
    let scores = similarities(retrieval, q)?.0;
    let sep = OracleSeparator(Oracle::new(&cfg.oracle, retrieval, &curated)?);
    let mut run = Run {
        scores: &scores,
        k,
        max_iterations: cfg.max_iterations,
        input: cfg.oracle_input,
        trace: MoprTrace {
            records: Vec::new(),
            cuts: Vec::new(),
            effective_rho: cfg.rho,
            relaxations: 0,
            outcome: None,
        },
    };
    let (sel, mut halted_by) = run.execute(&sep)?;
    let achieved = measure_mpr(&sel, retrieval, &curated, &cfg.oracle)?;
    if halted_by == HaltedBy::ConstraintSatisfied && achieved > run.trace.effective_rho + 1e-8 {
        halted_by = HaltedBy::IterationCap;
    }
    let mut trace = run.trace;
    trace.outcome = Some(MoprOutcome {
        selection: sel.clone(),
        achieved_mpr: achieved,
        mean_similarity: mean_over(&sel, &scores),
        halted_by,
    });
    Ok((sel, trace))
}

/// Cutting planes on the closed-form linear MPR constraint
/// `sqrt(mk/(m+k)) ||U_l^T a~|| <= rho` using supporting hyperplanes.
pub fn mopr_qp_linear(
    retrieval: &Dataset,
    curated: &Dataset,
    q: &Query,
    k: usize,
    rho: f64,
    max_iterations: usize,
    view: FeatureView,
) -> Result<(Selection, MoprTrace)> {
    let cfg = MoprConfig {
        rho,
        max_iterations,
        oracle: OracleSpec::linear(view),
        curation_pool_size: None,
        oracle_input: OracleInput::Rounded,
    };
    cfg.validate()?;
    check_k(retrieval.len(), k)?;
    let scores = similarities(retrieval, q)?.0;
    let design = DesignMatrix::new(retrieval, curated, view)?;
    let sep = NormSeparator {
        svd: SvdContext::new(&design.x)?,
        n: retrieval.len(),
        m: curated.len(),
    };
    let mut run = Run {
        scores: &scores,
        k,
        max_iterations,
        input: OracleInput::Rounded,
        trace: MoprTrace {
            records: Vec::new(),
            cuts: Vec::new(),
            effective_rho: rho,
            relaxations: 0,
            outcome: None,
        },
    };
    let (sel, mut halted_by) = run.execute(&sep)?;
    let achieved = mpr_closed_form_linear(&sel, retrieval, curated, view)?.value;
    if halted_by == HaltedBy::ConstraintSatisfied && achieved > run.trace.effective_rho + 1e-8 {
        halted_by = HaltedBy::IterationCap;
    }
    let mut trace = run.trace;
    trace.outcome = Some(MoprOutcome {
        selection: sel.clone(),
        achieved_mpr: achieved,
        mean_similarity: mean_over(&sel, &scores),
        halted_by,
    });
    Ok((sel, trace))
}
