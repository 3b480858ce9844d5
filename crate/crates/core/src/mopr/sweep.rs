use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{mean_over, measure_mpr, mopr_retrieve, prepare_curation, HaltedBy, MoprConfig};
use crate::datamodel::{fmt_f64, Dataset, Query};
use crate::error::{Error, Result};
use crate::similarity::{similarities, top_k_scores};

pub const SWEEP_HEADER: [&str; 7] = [
    "rho_target",
    "mpr_achieved",
    "mean_similarity",
    "sim_frac_topk",
    "mpr_frac_topk",
    "halted_by",
    "iterations",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub rho_target: f64,
    pub mpr_achieved: f64,
    pub mean_similarity: f64,
    pub sim_frac_topk: f64,
    pub mpr_frac_topk: f64,
    pub halted_by: HaltedBy,
    pub iterations: usize,
}

/// One grid point; failed runs keep their error message instead of a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho_target: f64,
    pub point: Option<ParetoPoint>,
    pub error: Option<String>,
}

/// `value / reference`, with 0/0 read as 1 (both at the anchor).
pub(crate) fn fraction(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if value == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        value / reference
    }
}

/// Runs MOPR once per `rho` in `grid` (descending), normalizing each point
/// against unconstrained top-k. Runs are spread over `jobs` threads; the
/// output keeps grid order and does not depend on `jobs`.
pub fn pareto_sweep(
    retrieval: &Dataset,
    curated: &Dataset,
    q: &Query,
    k: usize,
    template: &MoprConfig,
    grid: &[f64],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("rho grid is empty"));
    }
    if grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("rho grid must be descending"));
    }
    let conditioned = prepare_curation(curated, q, template.curation_pool_size)?;
    let scores = similarities(retrieval, q)?.0;
    let top = top_k_scores(&scores, k)?;
    let top_sim = mean_over(&top, &scores);
    let top_mpr = measure_mpr(&top, retrieval, &conditioned, &template.oracle)?;

    let run_one = |rho: f64| -> SweepRow {
        let cfg = MoprConfig {
            rho,
            ..template.clone()
        };
        match mopr_retrieve(retrieval, curated, q, k, &cfg) {
            Ok((_, trace)) => {
                let out = trace.outcome.as_ref().expect("successful runs carry an outcome");
                SweepRow {
                    rho_target: rho,
                    point: Some(ParetoPoint {
                        rho_target: rho,
                        mpr_achieved: out.achieved_mpr,
                        mean_similarity: out.mean_similarity,
                        sim_frac_topk: fraction(out.mean_similarity, top_sim),
                        mpr_frac_topk: fraction(out.achieved_mpr, top_mpr),
                        halted_by: out.halted_by,
                        iterations: trace.iterations(),
                    }),
                    error: None,
                }
            }
            Err(e) => SweepRow {
                rho_target: rho,
                point: None,
                error: Some(e.to_string()),
            },
        }
    };

    let jobs = jobs.clamp(1, grid.len());
    if jobs == 1 {
        return Ok(grid.iter().map(|&rho| run_one(rho)).collect());
    }
    let slots: Vec<Mutex<Option<SweepRow>>> = grid.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = {
                    let mut guard = next.lock().expect("counter lock");
                    let i = *guard;
                    *guard += 1;
                    i
                };
                if i >= grid.len() {
                    break;
                }
                let row = run_one(grid[i]);
                *slots[i].lock().expect("slot lock") = Some(row);
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
        .collect())
}

/// Writes the sweep as CSV; failed points keep their `rho_target` and
/// leave the other fields empty with `halted_by = failed`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for row in rows {
        match &row.point {
            Some(p) => out.write_record([
                fmt_f64(p.rho_target),
                fmt_f64(p.mpr_achieved),
                fmt_f64(p.mean_similarity),
                fmt_f64(p.sim_frac_topk),
                fmt_f64(p.mpr_frac_topk),
                p.halted_by.as_str().to_string(),
                p.iterations.to_string(),
            ])?,
            None => out.write_record([
                fmt_f64(row.rho_target),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "failed".to_string(),
                String::new(),
            ])?,
        }
    }
    out.flush().map_err(|e| Error::io("<sweep output>", e))?;
    Ok(())
}
