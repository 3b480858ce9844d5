//! The relaxed retrieval LP, top-k rounding and an exact branch-and-bound
//! solver for small instances.

mod simplex;

use serde::{Deserialize, Serialize};

pub use simplex::{solve as solve_simplex, LinearProgram, LpStatus, SimplexResult};

use crate::error::{Error, Result};
use crate::similarity::{rank_top, Selection};

/// Entries within this distance of 0 or 1 count as integral.
pub const INTEGRALITY_TOL: f64 = 1e-8;
/// Slack allowed when checking a binary selection against the cuts.
pub const CUT_TOL: f64 = 1e-9;
pub const DEFAULT_IP_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutSides {
    /// `|coefficients . a - offset| <= bound`
    Both,
    /// `coefficients . a - offset <= bound`
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub coefficients: Vec<f64>,
    pub offset: f64,
    pub bound: f64,
    pub sides: CutSides,
}

impl Cut {
    /// Two-sided cut from a statistic evaluated on the retrieval pool and
    /// the curated mean of the same statistic.
    pub fn from_statistic(pool_values: &[f64], curated_mean: f64, k: usize, rho: f64) -> Self {
        let inv_k = 1.0 / k as f64;
        Self {
            coefficients: pool_values.iter().map(|v| v * inv_k).collect(),
            offset: curated_mean,
            bound: rho,
            sides: CutSides::Both,
        }
    }

    pub fn value(&self, a: &[f64]) -> f64 {
        self.coefficients.iter().zip(a).map(|(c, x)| c * x).sum::<f64>() - self.offset
    }

    /// Amount by which `a` exceeds the bound (negative when strictly inside).
    pub fn violation(&self, a: &[f64]) -> f64 {
        let v = self.value(a);
        match self.sides {
            CutSides::Both => v.abs() - self.bound,
            CutSides::Upper => v - self.bound,
        }
    }

    fn range(&self) -> (f64, f64) {
        match self.sides {
            CutSides::Both => (self.offset - self.bound, self.offset + self.bound),
            CutSides::Upper => (f64::NEG_INFINITY, self.offset + self.bound),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.coefficients.len() != n {
            return Err(Error::invalid(format!(
                "cut has {} coefficients, expected {n}",
                self.coefficients.len()
            )));
        }
        if self.coefficients.iter().any(|v| !v.is_finite())
            || !self.offset.is_finite()
            || !(self.bound.is_finite() && self.bound >= 0.0)
        {
            return Err(Error::invalid("cut entries must be finite with a non-negative bound"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub a: Vec<f64>,
    pub objective: f64,
    pub status: LpOutcome,
    /// Cut inequalities holding with equality (within tolerance).
    pub active_cuts: usize,
    /// Entries not within tolerance of 0 or 1.
    pub fractional: usize,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpOutcome {
    Optimal,
    Infeasible,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpOutcome::Optimal
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    Ok(())
}

/// `max s.a` over `a in [0,1]^n`, `sum a = k` and every cut.
pub fn solve_lp(s: &[f64], cuts: &[Cut], k: usize) -> Result<LpSolution> {
    let n = s.len();
    solve_lp_bounded(s, cuts, k, &vec![0.0; n], &vec![1.0; n])
}

/// As [`solve_lp`] with per-coordinate bounds inside `[0, 1]`.
pub fn solve_lp_bounded(s: &[f64], cuts: &[Cut], k: usize, lower: &[f64], upper: &[f64]) -> Result<LpSolution> {
    let n = s.len();
    check_k(n, k)?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("similarity scores must be finite"));
    }
    if lower.len() != n || upper.len() != n {
        return Err(Error::invalid("bound vectors must have length n"));
    }
    for cut in cuts {
        cut.validate(n)?;
    }

    // Start from the best k free items given the fixed ones.
    let fixed_ones = (0..n).filter(|&i| lower[i] >= 1.0).count();
    let free: Vec<usize> = (0..n).filter(|&i| lower[i] < upper[i]).collect();
    let free_scores: Vec<f64> = free.iter().map(|&i| s[i]).collect();
    let mut start = vec![false; n];
    for r in rank_top(&free_scores, k.saturating_sub(fixed_ones)) {
        start[free[r]] = true;
    }

    let mut rows = vec![vec![1.0; n]];
    let mut row_lower = vec![k as f64];
    let mut row_upper = vec![k as f64];
    for cut in cuts {
        let (l, u) = cut.range();
        rows.push(cut.coefficients.clone());
        row_lower.push(l);
        row_upper.push(u);
    }
    let lp = LinearProgram {
        objective: s.to_vec(),
        rows,
        row_lower,
        row_upper,
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        start_at_upper: Some(start),
    };
    let res = solve_simplex(&lp)?;
    if res.status == LpStatus::Infeasible {
        return Ok(LpSolution {
            a: Vec::new(),
            objective: f64::NAN,
            status: LpOutcome::Infeasible,
            active_cuts: 0,
            fractional: 0,
            pivots: res.pivots,
        });
    }
    let a: Vec<f64> = res.x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let active_cuts = cuts
        .iter()
        .zip(&res.activity[1..])
        .filter(|(cut, &act)| {
            let (l, u) = cut.range();
            (act - l).abs() <= INTEGRALITY_TOL || (act - u).abs() <= INTEGRALITY_TOL
        })
        .count();
    let fractional = a
        .iter()
        .filter(|&&v| v > INTEGRALITY_TOL && v < 1.0 - INTEGRALITY_TOL)
        .count();
    Ok(LpSolution {
        objective: res.objective,
        a,
        status: LpOutcome::Optimal,
        active_cuts,
        fractional,
        pivots: res.pivots,
    })
}

/// Indicator of the `k` largest entries of `a`, ties to the lower index.
pub fn round_top_k(a: &[f64], k: usize) -> Result<Selection> {
    check_k(a.len(), k)?;
    if a.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("relaxed solution contains NaN"));
    }
    Selection::from_indices(a.len(), &rank_top(a, k))
}

/// Indices of cuts the binary selection violates beyond [`CUT_TOL`].
pub fn violated_cuts(sel: &Selection, cuts: &[Cut]) -> Vec<usize> {
    let a = sel.as_f64();
    cuts.iter()
        .enumerate()
        .filter(|(_, c)| c.violation(&a) > CUT_TOL)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpSolution {
    pub selection: Selection,
    pub objective: f64,
    /// Objective of the root relaxation, an upper bound on `objective`.
    pub lp_bound: f64,
    pub nodes: usize,
}

/// Exact binary optimum by depth-first branch-and-bound on the LP bound.
/// Branches on the lowest-index fractional coordinate, 1-branch first; the
/// first optimum found is kept, which makes ties deterministic.
pub fn solve_ip_exact(s: &[f64], cuts: &[Cut], k: usize, n_limit: usize) -> Result<IpSolution> {
    let n = s.len();
    if n > n_limit {
        return Err(Error::TooLarge { n, limit: n_limit });
    }
    check_k(n, k)?;
    let root = solve_lp(s, cuts, k)?;
    if !root.is_optimal() {
        return Err(Error::Infeasible);
    }
    let mut search = Search {
        s,
        cuts,
        k,
        best: None,
        nodes: 0,
    };
    let mut lower = vec![0.0; n];
    let mut upper = vec![1.0; n];
    let lp_bound = root.objective;
    search.explore(&mut lower, &mut upper, Some(root))?;
    let (objective, a) = search.best.ok_or(Error::Infeasible)?;
    let selection = Selection::from_indicator(a)?;
    debug_assert!(objective <= lp_bound + 1e-9);
    Ok(IpSolution {
        selection,
        objective,
        lp_bound,
        nodes: search.nodes,
    })
}

struct Search<'a> {
    s: &'a [f64],
    cuts: &'a [Cut],
    k: usize,
    best: Option<(f64, Vec<bool>)>,
    nodes: usize,
}

impl Search<'_> {
    fn explore(&mut self, lower: &mut [f64], upper: &mut [f64], known: Option<LpSolution>) -> Result<()> {
        self.nodes += 1;
        let lp = match known {
            Some(lp) => lp,
            None => solve_lp_bounded(self.s, self.cuts, self.k, lower, upper)?,
        };
        if !lp.is_optimal() {
            return Ok(());
        }
        if let Some((best, _)) = &self.best {
            if lp.objective <= best + 1e-12 {
                return Ok(());
            }
        }
        let branch =
            lp.a.iter()
                .position(|&v| v > INTEGRALITY_TOL && v < 1.0 - INTEGRALITY_TOL);
        match branch {
            None => {
                let bits: Vec<bool> = lp.a.iter().map(|&v| v > 0.5).collect();
                let a: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                let feasible = bits.iter().filter(|&&b| b).count() == self.k
                    && self.cuts.iter().all(|c| c.violation(&a) <= CUT_TOL);
                if feasible {
                    let obj: f64 = self.s.iter().zip(&a).map(|(s, x)| s * x).sum();
                    if self.best.as_ref().is_none_or(|(b, _)| obj > *b + 1e-12) {
                        self.best = Some((obj, bits));
                    }
                }
                Ok(())
            }
            Some(j) => {
                let (l, u) = (lower[j], upper[j]);
                for v in [1.0, 0.0] {
                    lower[j] = v;
                    upper[j] = v;
                    self.explore(lower, upper, None)?;
                }
                lower[j] = l;
                upper[j] = u;
                Ok(())
            }
        }
    }
}
