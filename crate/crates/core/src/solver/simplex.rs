//! Dense bounded-variable primal simplex.
//!
//! Every row is written as `sum_j a_ij x_j - s_i = 0` with a logical
//! variable `s_i` carrying the row range `[row_lower, row_upper]`, so box,
//! range and equality constraints all become variable bounds. Phase I adds
//! one artificial per row whose logical cannot start inside its range.
//!
//! Pivoting: Dantzig's largest reduced cost with ties to the lowest column
//! index; after `BLAND_AFTER` consecutive degenerate pivots the rule
//! switches to Bland's (lowest eligible column, lowest leaving column among
//! ratio ties) until a non-degenerate step is taken. Both rules are
//! deterministic and Bland's guarantees termination.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const BLAND_AFTER: usize = 50;

/// `maximize objective . x` subject to
/// `row_lower <= rows . x <= row_upper` and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Optional starting point: variables flagged here start at their upper
    /// bound, all others at their lower bound.
    pub start_at_upper: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Row activities `rows . x`.
    pub activity: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::invalid("bound vectors must match the objective length"));
        }
        if self.row_lower.len() != self.rows.len() || self.row_upper.len() != self.rows.len() {
            return Err(Error::invalid("row range vectors must match the row count"));
        }
        if let Some(start) = &self.start_at_upper {
            if start.len() != n {
                return Err(Error::invalid("start hint must match the objective length"));
            }
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !l.is_finite() || u.is_nan() || l > u {
                return Err(Error::invalid(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != n || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} is malformed")));
            }
            let (l, u) = (self.row_lower[i], self.row_upper[i]);
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::invalid(format!("row {i} has range [{l}, {u}]")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("objective must be finite"));
        }
        Ok(())
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `B^{-1} [A | -I | artificials]`, row-major.
    t: Vec<f64>,
    basis: Vec<usize>,
    basic_row: Vec<Option<usize>>,
    value: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    pivots: usize,
    pivot_limit: usize,
}

enum Step {
    Optimal,
    Moved,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn reduced_costs(&mut self) {
        let mut d = self.cost.clone();
        for i in 0..self.rows {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dj, tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        self.d = d;
    }

    fn eligible(&self, j: usize) -> bool {
        if self.basic_row[j].is_some() || self.lo[j] == self.up[j] {
            return false;
        }
        if self.value[j] == self.lo[j] {
            self.d[j] < -COST_TOL
        } else {
            self.d[j] > COST_TOL
        }
    }

    fn step(&mut self, bland: bool) -> Result<(Step, f64)> {
        let entering = if bland {
            (0..self.cols).find(|&j| self.eligible(j))
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.cols {
                if self.eligible(j) && best.is_none_or(|(_, b)| self.d[j].abs() > b) {
                    best = Some((j, self.d[j].abs()));
                }
            }
            best.map(|(j, _)| j)
        };
        let Some(j) = entering else {
            return Ok((Step::Optimal, 0.0));
        };
        let increasing = self.value[j] == self.lo[j];
        let dir = if increasing { 1.0 } else { -1.0 };

        let flip = self.up[j] - self.lo[j];
        let mut leave: Option<(usize, f64, f64)> = None; // (row, limit, alpha)
        for i in 0..self.rows {
            let alpha = dir * self.at(i, j);
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let limit = if alpha > 0.0 {
                (self.value[b] - self.lo[b]) / alpha
            } else {
                (self.up[b] - self.value[b]) / -alpha
            };
            if limit.is_nan() || limit == f64::INFINITY {
                continue;
            }
            let limit = limit.max(0.0);
            let better = match leave {
                None => true,
                Some((r, best, best_alpha)) => {
                    if limit < best - RATIO_TIE {
                        true
                    } else if limit <= best + RATIO_TIE {
                        if bland {
                            b < self.basis[r]
                        } else {
                            alpha.abs() > best_alpha.abs()
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                leave = Some((i, limit, alpha));
            }
        }

        let theta = match leave {
            Some((_, lim, _)) if lim < flip => lim,
            _ if flip.is_finite() => flip,
            _ => return Err(Error::Unbounded),
        };

        for i in 0..self.rows {
            let tij = self.at(i, j);
            if tij != 0.0 {
                let b = self.basis[i];
                self.value[b] -= dir * theta * tij;
            }
        }

        match leave {
            Some((r, lim, alpha)) if lim < flip => {
                self.value[j] += dir * theta;
                let b = self.basis[r];
                self.value[b] = if alpha > 0.0 { self.lo[b] } else { self.up[b] };
                self.pivot(r, j);
            }
            _ => {
                self.value[j] = if increasing { self.up[j] } else { self.lo[j] };
            }
        }
        self.pivots += 1;
        if self.pivots > self.pivot_limit {
            return Err(Error::IterationLimit(self.pivot_limit));
        }
        Ok((Step::Moved, theta))
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.at(r, j);
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, j);
            if f != 0.0 {
                for (v, pr) in self.t[i * cols..(i + 1) * cols].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.t[i * cols + j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (dv, pr) in self.d.iter_mut().zip(&pivot_row) {
                *dv -= f * pr;
            }
            self.d[j] = 0.0;
        }
        let old = self.basis[r];
        self.basic_row[old] = None;
        self.basic_row[j] = Some(r);
        self.basis[r] = j;
    }

    fn optimize(&mut self) -> Result<()> {
        self.reduced_costs();
        let mut degenerate = 0usize;
        loop {
            let (step, theta) = self.step(degenerate >= BLAND_AFTER)?;
            match step {
                Step::Optimal => return Ok(()),
                Step::Moved => {
                    if theta <= RATIO_TIE {
                        degenerate += 1;
                    } else {
                        degenerate = 0;
                    }
                }
            }
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<SimplexResult> {
    lp.validate()?;
    let nv = lp.objective.len();
    let m = lp.rows.len();

    let mut x0: Vec<f64> = lp.lower.clone();
    if let Some(start) = &lp.start_at_upper {
        for j in 0..nv {
            if start[j] && lp.upper[j].is_finite() {
                x0[j] = lp.upper[j];
            }
        }
    }

    // Classify rows: logical basic when its activity already lies in range,
    // otherwise an artificial starts basic.
    let activity: Vec<f64> = lp
        .rows
        .iter()
        .map(|row| row.iter().zip(&x0).map(|(a, x)| a * x).sum())
        .collect();
    let mut artificial_rows = Vec::new();
    let mut slack_value = vec![0.0; m];
    let mut art_sign = Vec::new();
    for i in 0..m {
        let (l, u) = (lp.row_lower[i], lp.row_upper[i]);
        if activity[i] < l - FEAS_TOL {
            slack_value[i] = l;
            artificial_rows.push(i);
            art_sign.push(1.0); // act - l + t = 0
        } else if activity[i] > u + FEAS_TOL {
            slack_value[i] = u;
            artificial_rows.push(i);
            art_sign.push(-1.0);
        } else {
            slack_value[i] = activity[i];
        }
    }
    let na = artificial_rows.len();
    let cols = nv + m + na;

    let mut lo = lp.lower.clone();
    let mut up = lp.upper.clone();
    lo.extend_from_slice(&lp.row_lower);
    up.extend_from_slice(&lp.row_upper);
    lo.extend(std::iter::repeat_n(0.0, na));
    up.extend(std::iter::repeat_n(f64::INFINITY, na));

    let mut value = x0;
    value.extend_from_slice(&slack_value);
    let mut basis: Vec<usize> = (0..m).map(|i| nv + i).collect();
    let mut art_of_row = vec![None; m];
    for (a, (&i, &sign)) in artificial_rows.iter().zip(&art_sign).enumerate() {
        basis[i] = nv + m + a;
        art_of_row[i] = Some((a, sign));
        let v: f64 = sign * (slack_value[i] - activity[i]);
        value.push(v.max(0.0));
    }

    // Original columns of the full system, then B^{-1} with B diagonal.
    let original = |i: usize, j: usize| -> f64 {
        if j < nv {
            lp.rows[i][j]
        } else if j < nv + m {
            if j - nv == i {
                -1.0
            } else {
                0.0
            }
        } else {
            let a = j - nv - m;
            if artificial_rows[a] == i {
                art_sign[a]
            } else {
                0.0
            }
        }
    };
    let mut t = vec![0.0; m * cols];
    for i in 0..m {
        let diag = match art_of_row[i] {
            Some((_, sign)) => sign,
            None => -1.0,
        };
        for j in 0..cols {
            t[i * cols + j] = original(i, j) / diag;
        }
    }
    let mut basic_row = vec![None; cols];
    for (i, &b) in basis.iter().enumerate() {
        basic_row[b] = Some(i);
    }

    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis,
        basic_row,
        value,
        lo,
        up,
        cost: vec![0.0; cols],
        d: vec![0.0; cols],
        pivots: 0,
        pivot_limit: 50_000 + 200 * (m + cols),
    };

    if na > 0 {
        for a in 0..na {
            tab.cost[nv + m + a] = 1.0;
        }
        tab.optimize()?;
        let infeasibility: f64 = (0..na).map(|a| tab.value[nv + m + a]).sum();
        let scale = 1.0
            + lp.row_lower
                .iter()
                .chain(&lp.row_upper)
                .filter(|v| v.is_finite())
                .fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeasibility > FEAS_TOL * scale {
            return Ok(SimplexResult {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                activity: Vec::new(),
                objective: f64::NAN,
                pivots: tab.pivots,
            });
        }
        for a in 0..na {
            let j = nv + m + a;
            tab.up[j] = 0.0;
            if tab.basic_row[j].is_none() {
                tab.value[j] = 0.0;
            }
        }
    }

    tab.cost = vec![0.0; cols];
    for j in 0..nv {
        tab.cost[j] = -lp.objective[j];
    }
    tab.optimize()?;

    refine(&mut tab, &original);

    let x: Vec<f64> = tab.value[..nv].to_vec();
    let activity: Vec<f64> = lp
        .rows
        .iter()
        .map(|row| row.iter().zip(&x).map(|(a, v)| a * v).sum())
        .collect();
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(SimplexResult {
        status: LpStatus::Optimal,
        x,
        activity,
        objective,
        pivots: tab.pivots,
    })
}

/// Recomputes basic values from the nonbasic ones through an LU solve of
/// the basis, removing drift accumulated by tableau updates, and snaps
/// values within tolerance of a bound onto it.
fn refine(tab: &mut Tableau, original: &dyn Fn(usize, usize) -> f64) {
    let m = tab.rows;
    if m > 0 {
        let b = DMatrix::from_fn(m, m, |i, r| original(i, tab.basis[r]));
        let mut rhs = DVector::zeros(m);
        for j in 0..tab.cols {
            if tab.basic_row[j].is_none() && tab.value[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= original(i, j) * tab.value[j];
                }
            }
        }
        if let Some(sol) = b.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                for (r, v) in sol.iter().enumerate() {
                    tab.value[tab.basis[r]] = *v;
                }
            }
        }
    }
    for j in 0..tab.cols {
        let v = tab.value[j];
        if (v - tab.lo[j]).abs() <= FEAS_TOL {
            tab.value[j] = tab.lo[j];
        } else if (v - tab.up[j]).abs() <= FEAS_TOL {
            tab.value[j] = tab.up[j];
        }
    }
}
