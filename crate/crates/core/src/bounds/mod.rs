//! Sample-complexity tools: Monte Carlo Rademacher complexity, the VC
//! bound on it, the generalization gap of empirical MPR, the curated-set
//! size needed for a target accuracy, and a coverage experiment on a
//! population with known expectations.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Item, LabelAxis, Schema};
use crate::error::{Error, Result};
use crate::statclasses::Indicator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub estimate: f64,
    /// Standard error of the Monte Carlo mean.
    pub stderr: f64,
    pub trials: usize,
}

/// `E_sigma sup_c (1/m) sum_i sigma_i c_i` for a class given by its values
/// on the `m` sample points (one vector per statistic).
pub fn rademacher_mc_values(values: &[Vec<f64>], trials: usize, seed: u64) -> Result<RademacherEstimate> {
    let first = values.first().ok_or_else(|| Error::invalid("class is empty"))?;
    let m = first.len();
    if m == 0 {
        return Err(Error::invalid("sample is empty"));
    }
    if values.iter().any(|v| v.len() != m) {
        return Err(Error::invalid("every statistic needs one value per sample point"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma = vec![0.0; m];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        for s in sigma.iter_mut() {
            *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let sup = values
            .iter()
            .map(|v| v.iter().zip(&sigma).map(|(c, s)| c * s).sum::<f64>() / m as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        sum += sup;
        sum_sq += sup * sup;
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = if trials > 1 {
        ((sum_sq - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        estimate: mean,
        stderr: (var / t).sqrt(),
        trials,
    })
}

pub fn rademacher_mc(class: &[Indicator], sample: &[Item], trials: usize, seed: u64) -> Result<RademacherEstimate> {
    if class.is_empty() {
        return Err(Error::invalid("class is empty"));
    }
    let values = class
        .iter()
        .map(|c| sample.iter().map(|it| c.evaluate(it)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    rademacher_mc_values(&values, trials, seed)
}

/// `sqrt(2 VC log(e m / VC) / m)`.
pub fn vc_rademacher_bound(vc: u64, m: u64) -> Result<f64> {
    if vc == 0 || m == 0 {
        return Err(Error::invalid("VC dimension and m must be positive"));
    }
    let (vc, m) = (vc as f64, m as f64);
    let ratio = std::f64::consts::E * m / vc;
    if ratio <= 1.0 {
        return Err(Error::invalid(format!(
            "e * m / VC = {ratio} must exceed 1 for the bound to be real"
        )));
    }
    Ok((2.0 * vc * ratio.ln() / m).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapBound {
    /// `R_m + sqrt(log(2/delta) / (8m))`
    #[default]
    Stated,
    /// `2 R_m + sqrt(log(2/delta) / (2m))`, the symmetrization plus
    /// McDiarmid constants carried through in full.
    Symmetrized,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

pub fn generalization_bound(rademacher: f64, m: u64, delta: f64) -> Result<f64> {
    generalization_bound_with(rademacher, m, delta, GapBound::Stated)
}

pub fn generalization_bound_with(rademacher: f64, m: u64, delta: f64, form: GapBound) -> Result<f64> {
    check_delta(delta)?;
    if m == 0 {
        return Err(Error::invalid("m must be positive"));
    }
    if !rademacher.is_finite() {
        return Err(Error::invalid("rademacher complexity must be finite"));
    }
    let log_term = (2.0 / delta).ln();
    let m = m as f64;
    Ok(match form {
        GapBound::Stated => rademacher + (log_term / (8.0 * m)).sqrt(),
        GapBound::Symmetrized => 2.0 * rademacher + (log_term / (2.0 * m)).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetConstant {
    /// `32 VC / eps^2 + 2 log(2M/delta) / (2 eps^2)`
    #[default]
    Standard,
    /// `32 VC / eps^2 + log(2M/delta) / (2 eps^2)`
    Tight,
}

/// Curated-set size sufficient for `M` queries to each be within `epsilon`
/// of their population MPR with probability `1 - delta`.
pub fn query_budget(vc: u64, epsilon: f64, delta: f64, queries: u64, constant: BudgetConstant) -> Result<u64> {
    if vc == 0 {
        return Err(Error::invalid("VC dimension must be positive"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    check_delta(delta)?;
    if queries == 0 {
        return Err(Error::invalid("number of queries must be at least 1"));
    }
    let e2 = epsilon * epsilon;
    let factor = match constant {
        BudgetConstant::Standard => 2.0,
        BudgetConstant::Tight => 1.0,
    };
    let m = 32.0 * vc as f64 / e2 + factor * (2.0 * queries as f64 / delta).ln() / (2.0 * e2);
    Ok(m.ceil() as u64)
}

/// A reference distribution with finite support and explicit weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownPopulation {
    items: Vec<Item>,
    probs: Vec<f64>,
}

impl KnownPopulation {
    pub fn new(items: Vec<Item>, probs: Vec<f64>) -> Result<Self> {
        if items.is_empty() || items.len() != probs.len() {
            return Err(Error::invalid("population needs one probability per support item"));
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { items, probs })
    }

    /// Uniform distribution over every intersectional cell of `axes`, one
    /// support item per cell.
    pub fn uniform_cells(axes: &[LabelAxis]) -> Result<Self> {
        let schema = Schema::new(1, axes.to_vec())?;
        let cells = schema.cells();
        let p = 1.0 / cells.len() as f64;
        let items = cells
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                let labels: BTreeMap<String, u32> = schema
                    .axes
                    .iter()
                    .zip(cell)
                    .map(|(a, &c)| (a.name.clone(), c))
                    .collect();
                Item::new(format!("cell{i}"), Vec::new(), labels)
            })
            .collect();
        // the last weight absorbs rounding so the sum is exact
        let mut probs = vec![p; cells.len()];
        let head: f64 = probs[..cells.len() - 1].iter().sum();
        probs[cells.len() - 1] = 1.0 - head;
        Self::new(items, probs)
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Exact `E_Q[c]`.
    pub fn expectation(&self, c: &Indicator) -> Result<f64> {
        self.items
            .iter()
            .zip(&self.probs)
            .map(|(it, p)| Ok(p * c.evaluate(it)?))
            .sum()
    }

    /// `m` i.i.d. draws (support indices).
    pub fn sample_indices<R: Rng>(&self, rng: &mut R, m: usize) -> Result<Vec<usize>> {
        let dist = WeightedIndex::new(&self.probs).map_err(|e| Error::invalid(e.to_string()))?;
        Ok((0..m).map(|_| dist.sample(rng)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub m: usize,
    pub trials: usize,
    pub delta: f64,
    pub seed: u64,
    pub rademacher_trials: usize,
    #[serde(default)]
    pub bound: GapBound,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundParameters {
    pub m: Option<u64>,
    pub delta: Option<f64>,
    pub vc: Option<u64>,
    pub epsilon: Option<f64>,
    pub queries: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rademacher: f64,
    pub rademacher_stderr: Option<f64>,
    pub bound_value: f64,
    pub parameters: BoundParameters,
    pub coverage: Option<f64>,
    pub gap_median: Option<f64>,
    pub gap_p95: Option<f64>,
    pub gap_max: Option<f64>,
}

impl BoundReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // nearest-rank
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Draws `trials` curated sets of size `m` from `pop` (trial `t` seeded with
/// `seed + t`), measures `|MPR(C, R, D_C) - MPR(C, R, Q)|` against the exact
/// population value and reports how often it stays under the bound. The
/// Rademacher term is estimated on a separate draw of size `m`.
pub fn gap_experiment(
    pop: &KnownPopulation,
    class: &[Indicator],
    retrieved: &[Item],
    cfg: &GapConfig,
) -> Result<BoundReport> {
    if class.is_empty() {
        return Err(Error::invalid("class is empty"));
    }
    if retrieved.is_empty() {
        return Err(Error::invalid("retrieved set is empty"));
    }
    if cfg.m == 0 || cfg.trials == 0 {
        return Err(Error::invalid("m and trials must be positive"));
    }
    check_delta(cfg.delta)?;

    let support_values: Vec<Vec<f64>> = class
        .iter()
        .map(|c| pop.items().iter().map(|it| c.evaluate(it)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let retrieved_means: Vec<f64> = class
        .iter()
        .map(|c| {
            let s = retrieved.iter().map(|it| c.evaluate(it)).sum::<Result<f64>>()?;
            Ok(s / retrieved.len() as f64)
        })
        .collect::<Result<_>>()?;
    let population_means: Vec<f64> = class.iter().map(|c| pop.expectation(c)).collect::<Result<_>>()?;
    let population_mpr = retrieved_means
        .iter()
        .zip(&population_means)
        .map(|(r, q)| (r - q).abs())
        .fold(0.0, f64::max);

    let mut rad_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rad_rng.set_stream(1);
    let rad_sample = pop.sample_indices(&mut rad_rng, cfg.m)?;
    let rad_values: Vec<Vec<f64>> = support_values
        .iter()
        .map(|v| rad_sample.iter().map(|&i| v[i]).collect())
        .collect();
    let rad = rademacher_mc_values(&rad_values, cfg.rademacher_trials, cfg.seed)?;
    let bound = generalization_bound_with(rad.estimate, cfg.m as u64, cfg.delta, cfg.bound)?;

    let mut gaps = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
        let draw = pop.sample_indices(&mut rng, cfg.m)?;
        let empirical_mpr = support_values
            .iter()
            .zip(&retrieved_means)
            .map(|(v, r)| {
                let mean = draw.iter().map(|&i| v[i]).sum::<f64>() / cfg.m as f64;
                (r - mean).abs()
            })
            .fold(0.0, f64::max);
        gaps.push((empirical_mpr - population_mpr).abs());
    }
    let covered = gaps.iter().filter(|&&g| g <= bound).count();
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BoundReport {
        rademacher: rad.estimate,
        rademacher_stderr: Some(rad.stderr),
        bound_value: bound,
        parameters: BoundParameters {
            m: Some(cfg.m as u64),
            delta: Some(cfg.delta),
            ..Default::default()
        },
        coverage: Some(covered as f64 / cfg.trials as f64),
        gap_median: Some(quantile(&sorted, 0.5)),
        gap_p95: Some(quantile(&sorted, 0.95)),
        gap_max: sorted.last().copied(),
    })
}
