use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_SAMPLES_SPLIT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub depth_limit: usize,
}

impl RegressionTree {
    pub fn constant(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
            depth_limit: 0,
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return Ok(value),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let x = *row.get(feature).ok_or_else(|| {
                        Error::SchemaMismatch(format!("tree splits on feature {feature}, row has {}", row.len()))
                    })?;
                    at = if x <= threshold { left } else { right };
                }
            }
        }
    }

    /// Depth of the deepest leaf (root alone is depth 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    targets: &'a [f64],
    depth_limit: usize,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Builder<'_> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| self.targets[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(TreeNode::Leaf { value: mean });

        let constant = rows.iter().all(|&r| self.targets[r] == self.targets[rows[0]]);
        if depth >= self.depth_limit || rows.len() < MIN_SAMPLES_SPLIT || constant {
            return id;
        }
        let Some(split) = self.best_split(&rows) else {
            return id;
        };
        let left = self.build(split.left, depth + 1);
        let right = self.build(split.right, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    // Minimizing total child SSE is the same as maximizing
    // sum_l^2/n_l + sum_r^2/n_r, which avoids the cancellation in sumsq - sum^2/n.
    fn best_split(&self, rows: &[usize]) -> Option<BestSplit> {
        let total: f64 = rows.iter().map(|&r| self.targets[r]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.to_vec();
        for f in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for pos in 0..order.len() - 1 {
                left_sum += self.targets[order[pos]];
                let here = self.x[(order[pos], f)];
                let next = self.x[(order[pos + 1], f)];
                if here == next {
                    continue;
                }
                let nl = (pos + 1) as f64;
                let nr = (order.len() - pos - 1) as f64;
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl + right_sum * right_sum / nr;
                if best.is_none_or(|(b, _, _)| score > b) {
                    best = Some((score, f, 0.5 * (here + next)));
                }
            }
        }
        let (_, feature, threshold) = best?;
        let (left, right) = rows.iter().partition(|&&r| self.x[(r, feature)] <= threshold);
        Some(BestSplit {
            feature,
            threshold,
            left,
            right,
        })
    }
}

/// Greedy CART regression tree. Splits minimize weighted child MSE with
/// thresholds at midpoints of consecutive distinct values; ties go to the
/// lower feature index, then the lower threshold. Leaves hold the mean
/// target. Growth stops at `depth_limit`, at nodes with fewer than two
/// rows, and at nodes whose targets are all equal.
pub fn fit_tree(x: &DMatrix<f64>, targets: &[f64], depth_limit: usize) -> Result<RegressionTree> {
    if depth_limit == 0 {
        return Err(Error::invalid("depth limit must be at least 1"));
    }
    if x.nrows() == 0 || x.nrows() != targets.len() {
        return Err(Error::invalid(format!(
            "{} rows and {} targets",
            x.nrows(),
            targets.len()
        )));
    }
    let mut b = Builder {
        x,
        targets,
        depth_limit,
        nodes: Vec::new(),
    };
    b.build((0..x.nrows()).collect(), 0);
    Ok(RegressionTree {
        nodes: b.nodes,
        depth_limit,
    })
}
