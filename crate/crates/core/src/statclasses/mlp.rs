use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One hidden ReLU layer followed by a linear output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// hidden x inputs, row-major
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Mlp {
    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if self.w1.first().is_some_and(|w| w.len() != row.len()) {
            return Err(Error::SchemaMismatch(format!(
                "mlp expects {} inputs, row has {}",
                self.w1[0].len(),
                row.len()
            )));
        }
        Ok(self.forward(row, &mut vec![0.0; self.hidden()]))
    }

    fn forward(&self, row: &[f64], act: &mut [f64]) -> f64 {
        let mut y = self.b2;
        for (j, (w, b)) in self.w1.iter().zip(&self.b1).enumerate() {
            let z = b + w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>();
            act[j] = z.max(0.0);
            y += self.w2[j] * act[j];
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub step_size: f64,
    pub seed: u64,
    /// Start the output layer at zero instead of the uniform init.
    #[serde(default)]
    pub zero_output_init: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 300,
            step_size: 0.1,
            seed: 0,
            zero_output_init: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpFit {
    pub model: Mlp,
    /// MSE before every epoch, then after the last one.
    pub loss_history: Vec<f64>,
}

fn mse(model: &Mlp, x: &DMatrix<f64>, targets: &[f64]) -> f64 {
    let mut act = vec![0.0; model.hidden()];
    let mut row = vec![0.0; x.ncols()];
    let mut total = 0.0;
    for r in 0..x.nrows() {
        row.iter_mut().enumerate().for_each(|(c, v)| *v = x[(r, c)]);
        total += (model.forward(&row, &mut act) - targets[r]).powi(2);
    }
    total / x.nrows() as f64
}

/// Full-batch gradient descent on mean squared error. Weights start
/// uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` from a ChaCha8 stream
/// seeded by `cfg.seed`.
pub fn fit_mlp(x: &DMatrix<f64>, targets: &[f64], cfg: &MlpConfig) -> Result<MlpFit> {
    if cfg.hidden == 0 {
        return Err(Error::invalid("hidden width must be at least 1"));
    }
    if x.nrows() == 0 || x.nrows() != targets.len() {
        return Err(Error::invalid(format!(
            "{} rows and {} targets",
            x.nrows(),
            targets.len()
        )));
    }
    let (rows, p, h) = (x.nrows(), x.ncols(), cfg.hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let in_bound = 1.0 / (p.max(1) as f64).sqrt();
    let out_bound = 1.0 / (h as f64).sqrt();
    let mut uniform = |b: f64| rng.random_range(-b..=b);

    let w1: Vec<Vec<f64>> = (0..h).map(|_| (0..p).map(|_| uniform(in_bound)).collect()).collect();
    let b1: Vec<f64> = (0..h).map(|_| uniform(in_bound)).collect();
    let (w2, b2) = if cfg.zero_output_init {
        (vec![0.0; h], 0.0)
    } else {
        ((0..h).map(|_| uniform(out_bound)).collect(), uniform(out_bound))
    };
    let mut model = Mlp { w1, b1, w2, b2 };

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut act = vec![0.0; h];
    let mut row = vec![0.0; p];
    let mut g_w1 = vec![vec![0.0; p]; h];
    let mut g_b1 = vec![0.0; h];
    let mut g_w2 = vec![0.0; h];
    let scale = 2.0 / rows as f64;

    for epoch in 0..=cfg.epochs {
        g_w1.iter_mut().for_each(|g| g.fill(0.0));
        g_b1.fill(0.0);
        g_w2.fill(0.0);
        let mut g_b2 = 0.0;
        let mut loss = 0.0;
        for r in 0..rows {
            row.iter_mut().enumerate().for_each(|(c, v)| *v = x[(r, c)]);
            let err = model.forward(&row, &mut act) - targets[r];
            loss += err * err;
            let delta = scale * err;
            g_b2 += delta;
            for j in 0..h {
                g_w2[j] += delta * act[j];
                if act[j] > 0.0 {
                    let back = delta * model.w2[j];
                    g_b1[j] += back;
                    g_w1[j].iter_mut().zip(&row).for_each(|(g, xv)| *g += back * xv);
                }
            }
        }
        let loss = loss / rows as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss });
        }
        history.push(loss);
        if epoch == cfg.epochs {
            break;
        }
        let lr = cfg.step_size;
        model.b2 -= lr * g_b2;
        for j in 0..h {
            model.w2[j] -= lr * g_w2[j];
            model.b1[j] -= lr * g_b1[j];
            model.w1[j].iter_mut().zip(&g_w1[j]).for_each(|(w, g)| *w -= lr * g);
        }
    }
    debug_assert!((history.last().copied().unwrap_or(0.0) - mse(&model, x, targets)).abs() < 1e-9);
    Ok(MlpFit {
        model,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn fixture() -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = DMatrix::from_row_slice(20, 2, &data);
        let t = (0..20).map(|r| 2.0 * x[(r, 0)] - x[(r, 1)] + 0.5).collect();
        (x, t)
    }

    #[test]
    fn zero_targets_never_increase_loss() {
        let (x, _) = fixture();
        let cfg = MlpConfig {
            hidden: 8,
            epochs: 200,
            step_size: 0.05,
            seed: 3,
            zero_output_init: true,
        };
        let fit = fit_mlp(&x, &[0.0; 20], &cfg).unwrap();
        let first = fit.loss_history[0];
        assert_eq!(first, 0.0);
        assert!(fit.loss_history.iter().all(|&l| l <= first));
    }

    #[test]
    fn same_seed_same_parameters() {
        let (x, t) = fixture();
        let cfg = MlpConfig {
            hidden: 8,
            epochs: 50,
            step_size: 0.05,
            seed: 99,
            zero_output_init: false,
        };
        assert_eq!(
            fit_mlp(&x, &t, &cfg).unwrap().model,
            fit_mlp(&x, &t, &cfg).unwrap().model
        );
    }

    #[test]
    fn linearly_realizable_targets_are_learned() {
        let (x, t) = fixture();
        let cfg = MlpConfig {
            hidden: 8,
            epochs: 2000,
            step_size: 0.05,
            seed: 1,
            zero_output_init: false,
        };
        let fit = fit_mlp(&x, &t, &cfg).unwrap();
        let (first, last) = (fit.loss_history[0], *fit.loss_history.last().unwrap());
        assert!(last <= 0.1 * first, "loss {first} -> {last}");
    }

    #[test]
    fn divergence_is_reported() {
        let (x, t) = fixture();
        let cfg = MlpConfig {
            hidden: 8,
            epochs: 2000,
            step_size: 1e6,
            seed: 1,
            zero_output_init: false,
        };
        assert!(matches!(fit_mlp(&x, &t, &cfg), Err(Error::NonFiniteLoss { .. })));
    }
}
