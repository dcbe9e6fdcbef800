use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Keeps `var / (var + eps)` within 1e-4 of 1 for any batch variance of at
/// least 1e-3.
pub const BN_EPSILON: f64 = 1e-7;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with the batch statistics and update the running averages.
    Train,
    /// Normalize with the running averages.
    Eval,
}

/// Per-coordinate batch normalization without a learned affine part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// What the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: NormMode,
    /// Normalized output, `B x dim`.
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Batch mean and biased variance (train mode only).
    batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl BatchNormCache {
    pub fn output(&self) -> &[f64] {
        &self.x_hat
    }

    pub fn batch_stats(&self) -> Option<(&[f64], &[f64])> {
        self.batch_stats
            .as_ref()
            .map(|(m, v)| (m.as_slice(), v.as_slice()))
    }
}

impl BatchNormState {
    pub fn new(dim: usize) -> Self {
        Self {
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: BN_MOMENTUM,
            eps: BN_EPSILON,
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }

    /// Normalizes a `B x dim` slice and, in train mode, folds the batch
    /// statistics into the running averages.
    pub fn forward(&mut self, x: &[f64], batch: usize, mode: NormMode) -> Result<BatchNormCache> {
        let cache = self.normalize(x, batch, mode)?;
        if let Some((mean, var)) = &cache.batch_stats {
            self.update_running(mean, var);
        }
        Ok(cache)
    }

    /// `running <- momentum * running + (1 - momentum) * batch`.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        for j in 0..self.dim() {
            self.running_mean[j] =
                self.momentum * self.running_mean[j] + (1.0 - self.momentum) * mean[j];
            self.running_var[j] =
                self.momentum * self.running_var[j] + (1.0 - self.momentum) * var[j];
        }
    }

    /// Normalizes a `B x dim` slice without touching the running averages.
    /// Train mode uses the biased (1/B) batch variance and requires `B >= 2`.
    pub fn normalize(&self, x: &[f64], batch: usize, mode: NormMode) -> Result<BatchNormCache> {
        let dim = self.dim();
        if x.len() != batch * dim {
            return Err(Error::Shape(format!(
                "batch norm input has {} values, expected {batch} x {dim}",
                x.len()
            )));
        }
        let (mean, inv_std, batch_stats) = match mode {
            NormMode::Train => {
                if batch < 2 {
                    return Err(Error::Shape(format!(
                        "batch norm in train mode needs at least 2 examples, got {batch}"
                    )));
                }
                let inv_b = 1.0 / batch as f64;
                let mut mean = vec![0.0; dim];
                for row in x.chunks_exact(dim) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m *= inv_b);
                let mut var = vec![0.0; dim];
                for row in x.chunks_exact(dim) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        let c = v - m;
                        *s += c * c;
                    }
                }
                var.iter_mut().for_each(|s| *s *= inv_b);
                let inv_std = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
                (mean.clone(), inv_std, Some((mean, var)))
            }
            NormMode::Eval => (
                self.running_mean.clone(),
                self.running_var
                    .iter()
                    .map(|v| 1.0 / (v + self.eps).sqrt())
                    .collect(),
                None,
            ),
        };
        let mut x_hat = Vec::with_capacity(x.len());
        for row in x.chunks_exact(dim) {
            x_hat.extend(
                row.iter()
                    .zip(&mean)
                    .zip(&inv_std)
                    .map(|((v, m), s)| (v - m) * s),
            );
        }
        Ok(BatchNormCache {
            mode,
            x_hat,
            inv_std,
            batch_stats,
        })
    }

    /// Input gradient. In train mode this includes the paths through the
    /// batch mean and variance:
    /// `dx = s * (dy - mean(dy) - x_hat * mean(dy * x_hat))`.
    pub fn backward(cache: &BatchNormCache, d_out: &[f64]) -> Vec<f64> {
        let dim = cache.inv_std.len();
        match cache.mode {
            NormMode::Eval => d_out
                .chunks_exact(dim)
                .flat_map(|row| row.iter().zip(&cache.inv_std).map(|(g, s)| g * s))
                .collect(),
            NormMode::Train => {
                let batch = d_out.len() / dim;
                let inv_b = 1.0 / batch as f64;
                let mut mean_g = vec![0.0; dim];
                let mut mean_gx = vec![0.0; dim];
                for (g_row, x_row) in d_out.chunks_exact(dim).zip(cache.x_hat.chunks_exact(dim)) {
                    for j in 0..dim {
                        mean_g[j] += g_row[j];
                        mean_gx[j] += g_row[j] * x_row[j];
                    }
                }
                mean_g.iter_mut().for_each(|v| *v *= inv_b);
                mean_gx.iter_mut().for_each(|v| *v *= inv_b);
                let mut dx = Vec::with_capacity(d_out.len());
                for (g_row, x_row) in d_out.chunks_exact(dim).zip(cache.x_hat.chunks_exact(dim)) {
                    for j in 0..dim {
                        dx.push(cache.inv_std[j] * (g_row[j] - mean_g[j] - x_row[j] * mean_gx[j]));
                    }
                }
                dx
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn normalize(col: &[f64]) -> Vec<f64> {
        let mut bn = BatchNormState::new(1);
        bn.forward(col, col.len(), NormMode::Train).unwrap().x_hat
    }

    #[test]
    fn constant_column_maps_to_zero() {
        assert_eq!(normalize(&[3.0, 3.0, 3.0, 3.0]), vec![0.0; 4]);
    }

    #[test]
    fn normalized_column_is_nearly_unchanged() {
        let out = normalize(&[-1.0, 1.0]);
        assert!((out[0] + 1.0).abs() < 1e-5 && (out[1] - 1.0).abs() < 1e-5);
        let out = normalize(&[0.0, 2.0]);
        assert!((out[0] + 1.0).abs() < 1e-5 && (out[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sum_of_outputs_has_zero_gradient() {
        let x = [0.0, 2.0];
        let mut bn = BatchNormState::new(1);
        let cache = bn.forward(&x, 2, NormMode::Train).unwrap();
        let analytic = BatchNormState::backward(&cache, &[1.0, 1.0]);
        let h = 1e-5;
        for k in 0..2 {
            let mut plus = x;
            let mut minus = x;
            plus[k] += h;
            minus[k] -= h;
            let f = |v: &[f64]| normalize(v).iter().sum::<f64>();
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!(numeric.abs() < 1e-8, "numeric {numeric}");
            assert!(analytic[k].abs() < 1e-12, "analytic {}", analytic[k]);
        }
    }

    #[test]
    fn train_mode_rejects_single_example() {
        let mut bn = BatchNormState::new(2);
        assert!(bn.forward(&[1.0, 2.0], 1, NormMode::Train).is_err());
        assert!(bn.forward(&[1.0, 2.0], 1, NormMode::Eval).is_ok());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNormState::new(1);
        bn.forward(&[0.0, 2.0], 2, NormMode::Train).unwrap();
        assert!((bn.running_mean[0] - 0.1).abs() < 1e-15);
        assert!((bn.running_var[0] - 1.0).abs() < 1e-15);
        let cache = bn.forward(&[1.0], 1, NormMode::Eval).unwrap();
        let expected = (1.0 - 0.1) / (1.0 + BN_EPSILON).sqrt();
        assert!((cache.output()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn train_backward_matches_finite_differences() {
        let x = [0.3, -1.2, 2.5, 0.7, 0.1, -0.4];
        let weights = [0.9, -0.3, 0.2, 1.1, -0.7, 0.5];
        let f = |v: &[f64]| {
            let mut bn = BatchNormState::new(2);
            let c = bn.forward(v, 3, NormMode::Train).unwrap();
            c.x_hat
                .iter()
                .zip(&weights)
                .map(|(a, b)| a * b * a)
                .sum::<f64>()
        };
        let mut bn = BatchNormState::new(2);
        let cache = bn.forward(&x, 3, NormMode::Train).unwrap();
        let d_out: Vec<f64> = cache
            .x_hat
            .iter()
            .zip(&weights)
            .map(|(a, w)| 2.0 * a * w)
            .collect();
        let analytic = BatchNormState::backward(&cache, &d_out);
        let h = 1e-5;
        for k in 0..x.len() {
            let mut p = x;
            let mut m = x;
            p[k] += h;
            m[k] -= h;
            let numeric = (f(&p) - f(&m)) / (2.0 * h);
            let rel =
                (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-8);
            assert!(rel < 1e-4, "coordinate {k}: {numeric} vs {}", analytic[k]);
        }
    }

    proptest! {
        #[test]
        fn output_is_standardized(col in proptest::collection::vec(-50.0f64..50.0, 2..64)) {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assume!(var >= 1e-3);
            let out = normalize(&col);
            let m = out.iter().sum::<f64>() / n;
            let v = out.iter().map(|o| (o - m).powi(2)).sum::<f64>() / n;
            prop_assert!(m.abs() < 1e-6);
            prop_assert!((v - 1.0).abs() < 1e-4, "variance {v} for input variance {var}");
        }
    }
}
