use serde::{Deserialize, Serialize};

use super::SearchSpace;
use crate::nn::bce_loss;
use crate::{Error, Result};

/// Per-field region logits and the shared softmax temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    pub logits: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl ArchParams {
    /// All-zero logits: every region starts equally weighted.
    pub fn uniform(num_fields: usize, num_regions: usize, temperature: f64) -> Result<Self> {
        Self::from_logits(vec![vec![0.0; num_regions]; num_fields], temperature)
    }

    pub fn from_logits(logits: Vec<Vec<f64>>, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature {temperature} must be > 0"
            )));
        }
        if logits.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("architecture logits must be finite".into()));
        }
        Ok(Self {
            logits,
            temperature,
        })
    }

    pub fn alphas(&self) -> Vec<Vec<f64>> {
        self.logits
            .iter()
            .map(|w| alpha_weights(w, self.temperature))
            .collect()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.logits.iter().map(Vec::len).collect()
    }
}

/// `alpha_j = exp(w_j / tau) / sum_k exp(w_k / tau)`, shifted by the maximum
/// logit before exponentiating.
pub fn alpha_weights(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|w| ((w - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Pulls `d loss / d alpha` back to the logits through the tempered softmax
/// Jacobian: `dw_j = alpha_j (g_j - sum_k alpha_k g_k) / tau`.
pub fn softmax_backward(alpha: &[f64], d_alpha: &[f64], temperature: f64) -> Vec<f64> {
    let mean: f64 = alpha.iter().zip(d_alpha).map(|(a, g)| a * g).sum();
    alpha
        .iter()
        .zip(d_alpha)
        .map(|(a, g)| a * (g - mean) / temperature)
        .collect()
}

/// Per-position scale `alpha_{region(p)}` for one field.
pub(crate) fn position_scales(alpha: &[f64], space: &SearchSpace) -> Vec<f64> {
    space.region_of().iter().map(|&m| alpha[m]).collect()
}

/// Scales each region of every field's normalized embedding by that field's
/// region weight. `normalized` is `B x N x d_K`; `alphas` holds one simplex
/// vector per field.
pub fn transform_embeddings(
    normalized: &[f64],
    alphas: &[Vec<f64>],
    space: &SearchSpace,
) -> Vec<f64> {
    let d = space.max_dim();
    let n = alphas.len();
    let scales: Vec<Vec<f64>> = alphas.iter().map(|a| position_scales(a, space)).collect();
    normalized
        .chunks_exact(d)
        .enumerate()
        .flat_map(|(slot, e)| {
            let s = &scales[slot % n];
            e.iter().zip(s).map(|(v, a)| v * a)
        })
        .collect()
}

/// Cardinality-weighted expected embedding width:
/// `sum_i |f_i| / sum_j |f_j| * sum_m c_m alpha^i_m`.
pub fn lp_regularizer(alphas: &[Vec<f64>], cardinalities: &[usize], space: &SearchSpace) -> f64 {
    let total: f64 = cardinalities.iter().map(|&c| c as f64).sum();
    alphas
        .iter()
        .zip(cardinalities)
        .map(|(alpha, &card)| {
            let expected: f64 = alpha
                .iter()
                .zip(space.region_sizes())
                .map(|(a, &c)| c as f64 * a)
                .sum();
            card as f64 / total * expected
        })
        .sum()
}

/// Mean cross-entropy plus `lambda * L_p`.
pub fn pretrain_loss(probs: &[f64], labels: &[u8], lp: f64, lambda: f64) -> f64 {
    bce_loss(probs, labels) + lambda * lp
}
