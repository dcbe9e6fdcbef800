//! Hand-differentiated building blocks. Everything is `f64`, row-major, and
//! reduces in a fixed order so results are bit-reproducible.

mod adagrad;
mod batch_norm;
mod embedding;
mod loss;
mod mlp;

pub use adagrad::{Adagrad, AdagradState};
pub use batch_norm::{BatchNormCache, BatchNormState, NormMode};
pub use embedding::{embed_lookup, EmbeddingTable, RowGrad};
pub use loss::{bce_loss, bce_with_logits, predict_proba, sigmoid};
pub use mlp::{Dense, LayerGrads, LayerNorm, Mlp, MlpCache, MlpGrads, MlpLayer, MlpSpec};

/// Gradients mirroring every trainable tensor of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// One sparse gradient per embedding table, in table order.
    pub embeddings: Vec<RowGrad>,
    pub mlp: MlpGrads,
    /// Per-field architecture-logit gradients; empty for models without a
    /// relaxation layer.
    pub arch: Vec<Vec<f64>>,
}

impl GradientBundle {
    /// Euclidean norms of the embedding, MLP and architecture parts.
    pub fn norms(&self) -> (f64, f64, f64) {
        let emb: f64 = self
            .embeddings
            .iter()
            .flat_map(|g| g.values.iter())
            .map(|v| v * v)
            .sum();
        let mlp: f64 = self
            .mlp
            .tensors()
            .into_iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum();
        let arch: f64 = self.arch.iter().flatten().map(|v| v * v).sum();
        (emb.sqrt(), mlp.sqrt(), arch.sqrt())
    }
}
