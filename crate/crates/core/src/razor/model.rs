use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::position_scales;
use super::{lp_regularizer, softmax_backward, ArchParams, SearchSpace};
use crate::data::{Batch, DatasetSchema};
use crate::nn::{
    bce_with_logits, sigmoid, BatchNormCache, BatchNormState, EmbeddingTable, GradientBundle, Mlp,
    MlpCache, MlpSpec, NormMode,
};
use crate::rng::{stream, DOMAIN_INIT};
use crate::{Error, Result};

pub const EMBEDDING_INIT_STD: f64 = 0.01;

/// Coefficients of the non-data loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the parameter-count regularizer.
    pub lambda: f64,
    /// L2 coefficient on MLP weights; the penalty is `l2 / 2 * |W|^2`.
    pub l2: f64,
}

/// The pretraining network: per-field `d_K`-wide embeddings, batch norm,
/// region weighting, concatenation and an MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedModel {
    pub space: SearchSpace,
    pub arch: ArchParams,
    pub tables: Vec<EmbeddingTable>,
    pub norms: Vec<BatchNormState>,
    pub mlp: Mlp,
    cardinalities: Vec<usize>,
}

pub struct ForwardCache {
    batch_len: usize,
    norms: Vec<BatchNormCache>,
    alphas: Vec<Vec<f64>>,
    mlp: MlpCache,
    logits: Vec<f64>,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn alphas(&self) -> &[Vec<f64>] {
        &self.alphas
    }
}

impl RelaxedModel {
    /// Zero architecture logits, `N(0, 0.01^2)` embeddings, fan-in uniform
    /// MLP weights.
    pub fn init(
        schema: &DatasetSchema,
        space: SearchSpace,
        mlp_spec: &MlpSpec,
        temperature: f64,
        seed: u64,
    ) -> Result<Self> {
        let d = space.max_dim();
        let n = schema.num_fields();
        let tables = schema
            .fields()
            .iter()
            .map(|f| {
                let mut rng = stream(seed, DOMAIN_INIT, f.field_id as u64);
                EmbeddingTable::gaussian(f.cardinality, d, EMBEDDING_INIT_STD, &mut rng)
            })
            .collect();
        let mut rng = stream(seed, DOMAIN_INIT, u32::MAX as u64);
        let mlp = Mlp::new(n * d, mlp_spec, &mut rng);
        let arch = ArchParams::uniform(n, space.num_regions(), temperature)?;
        Self::from_parts(schema, space, arch, tables, mlp)
    }

    pub fn from_parts(
        schema: &DatasetSchema,
        space: SearchSpace,
        arch: ArchParams,
        tables: Vec<EmbeddingTable>,
        mlp: Mlp,
    ) -> Result<Self> {
        let n = schema.num_fields();
        let d = space.max_dim();
        if tables.len() != n || arch.logits.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} tables and logit vectors"
            )));
        }
        for (t, f) in tables.iter().zip(schema.fields()) {
            if t.rows() != f.cardinality || t.dim() != d {
                return Err(Error::Shape(format!(
                    "table for field {} must be {} x {d}",
                    f.field_id, f.cardinality
                )));
            }
        }
        if arch.logits.iter().any(|w| w.len() != space.num_regions()) {
            return Err(Error::Shape(
                "logit vectors must have one entry per region".into(),
            ));
        }
        if mlp.input_width() != n * d {
            return Err(Error::Shape(format!("MLP input must be {n} x {d}")));
        }
        Ok(Self {
            space,
            arch,
            tables,
            norms: (0..n).map(|_| BatchNormState::new(d)).collect(),
            mlp,
            cardinalities: schema.cardinalities(),
        })
    }

    pub fn num_fields(&self) -> usize {
        self.tables.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn alphas(&self) -> Vec<Vec<f64>> {
        self.arch.alphas()
    }

    /// Current value of the parameter-count regularizer.
    pub fn lp(&self) -> f64 {
        lp_regularizer(&self.alphas(), &self.cardinalities, &self.space)
    }

    /// Perturbs every trainable scalar by `U(-scale, scale)`; used to build
    /// non-degenerate models for gradient checks.
    pub fn jitter<R: Rng>(&mut self, scale: f64, rng: &mut R) {
        for t in &mut self.tables {
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.gen_range(-scale..scale));
        }
        for t in self.mlp.tensors_mut() {
            t.iter_mut()
                .for_each(|v| *v += rng.gen_range(-scale..scale));
        }
        for w in self.arch.logits.iter_mut().flatten() {
            *w += rng.gen_range(-scale..scale);
        }
    }

    /// Logits for a batch. Train mode normalizes with batch statistics and
    /// updates the running averages.
    pub fn forward(&mut self, batch: &Batch, mode: NormMode) -> Result<ForwardCache> {
        let cache = self.forward_frozen(batch, mode)?;
        for (state, c) in self.norms.iter_mut().zip(&cache.norms) {
            if let Some((mean, var)) = c.batch_stats() {
                state.update_running(mean, var);
            }
        }
        Ok(cache)
    }

    /// [`forward`](Self::forward) without updating batch-norm running
    /// averages.
    pub fn forward_frozen(&self, batch: &Batch, mode: NormMode) -> Result<ForwardCache> {
        let n = self.num_fields();
        if batch.num_fields() != n {
            return Err(Error::Shape(format!(
                "batch has {} fields, model has {n}",
                batch.num_fields()
            )));
        }
        let d = self.space.max_dim();
        let bsz = batch.len();
        let alphas = self.alphas();
        let mut x = vec![0.0; bsz * n * d];
        let mut norms = Vec::with_capacity(n);
        for i in 0..n {
            let e = self.tables[i].lookup(batch, i);
            let cache = self.norms[i].normalize(&e, bsz, mode)?;
            let scales = position_scales(&alphas[i], &self.space);
            for (b, row) in cache.output().chunks_exact(d).enumerate() {
                let dst = &mut x[(b * n + i) * d..(b * n + i + 1) * d];
                for ((o, v), s) in dst.iter_mut().zip(row).zip(&scales) {
                    *o = v * s;
                }
            }
            norms.push(cache);
        }
        let (logits, mlp) = self.mlp.forward(&x, bsz)?;
        Ok(ForwardCache {
            batch_len: bsz,
            norms,
            alphas,
            mlp,
            logits,
        })
    }

    /// Mean cross-entropy + `lambda * L_p` + `l2 / 2 * |W|^2`.
    pub fn objective(&self, batch: &Batch, cache: &ForwardCache, loss: &LossConfig) -> f64 {
        bce_with_logits(&cache.logits, batch.labels())
            + loss.lambda * lp_regularizer(&cache.alphas, &self.cardinalities, &self.space)
            + 0.5 * loss.l2 * self.mlp.weight_sq_norm()
    }

    /// Exact gradients of [`objective`](Self::objective) for the batch the
    /// cache was produced from.
    pub fn backward(
        &self,
        batch: &Batch,
        cache: Option<&ForwardCache>,
        loss: &LossConfig,
    ) -> Result<GradientBundle> {
        let cache = cache.ok_or(Error::MissingForwardCache)?;
        if cache.batch_len != batch.len() {
            return Err(Error::Shape(
                "forward cache belongs to a different batch".into(),
            ));
        }
        let n = self.num_fields();
        let d = self.space.max_dim();
        let k = self.space.num_regions();
        let bsz = batch.len();
        let inv_b = 1.0 / bsz as f64;
        let d_logits: Vec<f64> = cache
            .logits
            .iter()
            .zip(batch.labels())
            .map(|(&z, &y)| (sigmoid(z) - f64::from(y)) * inv_b)
            .collect();
        let (mut mlp_grads, d_x) = self.mlp.backward(&cache.mlp, &d_logits);
        for (g, layer) in mlp_grads.layers.iter_mut().zip(self.mlp.layers()) {
            for (gw, w) in g.weight.iter_mut().zip(&layer.dense.weight) {
                *gw += loss.l2 * w;
            }
        }

        let region_of = self.space.region_of();
        let sizes = self.space.region_sizes();
        let total_card: f64 = self.cardinalities.iter().map(|&c| c as f64).sum();
        let mut emb_grads = Vec::with_capacity(n);
        let mut arch_grads = Vec::with_capacity(n);
        for i in 0..n {
            let alpha = &cache.alphas[i];
            let scales = position_scales(alpha, &self.space);
            let normalized = cache.norms[i].output();
            let mut d_alpha = vec![0.0; k];
            let mut d_norm = vec![0.0; bsz * d];
            for b in 0..bsz {
                let g = &d_x[(b * n + i) * d..(b * n + i + 1) * d];
                let e = &normalized[b * d..(b + 1) * d];
                let out = &mut d_norm[b * d..(b + 1) * d];
                for p in 0..d {
                    d_alpha[region_of[p]] += g[p] * e[p];
                    out[p] = g[p] * scales[p];
                }
            }
            let weight = self.cardinalities[i] as f64 / total_card;
            for (da, &c) in d_alpha.iter_mut().zip(sizes) {
                *da += loss.lambda * weight * c as f64;
            }
            arch_grads.push(softmax_backward(alpha, &d_alpha, self.arch.temperature));
            let d_emb = BatchNormState::backward(&cache.norms[i], &d_norm);
            emb_grads.push(self.tables[i].scatter_grad(batch, i, &d_emb));
        }
        Ok(GradientBundle {
            embeddings: emb_grads,
            mlp: mlp_grads,
            arch: arch_grads,
        })
    }

    /// Probability of a positive label for every example, using running
    /// batch-norm statistics.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>> {
        let cache = self.forward_frozen(batch, NormMode::Eval)?;
        Ok(cache.logits.iter().map(|&z| sigmoid(z)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, MlpLayer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(cards: &[usize], seed: u64) -> (RelaxedModel, Batch) {
        let schema = DatasetSchema::from_cardinalities(cards).unwrap();
        let space = SearchSpace::new(vec![0, 1, 3, 6]).unwrap();
        let spec = MlpSpec {
            hidden: vec![8],
            layer_norm: false,
        };
        let mut model = RelaxedModel::init(&schema, space, &spec, 0.5, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.jitter(0.5, &mut rng);
        let rows: Vec<u32> = (0..4)
            .flat_map(|_| {
                cards
                    .iter()
                    .map(|&c| rng.gen_range(0..c as u32))
                    .collect::<Vec<_>>()
            })
            .collect();
        let batch = Batch::new(vec![1, 0, 1, 0], rows, cards.len()).unwrap();
        (model, batch)
    }

    #[test]
    fn backward_without_forward_fails() {
        let (model, batch) = toy(&[3, 4], 1);
        let err = model.backward(
            &batch,
            None,
            &LossConfig {
                lambda: 0.0,
                l2: 0.0,
            },
        );
        assert!(matches!(err, Err(Error::MissingForwardCache)));
    }

    #[test]
    fn dead_network_only_moves_output_bias() {
        let schema = DatasetSchema::from_cardinalities(&[3, 2]).unwrap();
        let space = SearchSpace::new(vec![0, 1, 3]).unwrap();
        let spec = MlpSpec {
            hidden: vec![4],
            layer_norm: false,
        };
        let mut model = RelaxedModel::init(&schema, space, &spec, 1.0, 0).unwrap();
        model.tables.iter_mut().for_each(|t| t.data_mut().fill(0.0));
        model
            .mlp
            .tensors_mut()
            .into_iter()
            .for_each(|t| t.fill(0.0));
        let batch = Batch::new(vec![1, 0, 1], vec![0, 1, 2, 0, 1, 1], 2).unwrap();
        let loss = LossConfig {
            lambda: 0.0,
            l2: 0.0,
        };
        let cache = model.forward(&batch, NormMode::Train).unwrap();
        let g = model.backward(&batch, Some(&cache), &loss).unwrap();
        assert!(g
            .embeddings
            .iter()
            .flat_map(|r| &r.values)
            .all(|&v| v == 0.0));
        assert!(g.arch.iter().flatten().all(|&v| v == 0.0));
        let last = g.mlp.layers.len() - 1;
        for (li, lg) in g.mlp.layers.iter().enumerate() {
            assert!(lg.weight.iter().all(|&v| v == 0.0));
            if li != last {
                assert!(lg.bias.iter().all(|&v| v == 0.0));
            }
        }
        // mean(sigmoid(0) - y) = 0.5 - 2/3
        assert!((g.mlp.layers[last].bias[0] - (0.5 - 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_region_gets_no_data_gradient() {
        let (mut model, batch) = toy(&[5, 4], 3);
        let loss = LossConfig {
            lambda: 0.0,
            l2: 0.0,
        };
        let cache = model.forward(&batch, NormMode::Train).unwrap();
        let g = model.backward(&batch, Some(&cache), &loss).unwrap();
        // d/dw_1 = alpha_1 (0 - sum_k alpha_k g_k) / tau; it is fully
        // determined by the softmax coupling.
        for (alpha, dw) in cache.alphas().iter().zip(&g.arch) {
            let total: f64 = dw.iter().sum();
            assert!(total.abs() < 1e-12, "softmax gradients sum to zero");
            assert!(alpha[0] > 0.0);
        }
    }

    #[test]
    fn one_hot_last_region_matches_fixed_model() {
        let cards = [4, 3];
        let schema = DatasetSchema::from_cardinalities(&cards).unwrap();
        let space = SearchSpace::new(vec![0, 2, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tables: Vec<EmbeddingTable> = cards
            .iter()
            .map(|&c| EmbeddingTable::gaussian(c, 3, 0.7, &mut rng))
            .collect();
        let mlp = Mlp::from_layers(vec![MlpLayer {
            dense: Dense {
                inputs: 6,
                outputs: 1,
                weight: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                bias: vec![0.1],
            },
            norm: None,
        }])
        .unwrap();
        // exp(-1 / 1e-3) underflows to zero: alpha is exactly one-hot.
        let arch = ArchParams::from_logits(vec![vec![0.0, 0.0, 1.0]; 2], 1e-3).unwrap();
        let mut model =
            RelaxedModel::from_parts(&schema, space.clone(), arch, tables.clone(), mlp.clone())
                .unwrap();
        assert_eq!(model.alphas()[0], vec![0.0, 0.0, 1.0]);
        let batch = Batch::new(vec![1, 0, 0, 1], vec![0, 2, 3, 1, 1, 0, 3, 2], 2).unwrap();
        let loss = LossConfig {
            lambda: 0.0,
            l2: 0.0,
        };
        let cache = model.forward(&batch, NormMode::Train).unwrap();
        let g = model.backward(&batch, Some(&cache), &loss).unwrap();

        // Hand-built fixed model: region 3 is position 2 only.
        let mut x = vec![0.0; 4 * 6];
        let mut caches = Vec::new();
        for i in 0..2 {
            let mut bn = BatchNormState::new(3);
            let c = bn
                .forward(&tables[i].lookup(&batch, i), 4, NormMode::Train)
                .unwrap();
            for b in 0..4 {
                x[b * 6 + i * 3 + 2] = c.output()[b * 3 + 2];
            }
            caches.push(c);
        }
        let (z, mc) = mlp.forward(&x, 4).unwrap();
        assert_eq!(z, cache.logits);
        let dz: Vec<f64> = z
            .iter()
            .zip(batch.labels())
            .map(|(&v, &y)| (sigmoid(v) - f64::from(y)) / 4.0)
            .collect();
        let (mg, dx) = mlp.backward(&mc, &dz);
        assert_eq!(mg, g.mlp);
        for i in 0..2 {
            let mut d_norm = vec![0.0; 12];
            for b in 0..4 {
                d_norm[b * 3 + 2] = dx[b * 6 + i * 3 + 2];
            }
            let de = BatchNormState::backward(&caches[i], &d_norm);
            assert_eq!(tables[i].scatter_grad(&batch, i, &de), g.embeddings[i]);
        }
    }
}
