//! The compact model rebuilt from an input configuration. Each selected
//! field gets its own embedding width; there is no batch normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset, DatasetSchema};
use crate::nn::{
    bce_with_logits, predict_proba, sigmoid, Adagrad, AdagradState, EmbeddingTable, GradientBundle,
    Mlp, MlpCache, MlpSpec,
};
use crate::prune::InputConfig;
use crate::razor::EMBEDDING_INIT_STD;
use crate::rng::{derive_seed, stream, DOMAIN_INIT};
use crate::{Error, Result};

const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainModel {
    /// Schema ids of the selected fields, ascending.
    pub fields: Vec<usize>,
    pub tables: Vec<EmbeddingTable>,
    pub mlp: Mlp,
}

pub struct RetrainCache {
    batch_len: usize,
    mlp: MlpCache,
    logits: Vec<f64>,
}

impl RetrainCache {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 128,
            learning_rate: 0.02,
            l2: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainEpoch {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` when the dataset holds a single class.
    pub auc: Option<f64>,
    pub logloss: f64,
    pub examples: usize,
}

/// Fresh model for the selected fields of `config`.
pub fn build_retrain_model(
    config: &InputConfig,
    schema: &DatasetSchema,
    mlp_spec: &MlpSpec,
    seed: u64,
) -> Result<RetrainModel> {
    config.validate(schema)?;
    let mut fields = Vec::new();
    let mut tables = Vec::new();
    for e in config.selected() {
        let card = schema.fields()[e.field_id].cardinality;
        let mut rng = stream(seed, DOMAIN_INIT, e.field_id as u64);
        fields.push(e.field_id);
        tables.push(EmbeddingTable::gaussian(
            card,
            e.dim,
            EMBEDDING_INIT_STD,
            &mut rng,
        ));
    }
    if fields.is_empty() {
        return Err(Error::NoFieldsSelected);
    }
    let width = tables.iter().map(EmbeddingTable::dim).sum();
    let mut rng = stream(seed, DOMAIN_INIT, u32::MAX as u64);
    Ok(RetrainModel {
        fields,
        tables,
        mlp: Mlp::new(width, mlp_spec, &mut rng),
    })
}

impl RetrainModel {
    pub fn embedding_param_count(&self) -> usize {
        self.tables.iter().map(|t| t.data().len()).sum()
    }

    pub fn input_width(&self) -> usize {
        self.mlp.input_width()
    }

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
    }

    pub fn forward(&self, batch: &Batch) -> Result<RetrainCache> {
        let bsz = batch.len();
        let width = self.input_width();
        let mut x = vec![0.0; bsz * width];
        let mut offset = 0;
        for (table, &field) in self.tables.iter().zip(&self.fields) {
            if field >= batch.num_fields() {
                return Err(Error::Shape(format!("batch lacks field {field}")));
            }
            let d = table.dim();
            for b in 0..bsz {
                x[b * width + offset..b * width + offset + d]
                    .copy_from_slice(table.row(batch.index(b, field)));
            }
            offset += d;
        }
        let (logits, mlp) = self.mlp.forward(&x, bsz)?;
        Ok(RetrainCache {
            batch_len: bsz,
            mlp,
            logits,
        })
    }

    /// Mean cross-entropy plus `l2 / 2 * |W|^2`.
    pub fn objective(&self, batch: &Batch, cache: &RetrainCache, l2: f64) -> f64 {
        bce_with_logits(&cache.logits, batch.labels()) + 0.5 * l2 * self.mlp.weight_sq_norm()
    }

    pub fn backward(
        &self,
        batch: &Batch,
        cache: Option<&RetrainCache>,
        l2: f64,
    ) -> Result<GradientBundle> {
        let cache = cache.ok_or(Error::MissingForwardCache)?;
        if cache.batch_len != batch.len() {
            return Err(Error::Shape(
                "forward cache belongs to a different batch".into(),
            ));
        }
        let bsz = batch.len();
        let d_logits: Vec<f64> = cache
            .logits
            .iter()
            .zip(batch.labels())
            .map(|(&z, &y)| (sigmoid(z) - f64::from(y)) / bsz as f64)
            .collect();
        let (mut mlp, d_x) = self.mlp.backward(&cache.mlp, &d_logits);
        for (g, layer) in mlp.layers.iter_mut().zip(self.mlp.layers()) {
            for (gw, w) in g.weight.iter_mut().zip(&layer.dense.weight) {
                *gw += l2 * w;
            }
        }
        let width = self.input_width();
        let mut offset = 0;
        let mut embeddings = Vec::with_capacity(self.tables.len());
        for (table, &field) in self.tables.iter().zip(&self.fields) {
            let d = table.dim();
            let d_emb: Vec<f64> = (0..bsz)
                .flat_map(|b| {
                    d_x[b * width + offset..b * width + offset + d]
                        .iter()
                        .copied()
                })
                .collect();
            embeddings.push(table.scatter_grad(batch, field, &d_emb));
            offset += d;
        }
        Ok(GradientBundle {
            embeddings,
            mlp,
            arch: Vec::new(),
        })
    }

    pub fn logits(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(dataset.len());
        for batch in dataset.batches(EVAL_CHUNK, None) {
            out.extend(self.forward(&batch)?.logits);
        }
        Ok(out)
    }

    pub fn predict(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        Ok(predict_proba(&self.logits(dataset)?))
    }
}

/// Trains on cross-entropy (plus L2 on MLP weights) with a fresh Adagrad
/// state.
pub fn retrain_run(
    train: &Dataset,
    mut model: RetrainModel,
    config: &RetrainConfig,
) -> Result<(RetrainModel, Vec<RetrainEpoch>)> {
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut opt = AdagradState::new(
        Adagrad::new(config.learning_rate),
        &model.tables,
        &model.mlp,
        &[],
    );
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let shuffle = derive_seed(config.seed, epoch as u64);
        let (mut steps, mut loss_sum) = (0usize, 0.0);
        for batch in train.batches(config.batch_size, Some(shuffle)) {
            let cache = model.forward(&batch)?;
            let loss = bce_with_logits(cache.logits(), batch.labels());
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite retraining loss {loss}")));
            }
            let grads = model.backward(&batch, Some(&cache), config.l2)?;
            opt.apply(&mut model.tables, &mut model.mlp, &mut [], &grads)?;
            steps += 1;
            loss_sum += loss;
        }
        let mean_loss = loss_sum / steps as f64;
        log::info!("retrain epoch {epoch}: loss {mean_loss:.5}");
        log.push(RetrainEpoch {
            epoch,
            steps,
            mean_loss,
        });
    }
    Ok((model, log))
}

pub fn evaluate(model: &RetrainModel, dataset: &Dataset) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let logits = model.logits(dataset)?;
    Ok(EvalReport {
        auc: auc(&predict_proba(&logits), dataset.labels()),
        logloss: bce_with_logits(&logits, dataset.labels()),
        examples: dataset.len(),
    })
}

/// Area under the ROC curve via the rank-sum statistic, giving tied scores
/// their average rank. Equals `P(s_pos > s_neg) + P(s_pos = s_neg) / 2`.
/// `None` if either class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "score/label length mismatch");
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their mean.
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        let tied_pos = order[start..end]
            .iter()
            .filter(|&&k| labels[k] == 1)
            .count();
        rank_sum += mean_rank * tied_pos as f64;
        start = end;
    }
    let p = positives as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}
