use serde::{Deserialize, Serialize};

use super::{LossConfig, RelaxedModel, SearchSpace};
use crate::data::{Batch, Dataset};
use crate::nn::{bce_with_logits, Adagrad, AdagradState, MlpSpec, NormMode};
use crate::retrain::auc;
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Largest chunk scored at once during evaluation.
const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    /// Weight of the parameter-count regularizer.
    pub lambda: f64,
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub mlp: MlpSpec,
    /// When false the architecture logits stay at their initial values.
    #[serde(default = "default_true")]
    pub train_arch: bool,
}

fn default_true() -> bool {
    true
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            temperature: 0.05,
            epochs: 3,
            batch_size: 128,
            learning_rate: 0.02,
            l2: 1e-3,
            seed: 0,
            mlp: MlpSpec::default(),
            train_arch: true,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda {} must be >= 0",
                self.lambda
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau {} must be > 0",
                self.temperature
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.l2 >= 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate and l2 must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            l2: self.l2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Cross-entropy plus `lambda * L_p`.
    pub loss: f64,
    pub bce: f64,
    pub lp: f64,
    pub embedding_grad_norm: f64,
    pub mlp_grad_norm: f64,
    pub arch_grad_norm: f64,
}

/// One line of the pretraining log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub mean_bce: f64,
    pub lp: f64,
    pub eval_auc: Option<f64>,
    pub eval_logloss: Option<f64>,
    pub alphas: Vec<Vec<f64>>,
}

/// Everything needed to resume pretraining or derive a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainedState {
    pub model: RelaxedModel,
    pub optimizer: AdagradState,
    pub config: PretrainConfig,
    pub schema_hash: String,
    pub epochs_done: usize,
    pub log: Vec<EpochLog>,
}

impl PretrainedState {
    pub fn new(
        dataset_schema: &crate::data::DatasetSchema,
        space: SearchSpace,
        config: PretrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let model = RelaxedModel::init(
            dataset_schema,
            space,
            &config.mlp,
            config.temperature,
            config.seed,
        )?;
        let optimizer = AdagradState::new(
            Adagrad::new(config.learning_rate),
            &model.tables,
            &model.mlp,
            &model.arch.widths(),
        );
        Ok(Self {
            model,
            optimizer,
            config,
            schema_hash: dataset_schema.hash(),
            epochs_done: 0,
            log: Vec::new(),
        })
    }

    pub fn alphas(&self) -> Vec<Vec<f64>> {
        self.model.alphas()
    }

    /// Scores `dataset` with running batch-norm statistics.
    pub fn predict(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(dataset.len());
        for batch in dataset.batches(EVAL_CHUNK, None) {
            out.extend(self.model.predict(&batch)?);
        }
        Ok(out)
    }

    fn eval_logits(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(dataset.len());
        for batch in dataset.batches(EVAL_CHUNK, None) {
            out.extend_from_slice(self.model.forward_frozen(&batch, NormMode::Eval)?.logits());
        }
        Ok(out)
    }
}

/// One forward/backward pass and one simultaneous Adagrad update of the
/// architecture logits and the network parameters.
pub fn pretrain_step(batch: &Batch, state: &mut PretrainedState) -> Result<StepMetrics> {
    let loss_cfg = state.config.loss();
    let cache = state.model.forward(batch, NormMode::Train)?;
    let bce = bce_with_logits(cache.logits(), batch.labels());
    let lp = super::lp_regularizer(
        cache.alphas(),
        state.model.cardinalities(),
        &state.model.space,
    );
    let loss = bce + loss_cfg.lambda * lp;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite pretraining loss {loss}"
        )));
    }
    let mut grads = state.model.backward(batch, Some(&cache), &loss_cfg)?;
    let (embedding_grad_norm, mlp_grad_norm, arch_grad_norm) = grads.norms();
    if !state.config.train_arch {
        grads.arch.iter_mut().for_each(|g| g.fill(0.0));
    }
    let model = &mut state.model;
    state.optimizer.apply(
        &mut model.tables,
        &mut model.mlp,
        &mut model.arch.logits,
        &grads,
    )?;
    if model.arch.logits.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("architecture logits diverged".into()));
    }
    Ok(StepMetrics {
        loss,
        bce,
        lp,
        embedding_grad_norm,
        mlp_grad_norm,
        arch_grad_norm,
    })
}

/// Trains a fresh relaxed model for `config.epochs` shuffled epochs.
///
/// Trailing batches with a single example are skipped.
pub fn pretrain_run(
    train: &Dataset,
    eval: Option<&Dataset>,
    space: SearchSpace,
    config: &PretrainConfig,
) -> Result<PretrainedState> {
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut state = PretrainedState::new(train.schema(), space, config.clone())?;
    continue_pretraining(&mut state, train, eval, config.epochs)?;
    Ok(state)
}

/// Runs `epochs` more epochs on an existing state.
pub fn continue_pretraining(
    state: &mut PretrainedState,
    train: &Dataset,
    eval: Option<&Dataset>,
    epochs: usize,
) -> Result<()> {
    if train.schema().hash() != state.schema_hash {
        return Err(Error::Data(
            "dataset schema does not match the pretrained state".into(),
        ));
    }
    for _ in 0..epochs {
        let epoch = state.epochs_done;
        let shuffle = derive_seed(state.config.seed, epoch as u64);
        let (mut steps, mut loss_sum, mut bce_sum) = (0usize, 0.0, 0.0);
        for batch in train.batches(state.config.batch_size, Some(shuffle)) {
            if batch.len() < 2 {
                log::debug!("skipping single-example batch in epoch {epoch}");
                continue;
            }
            let m = pretrain_step(&batch, state)?;
            steps += 1;
            loss_sum += m.loss;
            bce_sum += m.bce;
        }
        let (eval_auc, eval_logloss) = match eval {
            Some(ds) if !ds.is_empty() => {
                let logits = state.eval_logits(ds)?;
                let probs = crate::nn::predict_proba(&logits);
                (
                    auc(&probs, ds.labels()),
                    Some(bce_with_logits(&logits, ds.labels())),
                )
            }
            _ => (None, None),
        };
        let entry = EpochLog {
            epoch,
            steps,
            mean_loss: loss_sum / steps.max(1) as f64,
            mean_bce: bce_sum / steps.max(1) as f64,
            lp: state.model.lp(),
            eval_auc,
            eval_logloss,
            alphas: state.alphas(),
        };
        log::info!(
            "pretrain epoch {epoch}: loss {:.5} L_p {:.4} auc {:?}",
            entry.mean_loss,
            entry.lp,
            entry.eval_auc
        );
        state.log.push(entry);
        state.epochs_done += 1;
    }
    Ok(())
}
