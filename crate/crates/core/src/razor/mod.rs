//! Pretraining: the relaxed model whose per-field embedding regions are
//! softly selected by temperature-softmax weights, trained jointly with the
//! network in a single optimization stream.

mod arch;
mod model;
mod space;
mod train;

pub use arch::{
    alpha_weights, lp_regularizer, pretrain_loss, softmax_backward, transform_embeddings,
    ArchParams,
};
pub use model::{ForwardCache, LossConfig, RelaxedModel, EMBEDDING_INIT_STD};
pub use space::SearchSpace;
pub use train::{
    continue_pretraining, pretrain_run, pretrain_step, EpochLog, PretrainConfig, PretrainedState,
    StepMetrics,
};
