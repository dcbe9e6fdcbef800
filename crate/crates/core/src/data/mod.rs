//! Dataset schemas, CSV IO, synthetic generation and mini-batching.

mod dataset;
mod schema;
mod synthetic;
mod transform;

pub use dataset::{Batch, Batches, Dataset, Example};
pub use schema::{DatasetSchema, FieldRole, FieldSchema};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticField, SyntheticSpec};
pub use transform::{all_pairs, cross_fields, negative_downsample, Downsampled};
