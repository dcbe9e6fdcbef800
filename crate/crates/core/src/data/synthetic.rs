//! Planted-signal CTR data: a linear-logit Bernoulli model over a mix of
//! informative and pure-noise categorical fields.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, DatasetSchema, FieldRole, FieldSchema};
use crate::nn::sigmoid;
use crate::rng::{stream, DOMAIN_SYNTH_EXAMPLES, DOMAIN_SYNTH_WEIGHTS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticField {
    pub cardinality: usize,
    pub role: FieldRole,
    /// Latent logit contribution of each value; empty for noise fields.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub fields: Vec<SyntheticField>,
    pub bias: f64,
    pub seed: u64,
    pub example_count: usize,
}

/// A generated dataset plus its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub informative: Vec<usize>,
}

impl SyntheticSpec {
    /// Draws per-value weights `~ N(0, weight_scale^2)` for the informative
    /// fields from `seed`.
    pub fn with_sampled_weights(
        layout: &[(usize, FieldRole)],
        weight_scale: f64,
        bias: f64,
        seed: u64,
        example_count: usize,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, weight_scale)
            .map_err(|e| Error::InvalidArgument(format!("weight scale: {e}")))?;
        let fields = layout
            .iter()
            .enumerate()
            .map(|(i, &(cardinality, role))| {
                let weights = match role {
                    FieldRole::Informative => {
                        let mut rng = stream(seed, DOMAIN_SYNTH_WEIGHTS, i as u64);
                        (0..cardinality).map(|_| normal.sample(&mut rng)).collect()
                    }
                    FieldRole::Noise => Vec::new(),
                };
                SyntheticField {
                    cardinality,
                    role,
                    weights,
                }
            })
            .collect();
        let spec = Self {
            fields,
            bias,
            seed,
            example_count,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fields.iter().any(|f| f.role == FieldRole::Informative) {
            return Err(Error::InvalidArgument(
                "synthetic spec needs at least one informative field".into(),
            ));
        }
        if self.example_count == 0 {
            return Err(Error::InvalidArgument(
                "example_count must be positive".into(),
            ));
        }
        for (i, f) in self.fields.iter().enumerate() {
            if f.cardinality == 0 {
                return Err(Error::InvalidArgument(format!(
                    "field {i} has cardinality 0"
                )));
            }
            let expected = match f.role {
                FieldRole::Informative => f.cardinality,
                FieldRole::Noise => 0,
            };
            if f.weights.len() != expected {
                return Err(Error::InvalidArgument(format!(
                    "field {i}: expected {expected} weights, got {}",
                    f.weights.len()
                )));
            }
            if f.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "field {i}: non-finite weight"
                )));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<DatasetSchema> {
        DatasetSchema::new(
            self.fields
                .iter()
                .enumerate()
                .map(|(i, f)| FieldSchema {
                    field_id: i,
                    name: format!("f{i}"),
                    cardinality: f.cardinality,
                    role: Some(f.role),
                })
                .collect(),
        )
    }
}

/// Draws `spec.example_count` examples. Example `k` uses its own random
/// stream, so the output does not depend on generation order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let schema = spec.schema()?;
    let n = spec.fields.len();
    let mut labels = Vec::with_capacity(spec.example_count);
    let mut indices = Vec::with_capacity(spec.example_count * n);
    for k in 0..spec.example_count {
        let mut rng = stream(spec.seed, DOMAIN_SYNTH_EXAMPLES, k as u64);
        let mut logit = spec.bias;
        for f in &spec.fields {
            let idx = rng.gen_range(0..f.cardinality);
            if let Some(w) = f.weights.get(idx) {
                logit += w;
            }
            indices.push(idx as u32);
        }
        let u: f64 = rng.gen();
        labels.push(u8::from(u < sigmoid(logit)));
    }
    let informative = schema.informative_fields();
    Ok(SyntheticData {
        dataset: Dataset::new(schema, labels, indices)?,
        informative,
    })
}
