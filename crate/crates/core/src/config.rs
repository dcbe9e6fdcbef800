//! Run configuration: one flat TOML table.
//!
//! Keys from the config file override the built-in defaults, and
//! command-line flags override both. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{FieldRole, SyntheticSpec};
use crate::nn::MlpSpec;
use crate::razor::{PretrainConfig, SearchSpace};
use crate::retrain::RetrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeriveMode {
    #[default]
    Cpt,
    /// Keep only the heaviest region, i.e. `cpt = 0`.
    Argmax,
}

impl std::str::FromStr for DeriveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpt" => Ok(Self::Cpt),
            "argmax" => Ok(Self::Argmax),
            other => Err(Error::InvalidArgument(format!(
                "derive mode {other:?} is not one of cpt, argmax"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training CSV. When unset the synthetic generator is used and the
    /// data lives in the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,

    pub synthetic_cardinalities: Vec<usize>,
    /// Field ids that carry signal; all others are noise.
    pub synthetic_informative: Vec<usize>,
    pub synthetic_weight_scale: f64,
    pub synthetic_bias: f64,
    pub synthetic_train_examples: usize,
    pub synthetic_test_examples: usize,

    pub space: Vec<usize>,
    /// Drop the empty candidate from `space` before use.
    pub no_zero_dim: bool,
    pub tau: f64,
    pub lambda: f64,
    pub cpt: f64,
    pub derive_mode: DeriveMode,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub hidden: Vec<usize>,
    pub layer_norm: bool,
    pub pretrain_epochs: usize,
    pub retrain_epochs: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pre = PretrainConfig::default();
        let re = RetrainConfig::default();
        Self {
            train: None,
            test: None,
            schema: None,
            synthetic_cardinalities: vec![10, 1000, 50, 300, 20, 100, 200, 500, 1000, 40, 700, 80],
            synthetic_informative: vec![0, 1, 2, 3],
            synthetic_weight_scale: 1.0,
            synthetic_bias: -1.0,
            synthetic_train_examples: 50_000,
            synthetic_test_examples: 10_000,
            space: vec![0, 1, 2, 4, 8],
            no_zero_dim: false,
            tau: pre.temperature,
            lambda: pre.lambda,
            cpt: 0.3,
            derive_mode: DeriveMode::Cpt,
            batch_size: pre.batch_size,
            learning_rate: pre.learning_rate,
            l2: pre.l2,
            hidden: pre.mlp.hidden,
            layer_norm: pre.mlp.layer_norm,
            pretrain_epochs: pre.epochs,
            retrain_epochs: re.epochs,
            seed: 0,
            out: PathBuf::from("razor-out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub cpt: Option<f64>,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub space: Option<String>,
    pub derive_mode: Option<DeriveMode>,
    pub no_zero_dim: bool,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Loads `file` (or the defaults) and applies `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        config.apply(overrides)?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.cpt {
            self.cpt = v;
        }
        if let Some(v) = o.lambda {
            self.lambda = v;
        }
        if let Some(v) = o.tau {
            self.tau = v;
        }
        if let Some(s) = &o.space {
            self.space = SearchSpace::parse(s)?.candidates().to_vec();
        }
        if let Some(m) = o.derive_mode {
            self.derive_mode = m;
        }
        if o.no_zero_dim {
            self.no_zero_dim = true;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.search_space()?;
        self.pretrain_config().validate()?;
        if !(0.0..=1.0).contains(&self.cpt) {
            return Err(Error::InvalidArgument(format!(
                "cpt {} not in [0, 1]",
                self.cpt
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "hidden widths must be positive".into(),
            ));
        }
        if self.train.is_some() != self.schema.is_some() {
            return Err(Error::InvalidArgument(
                "`train` and `schema` must be given together".into(),
            ));
        }
        if self.train.is_none() {
            self.synthetic_spec()?;
        }
        Ok(())
    }

    /// The search space after the `no_zero_dim` switch.
    pub fn search_space(&self) -> Result<SearchSpace> {
        let space = SearchSpace::new(self.space.clone())?;
        if self.no_zero_dim {
            space.without_zero_dim()
        } else {
            Ok(space)
        }
    }

    /// Threshold actually used for derivation.
    pub fn effective_cpt(&self) -> f64 {
        match self.derive_mode {
            DeriveMode::Cpt => self.cpt,
            DeriveMode::Argmax => 0.0,
        }
    }

    pub fn mlp_spec(&self) -> MlpSpec {
        MlpSpec {
            hidden: self.hidden.clone(),
            layer_norm: self.layer_norm,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            lambda: self.lambda,
            temperature: self.tau,
            epochs: self.pretrain_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            l2: self.l2,
            seed: self.seed,
            mlp: self.mlp_spec(),
            train_arch: true,
        }
    }

    pub fn retrain_config(&self) -> RetrainConfig {
        RetrainConfig {
            epochs: self.retrain_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            l2: self.l2,
            seed: self.seed,
        }
    }

    /// Generator spec covering train and test examples together.
    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let n = self.synthetic_cardinalities.len();
        if let Some(&bad) = self.synthetic_informative.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "informative field {bad} out of range for {n} fields"
            )));
        }
        let layout: Vec<(usize, FieldRole)> = self
            .synthetic_cardinalities
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let role = if self.synthetic_informative.contains(&i) {
                    FieldRole::Informative
                } else {
                    FieldRole::Noise
                };
                (c, role)
            })
            .collect();
        SyntheticSpec::with_sampled_weights(
            &layout,
            self.synthetic_weight_scale,
            self.synthetic_bias,
            self.seed,
            self.synthetic_train_examples + self.synthetic_test_examples,
        )
    }

    /// SHA-256 of the serialized configuration with `out` blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        crate::sha256_hex(c.to_toml_string().as_bytes())
    }
}
