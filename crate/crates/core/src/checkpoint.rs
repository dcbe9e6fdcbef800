//! Pretraining checkpoints. A checkpoint is one JSON document holding the
//! whole pretrained state, including optimizer accumulators and the epoch
//! counter that seeds the next shuffle. Save-then-load is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::razor::PretrainedState;
use crate::{Error, Result};

const FORMAT: &str = "razor-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub schema_hash: String,
    pub search_space: Vec<usize>,
    /// Hash of the run configuration that produced the state, if known.
    #[serde(default)]
    pub config_hash: Option<String>,
    pub state: PretrainedState,
}

impl Checkpoint {
    pub fn new(state: PretrainedState, config_hash: Option<String>) -> Self {
        Self {
            format: FORMAT.to_owned(),
            version: VERSION,
            schema_hash: state.schema_hash.clone(),
            search_space: state.model.space.candidates().to_vec(),
            config_hash,
            state,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("checkpoint: {e}")))?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        if ckpt.schema_hash != ckpt.state.schema_hash
            || ckpt.search_space != ckpt.state.model.space.candidates()
        {
            return Err(Error::Data(
                "checkpoint header disagrees with its state".into(),
            ));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Content hash of a pretrained state.
pub fn fingerprint(state: &PretrainedState) -> String {
    crate::sha256_hex(&serde_json::to_vec(state).expect("state serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, DatasetSchema};
    use crate::nn::MlpSpec;
    use crate::razor::{pretrain_run, PretrainConfig, SearchSpace};
    use proptest::prelude::*;

    fn trained() -> PretrainedState {
        let schema = DatasetSchema::from_cardinalities(&[4, 6]).unwrap();
        let labels = (0..20).map(|k| (k % 3 == 0) as u8).collect();
        let indices = (0..20u32).flat_map(|k| [k % 4, (k * 5) % 6]).collect();
        let ds = Dataset::new(schema, labels, indices).unwrap();
        let cfg = PretrainConfig {
            epochs: 2,
            batch_size: 6,
            mlp: MlpSpec {
                hidden: vec![5],
                layer_norm: true,
            },
            ..PretrainConfig::default()
        };
        pretrain_run(
            &ds,
            Some(&ds),
            SearchSpace::new(vec![0, 1, 3]).unwrap(),
            &cfg,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = Checkpoint::new(trained(), Some("abc".into()));
        let text = ckpt.to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_json(), text);
        let bits = |s: &PretrainedState| -> Vec<u64> {
            s.model
                .tables
                .iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&back.state), bits(&ckpt.state));
        assert_eq!(fingerprint(&back.state), fingerprint(&ckpt.state));
    }

    #[test]
    fn rejects_foreign_documents() {
        let mut ckpt = Checkpoint::new(trained(), None);
        ckpt.format = "other".into();
        assert!(Checkpoint::from_json(&ckpt.to_json()).is_err());
        let mut ckpt = Checkpoint::new(trained(), None);
        ckpt.schema_hash = "00".into();
        assert!(Checkpoint::from_json(&ckpt.to_json()).is_err());
        assert!(Checkpoint::from_json("{").is_err());
    }

    proptest! {
        #[test]
        fn floats_round_trip_bit_exact(v in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..64)) {
            let text = serde_json::to_string(&v).unwrap();
            let back: Vec<f64> = serde_json::from_str(&text).unwrap();
            let a: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = back.iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
