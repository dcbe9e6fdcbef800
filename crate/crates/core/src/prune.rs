//! Turning learned region weights into a discrete input configuration.
//!
//! For each field the regions are visited in descending weight order and
//! accumulated until their total weight reaches the cumulative probability
//! threshold (cpt). The field's width is the summed size of the visited
//! regions; a width of zero removes the field. `cpt = 0` keeps only the
//! heaviest region (argmax), `cpt = 1` keeps everything.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSchema;
use crate::razor::{PretrainedState, SearchSpace};
use crate::{Error, Result};

/// Width assigned to one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub field_id: usize,
    pub name: String,
    pub dim: usize,
    /// Regions kept by pruning, in the order they were taken.
    #[serde(default)]
    pub retained_regions: Vec<usize>,
    /// Region weights the decision was made from.
    #[serde(default)]
    pub alpha: Vec<f64>,
}

/// Field count, total width and embedding parameter count of a
/// configuration, over selected fields only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigMetrics {
    pub fields: usize,
    pub dims: usize,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputConfig {
    pub cpt: f64,
    /// Fingerprint of the pretrained state this was derived from, if any.
    pub derived_from: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_space: Option<Vec<usize>>,
    pub entries: Vec<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ConfigMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

fn check_cpt(cpt: f64) -> Result<()> {
    if (0.0..=1.0).contains(&cpt) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("cpt {cpt} not in [0, 1]")))
    }
}

/// Regions retained for one field, in the order they were accumulated.
/// Ties in weight go to the smaller region index.
pub fn retained_regions(alpha: &[f64], cpt: f64, space: &SearchSpace) -> Result<Vec<usize>> {
    check_cpt(cpt)?;
    if alpha.len() != space.num_regions() {
        return Err(Error::Shape(format!(
            "{} weights for {} regions",
            alpha.len(),
            space.num_regions()
        )));
    }
    let mut order: Vec<usize> = (0..alpha.len()).collect();
    order.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut sum = 0.0;
    for j in order {
        kept.push(j);
        sum += alpha[j];
        if sum >= cpt {
            break;
        }
    }
    Ok(kept)
}

/// Pruned width of one field.
pub fn cpt_prune(alpha: &[f64], cpt: f64, space: &SearchSpace) -> Result<usize> {
    let sizes = space.region_sizes();
    Ok(retained_regions(alpha, cpt, space)?
        .into_iter()
        .map(|j| sizes[j])
        .sum())
}

/// Applies [`cpt_prune`] to every field of a pretrained state.
pub fn derive_config(
    state: &PretrainedState,
    schema: &DatasetSchema,
    cpt: f64,
) -> Result<InputConfig> {
    check_cpt(cpt)?;
    if schema.hash() != state.schema_hash {
        return Err(Error::Data(
            "schema does not match the pretrained state".into(),
        ));
    }
    let space = &state.model.space;
    let sizes = space.region_sizes();
    let entries = state
        .alphas()
        .into_iter()
        .zip(schema.fields())
        .map(|(alpha, f)| {
            let retained = retained_regions(&alpha, cpt, space)?;
            Ok(FieldConfig {
                field_id: f.field_id,
                name: f.name.clone(),
                dim: retained.iter().map(|&j| sizes[j]).sum(),
                retained_regions: retained,
                alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut config = InputConfig {
        cpt,
        derived_from: crate::checkpoint::fingerprint(state),
        search_space: Some(space.candidates().to_vec()),
        entries,
        metrics: None,
        config_hash: None,
    };
    let metrics = config_metrics(&config, schema)?;
    if metrics.fields == 0 {
        log::error!("every field was pruned at cpt {cpt}; the configuration selects nothing");
    }
    config.metrics = Some(metrics);
    Ok(config)
}

/// Fields, Dims and Params of the selected fields.
pub fn config_metrics(config: &InputConfig, schema: &DatasetSchema) -> Result<ConfigMetrics> {
    let mut m = ConfigMetrics {
        fields: 0,
        dims: 0,
        params: 0,
    };
    for e in &config.entries {
        let field = schema
            .field(e.field_id)
            .ok_or_else(|| Error::Data(format!("unknown field id {}", e.field_id)))?;
        if e.dim > 0 {
            m.fields += 1;
            m.dims += e.dim;
            m.params += field.cardinality * e.dim;
        }
    }
    Ok(m)
}

impl InputConfig {
    /// Every field at the same width: the fixed-dimension baseline.
    pub fn uniform(schema: &DatasetSchema, dim: usize) -> Self {
        let entries = schema
            .fields()
            .iter()
            .map(|f| FieldConfig {
                field_id: f.field_id,
                name: f.name.clone(),
                dim,
                retained_regions: Vec::new(),
                alpha: Vec::new(),
            })
            .collect();
        let mut config = Self {
            cpt: 1.0,
            derived_from: format!("uniform:{dim}"),
            search_space: None,
            entries,
            metrics: None,
            config_hash: None,
        };
        config.metrics = config_metrics(&config, schema).ok();
        config
    }

    /// Entries with a positive width, in schema order.
    pub fn selected(&self) -> impl Iterator<Item = &FieldConfig> + '_ {
        self.entries.iter().filter(|e| e.dim > 0)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.dim).collect()
    }

    /// Checks ids are in schema order and names match.
    pub fn validate(&self, schema: &DatasetSchema) -> Result<()> {
        for (pos, e) in self.entries.iter().enumerate() {
            let f = schema
                .field(e.field_id)
                .ok_or_else(|| Error::Data(format!("unknown field id {}", e.field_id)))?;
            if f.name != e.name {
                return Err(Error::Data(format!(
                    "field {} is {:?} in the schema but {:?} in the config",
                    e.field_id, f.name, e.name
                )));
            }
            if pos > 0 && self.entries[pos - 1].field_id >= e.field_id {
                return Err(Error::Data(
                    "config entries must follow schema order".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("input config: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(d: &[usize]) -> SearchSpace {
        SearchSpace::new(d.to_vec()).unwrap()
    }

    #[test]
    fn near_uniform_weights_at_zero_threshold() {
        let s = space(&[1, 2, 3]);
        assert_eq!(
            retained_regions(&[0.33, 0.33, 0.34], 0.0, &s).unwrap(),
            vec![2]
        );
        assert_eq!(cpt_prune(&[0.33, 0.33, 0.34], 0.0, &s).unwrap(), 1);
    }

    #[test]
    fn full_threshold_keeps_everything() {
        let s = space(&[0, 1, 3, 6]);
        for alpha in [
            [0.25; 4],
            [0.7, 0.1, 0.1, 0.1],
            [1e-9, 1e-9, 1e-9, 1.0 - 3e-9],
        ] {
            assert_eq!(cpt_prune(&alpha, 1.0, &s).unwrap(), 6);
        }
    }

    #[test]
    fn heavy_zero_region_drops_field() {
        let s = space(&[0, 1, 3, 6]);
        assert_eq!(cpt_prune(&[0.5, 0.1, 0.2, 0.2], 0.45, &s).unwrap(), 0);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let s = space(&[0, 1, 3, 6]);
        let alpha = [0.1, 0.2, 0.5, 0.2];
        assert_eq!(retained_regions(&alpha, 0.6, &s).unwrap(), vec![2, 1]);
        assert_eq!(cpt_prune(&alpha, 0.6, &s).unwrap(), 3);
    }

    #[test]
    fn invalid_threshold() {
        let s = space(&[0, 1]);
        assert!(cpt_prune(&[0.5, 0.5], -0.1, &s).is_err());
        assert!(cpt_prune(&[0.5, 0.5], 1.5, &s).is_err());
        assert!(cpt_prune(&[0.5, 0.5], f64::NAN, &s).is_err());
        assert!(cpt_prune(&[1.0], 0.5, &s).is_err());
    }

    fn entries(dims: &[(usize, usize)], schema: &DatasetSchema) -> InputConfig {
        InputConfig {
            cpt: 0.5,
            derived_from: String::new(),
            search_space: None,
            entries: dims
                .iter()
                .map(|&(id, dim)| FieldConfig {
                    field_id: id,
                    name: schema.field(id).map_or(String::new(), |f| f.name.clone()),
                    dim,
                    retained_regions: vec![],
                    alpha: vec![],
                })
                .collect(),
            metrics: None,
            config_hash: None,
        }
    }

    #[test]
    fn metrics_arithmetic() {
        let schema = DatasetSchema::from_cardinalities(&[10, 100, 7]).unwrap();
        let m = config_metrics(&entries(&[(0, 4), (1, 2)], &schema), &schema).unwrap();
        assert_eq!(
            m,
            ConfigMetrics {
                fields: 2,
                dims: 6,
                params: 240
            }
        );
        let m = config_metrics(&entries(&[], &schema), &schema).unwrap();
        assert_eq!(
            m,
            ConfigMetrics {
                fields: 0,
                dims: 0,
                params: 0
            }
        );
        let m = config_metrics(&entries(&[(0, 4), (1, 0), (2, 1)], &schema), &schema).unwrap();
        assert_eq!(
            m,
            ConfigMetrics {
                fields: 2,
                dims: 5,
                params: 47
            }
        );
        assert!(config_metrics(&entries(&[(5, 1)], &schema), &schema).is_err());
    }

    #[test]
    fn uniform_config() {
        let schema = DatasetSchema::from_cardinalities(&[10, 20]).unwrap();
        let c = InputConfig::uniform(&schema, 8);
        assert_eq!(
            c.metrics,
            Some(ConfigMetrics {
                fields: 2,
                dims: 16,
                params: 240
            })
        );
        c.validate(&schema).unwrap();
        assert_eq!(InputConfig::from_json(&c.to_json()).unwrap(), c);
    }

    fn simplex(raw: Vec<f64>) -> Vec<f64> {
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    proptest! {
        #[test]
        fn monotone_in_threshold(raw in proptest::collection::vec(0.01f64..1.0, 4), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let s = space(&[0, 1, 3, 6]);
            let alpha = simplex(raw);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cpt_prune(&alpha, lo, &s).unwrap() <= cpt_prune(&alpha, hi, &s).unwrap());
        }

        #[test]
        fn permutation_equivariant(raw in proptest::collection::vec(0.01f64..1.0, 5), cpt in 0.0f64..=1.0, rot in 0usize..5) {
            // Distinct weights keep the tie rule out of the picture.
            let mut sorted = raw.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
            let alpha = simplex(raw);
            let sizes = [2usize, 1, 3, 5, 4];
            let d = |sz: &[usize]| -> SearchSpace {
                let mut acc = 0;
                SearchSpace::new(sz.iter().map(|c| { acc += c; acc }).collect()).unwrap()
            };
            let rotated_alpha: Vec<f64> = (0..5).map(|j| alpha[(j + rot) % 5]).collect();
            let rotated_sizes: Vec<usize> = (0..5).map(|j| sizes[(j + rot) % 5]).collect();
            prop_assert_eq!(
                cpt_prune(&alpha, cpt, &d(&sizes)).unwrap(),
                cpt_prune(&rotated_alpha, cpt, &d(&rotated_sizes)).unwrap()
            );
        }
    }
}
