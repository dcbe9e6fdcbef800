use std::collections::BTreeSet;

use rand::Rng;

use super::Dataset;
use crate::rng::{stream, DOMAIN_DOWNSAMPLE};
use crate::{Error, Result};

/// Every unordered pair `(a, b)` with `a < b < num_fields`, lexicographic.
pub fn all_pairs(num_fields: usize) -> Vec<(usize, usize)> {
    (0..num_fields)
        .flat_map(|a| (a + 1..num_fields).map(move |b| (a, b)))
        .collect()
}

/// Appends one crossed field per pair.
///
/// The crossed index is `(idx_a * |f_b| + idx_b) mod max_cardinality` and the
/// new cardinality is `min(|f_a| * |f_b|, max_cardinality)`; below the cap the
/// modulus is the identity, so the cross is a bijection.
pub fn cross_fields(
    dataset: &Dataset,
    pairs: &[(usize, usize)],
    max_cardinality: usize,
) -> Result<Dataset> {
    if max_cardinality == 0 || u32::try_from(max_cardinality).is_err() {
        return Err(Error::InvalidArgument(format!(
            "max_cardinality {max_cardinality} out of range"
        )));
    }
    let n = dataset.num_fields();
    let mut seen = BTreeSet::new();
    for &(a, b) in pairs {
        if a >= n || b >= n {
            return Err(Error::InvalidArgument(format!(
                "pair ({a}, {b}) references unknown field"
            )));
        }
        if a == b {
            return Err(Error::InvalidArgument(format!(
                "pair ({a}, {b}) crosses a field with itself"
            )));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(Error::InvalidArgument(format!("duplicate pair ({a}, {b})")));
        }
    }

    let cards = dataset.schema().cardinalities();
    let mut schema = dataset.schema().clone();
    for &(a, b) in pairs {
        let product = (cards[a] as u64) * (cards[b] as u64);
        let name = format!("{}_x_{}", schema.fields()[a].name, schema.fields()[b].name);
        schema.push_field(name, product.min(max_cardinality as u64) as usize);
    }

    let n_out = n + pairs.len();
    let cap = max_cardinality as u64;
    let mut indices = Vec::with_capacity(dataset.len() * n_out);
    for ex in dataset.examples() {
        indices.extend_from_slice(ex.indices);
        for &(a, b) in pairs {
            let raw = ex.indices[a] as u64 * cards[b] as u64 + ex.indices[b] as u64;
            indices.push((raw % cap) as u32);
        }
    }
    Dataset::new(schema, dataset.labels().to_vec(), indices)
}

#[derive(Debug, Clone)]
pub struct Downsampled {
    pub dataset: Dataset,
    /// Probability with which each negative was kept (capped at 1).
    pub keep_probability: f64,
    /// Set when the input was already above the target ratio.
    pub target_unreachable: bool,
}

/// Keeps every positive and each negative independently with probability
/// `P / N_neg * (1 - r) / r`, which makes the expected positive ratio `r`.
pub fn negative_downsample(dataset: &Dataset, target_ratio: f64, seed: u64) -> Result<Downsampled> {
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target positive ratio {target_ratio} not in (0, 1)"
        )));
    }
    let positives = dataset.positives();
    let negatives = dataset.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Data(
            "downsampling needs at least one positive and one negative".into(),
        ));
    }
    let keep = positives as f64 / negatives as f64 * (1.0 - target_ratio) / target_ratio;
    if keep >= 1.0 {
        if keep > 1.0 {
            log::warn!(
                "positive ratio {:.4} already above target {target_ratio}; dataset left unchanged",
                dataset.positive_ratio()
            );
        }
        return Ok(Downsampled {
            dataset: dataset.clone(),
            keep_probability: 1.0,
            target_unreachable: keep > 1.0,
        });
    }
    let rows: Vec<usize> = dataset
        .examples()
        .enumerate()
        .filter(|(k, ex)| {
            ex.label == 1 || stream(seed, DOMAIN_DOWNSAMPLE, *k as u64).gen::<f64>() < keep
        })
        .map(|(k, _)| k)
        .collect();
    Ok(Downsampled {
        dataset: dataset.subset(&rows),
        keep_probability: keep,
        target_unreachable: false,
    })
}
