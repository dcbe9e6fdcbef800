#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use razor_core::data::{Batch, DatasetSchema};
use razor_core::nn::{MlpSpec, NormMode};
use razor_core::razor::{LossConfig, RelaxedModel, SearchSpace};
use razor_core::retrain::RetrainModel;

pub const FD_STEP: f64 = 1e-5;
/// Below this magnitude both gradients count as zero and the error is
/// measured absolutely.
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Default, Clone, Copy)]
pub struct CheckResult {
    pub coords: usize,
    pub max_rel_err: f64,
}

impl CheckResult {
    fn record(&mut self, analytic: f64, numeric: f64) {
        let denom = analytic.abs().max(numeric.abs()).max(FD_FLOOR);
        self.max_rel_err = self.max_rel_err.max((analytic - numeric).abs() / denom);
        self.coords += 1;
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            coords: self.coords + other.coords,
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
        }
    }
}

/// Random batch of `len` rows with at least two distinct values per field.
pub fn random_batch(cards: &[usize], len: usize, rng: &mut ChaCha8Rng) -> Batch {
    let n = cards.len();
    let mut indices = vec![0u32; len * n];
    for (i, &c) in cards.iter().enumerate() {
        loop {
            for b in 0..len {
                indices[b * n + i] = rng.gen_range(0..c) as u32;
            }
            if (1..len).any(|b| indices[b * n + i] != indices[i]) {
                break;
            }
        }
    }
    let labels = (0..len).map(|_| rng.gen_range(0..2u8)).collect();
    Batch::new(labels, indices, n).unwrap()
}

/// Coordinate `c` of the relaxed model in gradient-bundle order.
fn relaxed_coord(m: &mut RelaxedModel, mut c: usize) -> &mut f64 {
    for t in 0..m.tables.len() {
        let len = m.tables[t].data().len();
        if c < len {
            return &mut m.tables[t].data_mut()[c];
        }
        c -= len;
    }
    let sizes: Vec<usize> = m.mlp.tensors().iter().map(|t| t.len()).collect();
    for (t, len) in sizes.into_iter().enumerate() {
        if c < len {
            return &mut m.mlp.tensors_mut().swap_remove(t)[c];
        }
        c -= len;
    }
    for row in &mut m.arch.logits {
        if c < row.len() {
            return &mut row[c];
        }
        c -= row.len();
    }
    panic!("coordinate out of range")
}

/// Analytic vs central-difference gradients of the full pretraining
/// objective, grouped as `(embeddings, mlp, arch)`.
pub fn check_relaxed(
    model: &RelaxedModel,
    batch: &Batch,
    loss: &LossConfig,
) -> (CheckResult, CheckResult, CheckResult) {
    let cache = model.forward_frozen(batch, NormMode::Train).unwrap();
    let grads = model.backward(batch, Some(&cache), loss).unwrap();
    let mut analytic: Vec<f64> = Vec::new();
    for (g, t) in grads.embeddings.iter().zip(&model.tables) {
        analytic.extend(g.to_dense(t.rows()));
    }
    let n_emb = analytic.len();
    for t in grads.mlp.tensors() {
        analytic.extend_from_slice(t);
    }
    let n_mlp = analytic.len() - n_emb;
    analytic.extend(grads.arch.iter().flatten());

    let objective = |m: &RelaxedModel| {
        let cache = m.forward_frozen(batch, NormMode::Train).unwrap();
        m.objective(batch, &cache, loss)
    };
    let mut out = [CheckResult::default(); 3];
    let mut work = model.clone();
    for (c, &a) in analytic.iter().enumerate() {
        let orig = *relaxed_coord(&mut work, c);
        *relaxed_coord(&mut work, c) = orig + FD_STEP;
        let up = objective(&work);
        *relaxed_coord(&mut work, c) = orig - FD_STEP;
        let down = objective(&work);
        *relaxed_coord(&mut work, c) = orig;
        let group = if c < n_emb {
            0
        } else if c < n_emb + n_mlp {
            1
        } else {
            2
        };
        out[group].record(a, (up - down) / (2.0 * FD_STEP));
    }
    (out[0], out[1], out[2])
}

fn retrain_coord(m: &mut RetrainModel, mut c: usize) -> &mut f64 {
    for t in 0..m.tables.len() {
        let len = m.tables[t].data().len();
        if c < len {
            return &mut m.tables[t].data_mut()[c];
        }
        c -= len;
    }
    let sizes: Vec<usize> = m.mlp.tensors().iter().map(|t| t.len()).collect();
    for (t, len) in sizes.into_iter().enumerate() {
        if c < len {
            return &mut m.mlp.tensors_mut().swap_remove(t)[c];
        }
        c -= len;
    }
    panic!("coordinate out of range")
}

/// Same check for the retraining graph (no batch norm, no L_p).
pub fn check_retrain(model: &RetrainModel, batch: &Batch, l2: f64) -> CheckResult {
    let cache = model.forward(batch).unwrap();
    let grads = model.backward(batch, Some(&cache), l2).unwrap();
    let mut analytic: Vec<f64> = Vec::new();
    for (g, t) in grads.embeddings.iter().zip(&model.tables) {
        analytic.extend(g.to_dense(t.rows()));
    }
    for t in grads.mlp.tensors() {
        analytic.extend_from_slice(t);
    }
    let objective = |m: &RetrainModel| {
        let cache = m.forward(batch).unwrap();
        m.objective(batch, &cache, l2)
    };
    let mut out = CheckResult::default();
    let mut work = model.clone();
    for (c, &a) in analytic.iter().enumerate() {
        let orig = *retrain_coord(&mut work, c);
        *retrain_coord(&mut work, c) = orig + FD_STEP;
        let up = objective(&work);
        *retrain_coord(&mut work, c) = orig - FD_STEP;
        let down = objective(&work);
        *retrain_coord(&mut work, c) = orig;
        out.record(a, (up - down) / (2.0 * FD_STEP));
    }
    out
}

/// A jittered toy relaxed model over 2-4 fields with `D = [0,1,3,6]`,
/// MLP `[8, 1]` and a batch of 4.
pub fn toy_relaxed(seed: u64, tau: f64) -> (RelaxedModel, Batch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(3..=7)).collect();
    let schema = DatasetSchema::from_cardinalities(&cards).unwrap();
    let space = SearchSpace::new(vec![0, 1, 3, 6]).unwrap();
    let spec = MlpSpec {
        hidden: vec![8],
        layer_norm: false,
    };
    let mut model = RelaxedModel::init(&schema, space, &spec, tau, seed).unwrap();
    model.jitter(0.5, &mut rng);
    let batch = random_batch(&cards, 4, &mut rng);
    (model, batch)
}
