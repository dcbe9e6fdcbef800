mod common;

use common::{check_relaxed, check_retrain, random_batch, toy_relaxed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use razor_core::data::{Dataset, DatasetSchema};
use razor_core::nn::MlpSpec;
use razor_core::prune::InputConfig;
use razor_core::razor::LossConfig;
use razor_core::retrain::{build_retrain_model, retrain_run, RetrainConfig};

const TOL: f64 = 1e-4;

#[test]
fn relaxed_model_gradients_match_finite_differences() {
    let loss = LossConfig {
        lambda: 0.3,
        l2: 0.05,
    };
    for seed in 0..8 {
        for tau in [1.0, 0.2] {
            let (model, batch) = toy_relaxed(seed, tau);
            let (emb, mlp, arch) = check_relaxed(&model, &batch, &loss);
            for (name, r) in [("embeddings", emb), ("mlp", mlp), ("arch", arch)] {
                assert!(r.coords > 0);
                assert!(r.max_rel_err < TOL, "seed {seed} tau {tau} {name}: {r:?}");
            }
        }
    }
}

#[test]
fn regularizer_path_alone_matches_finite_differences() {
    let (mut model, batch) = toy_relaxed(11, 0.5);
    model
        .mlp
        .tensors_mut()
        .into_iter()
        .for_each(|t| t.fill(0.0));
    let loss = LossConfig {
        lambda: 2.0,
        l2: 0.0,
    };
    let (_, _, arch) = check_relaxed(&model, &batch, &loss);
    assert!(arch.max_rel_err < TOL, "{arch:?}");
}

#[test]
fn retrain_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cards = [4, 6, 5];
    let schema = DatasetSchema::from_cardinalities(&cards).unwrap();
    let mut config = InputConfig::uniform(&schema, 3);
    config.entries[1].dim = 0;
    config.entries[2].dim = 2;
    for layer_norm in [false, true] {
        let spec = MlpSpec {
            hidden: vec![6, 4],
            layer_norm,
        };
        let mut model = build_retrain_model(&config, &schema, &spec, 1).unwrap();
        model.jitter(0.3, &mut rng);
        let batch = random_batch(&cards, 5, &mut rng);
        let r = check_retrain(&model, &batch, 0.1);
        assert!(r.max_rel_err < TOL, "layer_norm {layer_norm}: {r:?}");
    }
}

#[test]
fn retrain_loss_falls_every_epoch_on_separable_data() {
    let schema = DatasetSchema::from_cardinalities(&[2, 5]).unwrap();
    let n = 400u32;
    let labels: Vec<u8> = (0..n).map(|k| (k % 2) as u8).collect();
    let indices: Vec<u32> = (0..n).flat_map(|k| [k % 2, (k * 7 / 3) % 5]).collect();
    let ds = Dataset::new(schema.clone(), labels, indices).unwrap();
    let config = InputConfig::uniform(&schema, 2);
    let spec = MlpSpec {
        hidden: vec![8],
        layer_norm: false,
    };
    let model = build_retrain_model(&config, &schema, &spec, 0).unwrap();
    let cfg = RetrainConfig {
        epochs: 5,
        batch_size: 32,
        ..RetrainConfig::default()
    };
    let (_, log) = retrain_run(&ds, model, &cfg).unwrap();
    assert_eq!(log.len(), 5);
    for w in log.windows(2) {
        assert!(w[1].mean_loss < w[0].mean_loss, "{log:?}");
    }
}
