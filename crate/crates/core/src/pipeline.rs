//! The command drivers behind the `razor` binary.
//!
//! Every command reads and writes fixed file names inside the configured
//! output directory, so running `gen-data`, `pretrain`, `derive` and
//! `retrain-eval` one after another is the same as `pipeline`. Outputs
//! depend only on the inputs and the seed; wall-clock time goes to a
//! separate `timing.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{generate_synthetic, Dataset, DatasetSchema};
use crate::prune::{config_metrics, derive_config, InputConfig};
use crate::razor::{pretrain_run, EpochLog};
use crate::retrain::{build_retrain_model, evaluate, retrain_run, RetrainEpoch};
use crate::{Error, Result};

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const SCHEMA_TOML: &str = "schema.toml";
pub const ROLES_JSON: &str = "roles.json";
pub const RUN_TOML: &str = "run.toml";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";
pub const PRETRAIN_LOG: &str = "pretrain_log.jsonl";
pub const INPUT_CONFIG_JSON: &str = "input_config.json";
pub const RETRAIN_LOG: &str = "retrain_log.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const TIMING_JSON: &str = "timing.json";

/// Ground truth written next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roles {
    pub config_hash: String,
    pub informative: Vec<usize>,
    pub noise: Vec<usize>,
}

/// Final evaluation of a retrained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub auc: Option<f64>,
    pub logloss: f64,
    pub examples: usize,
    pub fields: usize,
    pub dims: usize,
    pub params: usize,
}

#[derive(Serialize)]
struct LogLine<'a, T> {
    config_hash: &'a str,
    #[serde(flatten)]
    entry: &'a T,
}

#[derive(Serialize)]
struct Timing<'a> {
    command: &'a str,
    seconds: f64,
}

fn out_path(config: &RunConfig, name: &str) -> PathBuf {
    config.out.join(name)
}

fn prepare_out(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    write(&out_path(config, RUN_TOML), config.to_toml_string())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    write(path, text + "\n")
}

fn write_jsonl<T: Serialize>(path: &Path, hash: &str, entries: &[T]) -> Result<()> {
    let mut text = String::new();
    for entry in entries {
        let line = LogLine {
            config_hash: hash,
            entry,
        };
        text.push_str(&serde_json::to_string(&line).expect("log line serializes"));
        text.push('\n');
    }
    write(path, text)
}

fn write_timing(config: &RunConfig, command: &str, start: Instant) -> Result<()> {
    let timing = Timing {
        command,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out_path(config, TIMING_JSON), &timing)
}

/// Where the schema, training and test data are read from.
pub fn data_paths(config: &RunConfig) -> (PathBuf, PathBuf, Option<PathBuf>) {
    match (&config.train, &config.schema) {
        (Some(train), Some(schema)) => (schema.clone(), train.clone(), config.test.clone()),
        _ => (
            out_path(config, SCHEMA_TOML),
            out_path(config, TRAIN_CSV),
            Some(out_path(config, TEST_CSV)),
        ),
    }
}

/// Loads the schema, training set and optional test set.
pub fn load_data(config: &RunConfig) -> Result<(DatasetSchema, Dataset, Option<Dataset>)> {
    let (schema_path, train_path, test_path) = data_paths(config);
    for p in std::iter::once(&schema_path)
        .chain([&train_path])
        .chain(test_path.as_ref())
    {
        if !p.is_file() {
            return Err(Error::Data(format!(
                "dataset file {} not found",
                p.display()
            )));
        }
    }
    let schema = DatasetSchema::load(&schema_path)?;
    let train = Dataset::load_csv(&train_path, schema.clone())?;
    let test = match test_path {
        Some(p) => Some(Dataset::load_csv(&p, schema.clone())?),
        None => None,
    };
    Ok((schema, train, test))
}

/// Writes synthetic train/test CSVs, their schema and the true field roles.
pub fn cmd_gen_data(config: &RunConfig) -> Result<Roles> {
    if config.train.is_some() {
        return Err(Error::InvalidArgument(
            "gen-data only applies to synthetic runs; `train` is set".into(),
        ));
    }
    let spec = config.synthetic_spec()?;
    prepare_out(config)?;
    let data = generate_synthetic(&spec)?;
    let (train, test) = data.dataset.split_at(config.synthetic_train_examples);
    data.dataset.schema().save(out_path(config, SCHEMA_TOML))?;
    train.save_csv(out_path(config, TRAIN_CSV))?;
    test.save_csv(out_path(config, TEST_CSV))?;
    let roles = Roles {
        config_hash: config.hash(),
        noise: (0..spec.fields.len())
            .filter(|i| !data.informative.contains(i))
            .collect(),
        informative: data.informative,
    };
    write_json(&out_path(config, ROLES_JSON), &roles)?;
    log::info!(
        "wrote {} train and {} test examples",
        train.len(),
        test.len()
    );
    Ok(roles)
}

/// Pretrains the relaxed model and writes the checkpoint and epoch log.
pub fn cmd_pretrain(config: &RunConfig) -> Result<Checkpoint> {
    let start = Instant::now();
    let space = config.search_space()?;
    let (_, train, test) = load_data(config)?;
    prepare_out(config)?;
    let state = pretrain_run(&train, test.as_ref(), space, &config.pretrain_config())?;
    let hash = config.hash();
    write_jsonl::<EpochLog>(&out_path(config, PRETRAIN_LOG), &hash, &state.log)?;
    let ckpt = Checkpoint::new(state, Some(hash));
    ckpt.save(out_path(config, CHECKPOINT_JSON))?;
    write_timing(config, "pretrain", start)?;
    Ok(ckpt)
}

/// Derives the input configuration from a checkpoint, by default the one in
/// the output directory.
pub fn cmd_derive(config: &RunConfig, checkpoint: Option<&Path>) -> Result<InputConfig> {
    let cpt = config.effective_cpt();
    if !(0.0..=1.0).contains(&cpt) {
        return Err(Error::InvalidArgument(format!("cpt {cpt} not in [0, 1]")));
    }
    let path = checkpoint.map_or_else(|| out_path(config, CHECKPOINT_JSON), Path::to_path_buf);
    let ckpt = Checkpoint::load(&path)?;
    let (schema_path, _, _) = data_paths(config);
    let schema = DatasetSchema::load(&schema_path)?;
    prepare_out(config)?;
    let mut input = derive_config(&ckpt.state, &schema, cpt)?;
    input.config_hash = Some(config.hash());
    input.save(out_path(config, INPUT_CONFIG_JSON))?;
    if let Some(m) = &input.metrics {
        log::info!(
            "derived {} fields, {} dims, {} params",
            m.fields,
            m.dims,
            m.params
        );
    }
    Ok(input)
}

/// Rebuilds the compact model, retrains it and evaluates on the test set.
pub fn cmd_retrain_eval(config: &RunConfig, input_config: Option<&Path>) -> Result<RunReport> {
    let start = Instant::now();
    let path = input_config.map_or_else(|| out_path(config, INPUT_CONFIG_JSON), Path::to_path_buf);
    let input = InputConfig::load(&path)?;
    let (schema, train, test) = load_data(config)?;
    let test =
        test.ok_or_else(|| Error::InvalidArgument("retrain-eval needs a `test` set".into()))?;
    input.validate(&schema)?;
    let metrics = config_metrics(&input, &schema)?;
    let model = build_retrain_model(&input, &schema, &config.mlp_spec(), config.seed)?;
    prepare_out(config)?;
    let (model, log) = retrain_run(&train, model, &config.retrain_config())?;
    let eval = evaluate(&model, &test)?;
    let hash = config.hash();
    write_jsonl::<RetrainEpoch>(&out_path(config, RETRAIN_LOG), &hash, &log)?;
    let report = RunReport {
        config_hash: hash,
        auc: eval.auc,
        logloss: eval.logloss,
        examples: eval.examples,
        fields: metrics.fields,
        dims: metrics.dims,
        params: metrics.params,
    };
    write_json(&out_path(config, REPORT_JSON), &report)?;
    write_timing(config, "retrain-eval", start)?;
    log::info!("auc {:?} logloss {:.5}", report.auc, report.logloss);
    Ok(report)
}

/// `gen-data` (synthetic runs only), `pretrain`, `derive`, `retrain-eval`.
pub fn cmd_pipeline(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    if config.train.is_none() {
        cmd_gen_data(config)?;
    }
    cmd_pretrain(config)?;
    cmd_derive(config, None)?;
    let report = cmd_retrain_eval(config, None)?;
    write_timing(config, "pipeline", start)?;
    Ok(report)
}
