//! C interface to `razor-core`.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`RazorStatus`]; on failure [`razor_last_error`] describes the problem.
//! Run configuration is passed as TOML text using the same keys as the
//! command-line config file; a null pointer means all defaults.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use razor_core::checkpoint::Checkpoint;
use razor_core::config::RunConfig;
use razor_core::data::{Dataset, DatasetSchema};
use razor_core::prune::{config_metrics, cpt_prune, derive_config, InputConfig};
use razor_core::razor::{pretrain_run, PretrainedState, SearchSpace};
use razor_core::retrain::{auc, build_retrain_model, evaluate, retrain_run};
use razor_core::Error;

/// Result of a call. Values 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RazorStatus {
    Ok = 0,
    InvalidArgument = 2,
    DataError = 3,
    NumericError = 4,
    NullPointer = 5,
    Panic = 6,
}

pub struct RazorDataset {
    inner: Dataset,
}

pub struct RazorPretrained {
    inner: PretrainedState,
}

pub struct RazorInputConfig {
    inner: InputConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RazorMetrics {
    pub fields: usize,
    pub dims: usize,
    pub params: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RazorEvalReport {
    /// False when the test set holds a single class; `auc` is then NaN.
    pub auc_defined: bool,
    pub auc: f64,
    pub logloss: f64,
    pub examples: usize,
    pub metrics: RazorMetrics,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Invalid(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> RazorStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RazorStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            match e.exit_code() {
                2 => RazorStatus::InvalidArgument,
                3 => RazorStatus::DataError,
                _ => RazorStatus::NumericError,
            }
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            RazorStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            RazorStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic".into());
            RazorStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Invalid(format!("{what} is not UTF-8")))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice_arg<'a, T>(
    p: *const T,
    len: usize,
    what: &'static str,
) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn run_config(toml: *const c_char) -> Result<RunConfig, Failure> {
    let config = if toml.is_null() {
        RunConfig::default()
    } else {
        RunConfig::from_toml_str(str_arg(toml, "config")?)?
    };
    config.validate()?;
    Ok(config)
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn razor_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn razor_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a CSV dataset described by a TOML schema.
///
/// # Safety
/// Pointer arguments must be valid; `out` receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn razor_dataset_load(
    schema_path: *const c_char,
    csv_path: *const c_char,
    out: *mut *mut RazorDataset,
) -> RazorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let schema = DatasetSchema::load(path_arg(schema_path, "schema_path")?)?;
        let inner = Dataset::load_csv(path_arg(csv_path, "csv_path")?, schema)?;
        *out = boxed(RazorDataset { inner });
        Ok(())
    })
}

/// Generates the synthetic train and test sets described by `config_toml`.
///
/// # Safety
/// Pointer arguments must be valid; `config_toml` may be null.
#[no_mangle]
pub unsafe extern "C" fn razor_dataset_synthetic(
    config_toml: *const c_char,
    out_train: *mut *mut RazorDataset,
    out_test: *mut *mut RazorDataset,
) -> RazorStatus {
    guard(|| {
        let out_train = out_arg(out_train, "out_train")?;
        let out_test = out_arg(out_test, "out_test")?;
        let config = run_config(config_toml)?;
        let data = razor_core::data::generate_synthetic(&config.synthetic_spec()?)?;
        let (train, test) = data.dataset.split_at(config.synthetic_train_examples);
        *out_train = boxed(RazorDataset { inner: train });
        *out_test = boxed(RazorDataset { inner: test });
        Ok(())
    })
}

/// Number of examples, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn razor_dataset_len(dataset: *const RazorDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn razor_dataset_num_fields(dataset: *const RazorDataset) -> usize {
    dataset
        .as_ref()
        .map_or(0, |d| d.inner.schema().num_fields())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn razor_dataset_free(dataset: *mut RazorDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Pretrains on `train`, monitoring `eval` when it is not null.
///
/// # Safety
/// Pointer arguments must be valid; `eval` and `config_toml` may be null.
#[no_mangle]
pub unsafe extern "C" fn razor_pretrain(
    train: *const RazorDataset,
    eval: *const RazorDataset,
    config_toml: *const c_char,
    out: *mut *mut RazorPretrained,
) -> RazorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let train = &ref_arg(train, "train")?.inner;
        let eval = eval.as_ref().map(|d| &d.inner);
        let config = run_config(config_toml)?;
        let inner = pretrain_run(
            train,
            eval,
            config.search_space()?,
            &config.pretrain_config(),
        )?;
        *out = boxed(RazorPretrained { inner });
        Ok(())
    })
}

/// # Safety
/// Pointer arguments must be valid.
#[no_mangle]
pub unsafe extern "C" fn razor_checkpoint_save(
    state: *const RazorPretrained,
    path: *const c_char,
) -> RazorStatus {
    guard(|| {
        let state = ref_arg(state, "state")?;
        Checkpoint::new(state.inner.clone(), None).save(path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// Pointer arguments must be valid; `out` receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn razor_checkpoint_load(
    path: *const c_char,
    out: *mut *mut RazorPretrained,
) -> RazorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ckpt = Checkpoint::load(path_arg(path, "path")?)?;
        *out = boxed(RazorPretrained { inner: ckpt.state });
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn razor_pretrained_num_fields(state: *const RazorPretrained) -> usize {
    state.as_ref().map_or(0, |s| s.inner.model.num_fields())
}

/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn razor_pretrained_num_regions(state: *const RazorPretrained) -> usize {
    state
        .as_ref()
        .map_or(0, |s| s.inner.model.space.num_regions())
}

/// Copies the region weights of `field` into `buf`, which must hold
/// `razor_pretrained_num_regions` values.
///
/// # Safety
/// Pointer arguments must be valid and `buf` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn razor_pretrained_alpha(
    state: *const RazorPretrained,
    field: usize,
    buf: *mut f64,
    len: usize,
) -> RazorStatus {
    guard(|| {
        let state = ref_arg(state, "state")?;
        let alphas = state.inner.alphas();
        let alpha = alphas
            .get(field)
            .ok_or_else(|| Failure::Invalid(format!("field {field} out of range")))?;
        if len < alpha.len() {
            return Err(Failure::Invalid(format!(
                "buffer holds {len} of {} weights",
                alpha.len()
            )));
        }
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, alpha.len()).copy_from_slice(alpha);
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn razor_pretrained_free(state: *mut RazorPretrained) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Pruned width of one field from its region weights.
///
/// # Safety
/// `alpha` and `candidates` must point to `num_regions` values each.
#[no_mangle]
pub unsafe extern "C" fn razor_cpt_prune(
    alpha: *const f64,
    candidates: *const usize,
    num_regions: usize,
    cpt: f64,
    out_dim: *mut usize,
) -> RazorStatus {
    guard(|| {
        let out_dim = out_arg(out_dim, "out_dim")?;
        let alpha = slice_arg(alpha, num_regions, "alpha")?;
        let space = SearchSpace::new(slice_arg(candidates, num_regions, "candidates")?.to_vec())?;
        *out_dim = cpt_prune(alpha, cpt, &space)?;
        Ok(())
    })
}

/// Derives an input configuration at `cpt`; `dataset` supplies the schema.
///
/// # Safety
/// Pointer arguments must be valid; `out` receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn razor_derive(
    state: *const RazorPretrained,
    dataset: *const RazorDataset,
    cpt: f64,
    out: *mut *mut RazorInputConfig,
) -> RazorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let state = ref_arg(state, "state")?;
        let dataset = ref_arg(dataset, "dataset")?;
        let inner = derive_config(&state.inner, dataset.inner.schema(), cpt)?;
        *out = boxed(RazorInputConfig { inner });
        Ok(())
    })
}

/// Every field at width `dim`: the fixed-dimension baseline.
///
/// # Safety
/// Pointer arguments must be valid; `out` receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn razor_input_config_uniform(
    dataset: *const RazorDataset,
    dim: usize,
    out: *mut *mut RazorInputConfig,
) -> RazorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dataset = ref_arg(dataset, "dataset")?;
        *out = boxed(RazorInputConfig {
            inner: InputConfig::uniform(dataset.inner.schema(), dim),
        });
        Ok(())
    })
}

/// Width assigned to `field`, 0 when pruned or out of range.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn razor_input_config_dim(
    config: *const RazorInputConfig,
    field: usize,
) -> usize {
    config
        .as_ref()
        .and_then(|c| c.inner.entries.iter().find(|e| e.field_id == field))
        .map_or(0, |e| e.dim)
}

/// # Safety
/// Pointer arguments must be valid.
#[no_mangle]
pub unsafe extern "C" fn razor_input_config_metrics(
    config: *const RazorInputConfig,
    dataset: *const RazorDataset,
    out: *mut RazorMetrics,
) -> RazorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let config = ref_arg(config, "config")?;
        let dataset = ref_arg(dataset, "dataset")?;
        let m = config_metrics(&config.inner, dataset.inner.schema())?;
        *out = RazorMetrics {
            fields: m.fields,
            dims: m.dims,
            params: m.params,
        };
        Ok(())
    })
}

/// The configuration as JSON; free with [`razor_string_free`].
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn razor_input_config_to_json(
    config: *const RazorInputConfig,
) -> *mut c_char {
    config.as_ref().map_or(ptr::null_mut(), |c| {
        CString::new(c.inner.to_json()).map_or(ptr::null_mut(), CString::into_raw)
    })
}

/// # Safety
/// Pointer arguments must be valid; `out` receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn razor_input_config_from_json(
    json: *const c_char,
    out: *mut *mut RazorInputConfig,
) -> RazorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = InputConfig::from_json(str_arg(json, "json")?)?;
        *out = boxed(RazorInputConfig { inner });
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn razor_input_config_free(config: *mut RazorInputConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Builds the compact model for `config`, retrains it on `train` and
/// evaluates it on `test`.
///
/// # Safety
/// Pointer arguments must be valid; `config_toml` may be null.
#[no_mangle]
pub unsafe extern "C" fn razor_retrain_eval(
    train: *const RazorDataset,
    test: *const RazorDataset,
    config: *const RazorInputConfig,
    config_toml: *const c_char,
    out: *mut RazorEvalReport,
) -> RazorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let train = &ref_arg(train, "train")?.inner;
        let test = &ref_arg(test, "test")?.inner;
        let input = &ref_arg(config, "config")?.inner;
        let run = run_config(config_toml)?;
        let model = build_retrain_model(input, train.schema(), &run.mlp_spec(), run.seed)?;
        let (model, _) = retrain_run(train, model, &run.retrain_config())?;
        let eval = evaluate(&model, test)?;
        let m = config_metrics(input, train.schema())?;
        *out = RazorEvalReport {
            auc_defined: eval.auc.is_some(),
            auc: eval.auc.unwrap_or(f64::NAN),
            logloss: eval.logloss,
            examples: eval.examples,
            metrics: RazorMetrics {
                fields: m.fields,
                dims: m.dims,
                params: m.params,
            },
        };
        Ok(())
    })
}

/// Rank AUC of `scores` against 0/1 `labels`. Writes NaN when only one
/// class is present.
///
/// # Safety
/// `scores` and `labels` must point to `len` values each.
#[no_mangle]
pub unsafe extern "C" fn razor_auc(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> RazorStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let scores = slice_arg(scores, len, "scores")?;
        let labels = slice_arg(labels, len, "labels")?;
        if labels.iter().any(|&l| l > 1) {
            return Err(Failure::Invalid("labels must be 0 or 1".into()));
        }
        *out = auc(scores, labels).unwrap_or(f64::NAN);
        Ok(())
    })
}
