//! C ABI over `engage_mil`.
//!
//! Handles are opaque pointers returned through out-parameters by
//! `em_dataset_synth`, `em_dataset_load`, `em_dataset_split`,
//! `em_model_train` and `em_model_load`, and released with the matching
//! `_free`. Every fallible function returns
//! an [`EmStatus`]; on failure [`em_last_error_message`] describes the error
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use engage_mil::checkpoint::Checkpoint;
use engage_mil::config::RunConfig;
use engage_mil::data::{read_manifest, synth_generate, write_manifest, Dataset, ModalityTag, SynthConfig, VideoSample};
use engage_mil::error::Error;
use engage_mil::losses::{mse_loss, rank_losses, CenterBank};
use engage_mil::splits::{make_splits, SplitOptions};
use engage_mil::training::{lr_at, train_modality, OptimConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmStatus {
    Ok = 0,
    /// Bad configuration, shapes, labels or file contents.
    Validation = 1,
    /// A non-finite value appeared.
    Numeric = 2,
    /// A file could not be read or written.
    Io = 3,
    /// A required pointer argument was null or a string was not UTF-8.
    InvalidArgument = 4,
    /// The library panicked; this is a bug.
    Internal = 5,
}

/// A loaded or generated dataset.
pub struct EmDataset {
    inner: Dataset,
}

/// A trained model together with its center bank.
pub struct EmModel {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Lib(Error),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard<F>(f: F) -> EmStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EmStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            match e.exit_code() {
                2 => EmStatus::Numeric,
                3 => EmStatus::Io,
                _ => EmStatus::Validation,
            }
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(&msg);
            EmStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic");
            EmStatus::Internal
        }
    }
}

unsafe fn string_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::Arg(format!("`{name}` is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::Arg(format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Arg(format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn em_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn em_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a synthetic dataset.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn em_dataset_synth(
    n_subjects: usize,
    videos_per_subject: usize,
    k: usize,
    noise_scale: f64,
    seed: u64,
    out: *mut *mut EmDataset,
) -> EmStatus {
    guard(|| {
        out_arg(out, "out")?;
        let cfg = SynthConfig {
            n_subjects,
            videos_per_subject,
            k,
            noise_scale,
            ..SynthConfig::default()
        };
        let inner = synth_generate(&cfg, seed)?;
        *out = Box::into_raw(Box::new(EmDataset { inner }));
        Ok(())
    })
}

/// Reads a dataset from a manifest file or its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_dataset_load(path: *const c_char, out: *mut *mut EmDataset) -> EmStatus {
    guard(|| {
        let path = PathBuf::from(string_arg(path, "path")?);
        out_arg(out, "out")?;
        let inner = read_manifest(&path)?;
        *out = Box::into_raw(Box::new(EmDataset { inner }));
        Ok(())
    })
}

/// Writes a dataset as `manifest.json` plus feature files under `dir`.
///
/// # Safety
/// `dataset` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn em_dataset_write(dataset: *const EmDataset, dir: *const c_char) -> EmStatus {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        let dir = PathBuf::from(string_arg(dir, "dir")?);
        write_manifest(&ds.inner, &dir)?;
        Ok(())
    })
}

/// Number of videos; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn em_dataset_len(dataset: *const EmDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// Label value of the video at `index` in dataset order.
///
/// # Safety
/// `dataset` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn em_dataset_label(dataset: *const EmDataset, index: usize, out: *mut f64) -> EmStatus {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        out_arg(out, "out")?;
        let s = ds
            .inner
            .samples()
            .get(index)
            .ok_or_else(|| Failure::Arg(format!("index {index} out of range")))?;
        *out = s.label().value();
        Ok(())
    })
}

/// Splits into subject-disjoint train and validation datasets (the first
/// split produced for `seed`).
///
/// # Safety
/// `dataset` must be a live handle; both out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn em_dataset_split(
    dataset: *const EmDataset,
    ratio: f64,
    seed: u64,
    train_out: *mut *mut EmDataset,
    val_out: *mut *mut EmDataset,
) -> EmStatus {
    guard(|| {
        let ds = ref_arg(dataset, "dataset")?;
        out_arg(train_out, "train_out")?;
        out_arg(val_out, "val_out")?;
        let spec = make_splits(
            &ds.inner,
            &SplitOptions {
                n_splits: 1,
                ratio,
                seed,
                ..SplitOptions::default()
            },
        )?
        .remove(0);
        let train = ds.inner.subset(spec.train_ids.iter().map(String::as_str))?;
        let val = ds.inner.subset(spec.val_ids.iter().map(String::as_str))?;
        *train_out = Box::into_raw(Box::new(EmDataset { inner: train }));
        *val_out = Box::into_raw(Box::new(EmDataset { inner: val }));
        Ok(())
    })
}

/// Releases a dataset handle. Null is ignored.
///
/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn em_dataset_free(dataset: *mut EmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains one modality (`"gaze"`, `"head"`, `"pose"` or `"c3d"`).
/// `config_json` may be null for defaults; otherwise it is a JSON object
/// using the run-configuration keys.
///
/// # Safety
/// Handles must be live; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn em_model_train(
    train: *const EmDataset,
    val: *const EmDataset,
    modality: *const c_char,
    config_json: *const c_char,
    out: *mut *mut EmModel,
) -> EmStatus {
    guard(|| {
        let train = ref_arg(train, "train")?;
        let val = ref_arg(val, "val")?;
        let modality: ModalityTag = string_arg(modality, "modality")?.parse()?;
        out_arg(out, "out")?;
        let run = if config_json.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_json(string_arg(config_json, "config_json")?, std::path::Path::new("<config_json>"))?
        };
        let cfg = run.train_config()?;
        let t: Vec<&VideoSample> = train.inner.samples().iter().collect();
        let v: Vec<&VideoSample> = val.inner.samples().iter().collect();
        let outcome = train_modality(&t, &v, modality, &cfg)?;
        let inner = Checkpoint {
            model: outcome.model,
            center_bank: Some(outcome.bank),
            config: Some(cfg),
        };
        *out = Box::into_raw(Box::new(EmModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `path` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn em_model_load(path: *const c_char, out: *mut *mut EmModel) -> EmStatus {
    guard(|| {
        let path = PathBuf::from(string_arg(path, "path")?);
        out_arg(out, "out")?;
        let inner = Checkpoint::load(&path)?;
        *out = Box::into_raw(Box::new(EmModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn em_model_save(model: *const EmModel, path: *const c_char) -> EmStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let path = PathBuf::from(string_arg(path, "path")?);
        model.inner.save(&path)?;
        Ok(())
    })
}

/// Writes one prediction per video, in dataset order, into `out[0..len]`.
/// `len` must equal the dataset length.
///
/// # Safety
/// Handles live; `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn em_model_predict(
    model: *const EmModel,
    dataset: *const EmDataset,
    out: *mut f64,
    len: usize,
) -> EmStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let ds = ref_arg(dataset, "dataset")?;
        out_arg(out, "out")?;
        if len != ds.inner.len() {
            return Err(Error::LengthMismatch {
                left: ds.inner.len(),
                right: len,
            }
            .into());
        }
        let out = std::slice::from_raw_parts_mut(out, len);
        for (slot, s) in out.iter_mut().zip(ds.inner.samples()) {
            *slot = model.inner.model.predict_video(s)?;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn em_model_free(model: *mut EmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Mean squared error of `n` predictions against `n` labels. Non-finite
/// inputs are rejected with [`EmStatus::Numeric`].
///
/// # Safety
/// Both arrays hold `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn em_mse_loss(
    predictions: *const f64,
    labels: *const f64,
    n: usize,
    out: *mut f64,
) -> EmStatus {
    guard(|| {
        let p = slice_arg(predictions, n, "predictions")?;
        let l = slice_arg(labels, n, "labels")?;
        out_arg(out, "out")?;
        if let Some(i) = p.iter().chain(l).position(|v| !v.is_finite()) {
            let which = if i < n { "predictions" } else { "labels" };
            return Err(Error::NonFinite(format!("{which}[{}]", i % n)).into());
        }
        *out = mse_loss(p, l)?.0;
        Ok(())
    })
}

/// Rank hinge terms for four centers stored row-major in `centers[4 * dim]`.
///
/// # Safety
/// `centers` holds `4 * dim` doubles; out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn em_rank_losses(
    centers: *const f64,
    dim: usize,
    delta: f64,
    rank1_out: *mut f64,
    rank2_out: *mut f64,
) -> EmStatus {
    guard(|| {
        if dim == 0 {
            return Err(Failure::Arg("`dim` must be positive".into()));
        }
        let c = slice_arg(centers, 4 * dim, "centers")?;
        out_arg(rank1_out, "rank1_out")?;
        out_arg(rank2_out, "rank2_out")?;
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::config("delta", "must be finite and non-negative").into());
        }
        let bank = CenterBank {
            centers: std::array::from_fn(|j| c[j * dim..(j + 1) * dim].to_vec()),
            alpha: 0.5,
        };
        bank.validate()?;
        let r = rank_losses(&bank, delta);
        *rank1_out = r.rank1;
        *rank2_out = r.rank2;
        Ok(())
    })
}

/// Step-decay learning rate for `epoch` under the given schedule.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn em_lr_at(
    epoch: usize,
    lr0: f64,
    decay: f64,
    step: usize,
    epochs: usize,
    out: *mut f64,
) -> EmStatus {
    guard(|| {
        out_arg(out, "out")?;
        let cfg = OptimConfig {
            lr0,
            lr_decay: decay,
            lr_step: step,
            epochs,
            ..OptimConfig::default()
        };
        *out = lr_at(epoch, &cfg)?;
        Ok(())
    })
}
