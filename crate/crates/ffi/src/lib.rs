//! C ABI over `immuno-core`.
//!
//! Every fallible function returns an [`ImmunoStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be read with [`immuno_last_error`]. Handles are opaque; each `*_new` /
//! `*_load` has a matching `*_free` that accepts NULL.
//!
//! Panics never cross the boundary: they are caught and reported as
//! `IMMUNO_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use immuno_core::dynamics::{self, Cd8Params, ImmuneState, ProliferationParams};
use immuno_core::metrics::{derived_metrics, ConfusionMatrix};
use immuno_core::predictor::{train_model1, Model1, TrainConfig};
use immuno_core::seqdata::{self, Dataset, Peptide, RecordFormat};
use immuno_core::Error;

/// Status codes. Values 2 and 3 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImmunoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    Io = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ImmunoStatus {
    if e.is_numeric() {
        ImmunoStatus::Numeric
    } else if matches!(e, Error::Io { .. }) {
        ImmunoStatus::Io
    } else {
        ImmunoStatus::InvalidArgument
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<seqdata::SeqError> for Failure {
    fn from(e: seqdata::SeqError) -> Self {
        Failure::Core(e.into())
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> ImmunoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ImmunoStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is NULL"));
            ImmunoStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ImmunoStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::invalid(format!("{what} is not UTF-8"))))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn immuno_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn immuno_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn immuno_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// datasets

/// Opaque labeled record set.
pub struct ImmunoDataset {
    inner: Dataset,
}

/// Synthetic corpus with `motif` planted at `signal` strength.
#[no_mangle]
pub unsafe extern "C" fn immuno_dataset_synthetic(
    n: usize,
    motif: *const c_char,
    signal: f64,
    seed: u64,
    out_dataset: *mut *mut ImmunoDataset,
) -> ImmunoStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let motif: Peptide = cstr(motif, "motif")?.parse()?;
        let inner = seqdata::generate_synthetic(n, &motif, signal, seed)?;
        *slot = Box::into_raw(Box::new(ImmunoDataset { inner }));
        Ok(())
    })
}

/// Loads a CSV or JSON-lines record file (format from the extension).
#[no_mangle]
pub unsafe extern "C" fn immuno_dataset_load(path: *const c_char, out_dataset: *mut *mut ImmunoDataset) -> ImmunoStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let path = PathBuf::from(cstr(path, "path")?);
        let inner = seqdata::load_records(&path, RecordFormat::from_path(&path))?;
        *slot = Box::into_raw(Box::new(ImmunoDataset { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn immuno_dataset_len(dataset: *const ImmunoDataset, out_len: *mut usize) -> ImmunoStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(dataset, "dataset")?.inner.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn immuno_dataset_free(dataset: *mut ImmunoDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

// ---------------------------------------------------------------------------
// Model 1

/// Opaque trained multi-task predictor.
pub struct ImmunoModel {
    inner: Model1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ImmunoPrediction {
    /// Predicted log10 affinity in nM.
    pub log_affinity: f64,
    pub immunogenicity: f64,
    pub conservation: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmunoTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// 0 disables early stopping.
    pub patience: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

/// Defaults matching the CLI.
#[no_mangle]
pub extern "C" fn immuno_train_options_default() -> ImmunoTrainOptions {
    let d = TrainConfig::default();
    ImmunoTrainOptions {
        epochs: d.epochs,
        batch_size: d.batch_size,
        learning_rate: d.adam.learning_rate,
        patience: d.patience.unwrap_or(0),
        train_fraction: 0.8,
        seed: d.seed,
    }
}

/// Splits `dataset` and trains Model 1. `out_val_accuracy` may be NULL; it
/// receives held-out accuracy at the best epoch.
#[no_mangle]
pub unsafe extern "C" fn immuno_model1_train(
    dataset: *const ImmunoDataset,
    options: *const ImmunoTrainOptions,
    out_model: *mut *mut ImmunoModel,
    out_val_accuracy: *mut f64,
) -> ImmunoStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let data = handle(dataset, "dataset")?.inner.clone();
        let o = *handle(options, "options")?;
        let cfg = TrainConfig {
            epochs: o.epochs,
            batch_size: o.batch_size,
            adam: TrainConfig::default().adam.with_learning_rate(o.learning_rate),
            patience: (o.patience > 0).then_some(o.patience),
            seed: o.seed,
            ..Default::default()
        };
        let data = seqdata::split_dataset(data, o.train_fraction, o.seed)?;
        let (inner, report) = train_model1(&data, &cfg)?;
        if let Some(acc) = out_val_accuracy.as_mut() {
            *acc = report.val_accuracy[report.best_epoch];
        }
        *slot = Box::into_raw(Box::new(ImmunoModel { inner }));
        Ok(())
    })
}

/// Loads a checkpoint directory written by `immuno train --model model1` or
/// [`immuno_model1_save`].
#[no_mangle]
pub unsafe extern "C" fn immuno_model1_load(dir: *const c_char, out_model: *mut *mut ImmunoModel) -> ImmunoStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let inner = Model1::load(cstr(dir, "dir")?)?;
        *slot = Box::into_raw(Box::new(ImmunoModel { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn immuno_model1_save(model: *const ImmunoModel, dir: *const c_char) -> ImmunoStatus {
    guard(|| {
        let m = handle(model, "model")?;
        m.inner.save(cstr(dir, "dir")?, None)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn immuno_model1_predict(
    model: *const ImmunoModel,
    peptide: *const c_char,
    out_prediction: *mut ImmunoPrediction,
) -> ImmunoStatus {
    guard(|| {
        let slot = out(out_prediction, "out_prediction")?;
        let m = handle(model, "model")?;
        let p: Peptide = cstr(peptide, "peptide")?.parse()?;
        let o = m.inner.predict(&[p])?[0];
        *slot = ImmunoPrediction {
            log_affinity: o.affinity_pred,
            immunogenicity: o.immunogenicity_prob,
            conservation: o.conservation_pred,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn immuno_model1_free(model: *mut ImmunoModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------------------
// metrics

/// Undefined ratios (empty denominators) are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ImmunoMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[no_mangle]
pub unsafe extern "C" fn immuno_metrics_from_counts(
    tp: u64,
    tn: u64,
    fp: u64,
    fn_: u64,
    out_metrics: *mut ImmunoMetrics,
) -> ImmunoStatus {
    guard(|| {
        let slot = out(out_metrics, "out_metrics")?;
        let d = derived_metrics(&ConfusionMatrix::new(tp, tn, fp, fn_)).map_err(Error::from)?;
        *slot = ImmunoMetrics {
            accuracy: d.accuracy,
            precision: d.precision.unwrap_or(f64::NAN),
            recall: d.recall.unwrap_or(f64::NAN),
            f1: d.f1.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// dynamics

/// Final T-cell count under constant antigen.
#[no_mangle]
pub unsafe extern "C" fn immuno_proliferation_final(
    rho: f64,
    h: f64,
    t0_cells: f64,
    days: f64,
    antigen: f64,
    step: f64,
    out_cells: *mut f64,
) -> ImmunoStatus {
    guard(|| {
        let slot = out(out_cells, "out_cells")?;
        let params = ProliferationParams {
            rho,
            h,
            t0_cells,
            duration_days: days,
            exhaustion: None,
        };
        *slot = dynamics::simulate_proliferation(&params, |_| antigen, step)?.final_count();
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmunoCd8Params {
    pub beta_t: f64,
    pub beta_tv: f64,
    pub p: f64,
    pub k_ie: f64,
    pub rho_i: f64,
    pub c_v: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ImmunoState {
    pub t_cells: f64,
    pub infected: f64,
    pub effectors: f64,
    pub virus: f64,
}

impl From<ImmuneState> for ImmunoState {
    fn from(s: ImmuneState) -> Self {
        ImmunoState {
            t_cells: s.t_cells,
            infected: s.infected,
            effectors: s.effectors,
            virus: s.virus,
        }
    }
}

#[no_mangle]
pub extern "C" fn immuno_cd8_params_default() -> ImmunoCd8Params {
    let d = Cd8Params::default();
    ImmunoCd8Params {
        beta_t: d.beta_t,
        beta_tv: d.beta_tv,
        p: d.p,
        k_ie: d.k_ie,
        rho_i: d.rho_i,
        c_v: d.c_v,
    }
}

/// Opaque CD8 trajectory.
pub struct ImmunoTrajectory {
    inner: dynamics::Trajectory,
}

#[no_mangle]
pub unsafe extern "C" fn immuno_cd8_simulate(
    params: *const ImmunoCd8Params,
    initial: *const ImmunoState,
    days: f64,
    step: f64,
    out_trajectory: *mut *mut ImmunoTrajectory,
) -> ImmunoStatus {
    guard(|| {
        let slot = out(out_trajectory, "out_trajectory")?;
        let p = handle(params, "params")?;
        let s = handle(initial, "initial")?;
        let params = Cd8Params {
            beta_t: p.beta_t,
            beta_tv: p.beta_tv,
            p: p.p,
            k_ie: p.k_ie,
            rho_i: p.rho_i,
            c_v: p.c_v,
        };
        let init = ImmuneState {
            t_cells: s.t_cells,
            infected: s.infected,
            effectors: s.effectors,
            virus: s.virus,
        };
        let inner = dynamics::simulate_cd8(&params, init, days, step)?;
        *slot = Box::into_raw(Box::new(ImmunoTrajectory { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn immuno_trajectory_len(traj: *const ImmunoTrajectory, out_len: *mut usize) -> ImmunoStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(traj, "trajectory")?.inner.times.len();
        Ok(())
    })
}

/// Time and state at sample `index`.
#[no_mangle]
pub unsafe extern "C" fn immuno_trajectory_get(
    traj: *const ImmunoTrajectory,
    index: usize,
    out_time: *mut f64,
    out_state: *mut ImmunoState,
) -> ImmunoStatus {
    guard(|| {
        let t = &handle(traj, "trajectory")?.inner;
        let time = out(out_time, "out_time")?;
        let state = out(out_state, "out_state")?;
        if index >= t.times.len() {
            return Err(Error::invalid(format!("index {index} out of range for {} samples", t.times.len())).into());
        }
        *time = t.times[index];
        *state = t.states[index].into();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn immuno_trajectory_free(traj: *mut ImmunoTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}
