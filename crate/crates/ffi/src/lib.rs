//! C ABI over a trained run: open a run directory against its prepared
//! dataset, then score user/item pairs or fetch top-k lists.
//!
//! Every fallible call returns a [`MirecStatus`]; on failure the message is
//! available from [`mirec_last_error_message`] on the same thread. Handles
//! are opaque and must be released with [`mirec_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mirec::data::{ItemId, ProcessedDataset};
use mirec::model::{corrected_score, Scorer};
use mirec::training::{load_run, TrainedModel};
use mirec::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MirecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Checkpoint = 5,
    HashMismatch = 6,
    OutOfRange = 7,
    Internal = 8,
}

/// Opaque handle to a loaded model and its dataset.
pub struct MirecModel {
    scorer: Scorer,
    seen: Vec<Vec<ItemId>>,
    embedding_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: MirecStatus, msg: impl AsRef<str>) -> MirecStatus {
    set_error(msg.as_ref());
    status
}

fn status_of(e: &Error) -> MirecStatus {
    match e {
        Error::Io { .. } | Error::Ingest { .. } => MirecStatus::Io,
        Error::Checkpoint(_) | Error::Checksum(_) => MirecStatus::Checkpoint,
        Error::HashMismatch(_) => MirecStatus::HashMismatch,
        Error::Config(_) | Error::NonPositiveProbability(_) => MirecStatus::InvalidArgument,
        Error::Parse { .. } | Error::Data(_) | Error::Json(_) | Error::EmptyTrainingSplit | Error::Shape { .. } => MirecStatus::Data,
        _ => MirecStatus::Internal,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), MirecStatus>) -> MirecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MirecStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(MirecStatus::Internal, "internal panic"),
    }
}

fn lift<T>(r: mirec::Result<T>) -> Result<T, MirecStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a Path, MirecStatus> {
    if p.is_null() {
        return Err(fail(MirecStatus::NullPointer, format!("{name} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MirecStatus::InvalidArgument, format!("{name} is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn model_ref<'a>(m: *const MirecModel) -> Result<&'a MirecModel, MirecStatus> {
    m.as_ref().ok_or_else(|| fail(MirecStatus::NullPointer, "model handle is null"))
}

fn open(dataset_dir: &Path, run_dir: &Path, lambda_p: f64) -> mirec::Result<MirecModel> {
    let ds = ProcessedDataset::read(dataset_dir)?;
    let (manifest, model) = load_run(run_dir)?;
    if manifest.dataset_hash != ds.hash() {
        return Err(Error::HashMismatch(format!(
            "run was trained on dataset {}, {} is {}",
            manifest.dataset_hash,
            dataset_dir.display(),
            ds.hash()
        )));
    }
    let embedding_dim = match &model {
        TrainedModel::Single(t) | TrainedModel::Pair(t, _) => t.embedding_dim(),
        TrainedModel::Mirec { theta_star, .. } => theta_star.embedding_dim(),
    };
    Ok(MirecModel {
        scorer: model.scorer(&ds.features, lambda_p)?,
        seen: ds.split.seen_items(ds.n_users()),
        embedding_dim,
    })
}

/// Loads the run in `run_dir` against the prepared dataset in
/// `dataset_dir`. `lambda_p` weighs the many-shot (or first) model of
/// two-component runs and is ignored otherwise.
///
/// # Safety
/// Both paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mirec_model_open(
    dataset_dir: *const c_char,
    run_dir: *const c_char,
    lambda_p: f64,
    out: *mut *mut MirecModel,
) -> MirecStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(MirecStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let d = path_arg(dataset_dir, "dataset_dir")?;
        let r = path_arg(run_dir, "run_dir")?;
        if !(0.0..=1.0).contains(&lambda_p) {
            return Err(fail(MirecStatus::InvalidArgument, format!("lambda_p must lie in [0, 1], got {lambda_p}")));
        }
        let model = lift(open(d, r, lambda_p))?;
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Releases a handle from [`mirec_model_open`]. Null is ignored.
///
/// # Safety
/// `model` must come from [`mirec_model_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mirec_model_free(model: *mut MirecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mirec_model_num_users(model: *const MirecModel) -> u32 {
    model.as_ref().map_or(0, |m| m.scorer.n_users() as u32)
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mirec_model_num_items(model: *const MirecModel) -> u32 {
    model.as_ref().map_or(0, |m| m.scorer.n_items() as u32)
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mirec_model_embedding_dim(model: *const MirecModel) -> u32 {
    model.as_ref().map_or(0, |m| m.embedding_dim as u32)
}

fn check_user(m: &MirecModel, user: u32) -> Result<(), MirecStatus> {
    if (user as usize) < m.scorer.n_users() {
        Ok(())
    } else {
        Err(fail(MirecStatus::OutOfRange, format!("user {user} out of range ({} users)", m.scorer.n_users())))
    }
}

/// Score of one user/item pair (dense ids).
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mirec_model_score(model: *const MirecModel, user: u32, item: u32, out: *mut f64) -> MirecStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(fail(MirecStatus::NullPointer, "out is null"));
        }
        check_user(m, user)?;
        if item as usize >= m.scorer.n_items() {
            return Err(fail(MirecStatus::OutOfRange, format!("item {item} out of range ({} items)", m.scorer.n_items())));
        }
        *out = m.scorer.score(user as usize, item as usize);
        Ok(())
    })
}

/// Writes up to `k` best items for `user` into `items` and `scores`
/// (both of capacity `k`), best first, ties to the smaller id. With
/// `exclude_seen` the user's training and validation items are skipped.
/// `written` receives the number of entries filled.
///
/// # Safety
/// `model` must be a live handle; `items` and `scores` must hold `k`
/// elements; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mirec_model_top_k(
    model: *const MirecModel,
    user: u32,
    k: usize,
    exclude_seen: bool,
    items: *mut u32,
    scores: *mut f64,
    written: *mut usize,
) -> MirecStatus {
    guard(|| {
        let m = model_ref(model)?;
        if written.is_null() || (k > 0 && (items.is_null() || scores.is_null())) {
            return Err(fail(MirecStatus::NullPointer, "output buffer is null"));
        }
        check_user(m, user)?;
        let s = m.scorer.user_scores(user as usize);
        let seen = &m.seen[user as usize];
        let mut order: Vec<u32> = (0..m.scorer.n_items() as u32)
            .filter(|i| !exclude_seen || seen.binary_search(i).is_err())
            .collect();
        order.sort_by(|&a, &b| s[b as usize].total_cmp(&s[a as usize]).then(a.cmp(&b)));
        let n = k.min(order.len());
        for (j, &i) in order[..n].iter().enumerate() {
            *items.add(j) = i;
            *scores.add(j) = s[i as usize];
        }
        *written = n;
        Ok(())
    })
}

/// `score + lambda_c · ln(p)`, the popularity-corrected logit. Fails for
/// `p` outside (0, 1].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mirec_corrected_score(score: f64, p: f64, lambda_c: f64, out: *mut f64) -> MirecStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(MirecStatus::NullPointer, "out is null"));
        }
        *out = corrected_score(score, p, lambda_c).map_err(|e| fail(MirecStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mirec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mirec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
