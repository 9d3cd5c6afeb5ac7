//! C ABI over `qdr-core`.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free`. Every call returns a [`QdrStatus`]; on failure
//! `qdr_last_error_message` describes the error for the calling thread.
//! Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use qdr_core::config::Settings;
use qdr_core::dataset::load_objects;
use qdr_core::persist::{load_index, save_index};
use qdr_core::{EmbeddingStore, Point, QdrError, Query, ScoredResult, SearchStats};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QdrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    InvalidQuery = 3,
    Io = 4,
    CorruptIndex = 5,
    BuildFailed = 6,
    Panic = 7,
}

/// A built or loaded index.
pub struct QdrIndex(qdr_core::QdrIndex);

/// Ranked answers of one query plus its search statistics.
pub struct QdrResults {
    results: Vec<ScoredResult>,
    ids: Vec<CString>,
    stats: SearchStats,
}

/// Build parameters. Start from `qdr_build_params_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QdrBuildParams {
    pub delta: f64,
    pub tau_cluster: f64,
    pub tau_dup: f64,
    pub max_entries: usize,
    pub tau_merge: f64,
    /// Non-zero when object attributes are already in [0, 1], smaller better.
    pub prenormalized: u8,
}

/// Ranking parameters. Start from `qdr_query_options_default`; a
/// non-positive `d_max` means the diagonal of the data bounds.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QdrQueryOptions {
    pub alpha: f64,
    pub beta: f64,
    pub tau_relax: f64,
    pub d_max: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(QdrStatus, String);

impl From<QdrError> for Failure {
    fn from(e: QdrError) -> Self {
        let status = match &e {
            QdrError::InvalidQuery(_) | QdrError::DimensionMismatch { .. } => QdrStatus::InvalidQuery,
            QdrError::Io(_) | QdrError::File { .. } => QdrStatus::Io,
            QdrError::BadMagic
            | QdrError::Version { .. }
            | QdrError::Checksum { .. }
            | QdrError::Truncated(_)
            | QdrError::Corrupt(_) => QdrStatus::CorruptIndex,
            QdrError::InvalidParameter(_) | QdrError::Config(_) => QdrStatus::InvalidArgument,
            _ => QdrStatus::BuildFailed,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QdrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            QdrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QdrStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(QdrStatus::NullArgument, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(QdrStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Version string of the library; static storage.
#[no_mangle]
pub extern "C" fn qdr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or an empty string.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn qdr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn qdr_build_params_default() -> QdrBuildParams {
    let p = qdr_core::IndexParams::default();
    QdrBuildParams {
        delta: p.metric.delta,
        tau_cluster: p.cluster.tau_cluster,
        tau_dup: p.cluster.tau_dup,
        max_entries: p.dr.max_entries,
        tau_merge: p.dr.tau_merge,
        prenormalized: 0,
    }
}

#[no_mangle]
pub extern "C" fn qdr_query_options_default() -> QdrQueryOptions {
    QdrQueryOptions {
        alpha: qdr_core::model::DEFAULT_ALPHA,
        beta: qdr_core::model::DEFAULT_BETA,
        tau_relax: qdr_core::model::DEFAULT_TAU_RELAX,
        d_max: 0.0,
    }
}

/// Builds an index from an object file and an optional embedding file
/// (`embeddings_path` may be null). `params` may be null for defaults.
///
/// # Safety
/// Pointers must be null or valid for their documented use.
#[no_mangle]
pub unsafe extern "C" fn qdr_index_build_from_files(
    objects_path: *const c_char,
    embeddings_path: *const c_char,
    params: *const QdrBuildParams,
    out: *mut *mut QdrIndex,
) -> QdrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let objects_path = PathBuf::from(c_str(objects_path, "objects_path")?);
        let p = if params.is_null() {
            qdr_build_params_default()
        } else {
            *params
        };
        let settings = Settings {
            delta: Some(p.delta),
            tau_cluster: Some(p.tau_cluster),
            tau_dup: Some(p.tau_dup),
            max_entries: Some(p.max_entries),
            tau_merge: Some(p.tau_merge),
            prenormalized: Some(p.prenormalized != 0),
            ..Default::default()
        };
        let index_params = settings.index_params()?;
        let (objects, _) = load_objects(&objects_path, &settings.load_options())?;
        let store = if embeddings_path.is_null() {
            EmbeddingStore::default()
        } else {
            EmbeddingStore::load(c_str(embeddings_path, "embeddings_path")?)?
        };
        let index = qdr_core::QdrIndex::build(objects, store, index_params)?;
        *out = Box::into_raw(Box::new(QdrIndex(index)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qdr_index_load(path: *const c_char, out: *mut *mut QdrIndex) -> QdrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let index = load_index(c_str(path, "path")?)?;
        *out = Box::into_raw(Box::new(QdrIndex(index)));
        Ok(())
    })
}

/// # Safety
/// `index` must come from this library; `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn qdr_index_save(index: *const QdrIndex, path: *const c_char) -> QdrStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        save_index(&index.0, c_str(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `index` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qdr_index_free(index: *mut QdrIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Number of indexed objects, 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qdr_index_object_count(index: *const QdrIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.objects().len())
}

/// Attribute dimension, which is the required weight count.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qdr_index_attribute_dimension(index: *const QdrIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.attribute_dimension())
}

/// Runs a top-`kappa` query. `options` may be null for defaults.
///
/// # Safety
/// `keywords` must point to `n_keywords` C strings and `weights` to
/// `n_weights` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qdr_query(
    index: *const QdrIndex,
    x: f64,
    y: f64,
    keywords: *const *const c_char,
    n_keywords: usize,
    weights: *const f64,
    n_weights: usize,
    kappa: usize,
    options: *const QdrQueryOptions,
    out: *mut *mut QdrResults,
) -> QdrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let index = &index.as_ref().ok_or_else(|| null("index"))?.0;
        if (keywords.is_null() && n_keywords > 0) || (weights.is_null() && n_weights > 0) {
            return Err(null("keywords or weights"));
        }
        let kws = if n_keywords == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(keywords, n_keywords)
                .iter()
                .map(|&k| c_str(k, "keyword"))
                .collect::<Result<Vec<_>, _>>()?
        };
        let w = if n_weights == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(weights, n_weights).to_vec()
        };
        let o = if options.is_null() {
            qdr_query_options_default()
        } else {
            *options
        };
        let d_max = if o.d_max > 0.0 { o.d_max } else { index.default_d_max() };
        let mut q = Query::new(Point::new(x, y), kws, w, kappa, d_max);
        q.alpha = o.alpha;
        q.beta = o.beta;
        q.tau_relax = o.tau_relax;
        let (results, stats) = index.search(&q).map_err(|e| match e {
            QdrError::InvalidParameter(m) => Failure(QdrStatus::InvalidQuery, m),
            other => other.into(),
        })?;
        let ids = results
            .iter()
            .map(|r| CString::new(r.id.replace('\0', " ")).unwrap())
            .collect();
        *out = Box::into_raw(Box::new(QdrResults { results, ids, stats }));
        Ok(())
    })
}

/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qdr_results_len(results: *const QdrResults) -> usize {
    results.as_ref().map_or(0, |r| r.results.len())
}

/// Object id at rank `i` (0-based), owned by `results`; null when out of
/// range.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qdr_results_id(results: *const QdrResults, i: usize) -> *const c_char {
    results
        .as_ref()
        .and_then(|r| r.ids.get(i))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Score at rank `i`; NaN when out of range.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qdr_results_score(results: *const QdrResults, i: usize) -> f64 {
    results
        .as_ref()
        .and_then(|r| r.results.get(i))
        .map_or(f64::NAN, |r| r.score)
}

/// Distance to the query location at rank `i`; NaN when out of range.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qdr_results_distance(results: *const QdrResults, i: usize) -> f64 {
    results
        .as_ref()
        .and_then(|r| r.results.get(i))
        .map_or(f64::NAN, |r| r.distance)
}

/// Keyword relevance at rank `i`; 0 when out of range.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qdr_results_phi(results: *const QdrResults, i: usize) -> u32 {
    results.as_ref().and_then(|r| r.results.get(i)).map_or(0, |r| r.phi)
}

/// Tree nodes expanded while answering.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qdr_results_node_accesses(results: *const QdrResults) -> u64 {
    results.as_ref().map_or(0, |r| r.stats.node_accesses)
}

/// # Safety
/// `results` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qdr_results_free(results: *mut QdrResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}
