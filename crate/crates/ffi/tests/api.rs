use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use qdr_ffi::*;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/pizza_steak.jsonl")
}

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(qdr_last_error_message()) }
        .to_str()
        .unwrap()
        .to_owned()
}

fn build() -> *mut QdrIndex {
    let mut params = qdr_build_params_default();
    params.prenormalized = 1;
    let mut index = ptr::null_mut();
    let status = unsafe { qdr_index_build_from_files(c(&fixture()).as_ptr(), ptr::null(), &params, &mut index) };
    assert_eq!(status, QdrStatus::Ok, "{}", last_error());
    index
}

fn run(index: *const QdrIndex, kws: &[&str], weights: &[f64], kappa: usize) -> (QdrStatus, *mut QdrResults) {
    let owned: Vec<CString> = kws.iter().map(|k| CString::new(*k).unwrap()).collect();
    let ptrs: Vec<_> = owned.iter().map(|k| k.as_ptr()).collect();
    let mut out = ptr::null_mut();
    let status = unsafe {
        qdr_query(
            index,
            0.0,
            0.0,
            ptrs.as_ptr(),
            ptrs.len(),
            weights.as_ptr(),
            weights.len(),
            kappa,
            ptr::null(),
            &mut out,
        )
    };
    (status, out)
}

#[test]
fn build_query_save_load() {
    let index = build();
    unsafe {
        assert_eq!(qdr_index_object_count(index), 8);
        assert_eq!(qdr_index_attribute_dimension(index), 3);
    }
    let w = [1.0 / 3.0; 3];
    let (status, results) = run(index, &["pizza", "steak"], &w, 3);
    assert_eq!(status, QdrStatus::Ok);
    let ids: Vec<String> = (0..unsafe { qdr_results_len(results) })
        .map(|i| {
            unsafe { CStr::from_ptr(qdr_results_id(results, i)) }
                .to_str()
                .unwrap()
                .to_owned()
        })
        .collect();
    assert_eq!(ids[..2], ["o1", "o8"]);
    unsafe {
        assert!(qdr_results_score(results, 0) < qdr_results_score(results, 1));
        assert!(qdr_results_distance(results, 0) == 3000.0);
        assert!(qdr_results_phi(results, 0) >= 1);
        assert!(qdr_results_node_accesses(results) > 0);
        assert!(qdr_results_id(results, 99).is_null());
        assert!(qdr_results_score(results, 99).is_nan());
    }

    let dir = tempfile::tempdir().unwrap();
    let path = c(&dir.path().join("ex.qdr"));
    unsafe {
        assert_eq!(qdr_index_save(index, path.as_ptr()), QdrStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(qdr_index_load(path.as_ptr(), &mut loaded), QdrStatus::Ok);
        let (_, again) = run(loaded, &["pizza", "steak"], &w, 3);
        assert_eq!(qdr_results_len(again), qdr_results_len(results));
        for i in 0..qdr_results_len(again) {
            assert_eq!(qdr_results_score(again, i), qdr_results_score(results, i));
        }
        assert_eq!(qdr_results_node_accesses(again), qdr_results_node_accesses(results));
        qdr_results_free(again);
        qdr_index_free(loaded);
        qdr_results_free(results);
        qdr_index_free(index);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let index = build();
    let (status, out) = run(index, &["pizza"], &[0.5, 0.5], 3);
    assert_eq!(status, QdrStatus::InvalidQuery);
    assert!(out.is_null());
    assert!(last_error().contains("dimension"), "{}", last_error());

    let (status, _) = run(index, &[], &[1.0 / 3.0; 3], 3);
    assert_eq!(status, QdrStatus::InvalidQuery);

    let (status, _) = run(ptr::null(), &["pizza"], &[1.0 / 3.0; 3], 3);
    assert_eq!(status, QdrStatus::NullArgument);

    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.qdr");
    std::fs::write(&garbage, b"not an index").unwrap();
    let mut loaded = ptr::null_mut();
    unsafe {
        assert_eq!(
            qdr_index_load(c(&garbage).as_ptr(), &mut loaded),
            QdrStatus::CorruptIndex
        );
        assert!(loaded.is_null());
        assert_eq!(
            qdr_index_load(c(&dir.path().join("missing.qdr")).as_ptr(), &mut loaded),
            QdrStatus::Io
        );
        let mut built = ptr::null_mut();
        assert_eq!(
            qdr_index_build_from_files(ptr::null(), ptr::null(), ptr::null(), &mut built),
            QdrStatus::NullArgument
        );
        qdr_index_free(index);
        qdr_index_free(ptr::null_mut());
        qdr_results_free(ptr::null_mut());
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(qdr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles a C program against the generated header and the static
/// library. Skipped when no C compiler is on PATH.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("libqdr_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe)
        .arg(fixture())
        .arg(dir.path().join("c.qdr"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
