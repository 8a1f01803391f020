use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use noonsim_ffi::*;

fn last_error() -> String {
    let p = noonsim_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(json: &str) -> (NoonsimStatus, *mut NoonsimConfig) {
    let text = CString::new(json).unwrap();
    let mut cfg = ptr::null_mut();
    let status = unsafe { noonsim_config_from_json(text.as_ptr(), &mut cfg) };
    (status, cfg)
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(noonsim_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn effective_run_through_the_c_api() {
    let (status, cfg) = config(r#"{"protocol": {"n": 3, "model": "effective"}, "output": {"samples": 7}}"#);
    assert_eq!(status, NoonsimStatus::Ok);
    assert!(noonsim_last_error().is_null());

    let mut hash = [0 as std::ffi::c_char; 65];
    assert_eq!(unsafe { noonsim_config_hash(cfg, hash.as_mut_ptr(), hash.len()) }, NoonsimStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(hash.as_ptr()) }.to_bytes().len(), 64);
    assert_eq!(unsafe { noonsim_config_hash(cfg, hash.as_mut_ptr(), 10) }, NoonsimStatus::OutOfRange);

    let mut res = ptr::null_mut();
    assert_eq!(unsafe { noonsim_run(cfg, &mut res) }, NoonsimStatus::Ok);
    unsafe {
        assert_eq!(noonsim_result_step_count(res), 3);
        for step in 1..=3 {
            let mut f = 0.0;
            assert_eq!(noonsim_result_step_fidelity(res, step, &mut f), NoonsimStatus::Ok);
            assert!((f - 1.0).abs() < 1e-9);
        }
        let mut f = 0.0;
        assert_eq!(noonsim_result_step_fidelity(res, 4, &mut f), NoonsimStatus::OutOfRange);
        assert!(last_error().contains("step 4"));
        assert_eq!(noonsim_result_step_fidelity(res, 0, &mut f), NoonsimStatus::OutOfRange);

        assert_eq!(noonsim_result_sample_count(res), 7);
        let mut s = NoonsimSample::default();
        assert_eq!(noonsim_result_sample(res, 6, &mut s), NoonsimStatus::Ok);
        assert!((s.t_us - 15.0).abs() < 1e-12);
        assert!((s.fidelity[2] - 1.0).abs() < 1e-9);
        assert!((s.populations.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(noonsim_result_sample(res, 7, &mut s), NoonsimStatus::OutOfRange);

        let n = noonsim_result_warning_count(res);
        for k in 0..n {
            assert!(!noonsim_result_warning(res, k).is_null());
        }
        assert!(noonsim_result_warning(res, n).is_null());

        noonsim_result_free(res);
        noonsim_config_free(cfg);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    let (status, cfg) = config(r#"{"protocol": {}}"#);
    assert_eq!(status, NoonsimStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("`n`"));

    let (status, _) = config(r#"{"protocol": {"n": 2}, "extra": 1}"#);
    assert_eq!(status, NoonsimStatus::Config);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { noonsim_config_from_json(ptr::null(), &mut out) }, NoonsimStatus::NullPointer);
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { noonsim_config_from_json(bad.as_ptr().cast(), &mut out) }, NoonsimStatus::InvalidUtf8);
    assert_eq!(unsafe { noonsim_run(ptr::null(), &mut ptr::null_mut()) }, NoonsimStatus::NullPointer);

    let (status, cfg) = config(r#"{"protocol": {"n": 4, "cavity_dim": 5, "model": "effective"}}"#);
    assert_eq!(status, NoonsimStatus::Ok);
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { noonsim_run(cfg, &mut res) }, NoonsimStatus::Config);
    assert!(res.is_null());
    assert!(last_error().contains("truncation"));
    unsafe {
        noonsim_config_free(cfg);
        noonsim_config_free(ptr::null_mut());
        noonsim_result_free(ptr::null_mut());
        assert_eq!(noonsim_result_sample_count(ptr::null()), 0);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/noonsim.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "noonsim_version",
        "noonsim_last_error",
        "noonsim_config_from_json",
        "noonsim_config_free",
        "noonsim_config_hash",
        "noonsim_run",
        "noonsim_result_free",
        "noonsim_result_step_fidelity",
        "noonsim_result_sample",
        "NOONSIM_STATUS_OUT_OF_RANGE",
        "typedef struct NoonsimConfig NoonsimConfig;",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    if !have_cc() {
        eprintln!("no C compiler; skipping");
        return;
    }
    for lang in ["c", "c++"] {
        let out =
            Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang]).arg(header()).output().unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    if !have_cc() {
        eprintln!("no C compiler; skipping");
        return;
    }
    // tests live in target/<profile>/deps; the library sits one level up.
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(Path::parent).unwrap().join("libnoonsim_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("samples 5"));
}
