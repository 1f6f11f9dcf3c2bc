use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dtrlab_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(dtr_last_error()) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_string_lossy().into_owned();
    unsafe { dtr_string_free(s) };
    out
}

fn simulate(case: &str, n: usize, seed: u64) -> *mut DtrDataset {
    let mut d = ptr::null_mut();
    let st = unsafe { dtr_dataset_simulate(c(case).as_ptr(), n, seed, &mut d) };
    assert_eq!(st, DtrStatus::DtrOk, "{}", last_error());
    d
}

#[test]
fn fit_round_trip_matches_the_library() {
    let d = simulate("case1", 500, 3);
    let mut fit = ptr::null_mut();
    let st = unsafe { dtr_fit(d, c("a3").as_ptr(), c("case1").as_ptr(), 0, &mut fit) };
    assert_eq!(st, DtrStatus::DtrOk, "{}", last_error());

    let mut count = 0;
    assert_eq!(unsafe { dtr_fit_parameter_count(fit, &mut count) }, DtrStatus::DtrOk);
    assert_eq!(count, 4);
    let mut buf = [0.0; 4];
    let mut total = 0;
    assert_eq!(unsafe { dtr_fit_parameters(fit, buf.as_mut_ptr(), 4, &mut total) }, DtrStatus::DtrOk);
    assert_eq!(total, 4);

    let data = dtrlab::simlab::generate_case1(500, 3).unwrap();
    let direct = dtrlab::pipeline::fit_method(
        dtrlab::MethodTag::A3,
        &data,
        &dtrlab::pipeline::FitConfig::case1(),
    )
    .unwrap();
    assert_eq!(buf.to_vec(), direct.parameters);

    let mut label = ptr::null_mut();
    assert_eq!(unsafe { dtr_fit_parameter_label(fit, 3, &mut label) }, DtrStatus::DtrOk);
    assert_eq!(unsafe { take(label) }, "psi2[L2]");
    assert_eq!(unsafe { dtr_fit_parameter_label(fit, 4, &mut label) }, DtrStatus::DtrOutOfRange);

    let mut rule = ptr::null_mut();
    assert_eq!(unsafe { dtr_fit_rule(fit, 2, &mut rule) }, DtrStatus::DtrOk);
    assert!(unsafe { take(rule) }.starts_with("treat if L2 < "));

    let mut action = 9u8;
    assert_eq!(unsafe { dtr_fit_decide(fit, d, 0, 1, &mut action) }, DtrStatus::DtrOk);
    let h = data.get(0).history(1).unwrap();
    assert_eq!(action, dtrlab::apply_regime(&direct.regime, &h).unwrap());

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { dtr_fit_regime_json(fit, &mut json) }, DtrStatus::DtrOk);
    let json = CString::new(unsafe { take(json) }).unwrap();
    let mut value = 0.0;
    let st = unsafe { dtr_mc_value(c("case1").as_ptr(), json.as_ptr(), 5000, 1, &mut value) };
    assert_eq!(st, DtrStatus::DtrOk, "{}", last_error());
    assert!(value > 1050.0 && value < 1130.0, "{value}");

    unsafe {
        dtr_fit_free(fit);
        dtr_dataset_free(d);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    let d = simulate("case1", 100, 1);
    let mut fit = ptr::null_mut();
    let st = unsafe { dtr_fit(d, c("sarsa").as_ptr(), c("case1").as_ptr(), 0, &mut fit) };
    assert_eq!(st, DtrStatus::DtrConfigError);
    assert!(last_error().contains("aipwe"));
    assert!(fit.is_null());

    let st = unsafe { dtr_fit(d, c("q").as_ptr(), c("[[stages]]\ncontrast = \"1,L9\"").as_ptr(), 0, &mut fit) };
    assert_eq!(st, DtrStatus::DtrConfigError, "{}", last_error());

    let st = unsafe { dtr_fit(ptr::null(), c("q").as_ptr(), c("case1").as_ptr(), 0, &mut fit) };
    assert_eq!(st, DtrStatus::DtrNullPointer);

    let mut out = ptr::null_mut();
    let st = unsafe { dtr_dataset_from_csv(c("L1,A1,Y\n1,7,3\n").as_ptr(), 0, &mut out) };
    assert_eq!(st, DtrStatus::DtrDataError);
    assert!(last_error().contains("action"));

    let st = unsafe { dtr_dataset_simulate(c("case9").as_ptr(), 10, 1, &mut out) };
    assert_eq!(st, DtrStatus::DtrConfigError);

    let bad = [0xffu8, 0];
    let st = unsafe { dtr_dataset_from_csv(bad.as_ptr().cast(), 0, &mut out) };
    assert_eq!(st, DtrStatus::DtrInvalidUtf8);

    let mut v = 0.0;
    let json = c(r#"{"rules": [{"kind": "threshold", "stage": 1, "column": "L1", "cutoff": 1.0, "direction": "below"}]}"#);
    let st = unsafe { dtr_mc_value(c("case1").as_ptr(), json.as_ptr(), 10, 1, &mut v) };
    assert_eq!(st, DtrStatus::DtrDataError, "{}", last_error());
    assert!(last_error().contains("stage"));

    unsafe {
        dtr_dataset_free(d);
        dtr_dataset_free(ptr::null_mut());
        dtr_fit_free(ptr::null_mut());
        dtr_string_free(ptr::null_mut());
    }
}

#[test]
fn csv_round_trip() {
    let text = "L1,A1,L2,A2,Y\n1.5,1,2,0,3\n4,0,,,5\n";
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { dtr_dataset_from_csv(c(text).as_ptr(), 0, &mut d) }, DtrStatus::DtrOk);
    let (mut n, mut k) = (0, 0);
    unsafe {
        dtr_dataset_len(d, &mut n);
        dtr_dataset_stage_count(d, &mut k);
    }
    assert_eq!((n, k), (2, 2));
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { dtr_dataset_to_csv(d, &mut s) }, DtrStatus::DtrOk);
    assert_eq!(unsafe { take(s) }, text);
    unsafe { dtr_dataset_free(d) };

    let long = "id,stage,L,A,Y\np,1,10,1,\np,2,11,0,9\n";
    assert_eq!(unsafe { dtr_dataset_from_csv(c(long).as_ptr(), 1, &mut d) }, DtrStatus::DtrOk);
    let mut s = ptr::null_mut();
    unsafe { dtr_dataset_to_csv(d, &mut s) };
    assert_eq!(unsafe { take(s) }, "L1,A1,L2,A2,Y\n10,1,11,0,9\n");
    unsafe { dtr_dataset_free(d) };
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(dtr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dtrlab.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for f in [
        "dtr_version",
        "dtr_last_error",
        "dtr_string_free",
        "dtr_dataset_from_csv",
        "dtr_dataset_load",
        "dtr_dataset_simulate",
        "dtr_dataset_len",
        "dtr_dataset_stage_count",
        "dtr_dataset_to_csv",
        "dtr_dataset_free",
        "dtr_fit(",
        "dtr_fit_parameter_count",
        "dtr_fit_parameters",
        "dtr_fit_parameter_label",
        "dtr_fit_rule",
        "dtr_fit_regime_json",
        "dtr_fit_decide",
        "dtr_fit_free",
        "dtr_mc_value",
        "typedef struct DtrDataset DtrDataset",
        "DTR_NUMERICAL_ERROR = 4",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
}

const C_SMOKE: &str = r#"
#include <stdio.h>
#include <string.h>
#include "dtrlab.h"

int main(void) {
    DtrDataset *d = NULL;
    DtrFit *f = NULL;
    char *rule = NULL;
    size_t n = 0;
    if (dtr_dataset_simulate("case1", 300, 5, &d) != DTR_OK) return 1;
    if (dtr_dataset_len(d, &n) != DTR_OK || n != 300) return 2;
    if (dtr_fit(d, "q", "case1", 0, &f) != DTR_OK) { fprintf(stderr, "%s\n", dtr_last_error()); return 3; }
    if (dtr_fit_rule(f, 2, &rule) != DTR_OK) return 4;
    printf("%s\n", rule);
    dtr_string_free(rule);
    if (dtr_fit(d, "nope", "case1", 0, &f) != DTR_CONFIG_ERROR) return 5;
    if (strstr(dtr_last_error(), "unknown method") == NULL) return 6;
    dtr_fit_free(f);
    dtr_dataset_free(d);
    return 0;
}
"#;

/// Compiles a C program against the generated header and the static
/// library. Skipped when no C compiler is on PATH.
#[test]
fn c_program_links_against_static_library() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    // test binaries live in <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libdtrlab_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(&src, C_SMOKE).unwrap();
    let bin = tmp.path().join("smoke");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status, String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("treat if L2 < "));
}
