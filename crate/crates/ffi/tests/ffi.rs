use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use cots_ffi::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    cots_string_free(s);
    out
}

unsafe fn last_error() -> String {
    let p = cots_last_error();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_str().unwrap().to_string()
}

unsafe fn load(capi: &str, name: &str, preamble: &str) -> (*mut CotsModel, *mut CotsSpec, *mut CotsPreamble) {
    let text = c(&std::fs::read_to_string(fixture(capi)).unwrap());
    let mut model = ptr::null_mut();
    assert_eq!(
        cots_model_parse(text.as_ptr(), c(name).as_ptr(), &mut model),
        CotsStatus::Ok
    );
    let doc = std::fs::read(fixture("shop-features.openapi.yaml")).unwrap();
    let mut spec = ptr::null_mut();
    assert_eq!(cots_spec_load(doc.as_ptr(), doc.len(), true, &mut spec), CotsStatus::Ok);
    let mut pre = ptr::null_mut();
    let path = c(fixture(preamble).to_str().unwrap());
    assert_eq!(cots_preamble_load(path.as_ptr(), &mut pre), CotsStatus::Ok);
    (model, spec, pre)
}

#[test]
fn parse_render_and_errors() {
    unsafe {
        let mut model = ptr::null_mut();
        let text = c("S = !a(x: Int(g)).?C200().end");
        assert_eq!(cots_model_parse(text.as_ptr(), ptr::null(), &mut model), CotsStatus::Ok);
        assert!(cots_last_error().is_null());
        let mut out = ptr::null_mut();
        assert_eq!(cots_model_render(model, &mut out), CotsStatus::Ok);
        assert!(take(out).starts_with("S = !a(x: Int(g))"));
        cots_model_free(model);

        let mut bad = ptr::null_mut();
        assert_eq!(
            cots_model_parse(c("S = +{").as_ptr(), ptr::null(), &mut bad),
            CotsStatus::Invalid
        );
        assert!(bad.is_null());
        assert!(last_error().contains("syntax error"));

        assert_eq!(
            cots_model_parse(ptr::null(), ptr::null(), &mut bad),
            CotsStatus::NullArgument
        );
        assert_eq!(cots_model_render(ptr::null(), &mut out), CotsStatus::NullArgument);
        cots_model_free(ptr::null_mut());
        cots_string_free(ptr::null_mut());
    }
}

#[test]
fn validate_and_enumerate() {
    unsafe {
        let (model, spec, pre) = load("shop.capi", "S_shop", "shop.preamble.json");
        assert_eq!(cots_validate(model, spec, pre), CotsStatus::Ok);
        let mut n = 0usize;
        assert_eq!(cots_enumerate_count(model, pre, 2, &mut n), CotsStatus::Ok);
        assert_eq!(n, 13);
        // Without a preamble the generators are unknown.
        assert_eq!(cots_validate(model, spec, ptr::null()), CotsStatus::Invalid);
        assert!(last_error().contains("gen"));
        cots_model_free(model);
        cots_spec_free(spec);
        cots_preamble_free(pre);
    }
}

#[test]
fn campaign_against_the_mock() {
    unsafe {
        let (model, spec, pre) = load("shop.capi", "S_shopExt", "shop.preamble.json");
        let mut mock = ptr::null_mut();
        assert_eq!(cots_mock_start(0, ptr::null(), &mut mock), CotsStatus::Ok);
        let mut url = ptr::null_mut();
        assert_eq!(cots_mock_base_url(mock, &mut url), CotsStatus::Ok);
        let url = c(&take(url));

        let mut json = ptr::null_mut();
        assert_eq!(
            cots_run_campaign(model, spec, pre, url.as_ptr(), 10, 42, &mut json),
            CotsStatus::Ok
        );
        let summary: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(summary["counts"]["pass"], 10);
        assert_eq!(summary["runs"].as_array().unwrap().len(), 10);

        assert_eq!(cots_mock_set_faults(mock, c("F1").as_ptr()), CotsStatus::Ok);
        assert_eq!(cots_mock_reset(mock), CotsStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(
            cots_run_campaign(model, spec, pre, url.as_ptr(), 10, 42, &mut json),
            CotsStatus::Fault
        );
        let summary: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(summary["counts"]["badStatusCode"], 10);

        assert_eq!(cots_mock_set_faults(mock, c("F9").as_ptr()), CotsStatus::Invalid);
        cots_mock_free(mock);

        let mut json = ptr::null_mut();
        assert_eq!(
            cots_run_campaign(model, spec, pre, url.as_ptr(), 1, 0, &mut json),
            CotsStatus::Transport
        );
        cots_string_free(json);
        cots_model_free(model);
        cots_spec_free(spec);
        cots_preamble_free(pre);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/cots.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "cots_model_parse",
        "cots_run_campaign",
        "cots_mock_start",
        "COTS_STATUS_TRANSPORT",
    ] {
        assert!(text.contains(f), "{f} missing from the header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler found; skipped compiling the header");
        return;
    };
    assert!(status.success());
}

#[test]
fn c_program_links_against_the_static_library() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // Test binaries live in <target>/<profile>/deps.
    let profile = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile.join("libcots_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipped", lib.display());
        return;
    }
    let out = tempfile_path("count");
    let Ok(status) = std::process::Command::new("cc")
        .arg(dir.join("examples/count.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
    else {
        eprintln!("no C compiler found; skipped");
        return;
    };
    assert!(status.success());
    let run = std::process::Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "2");
}

fn tempfile_path(stem: &str) -> PathBuf {
    std::env::temp_dir().join(format!("cots-ffi-{stem}-{}", std::process::id()))
}
