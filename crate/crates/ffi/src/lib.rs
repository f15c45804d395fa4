//! C ABI over the `cots` library.
//!
//! Objects are opaque handles. Each is released with its matching `*_free`. Every fallible call
//! returns a [`CotsStatus`]; on failure [`cots_last_error`] describes the
//! problem. Strings returned through out-parameters are owned by the
//! caller and released with [`cots_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cots::binding::bind;
use cots::driver::{CampaignConfig, Driver, RunConfig, Transport, UreqTransport};
use cots::mock::{serve, FaultFlags, MockConfig, MockServer};
use cots::openapi::{load_spec, ApiSpec, DocFormat};
use cots::parser::{parse_file, render_model, ParsedModel};
use cots::runtime::{Env, Preamble};
use cots::semantics::{enumerate_traces, EnumConfig};

/// Result of every fallible call. The first four values match the exit
/// codes of the command-line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CotsStatus {
    Ok = 0,
    /// A campaign found at least one fault.
    Fault = 1,
    /// Input was rejected, e.g. a syntax or binding error.
    Invalid = 2,
    /// A campaign could not reach the service.
    Transport = 3,
    NullArgument = 4,
    /// A string argument was not UTF-8.
    Utf8 = 5,
    /// An unexpected internal failure.
    Internal = 6,
}

/// A parsed model.
pub struct CotsModel(ParsedModel);
/// A loaded OpenAPI document.
pub struct CotsSpec(ApiSpec);
/// Generators, assertions, aliases and auth for a model.
pub struct CotsPreamble(Preamble);
/// A running mock service.
pub struct CotsMock(MockServer);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl ToString) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(CotsStatus, String);

impl Failure {
    fn invalid(msg: impl ToString) -> Failure {
        Failure(CotsStatus::Invalid, msg.to_string())
    }
}

/// Runs `f`, records its error and converts panics to `Internal`.
fn guard(f: impl FnOnce() -> Result<CotsStatus, Failure>) -> CotsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            status
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CotsStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(CotsStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CotsStatus::Utf8, format!("{what} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(CotsStatus::NullArgument, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(CotsStatus::NullArgument, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(CotsStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure(CotsStatus::Internal, "string contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on this thread.
#[no_mangle]
pub extern "C" fn cots_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn cots_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses model text. `name` selects a model when the text defines
/// several and may be null.
#[no_mangle]
pub unsafe extern "C" fn cots_model_parse(
    text: *const c_char,
    name: *const c_char,
    out: *mut *mut CotsModel,
) -> CotsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let name = opt_str_arg(name, "name")?;
        let file = parse_file(text).map_err(Failure::invalid)?;
        let model = file.select(name).map_err(Failure::invalid)?.clone();
        put(out, CotsModel(model))?;
        Ok(CotsStatus::Ok)
    })
}

/// Renders a model back to concrete syntax.
#[no_mangle]
pub unsafe extern "C" fn cots_model_render(model: *const CotsModel, out: *mut *mut c_char) -> CotsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        put_string(out, render_model(&model.0))?;
        Ok(CotsStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn cots_model_free(model: *mut CotsModel) {
    free(model)
}

/// Loads an OpenAPI document from `len` bytes, YAML when `yaml` is set.
#[no_mangle]
pub unsafe extern "C" fn cots_spec_load(
    bytes: *const u8,
    len: usize,
    yaml: bool,
    out: *mut *mut CotsSpec,
) -> CotsStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(Failure(CotsStatus::NullArgument, "bytes is null".into()));
        }
        let doc = std::slice::from_raw_parts(bytes, len);
        let format = if yaml { DocFormat::Yaml } else { DocFormat::Json };
        let spec = load_spec(doc, format).map_err(Failure::invalid)?;
        put(out, CotsSpec(spec))?;
        Ok(CotsStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn cots_spec_free(spec: *mut CotsSpec) {
    free(spec)
}

/// Loads a preamble file, JSON or YAML by extension.
#[no_mangle]
pub unsafe extern "C" fn cots_preamble_load(path: *const c_char, out: *mut *mut CotsPreamble) -> CotsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let preamble = Preamble::load(Path::new(path)).map_err(Failure::invalid)?;
        put(out, CotsPreamble(preamble))?;
        Ok(CotsStatus::Ok)
    })
}

/// Parses a JSON preamble. `fromFile` sources resolve against the
/// working directory.
#[no_mangle]
pub unsafe extern "C" fn cots_preamble_parse(json: *const c_char, out: *mut *mut CotsPreamble) -> CotsStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let preamble = Preamble::from_slice(json.as_bytes(), false, Path::new(".")).map_err(Failure::invalid)?;
        put(out, CotsPreamble(preamble))?;
        Ok(CotsStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn cots_preamble_free(preamble: *mut CotsPreamble) {
    free(preamble)
}

fn preamble_or_default(p: *const CotsPreamble) -> Preamble {
    unsafe { p.as_ref() }.map(|p| p.0.clone()).unwrap_or_default()
}

/// Checks that `model` binds to `spec`. `preamble` may be null.
#[no_mangle]
pub unsafe extern "C" fn cots_validate(
    model: *const CotsModel,
    spec: *const CotsSpec,
    preamble: *const CotsPreamble,
) -> CotsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let spec = handle(spec, "spec")?;
        let preamble = preamble_or_default(preamble);
        bind(&model.0.root, &spec.0, &preamble)
            .map_err(|errs| Failure::invalid(errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")))?;
        Ok(CotsStatus::Ok)
    })
}

/// Counts the traces of `model` with `rec_bound` unfoldings per binder,
/// using the preamble's oracle domains.
#[no_mangle]
pub unsafe extern "C" fn cots_enumerate_count(
    model: *const CotsModel,
    preamble: *const CotsPreamble,
    rec_bound: usize,
    out: *mut usize,
) -> CotsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        if out.is_null() {
            return Err(Failure(CotsStatus::NullArgument, "output pointer is null".into()));
        }
        let preamble = preamble_or_default(preamble);
        let cfg = EnumConfig::from_preamble(&preamble, Some(rec_bound)).map_err(Failure::invalid)?;
        let traces = enumerate_traces(&model.0.root, &cfg, &preamble, &Env::new()).map_err(Failure::invalid)?;
        *out = traces.len();
        Ok(CotsStatus::Ok)
    })
}

/// Runs `runs` runs with seeds `seed`, `seed + 1`, ... against `base_url`
/// and returns a JSON summary with verdict counts, coverage and the run
/// log. The status is `Ok`, `Fault` or `Transport` as for the CLI.
#[no_mangle]
pub unsafe extern "C" fn cots_run_campaign(
    model: *const CotsModel,
    spec: *const CotsSpec,
    preamble: *const CotsPreamble,
    base_url: *const c_char,
    runs: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> CotsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let spec = handle(spec, "spec")?;
        let base_url = str_arg(base_url, "base_url")?;
        let preamble = preamble_or_default(preamble);
        let plan = bind(&model.0.root, &spec.0, &preamble)
            .map_err(|errs| Failure::invalid(errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")))?;
        let cfg = RunConfig::new(base_url, seed);
        let driver = Driver::new(&model.0.root, &plan, &preamble);
        let timeout = cfg.request_timeout;
        let connect = move || -> Box<dyn Transport> { Box::new(UreqTransport::new(timeout)) };
        let report = driver
            .run_campaign(&cfg, &CampaignConfig::new(runs, seed), &connect)
            .map_err(Failure::invalid)?;
        let mut log = Vec::new();
        cots::report::write_log(&report.records, &mut log).map_err(|e| Failure(CotsStatus::Internal, e.to_string()))?;
        let runs: Vec<serde_json::Value> = String::from_utf8_lossy(&log)
            .lines()
            .filter_map(|l| serde_json::from_str(l).ok())
            .collect();
        let summary = serde_json::json!({
            "counts": report.counts,
            "coverage": report.coverage,
            "runs": runs,
        });
        put_string(out_json, summary.to_string())?;
        Ok(match report.exit_code() {
            1 => CotsStatus::Fault,
            3 => CotsStatus::Transport,
            _ => CotsStatus::Ok,
        })
    })
}

/// Starts the mock service on `port` (0 picks a free port) with the
/// comma-separated fault flags in `faults`, which may be null.
#[no_mangle]
pub unsafe extern "C" fn cots_mock_start(port: u16, faults: *const c_char, out: *mut *mut CotsMock) -> CotsStatus {
    guard(|| {
        let faults = match opt_str_arg(faults, "faults")? {
            Some(list) => FaultFlags::parse_list(list).map_err(Failure::invalid)?,
            None => FaultFlags::none(),
        };
        let server = serve(
            port,
            MockConfig {
                faults,
                ..MockConfig::default()
            },
        )
        .map_err(Failure::invalid)?;
        put(out, CotsMock(server))?;
        Ok(CotsStatus::Ok)
    })
}

/// Base URL of a running mock, e.g. `http://127.0.0.1:41234`.
#[no_mangle]
pub unsafe extern "C" fn cots_mock_base_url(mock: *const CotsMock, out: *mut *mut c_char) -> CotsStatus {
    guard(|| {
        let mock = handle(mock, "mock")?;
        put_string(out, mock.0.base_url())?;
        Ok(CotsStatus::Ok)
    })
}

/// Clears all stored data of a running mock.
#[no_mangle]
pub unsafe extern "C" fn cots_mock_reset(mock: *const CotsMock) -> CotsStatus {
    guard(|| {
        handle(mock, "mock")?.0.reset();
        Ok(CotsStatus::Ok)
    })
}

/// Replaces the active fault flags of a running mock.
#[no_mangle]
pub unsafe extern "C" fn cots_mock_set_faults(mock: *const CotsMock, faults: *const c_char) -> CotsStatus {
    guard(|| {
        let mock = handle(mock, "mock")?;
        let flags = FaultFlags::parse_list(str_arg(faults, "faults")?).map_err(Failure::invalid)?;
        mock.0.set_faults(flags);
        Ok(CotsStatus::Ok)
    })
}

/// Stops the mock and releases it.
#[no_mangle]
pub unsafe extern "C" fn cots_mock_free(mock: *mut CotsMock) {
    free(mock)
}
