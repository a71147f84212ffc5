use msalab_ffi::*;
use std::ffi::{c_char, CString};
use std::ptr;

const PARAMS: &str = r#"{"d": 1, "n": 1, "mesh": 0.5}"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { msalab_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn operator(side: f64) -> *mut MsalabOperator {
    let params = CString::new(PARAMS).unwrap();
    let center = [0.0];
    let mut op = ptr::null_mut();
    let s = unsafe { msalab_operator_new(params.as_ptr(), center.as_ptr(), 1, side, 5, &mut op) };
    assert_eq!(s, MsalabStatus::Ok);
    op
}

#[test]
fn operator_spectrum_and_classification() {
    let op = operator(6.0);
    let dim = unsafe { msalab_operator_dim(op) };
    assert_eq!(dim, 11);
    let mut spec = ptr::null_mut();
    assert_eq!(unsafe { msalab_operator_spectrum(op, &mut spec) }, MsalabStatus::Ok);
    let vals = unsafe { std::slice::from_raw_parts(msalab_spectrum_values(spec), msalab_spectrum_len(spec)) };
    assert_eq!(vals.len(), dim);
    assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    assert!(vals[0] >= 0.0);
    let (mut outcome, mut margin) = (-1, f64::NAN);
    let s = unsafe { msalab_classify(op, MsalabVerdictKind::Regular, -5.0, 0.1, &mut outcome, &mut margin) };
    assert_eq!(s, MsalabStatus::Ok);
    assert_eq!(outcome, 1);
    assert!(margin > 0.0);
    unsafe {
        msalab_spectrum_free(spec);
        msalab_operator_free(op);
    }
}

#[test]
fn same_seed_same_spectrum() {
    let spectra: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            let op = operator(6.0);
            let mut spec = ptr::null_mut();
            unsafe { msalab_operator_spectrum(op, &mut spec) };
            let v = unsafe { std::slice::from_raw_parts(msalab_spectrum_values(spec), msalab_spectrum_len(spec)) }.to_vec();
            unsafe {
                msalab_spectrum_free(spec);
                msalab_operator_free(op);
            }
            v
        })
        .collect();
    assert_eq!(spectra[0], spectra[1]);
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut op = ptr::null_mut();
    let center = [0.0];
    let s = unsafe { msalab_operator_new(ptr::null(), center.as_ptr(), 1, 6.0, 1, &mut op) };
    assert_eq!(s, MsalabStatus::NullPointer);
    assert!(last_error().contains("params_json"));

    let bad = CString::new(r#"{"d": 1, "n": 1, "mesh": -1.0}"#).unwrap();
    let s = unsafe { msalab_operator_new(bad.as_ptr(), center.as_ptr(), 1, 6.0, 1, &mut op) };
    assert_eq!(s, MsalabStatus::InvalidArgument);
    assert!(op.is_null());

    let unknown = CString::new(r#"{"dims": 1}"#).unwrap();
    let s = unsafe { msalab_operator_new(unknown.as_ptr(), center.as_ptr(), 1, 6.0, 1, &mut op) };
    assert_eq!(s, MsalabStatus::Config);

    assert_eq!(unsafe { msalab_operator_dim(ptr::null()) }, 0);
    unsafe { msalab_operator_free(ptr::null_mut()) };
    let (mut o, mut m) = (0, 0.0);
    let s = unsafe { msalab_classify(ptr::null(), MsalabVerdictKind::Suitable, 0.0, 1.0, &mut o, &mut m) };
    assert_eq!(s, MsalabStatus::NullPointer);
}

#[test]
fn runs_an_experiment_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        format!("seed = 1\nout_dir = {:?}\n[model]\nd = 1\nn = 1\n[cover]\ninstances = 5\n", out),
    )
    .unwrap();
    let cfg = CString::new(path.to_str().unwrap()).unwrap();
    let exp = CString::new("cover").unwrap();
    assert_eq!(unsafe { msalab_run_experiment(cfg.as_ptr(), exp.as_ptr()) }, MsalabStatus::Ok);
    assert!(out.join("cover.csv").exists());

    let bogus = CString::new("nothing").unwrap();
    assert_eq!(unsafe { msalab_run_experiment(cfg.as_ptr(), bogus.as_ptr()) }, MsalabStatus::InvalidArgument);
    let missing = CString::new("classify").unwrap();
    assert_eq!(unsafe { msalab_run_experiment(cfg.as_ptr(), missing.as_ptr()) }, MsalabStatus::Config);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/msalab.h")).unwrap();
    for name in [
        "msalab_operator_new",
        "msalab_operator_free",
        "msalab_operator_spectrum",
        "msalab_classify",
        "msalab_run_experiment",
        "msalab_last_error",
        "MSALAB_STATUS_BUDGET",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
