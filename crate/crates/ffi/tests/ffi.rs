use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use trustml_ffi::*;

fn last_error() -> String {
    let p = trustml_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    trustml_string_free(s);
    out
}

#[test]
fn fairness_summary_matches_library() {
    let preds = [1u8, 1, 0, 0, 1, 0, 0, 0];
    let truths = [1u8, 0, 1, 0, 1, 1, 0, 0];
    let groups = [0u32, 0, 0, 0, 1, 1, 1, 1];
    let mut out = TrustmlFairness::default();
    let st = unsafe { trustml_fairness_summary(preds.as_ptr(), truths.as_ptr(), groups.as_ptr(), 8, &mut out) };
    assert_eq!(st, TrustmlStatus::Ok);
    assert!((out.dpd - 0.25).abs() < 1e-12);
    assert!((out.di - 0.5).abs() < 1e-12);
    assert!(out.has_eod);

    let st = unsafe { trustml_fairness_summary(preds.as_ptr(), ptr::null(), groups.as_ptr(), 8, &mut out) };
    assert_eq!(st, TrustmlStatus::Ok);
    assert!(!out.has_eod);
}

#[test]
fn null_and_invalid_inputs_set_last_error() {
    let mut out = TrustmlFairness::default();
    let st = unsafe { trustml_fairness_summary(ptr::null(), ptr::null(), ptr::null(), 3, &mut out) };
    assert_eq!(st, TrustmlStatus::NullPointer);
    assert!(last_error().contains("predictions"));

    let preds = [1u8, 0];
    let groups = [0u32, 0];
    let st = unsafe { trustml_fairness_summary(preds.as_ptr(), ptr::null(), groups.as_ptr(), 2, &mut out) };
    assert_eq!(st, TrustmlStatus::InvalidInput);
    assert!(!last_error().is_empty());

    let mut keep = 0usize;
    assert_eq!(unsafe { trustml_keep_count(10, 1.5, &mut keep) }, TrustmlStatus::InvalidConfig);
    // A later success clears the message.
    assert_eq!(unsafe { trustml_keep_count(10, 0.5, &mut keep) }, TrustmlStatus::Ok);
    assert!(trustml_last_error().is_null());
    assert_eq!(keep, 5);
}

#[test]
fn privacy_primitives() {
    let w = [3.0, 4.0];
    let mut clipped = [0.0; 2];
    assert_eq!(unsafe { trustml_clip_weights(w.as_ptr(), 2, 1.0, clipped.as_mut_ptr()) }, TrustmlStatus::Ok);
    assert!((clipped[0] - 0.6).abs() < 1e-12 && (clipped[1] - 0.8).abs() < 1e-12);

    let mut sigma = -1.0;
    assert_eq!(unsafe { trustml_gaussian_sigma(1.0, 1.0, 1e-5, &mut sigma) }, TrustmlStatus::Ok);
    assert!((sigma - (2.0 * (1.25f64 / 1e-5).ln()).sqrt()).abs() < 1e-12);
    assert_eq!(unsafe { trustml_gaussian_sigma(1.0, f64::INFINITY, 1e-5, &mut sigma) }, TrustmlStatus::Ok);
    assert_eq!(sigma, 0.0);

    let mut a = [0.0; 2];
    let mut b = [0.0; 2];
    unsafe {
        trustml_add_gaussian_noise(w.as_ptr(), 2, 1.0, 1e-5, 1.0, 9, a.as_mut_ptr());
        trustml_add_gaussian_noise(w.as_ptr(), 2, 1.0, 1e-5, 1.0, 9, b.as_mut_ptr());
    }
    assert_eq!(a, b);
    assert_ne!(a, w);
}

#[test]
fn sparsify_and_buffer_sizes() {
    let w = [0.1, -5.0, 0.2, 3.0, 0.0, 0.3, -0.4, 0.05, 0.0, 1.0];
    let mut idx = [0usize; 10];
    let mut val = [0.0; 10];
    let (mut nnz, mut rate) = (0usize, 0.0);
    let st = unsafe {
        trustml_sparsify(w.as_ptr(), 10, 0.7, idx.as_mut_ptr(), val.as_mut_ptr(), 10, &mut nnz, &mut rate)
    };
    assert_eq!(st, TrustmlStatus::Ok);
    assert_eq!(nnz, 3);
    let mut kept: Vec<_> = idx[..nnz].iter().copied().zip(val[..nnz].iter().copied()).collect();
    kept.sort_by_key(|(i, _)| *i);
    assert_eq!(kept, vec![(1, -5.0), (3, 3.0), (9, 1.0)]);
    assert!((rate - 0.7).abs() < 1e-12);

    let st = unsafe {
        trustml_sparsify(w.as_ptr(), 10, 0.7, idx.as_mut_ptr(), val.as_mut_ptr(), 2, &mut nnz, &mut rate)
    };
    assert_eq!(st, TrustmlStatus::BufferTooSmall);

    let mut cost = TrustmlCommCost::default();
    let st = unsafe { trustml_comm_cost(1000, 0.975, 4, 4, TrustmlCostMode::ValueOnly, &mut cost) };
    assert_eq!(st, TrustmlStatus::Ok);
    assert_eq!((cost.dense_bytes, cost.sparse_bytes), (4000, 100));
    assert!((cost.reduction - 0.975).abs() < 1e-12);
}

#[test]
fn fuzzy_calls() {
    let (mut score, mut label) = (0.0, TrustmlRiskLabel::Low);
    assert_eq!(unsafe { trustml_fuzzy_risk(42.0, 145.0, 12.0, 88.0, &mut score, &mut label) }, TrustmlStatus::Ok);
    assert!((score - 0.6891).abs() < 5e-5);
    assert_eq!(label, TrustmlRiskLabel::High);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { trustml_fuzzy_fired_rules_json(42.0, 145.0, 12.0, 88.0, &mut json) }, TrustmlStatus::Ok);
    let rules: serde_json::Value = serde_json::from_str(&unsafe { take(json) }).unwrap();
    assert!(rules.as_array().unwrap().len() >= 2);

    assert_eq!(
        unsafe { trustml_fuzzy_risk(f64::NAN, 145.0, 12.0, 88.0, &mut score, &mut label) },
        TrustmlStatus::InvalidInput
    );
}

#[test]
fn triage_handle_lifecycle() {
    let model = trustml_triage_model_reference();
    let c = |s: &str| CString::new(s).unwrap();
    let (gender, area, district, lang) = (c("male"), c("urban"), c("Dhaka"), c("english"));
    let mut json = ptr::null_mut();
    let st = unsafe {
        trustml_triage_assess(model, 8.0, gender.as_ptr(), area.as_ptr(), district.as_ptr(), ptr::null(), lang.as_ptr(), &mut json)
    };
    assert_eq!(st, TrustmlStatus::Ok, "{}", last_error());
    let doc: serde_json::Value = serde_json::from_str(&unsafe { take(json) }).unwrap();
    assert_eq!(doc["prediction"], "Severe");

    let st = unsafe {
        trustml_triage_assess(ptr::null(), 8.0, gender.as_ptr(), area.as_ptr(), district.as_ptr(), ptr::null(), lang.as_ptr(), &mut json)
    };
    assert_eq!(st, TrustmlStatus::NullPointer);
    unsafe { trustml_triage_model_free(model) };
    unsafe { trustml_triage_model_free(ptr::null_mut()) };

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/reference_tree.txt");
    let path = c(path.to_str().unwrap());
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { trustml_triage_model_load(path.as_ptr(), &mut loaded) }, TrustmlStatus::Ok);
    assert!(!loaded.is_null());
    unsafe { trustml_triage_model_free(loaded) };

    let missing = c("/nonexistent/tree.txt");
    assert_eq!(unsafe { trustml_triage_model_load(missing.as_ptr(), &mut loaded) }, TrustmlStatus::Io);
}

#[test]
fn equity_and_metrics() {
    let g = [1.0, -2.0, 0.5];
    let mut out = [0.0; 3];
    assert_eq!(unsafe { trustml_grl_backward(g.as_ptr(), 3, 0.5, out.as_mut_ptr()) }, TrustmlStatus::Ok);
    assert_eq!(out, [-0.5, 1.0, -0.25]);

    let scores = [0.8, 0.6, 0.3, 0.1];
    let haor = [1u8, 1, 0, 0];
    let mut spd = 0.0;
    assert_eq!(
        unsafe { trustml_statistical_parity_difference(scores.as_ptr(), haor.as_ptr(), 4, &mut spd) },
        TrustmlStatus::Ok
    );
    assert!((spd.abs() - 0.5).abs() < 1e-12);

    let p = [1u8, 0, 1, 0];
    let mut f1 = 0.0;
    assert_eq!(unsafe { trustml_macro_f1(p.as_ptr(), p.as_ptr(), 4, &mut f1) }, TrustmlStatus::Ok);
    assert_eq!(f1, 1.0);

    let members = [0.1, 0.2, 0.3];
    let non = [0.9, 1.0, 1.1];
    let mut acc = 0.0;
    assert_eq!(unsafe { trustml_mia_attack(members.as_ptr(), 3, non.as_ptr(), 3, &mut acc) }, TrustmlStatus::Ok);
    assert_eq!(acc, 1.0);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(trustml_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/trustml.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["trustml_fairness_summary", "trustml_triage_assess", "TRUSTML_STATUS_PANIC", "TrustmlTriageModel"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-std=c99", "-Wall", "-x", "c"]).arg(&header).status()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(status.success());
}
