use std::ffi::CString;
use std::ptr;

use avprob::bundle::{Bundle, Checkpoint, FORMAT_VERSION};
use avprob::encoder::Featurizer;
use avprob::ensemble::Ensemble;
use avprob::model::{InitScales, ModelDims, Verifier};
use avprob_ffi::*;

fn small_model(seed: u64) -> Verifier {
    let dims = ModelDims {
        d_emb: 8,
        d_lev: 6,
        d_bfs: 3,
        d_ual: 4,
        d_h1: 4,
        d_h2: 3,
    };
    let featurizer = Featurizer {
        d_feat: 128,
        ..Default::default()
    };
    Verifier::init(featurizer, dims, InitScales::default(), 0.1, seed)
}

fn save_bundle(dir: &std::path::Path, n: usize) -> Vec<Verifier> {
    let models: Vec<Verifier> = (0..n as u64).map(small_model).collect();
    let members = models
        .iter()
        .enumerate()
        .map(|(k, m)| Checkpoint {
            format_version: FORMAT_VERSION,
            config_hash: "test".into(),
            seed: k as u64,
            epoch: 0,
            metrics: Default::default(),
            model: m.clone(),
        })
        .collect();
    Bundle::new("test", members).save(dir).unwrap();
    models
}

fn last_error() -> String {
    let mut buf = vec![0 as libc::c_char; 256];
    let n = unsafe { av_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) };
    assert!(n >= s.to_bytes().len());
    s.to_str().unwrap().to_string()
}

#[test]
fn load_score_free_matches_rust_api() {
    let dir = tempfile::tempdir().unwrap();
    let models = save_bundle(dir.path(), 3);
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut handle: *mut AvEnsemble = ptr::null_mut();
    assert_eq!(unsafe { av_ensemble_load(path.as_ptr(), &mut handle) }, AvStatus::Ok);
    assert!(!handle.is_null());
    let mut len = 0;
    assert_eq!(unsafe { av_ensemble_len(handle, &mut len) }, AvStatus::Ok);
    assert_eq!(len, 3);

    let t1 = "the quick brown fox jumps over the lazy dog, again and again.";
    let t2 = "a slow green turtle walks under the busy bridge; never stopping!";
    let (c1, c2) = (CString::new(t1).unwrap(), CString::new(t2).unwrap());
    let mut verdict = AvVerdict::default();
    let status = unsafe { av_ensemble_score(handle, c1.as_ptr(), c2.as_ptr(), true, &mut verdict) };
    assert_eq!(status, AvStatus::Ok);

    let ens = Ensemble::new(models).unwrap();
    let f = &ens.members[0].featurizer;
    let expect = ens
        .predict_features(&f.featurize_text(t1), &f.featurize_text(t2), true)
        .unwrap();
    assert_eq!(verdict.value.to_bits(), expect.value.to_bits());
    assert_eq!(verdict.is_nonresponse, expect.is_nonresponse);
    unsafe { av_ensemble_free(handle) };
}

#[test]
fn missing_bundle_reports_data_error() {
    let path = CString::new("/nonexistent/avprob-bundle").unwrap();
    let mut handle: *mut AvEnsemble = ptr::null_mut();
    let status = unsafe { av_ensemble_load(path.as_ptr(), &mut handle) };
    assert_eq!(status, AvStatus::Data);
    assert!(handle.is_null());
    assert!(last_error().contains("manifest.json"), "{}", last_error());
}

#[test]
fn even_ensemble_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    save_bundle(dir.path(), 2);
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut handle: *mut AvEnsemble = ptr::null_mut();
    assert_eq!(unsafe { av_ensemble_load(path.as_ptr(), &mut handle) }, AvStatus::Usage);
    assert!(last_error().contains("odd"));
}

#[test]
fn null_pointers_are_rejected() {
    let mut handle: *mut AvEnsemble = ptr::null_mut();
    assert_eq!(
        unsafe { av_ensemble_load(ptr::null(), &mut handle) },
        AvStatus::NullPointer
    );
    let mut v = AvVerdict::default();
    assert_eq!(
        unsafe { av_ensemble_score(ptr::null(), ptr::null(), ptr::null(), false, &mut v) },
        AvStatus::NullPointer
    );
    unsafe { av_ensemble_free(ptr::null_mut()) };
}

#[test]
fn invalid_utf8_is_rejected() {
    let bad = [0xffu8, 0xfe, 0];
    let mut handle: *mut AvEnsemble = ptr::null_mut();
    let status = unsafe { av_ensemble_load(bad.as_ptr() as *const libc::c_char, &mut handle) };
    assert_eq!(status, AvStatus::InvalidUtf8);
}

#[test]
fn evaluate_perfect_answers() {
    let values = [0.9, 0.8, 0.1, 0.2];
    let truth = [1u8, 1, 0, 0];
    let mut s = AvScores::default();
    assert_eq!(
        unsafe { av_evaluate(values.as_ptr(), truth.as_ptr(), 4, &mut s) },
        AvStatus::Ok
    );
    assert_eq!((s.auc, s.c_at_1, s.f_05_u, s.f1), (1.0, 1.0, 1.0, 1.0));
    assert!((s.brier - (1.0 - 0.025)).abs() < 1e-12);
}

#[test]
fn evaluate_single_class_fails() {
    let values = [0.9, 0.8];
    let truth = [1u8, 1];
    let mut s = AvScores::default();
    assert_eq!(
        unsafe { av_evaluate(values.as_ptr(), truth.as_ptr(), 2, &mut s) },
        AvStatus::Data
    );
}

#[test]
fn error_message_truncates() {
    let path = CString::new("/nonexistent").unwrap();
    let mut handle: *mut AvEnsemble = ptr::null_mut();
    unsafe { av_ensemble_load(path.as_ptr(), &mut handle) };
    let mut buf = [1 as libc::c_char; 4];
    let n = unsafe { av_last_error_message(buf.as_mut_ptr(), 4) };
    assert!(n > 3);
    assert_eq!(buf[3], 0);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/avprob.h")).unwrap();
    for sym in [
        "av_ensemble_load",
        "av_ensemble_score",
        "av_ensemble_free",
        "av_ensemble_len",
        "av_evaluate",
        "av_last_error_message",
        "av_version",
        "typedef struct AvEnsemble AvEnsemble",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { std::ffi::CStr::from_ptr(av_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
