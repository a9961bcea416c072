use std::ffi::CString;
use std::ptr;

use ccnl_core::checkpoint;
use ccnl_core::data::{build_vocab, random_embeddings};
use ccnl_core::model::{CcnlModel, ModelConfig};
use ccnl_core::rng::SeededRng;
use ccnl_ffi::{
    ccnl_last_error, ccnl_macro_f1, ccnl_model_free, ccnl_model_load, ccnl_predict,
    ccnl_version, CcnlModelHandle, CcnlStatus,
};

fn write_checkpoint(dir: &std::path::Path) -> std::path::PathBuf {
    let config = ModelConfig {
        embedding_dim: 8,
        lstm_units_per_direction: 4,
        classifier_hidden: 8,
        capsule_dim: 4,
        capsule_count: 2,
        routing_iterations: 2,
        max_sequence_length: 4,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let src_vocab = build_vocab(["uno dos tres mal"], 1);
    let tgt_vocab = build_vocab(["one two three bad"], 1);
    let mut rng = SeededRng::new(5);
    let src = random_embeddings(&src_vocab, config.embedding_dim, &mut rng);
    let tgt = random_embeddings(&tgt_vocab, config.embedding_dim, &mut rng);
    let model = CcnlModel::new(config, src, tgt, &mut rng);
    let path = dir.join("model.ckpt");
    checkpoint::save(&model, &path).unwrap();
    path
}

fn last_error_string() -> String {
    let mut buf = vec![0i8; 256];
    let n = unsafe { ccnl_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&b| b as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn load_predict_free_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_checkpoint(dir.path());
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut CcnlModelHandle = ptr::null_mut();
    let status = unsafe { ccnl_model_load(c_path.as_ptr(), &mut handle) };
    assert_eq!(status, CcnlStatus::Ok);
    assert!(!handle.is_null());

    let src = CString::new("uno mal dos").unwrap();
    let tgt = CString::new("one bad two").unwrap();
    let mut label = 9u8;
    let mut probs = [0.0f64; 2];
    let status =
        unsafe { ccnl_predict(handle, src.as_ptr(), tgt.as_ptr(), &mut label, probs.as_mut_ptr()) };
    assert_eq!(status, CcnlStatus::Ok);
    assert!(label <= 1);
    assert!((probs[0] + probs[1] - 1.0).abs() < 1e-12);

    unsafe { ccnl_model_free(handle) };
}

#[test]
fn load_missing_file_sets_error() {
    let c_path = CString::new("/nonexistent/nowhere.ckpt").unwrap();
    let mut handle: *mut CcnlModelHandle = ptr::null_mut();
    let status = unsafe { ccnl_model_load(c_path.as_ptr(), &mut handle) };
    assert_eq!(status, CcnlStatus::LoadFailed);
    assert!(handle.is_null());
    assert!(last_error_string().contains("nowhere.ckpt"));
}

#[test]
fn null_arguments_rejected() {
    let mut handle: *mut CcnlModelHandle = ptr::null_mut();
    assert_eq!(
        unsafe { ccnl_model_load(ptr::null(), &mut handle) },
        CcnlStatus::NullArgument
    );
    assert_eq!(
        unsafe { ccnl_model_load(CString::new("x").unwrap().as_ptr(), ptr::null_mut()) },
        CcnlStatus::NullArgument
    );
    let mut out = 0.0f64;
    assert_eq!(
        unsafe { ccnl_macro_f1(ptr::null(), ptr::null(), 0, &mut out) },
        CcnlStatus::NullArgument
    );
    // freeing NULL is a no-op
    unsafe { ccnl_model_free(ptr::null_mut()) };
}

#[test]
fn macro_f1_matches_library() {
    let gold = [0u8, 1, 0, 1];
    let pred = [0u8, 1, 1, 1];
    let mut out = -1.0f64;
    let status =
        unsafe { ccnl_macro_f1(gold.as_ptr(), pred.as_ptr(), gold.len(), &mut out) };
    assert_eq!(status, CcnlStatus::Ok);
    let expected = ccnl_core::eval::macro_f1(&gold, &pred).unwrap();
    assert_eq!(out, expected);

    let bad = [0u8, 2];
    assert_eq!(
        unsafe { ccnl_macro_f1(bad.as_ptr(), bad.as_ptr(), 2, &mut out) },
        CcnlStatus::MetricFailed
    );
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { std::ffi::CStr::from_ptr(ccnl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
