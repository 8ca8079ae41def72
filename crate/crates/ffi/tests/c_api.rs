use std::ffi::{CStr, CString};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use plancost::featurize::{featurize_corpus, load_plan_corpus, FeatureConfig};
use plancost::learn::{ModelDocument, ModelKind, TrainConfig, TrainingData};
use plancost_ffi::*;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/corpus")
}

fn trained_linear() -> ModelDocument {
    let config = FeatureConfig::default();
    let corpus = load_plan_corpus(&corpus_dir()).unwrap();
    let f = featurize_corpus(&corpus, &config, None).unwrap();
    let data = TrainingData {
        dataset: &f.dataset,
        sequences: None,
        normalization: config.normalization,
    };
    let idx: Vec<usize> = (0..f.dataset.len()).collect();
    let (model, norm) = data.fit(&TrainConfig::default_for(ModelKind::Linear), &idx).unwrap();
    let mut doc = ModelDocument::new(model, f.dataset.schema.names(), norm);
    doc.feature_config = Some(config);
    doc.tfidf = f.tfidf;
    doc
}

fn first_plan() -> (String, String) {
    let mut plans: Vec<_> = fs::read_dir(corpus_dir().join("plans"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    plans.sort();
    let stem = plans[0].file_stem().unwrap().to_str().unwrap().to_string();
    let json = fs::read_to_string(&plans[0]).unwrap();
    let sql = fs::read_to_string(corpus_dir().join("queries").join(format!("{stem}.sql"))).unwrap();
    (json, sql)
}

fn last_error() -> String {
    let p = pc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn prediction_matches_core_library() {
    let doc = trained_linear();
    let (json, sql) = first_plan();
    let tree = plancost::plan_ingest::parse_plan_document(&json)
        .unwrap()
        .with_query_text(sql.trim().trim_end_matches(';'));
    let expected = doc.predict_plan(&tree, None).unwrap();

    let model_json = CString::new(doc.to_json()).unwrap();
    let plan_json = CString::new(json).unwrap();
    let sql = CString::new(sql).unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(pc_model_from_json(model_json.as_ptr(), &mut model), PcStatus::Ok);
        assert_eq!(CStr::from_ptr(pc_model_kind(model)).to_str().unwrap(), "linear");
        let mut plan = ptr::null_mut();
        assert_eq!(pc_plan_parse(plan_json.as_ptr(), &mut plan), PcStatus::Ok);
        assert_eq!(pc_plan_set_query_text(plan, sql.as_ptr()), PcStatus::Ok);
        let (mut ms, mut log) = (f64::NAN, f64::NAN);
        assert_eq!(pc_model_predict(model, plan, &mut ms, &mut log), PcStatus::Ok);
        assert_eq!(ms, expected.predicted_ms);
        assert_eq!(log, expected.predicted_log);
        assert_eq!(pc_model_predict(model, plan, &mut ms, ptr::null_mut()), PcStatus::Ok);
        pc_plan_free(plan);
        pc_model_free(model);
    }
}

#[test]
fn error_codes() {
    let bad = CString::new("[{\"Plan\": ").unwrap();
    let mut plan = ptr::null_mut();
    assert_eq!(unsafe { pc_plan_parse(bad.as_ptr(), &mut plan) }, PcStatus::Parse);
    assert!(plan.is_null());
    assert!(!last_error().is_empty());

    let missing = CString::new("/nonexistent/model.json").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { pc_model_load(missing.as_ptr(), &mut model) }, PcStatus::Io);
    assert!(last_error().contains("/nonexistent/model.json"));

    let garbage = CString::new("{\"format_version\": 99}").unwrap();
    assert_eq!(
        unsafe { pc_model_from_json(garbage.as_ptr(), &mut model) },
        PcStatus::Model
    );

    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { pc_plan_parse(invalid.as_ptr().cast(), &mut plan) },
        PcStatus::InvalidUtf8
    );
    assert!(unsafe { pc_model_kind(ptr::null()) }.is_null());
    unsafe {
        pc_plan_free(ptr::null_mut());
        pc_model_free(ptr::null_mut());
    }
}

#[test]
fn full_mode_model_rejects_plain_plan() {
    let doc = trained_linear();
    let model_json = CString::new(doc.to_json()).unwrap();
    let plain = CString::new(
        r#"[{"Plan":{"Node Type":"Seq Scan","Startup Cost":0,"Total Cost":5,"Plan Rows":3,"Plan Width":4}}]"#,
    )
    .unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(pc_model_from_json(model_json.as_ptr(), &mut model), PcStatus::Ok);
        let mut plan = ptr::null_mut();
        assert_eq!(pc_plan_parse(plain.as_ptr(), &mut plan), PcStatus::Ok);
        let mut ms = 0.0;
        assert_eq!(
            pc_model_predict(model, plan, &mut ms, ptr::null_mut()),
            PcStatus::ModeMismatch
        );
        pc_plan_free(plan);
        pc_model_free(model);
    }
}

#[test]
fn header_declares_every_export() {
    let header = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/plancost.h")).unwrap();
    for name in [
        "pc_last_error",
        "pc_version",
        "pc_plan_parse",
        "pc_plan_set_query_text",
        "pc_plan_node_count",
        "pc_plan_free",
        "pc_model_load",
        "pc_model_from_json",
        "pc_model_kind",
        "pc_model_predict",
        "pc_model_free",
        "typedef struct PcPlan PcPlan",
        "typedef struct PcModel PcModel",
        "PC_STATUS_MODE_MISMATCH = 6",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/plancost.h"))
        .status()
    else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    assert!(status.success());
}
