use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use protorel_ffi::*;

const SMALL_WORLD: &str =
    r#"{"n_entities":300,"n_relations":6,"twins":1,"head_count":60,"distractors":200,"n_clusters":6,"seed":3}"#;

fn run(args: &[&str]) -> i32 {
    let owned: Vec<CString> = std::iter::once("protorel")
        .chain(args.iter().copied())
        .map(|a| CString::new(a).unwrap())
        .collect();
    let ptrs: Vec<*const c_char> = owned.iter().map(|a| a.as_ptr()).collect();
    unsafe { protorel_run(ptrs.len() as i32, ptrs.as_ptr()) }
}

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = protorel_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Small world taken through every stage via the CLI entry point.
fn pipeline(dir: &Path) {
    std::fs::write(dir.join("small.json"), SMALL_WORLD).unwrap();
    let d = dir.to_str().unwrap();
    for stage in [
        vec!["gen-synth", "--config", "small.json"],
        vec!["build-graph"],
        vec!["train-embed", "--samples", "50000", "--prototype-dim", "16"],
        vec!["prototypes"],
        vec!["train-re", "--filters", "8", "--epochs", "2", "--batch", "16", "--word-dim", "10"],
        vec!["eval", "--model", "model.bin"],
    ] {
        let mut args = vec!["--data-dir", d];
        args.extend(stage.iter().copied());
        assert_eq!(run(&args), 0, "stage {stage:?} failed");
    }
}

#[test]
fn handles_round_trip_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());

    let mut emb = ptr::null_mut();
    let status = unsafe { protorel_embeddings_load(c(&dir.path().join("embeddings.bin")).as_ptr(), &mut emb) };
    assert_eq!(status, ProtorelStatus::Ok);
    unsafe {
        assert_eq!(protorel_embeddings_count(emb), 300);
        assert_eq!(protorel_embeddings_dim(emb), 16);
    }

    let mut row = [0.0; 16];
    let mut head = [0.0; 16];
    let mut mr = [0.0; 16];
    unsafe {
        assert_eq!(protorel_embeddings_row(emb, 1, row.as_mut_ptr(), 16), ProtorelStatus::Ok);
        assert_eq!(protorel_embeddings_row(emb, 0, head.as_mut_ptr(), 16), ProtorelStatus::Ok);
        assert_eq!(protorel_mutual_relation(emb, 0, 1, mr.as_mut_ptr(), 16), ProtorelStatus::Ok);
    }
    for i in 0..16 {
        assert_eq!(mr[i], row[i] - head[i]);
    }

    let mut protos = ptr::null_mut();
    let status = unsafe { protorel_prototypes_load(c(&dir.path().join("prototypes.txt")).as_ptr(), &mut protos) };
    assert_eq!(status, ProtorelStatus::Ok);
    unsafe {
        assert_eq!(protorel_prototypes_relations(protos), 6);
        assert_eq!(protorel_prototypes_dim(protos), 16);
    }
    let (mut rels, mut cos, mut n) = ([0usize; 3], [0.0; 3], 0usize);
    let status = unsafe { protorel_nearest_prototypes(emb, protos, 0, 1, 3, rels.as_mut_ptr(), cos.as_mut_ptr(), &mut n) };
    assert_eq!(status, ProtorelStatus::Ok);
    assert_eq!(n, 3);
    assert!(rels.iter().all(|&r| r != 0 && r < 6));
    assert!(cos[0] >= cos[1] && cos[1] >= cos[2]);

    let mut model = ptr::null_mut();
    let status = unsafe { protorel_model_load(c(&dir.path().join("model.bin")).as_ptr(), &mut model) };
    assert_eq!(status, ProtorelStatus::Ok);
    assert_eq!(unsafe { protorel_model_relations(model) }, 6);
    let mut name = [0 as c_char; 32];
    unsafe {
        assert_eq!(protorel_model_relation_name(model, 0, name.as_mut_ptr(), 32), ProtorelStatus::Ok);
        assert_eq!(CStr::from_ptr(name.as_ptr()).to_str().unwrap(), "NA");
        assert_eq!(protorel_model_relation_name(model, 0, name.as_mut_ptr(), 2), ProtorelStatus::BufferTooSmall);
        assert_eq!(protorel_model_relation_name(model, 9, name.as_mut_ptr(), 32), ProtorelStatus::InvalidArgument);
    }

    let mut metrics = ProtorelMetrics::default();
    let status = unsafe { protorel_eval_predictions(c(&dir.path().join("predictions.tsv")).as_ptr(), &mut metrics) };
    assert_eq!(status, ProtorelStatus::Ok);
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains(&format!("auc={:.6}\n", metrics.auc)));
    assert!(report.contains(&format!("max_f1.f1={:.6}\n", metrics.f1)));
    assert!(report.contains(&format!("candidates={}\n", metrics.n_candidates)));

    unsafe {
        protorel_model_free(model);
        protorel_prototypes_free(protos);
        protorel_embeddings_free(emb);
    }
}

#[test]
fn failures_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut emb = ptr::null_mut();
    let missing = c(&dir.path().join("absent.bin"));
    assert_eq!(unsafe { protorel_embeddings_load(missing.as_ptr(), &mut emb) }, ProtorelStatus::MissingFile);
    assert!(emb.is_null());
    assert!(last_error().starts_with("missing-file"));

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "not a matrix\n").unwrap();
    assert_eq!(unsafe { protorel_prototypes_load(c(&bad).as_ptr(), &mut ptr::null_mut()) }, ProtorelStatus::Format);

    assert_eq!(unsafe { protorel_embeddings_load(ptr::null(), &mut emb) }, ProtorelStatus::NullPointer);
    assert_eq!(last_error(), "path is null");
    assert_eq!(unsafe { protorel_embeddings_count(ptr::null()) }, 0);
    unsafe { protorel_embeddings_free(ptr::null_mut()) };

    assert_eq!(run(&["no-such-command"]), 2);
    assert_eq!(run(&["--data-dir", dir.path().to_str().unwrap(), "build-graph"]), 3);
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(protorel_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("protorel.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["protorel_run", "protorel_last_error", "protorel_embeddings_load", "protorel_nearest_prototypes"] {
        assert!(text.contains(f), "header lacks {f}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", "-Wall", "-Werror"]).arg(&header).output() else {
        eprintln!("no C compiler; header syntax not checked");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
