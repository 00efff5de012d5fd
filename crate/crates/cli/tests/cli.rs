use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn surf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("surf runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = surf(dir, args);
    assert!(
        out.status.success(),
        "surf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const COHORT: &str = r#"{
    "subdivision": 1, "n_bumps": 6, "seed": 3,
    "classes": [
        {"diagnosis": "NC", "count": 8, "amplitude": 0.05},
        {"diagnosis": "AD", "count": 8, "amplitude": 0.15}
    ],
    "age": {"intercept": 55, "slope": 250, "noise_sd": 1}
}"#;

const PIPELINE: &str = r#"{"eigenpairs": 30, "vocab": 8, "shapedna_len": 10, "folds": 4, "pls_ncomp": 3}"#;

#[test]
fn info_and_spectrum_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--family", "icosphere", "--sub", "2", "-o", "s.off"]);
    let info: Value = serde_json::from_str(&ok(d, &["info", "s.off"])).unwrap();
    assert_eq!(info["num_vertices"], 162);
    assert_eq!(info["num_triangles"], 320);
    assert_eq!(info["validation"]["is_valid"], true);

    let spec: Value = serde_json::from_str(&ok(d, &["spectrum", "s.off", "--k", "4", "--dense"])).unwrap();
    let ev: Vec<f64> = serde_json::from_value(spec["eigenvalues"].clone()).unwrap();
    assert_eq!(ev.len(), 4);
    assert!(ev[0].abs() < 1e-9);
    for l in &ev[1..] {
        assert!((l - 2.0).abs() < 0.1, "{l}");
    }

    let row = ok(d, &["shapedna", "s.off", "--d", "3"]);
    let mut lines = row.lines();
    assert_eq!(lines.next(), Some("subject_id,feat_0,feat_1,feat_2"));
    assert_eq!(lines.next().unwrap().split(',').count(), 4);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(surf(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(surf(d, &["spectrum", "missing.off", "--k", "3"]).status.code(), Some(2));
    write(d, "bad.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n2 0 0\n3 0 1 2\n");
    assert_eq!(surf(d, &["spectrum", "bad.off", "--k", "2"]).status.code(), Some(2));
    ok(d, &["synth", "--sub", "1", "--eps", "0.1", "--bumps", "3", "-o", "m.off"]);
    ok(d, &["sgws", "m.off", "--k", "20", "-o", "m.sgws"]);
    ok(d, &["dict", "m.sgws", "-k", "4", "-o", "d.bin"]);
    let out = surf(d, &["encode", "m.sgws", "--dict", "d.bin", "-o", "h.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn signature_dictionary_and_encoding_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (name, eps, seed) in [("a.off", "0.05", "1"), ("b.off", "0.15", "2")] {
        ok(d, &["synth", "--sub", "2", "--eps", eps, "--bumps", "8", "--seed", seed, "-o", name]);
    }
    ok(d, &["sgws", "a.off", "--k", "40", "--level", "3", "-o", "a.sgws"]);
    ok(d, &["sgws", "b.off", "--k", "40", "--level", "3", "-o", "b.sgws"]);
    ok(d, &["sgws", "a.off", "--k", "40", "--level", "3", "--csv", "-o", "a.csv"]);
    let csv = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().all(|l| l.split(',').count() == 162));
    ok(d, &["dict", "a.sgws", "b.sgws", "-k", "6", "--seed", "4", "-o", "dict.bin"]);
    ok(d, &["encode", "a.off", "--dict", "dict.bin", "--k", "40", "-o", "h.csv"]);
    ok(d, &["encode", "a.sgws", "--dict", "dict.bin", "--no-normalize", "-o", "h_raw.csv"]);
    let raw = std::fs::read_to_string(d.join("h_raw.csv")).unwrap();
    let total: f64 = raw.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
    assert!((total - 162.0).abs() < 1e-9, "{total}");

    let map = ok(d, &["distmap", "a.off", "--ref", "5", "--k", "40"]);
    let rows: Vec<&str> = map.lines().collect();
    assert_eq!(rows[0], "vertex,x,y,z,distance");
    assert_eq!(rows.len(), 163);
    assert!(rows[6].ends_with(",0"));
}

#[test]
fn cohort_run_and_experiment_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "cohort.json", COHORT);
    write(d, "pipe.json", PIPELINE);
    ok(d, &["synth-cohort", "--config", "cohort.json", "-o", "coh"]);
    ok(
        d,
        &[
            "run", "--config", "pipe.json", "--manifest", "coh/manifest.csv", "--cache", "cache", "--task", "AD-NC",
            "--regress", "-o", "out",
        ],
    );
    for f in ["Z.csv", "shapedna.csv", "dict.bin", "scatter.csv", "report.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["eigenpairs"], 30);
    assert_eq!(report["stats"]["eigensolves"], 64);
    let folds = report["experiments"]["classification"]["waveletbrain"]["fold_accuracies"].as_array().unwrap();
    assert_eq!(folds.len(), 4);
    assert_eq!(
        std::fs::read_to_string(d.join("out/scatter.csv")).unwrap().lines().count(),
        17
    );

    // The stand-alone commands reproduce the run from its artifacts.
    ok(
        d,
        &["assemble", "--config", "pipe.json", "--manifest", "coh/manifest.csv", "--cache", "cache", "--dict", "out/dict.bin", "-o", "Z2.csv"],
    );
    assert_eq!(std::fs::read(d.join("Z2.csv")).unwrap(), std::fs::read(d.join("out/Z.csv")).unwrap());
    let classify = |features: &str, out: &str| {
        ok(
            d,
            &["classify", "--features", features, "--manifest", "coh/manifest.csv", "--task", "AD-NC", "--folds", "4", "-o", out],
        );
    };
    classify("out/Z.csv", "a.json");
    classify("out/shapedna.csv", "b.json");
    let a: Value = serde_json::from_str(&std::fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    assert_eq!(a, report["experiments"]["classification"]["waveletbrain"]);
    let cmp: Value = serde_json::from_str(&ok(d, &["compare", "a.json", "b.json"])).unwrap();
    let p = cmp["comparison"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));

    let reg: Value = serde_json::from_str(&ok(
        d,
        &["regress", "--features", "out/Z.csv", "--manifest", "coh/manifest.csv", "--ncomp", "3", "--scatter", "sc.csv"],
    ))
    .unwrap();
    assert_eq!(reg, report["experiments"]["regression"]["waveletbrain"]);
    assert_eq!(std::fs::read(d.join("sc.csv")).unwrap(), std::fs::read(d.join("out/scatter.csv")).unwrap());
}

#[test]
fn compare_refuses_different_splits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "cohort.json", COHORT);
    write(d, "pipe.json", PIPELINE);
    ok(d, &["synth-cohort", "--config", "cohort.json", "-o", "coh"]);
    ok(d, &["run", "--config", "pipe.json", "--manifest", "coh/manifest.csv", "-o", "out"]);
    for (seed, out) in [("1", "a.json"), ("2", "b.json")] {
        ok(
            d,
            &[
                "classify", "--features", "out/Z.csv", "--manifest", "coh/manifest.csv", "--task", "AD-NC", "--folds",
                "4", "--seed", seed, "-o", out,
            ],
        );
    }
    assert_eq!(surf(d, &["compare", "a.json", "b.json"]).status.code(), Some(2));
}
