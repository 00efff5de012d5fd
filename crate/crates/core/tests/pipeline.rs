use std::path::Path;

use surfwave::pipeline::{
    generate_cohort, process_surface, run_experiments, run_pipeline, subject_set_hash, CohortConfig, Manifest,
    PipelineConfig, RunReport, SignatureCache,
};
use surfwave::sgwt::sgws_to_bytes;
use surfwave::Error;

fn cohort(dir: &Path, subjects: usize) -> Manifest {
    let config: CohortConfig = serde_json::from_str(&format!(
        r#"{{
            "subdivision": 1, "n_bumps": 6, "seed": 2,
            "classes": [
                {{"diagnosis": "NC", "count": {half}, "amplitude": 0.05}},
                {{"diagnosis": "AD", "count": {half}, "amplitude": 0.15}}
            ],
            "age": {{"intercept": 55.0, "slope": 250.0, "noise_sd": 1.0}}
        }}"#,
        half = subjects / 2
    ))
    .unwrap();
    generate_cohort(&config, dir).unwrap()
}

fn small_config() -> PipelineConfig {
    PipelineConfig {
        eigenpairs: 101,
        vocab: 32,
        shapedna_len: 20,
        folds: 4,
        ..PipelineConfig::default()
    }
}

#[test]
fn descriptor_has_one_block_per_surface() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cohort(dir.path(), 40);
    let out = run_pipeline(&manifest, &small_config(), None).unwrap();
    assert_eq!(out.waveletbrain.num_subjects(), 40);
    assert_eq!(out.waveletbrain.descriptor_len(), 128);
    assert_eq!(out.shapedna[0].len(), 80);
    assert_eq!(out.stats.eigensolves, 160);

    let diffs = PipelineConfig {
        with_differences: true,
        ..small_config()
    };
    let out = run_pipeline(&manifest, &diffs, None).unwrap();
    assert_eq!(out.waveletbrain.descriptor_len(), 192);
    assert_eq!(out.waveletbrain.block_layout, ["LW", "LG", "RW", "RG", "LG-LW", "RG-RW"]);
}

#[test]
fn corrupt_mesh_drops_only_its_subject() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cohort(dir.path(), 40);
    let victim = &manifest.rows[17];
    let path = manifest.resolve(victim, surfwave::bof::SurfaceTag::RG);
    std::fs::write(&path, "OFF\n3 1 0\n0 0 0\n1 0\n").unwrap();

    let out = run_pipeline(&manifest, &small_config(), None).unwrap();
    assert_eq!(out.waveletbrain.num_subjects(), 39);
    assert!(!out.waveletbrain.subject_ids.contains(&victim.subject_id));
    assert_eq!(out.failures.len(), 1);
    let f = &out.failures[0];
    assert_eq!(f.subject_id, victim.subject_id);
    assert_eq!(f.stage, "load");
    assert_eq!(f.kind, "format-error");
    assert_eq!(out.stats.failed_surfaces, 1);
}

#[test]
fn too_many_failures_abort_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cohort(dir.path(), 10);
    for row in &manifest.rows[..3] {
        std::fs::write(manifest.resolve(row, surfwave::bof::SurfaceTag::LW), "garbage").unwrap();
    }
    let strict = PipelineConfig {
        max_failure_fraction: 0.05,
        ..small_config()
    };
    assert!(matches!(run_pipeline(&manifest, &strict, None), Err(Error::Aborted(_))));
    let out = run_pipeline(&manifest, &small_config(), None).unwrap();
    assert_eq!(out.waveletbrain.num_subjects(), 7);
}

#[test]
fn missing_surfaces_drop_the_subject_without_counting_as_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = cohort(dir.path(), 10);
    manifest.rows[4].paths[1] = "NA".into();
    manifest.save(dir.path().join("manifest.csv")).unwrap();
    let manifest = Manifest::load(dir.path().join("manifest.csv")).unwrap();
    let config = PipelineConfig {
        max_failure_fraction: 0.0,
        ..small_config()
    };
    let out = run_pipeline(&manifest, &config, None).unwrap();
    assert_eq!(out.waveletbrain.num_subjects(), 9);
    assert_eq!(out.failures[0].stage, "manifest");
    assert_eq!(out.failures[0].kind, "missing-surface-error");
}

#[test]
fn dictionary_respects_declared_training_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cohort(dir.path(), 12);
    let train: Vec<String> = manifest.rows[..6].iter().map(|r| r.subject_id.clone()).collect();
    let config = PipelineConfig {
        train_subjects: Some(train.clone()),
        ..small_config()
    };
    let restricted = run_pipeline(&manifest, &config, None).unwrap();
    let full = run_pipeline(&manifest, &small_config(), None).unwrap();
    assert_eq!(restricted.training_subjects, train);
    assert_eq!(restricted.training_subjects_hash, subject_set_hash(&train));
    assert_eq!(restricted.waveletbrain.num_subjects(), 12);
    assert_ne!(restricted.dictionaries[0].1, full.dictionaries[0].1);
    assert_eq!(full.training_subjects.len(), 12);
}

#[test]
fn per_surface_dictionaries_are_written_separately() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cohort(dir.path(), 8);
    let config = PipelineConfig {
        per_surface_dictionaries: true,
        vocab: 8,
        ..small_config()
    };
    let out = run_pipeline(&manifest, &config, None).unwrap();
    assert_eq!(out.dictionaries.len(), 4);
    let report = RunReport::new(&out, &config, Default::default());
    let written = report.write_outputs(&out, &dir.path().join("out")).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for tag in ["LW", "LG", "RW", "RG"] {
        assert!(names.contains(&format!("dict_{tag}.bin")), "{names:?}");
    }
}

#[test]
fn cached_signatures_are_bit_identical_to_fresh_ones() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cohort(dir.path(), 2);
    let config = small_config();
    let cache = SignatureCache::open(dir.path().join("cache")).unwrap();
    let path = manifest.resolve(&manifest.rows[0], surfwave::bof::SurfaceTag::LW);
    let (fresh, hit) = process_surface(&path, &config, Some(&cache)).unwrap();
    assert!(!hit);
    let (cached, hit) = process_surface(&path, &config, Some(&cache)).unwrap();
    assert!(hit);
    assert_eq!(sgws_to_bytes(&cached.sgws), sgws_to_bytes(&fresh.sgws));
    assert_eq!(cached.eigenvalues, fresh.eigenvalues);

    let other = PipelineConfig {
        level: 4,
        ..config
    };
    let (_, hit) = process_surface(&path, &other, Some(&cache)).unwrap();
    assert!(!hit);
}

#[test]
fn report_json_round_trips_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cohort(dir.path(), 16);
    let config = PipelineConfig {
        task: Some("AD-NC".into()),
        regress: true,
        pls_ncomp: 3,
        ..small_config()
    };
    let out = run_pipeline(&manifest, &config, None).unwrap();
    let experiments = run_experiments(&out, &manifest, &config).unwrap();
    let report = RunReport::new(&out, &config, experiments);
    report.write_outputs(&out, &dir.path().join("out")).unwrap();

    let text = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    let parsed: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, report);
    assert_eq!(serde_json::to_string_pretty(&parsed).unwrap() + "\n", text);

    let classification = parsed.experiments.classification.unwrap();
    assert_eq!(classification.waveletbrain.fold_accuracies.len(), 4);
    let scatter = std::fs::read_to_string(dir.path().join("out/scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 1 + parsed.experiments.regression.unwrap().subjects);
}
