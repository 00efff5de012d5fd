//! Manifest-driven batch processing: per-surface signatures (cached),
//! dictionary training, encoding, WaveletBrain assembly and the downstream
//! experiments.

mod cache;
mod cohort;
mod config;
mod manifest;
mod report;

pub use cache::{cache_key, SignatureCache, SurfaceSpectrum};
pub use cohort::{draw_cohort, generate_cohort, AgeRule, AmplitudeDist, BumpCount, CohortClass, CohortConfig, CohortSubject};
pub use config::{AutoKeyword, Bandwidth, PipelineConfig};
pub use manifest::{Diagnosis, Manifest, ManifestRow, Sex, NA};
pub use report::{
    classification_dataset, parse_task, regression_dataset, run_experiments, write_json, write_scatter_csv,
    ClassificationComparison, ExperimentReport, RegressionComparison, RunReport,
};

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bof::{
    assemble_waveletbrain, block_layout, build_dictionary, encode_surface, Dictionary, SurfaceHistogram,
    SurfaceTag, WaveletBrainMatrix,
};
use crate::error::{Error, Result};
use crate::laplacian::{cotangent_system, eigendecompose_with, shape_dna_from_spectrum, EigenOptions};
use crate::mesh::{decode_mesh, MeshFormat, ValidationPolicy};
use crate::sgwt::compute_sgws;

/// One surface that could not be processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub subject_id: String,
    pub surface: SurfaceTag,
    pub path: PathBuf,
    pub stage: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub subjects: usize,
    pub subjects_kept: usize,
    pub surfaces: usize,
    pub cache_hits: usize,
    pub eigensolves: usize,
    pub failed_surfaces: usize,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub signatures_s: f64,
    pub dictionary_s: f64,
    pub encoding_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryInfo {
    /// `None` for the shared dictionary.
    pub surface: Option<SurfaceTag>,
    pub size: usize,
    pub dim: usize,
    pub bandwidth: f64,
    pub sigma_used: f64,
    pub iterations: usize,
    pub inertia: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub waveletbrain: WaveletBrainMatrix,
    /// Per-subject ShapeDNA rows (four surfaces concatenated), aligned with
    /// `waveletbrain.subject_ids`.
    pub shapedna: Vec<Vec<f64>>,
    pub dictionaries: Vec<(Option<SurfaceTag>, Dictionary)>,
    pub dictionary_info: Vec<DictionaryInfo>,
    pub training_subjects: Vec<String>,
    pub training_subjects_hash: String,
    pub failures: Vec<FailureRecord>,
    pub stats: RunStats,
    pub timing: Timings,
}

/// Parses a mesh file, validates it and computes its signature, consulting
/// `cache` first. Returns the failing stage on error.
pub fn process_surface(
    path: &Path,
    config: &PipelineConfig,
    cache: Option<&SignatureCache>,
) -> std::result::Result<(SurfaceSpectrum, bool), (&'static str, Error)> {
    let bytes = std::fs::read(path).map_err(|e| ("load", Error::io(path, e)))?;
    let eigen = eigen_options(config);
    let key = cache_key(&bytes, config.eigenpairs, config.level, &eigen);
    let label = path.display().to_string();
    if let Some(hit) = cache.and_then(|c| c.get(&key, &label)) {
        return Ok((hit, true));
    }
    let mesh = decode_mesh(&bytes, path, MeshFormat::Auto, ValidationPolicy::STRICT).map_err(|e| ("load", e))?;
    let system = cotangent_system(&mesh).map_err(|e| ("laplacian", e))?;
    let k = config.eigenpairs.min(system.dim());
    let eig = eigendecompose_with(&system, k, &eigen).map_err(|e| ("eigensolve", e))?;
    let mut sgws = compute_sgws(&eig, config.level).map_err(|e| ("signature", e))?;
    sgws.source_label = label;
    let entry = SurfaceSpectrum {
        sgws,
        eigenvalues: eig.eigenvalues,
        mesh_area: eig.mesh_area,
    };
    if let Some(c) = cache {
        c.put(&key, &entry).map_err(|e| ("cache", e))?;
    }
    Ok((entry, false))
}

fn eigen_options(config: &PipelineConfig) -> EigenOptions {
    EigenOptions {
        solver: config.solver,
        ..EigenOptions::default()
    }
}

/// Runs `f` on a pool of `jobs` threads (all cores for 0).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// Hash of the sorted training-subject list, recorded for provenance.
pub fn subject_set_hash(ids: &[String]) -> String {
    let sorted: BTreeSet<&String> = ids.iter().collect();
    let mut h = blake3::Hasher::new();
    for id in sorted {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    h.finalize().to_hex().to_string()
}

/// Full per-cohort pipeline up to the WaveletBrain and ShapeDNA matrices.
pub fn run_pipeline(manifest: &Manifest, config: &PipelineConfig, cache_dir: Option<&Path>) -> Result<PipelineOutput> {
    config.validate()?;
    let started = Instant::now();
    let cache = cache_dir.map(SignatureCache::open).transpose()?;
    with_pool(config.jobs, || run_in_pool(manifest, config, cache.as_ref(), None, started))?
}

/// As [`run_pipeline`], but encodes every surface against a dictionary
/// trained elsewhere instead of learning one.
pub fn run_pipeline_with_dictionary(
    manifest: &Manifest,
    config: &PipelineConfig,
    cache_dir: Option<&Path>,
    dictionary: &Dictionary,
) -> Result<PipelineOutput> {
    config.validate()?;
    let started = Instant::now();
    let cache = cache_dir.map(SignatureCache::open).transpose()?;
    with_pool(config.jobs, || {
        run_in_pool(manifest, config, cache.as_ref(), Some(dictionary), started)
    })?
}

fn run_in_pool(
    manifest: &Manifest,
    config: &PipelineConfig,
    cache: Option<&SignatureCache>,
    fixed_dictionary: Option<&Dictionary>,
    started: Instant,
) -> Result<PipelineOutput> {
    let tasks: Vec<(usize, SurfaceTag)> = (0..manifest.rows.len())
        .flat_map(|s| SurfaceTag::ALL.map(|t| (s, t)))
        .collect();
    let hits = AtomicUsize::new(0);
    let solves = AtomicUsize::new(0);
    let results: Vec<std::result::Result<SurfaceSpectrum, FailureRecord>> = tasks
        .par_iter()
        .map(|&(s, tag)| {
            let row = &manifest.rows[s];
            let path = manifest.resolve(row, tag);
            if row.is_missing(tag) {
                let e = Error::MissingSurface {
                    subject: row.subject_id.clone(),
                    surface: tag.to_string(),
                };
                return Err(FailureRecord {
                    subject_id: row.subject_id.clone(),
                    surface: tag,
                    path: row.path(tag).to_path_buf(),
                    stage: "manifest".into(),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
            match process_surface(&path, config, cache) {
                Ok((entry, hit)) => {
                    if hit {
                        hits.fetch_add(1, Ordering::Relaxed);
                    } else {
                        solves.fetch_add(1, Ordering::Relaxed);
                    }
                    Ok(entry)
                }
                Err((stage, e)) => Err(FailureRecord {
                    subject_id: row.subject_id.clone(),
                    surface: tag,
                    path,
                    stage: stage.to_string(),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                }),
            }
        })
        .collect();
    let signatures_s = started.elapsed().as_secs_f64();

    let mut failures = Vec::new();
    let mut per_subject: Vec<Option<Vec<SurfaceSpectrum>>> = Vec::with_capacity(manifest.rows.len());
    let mut iter = results.into_iter();
    for _ in &manifest.rows {
        let mut surfaces = Vec::with_capacity(4);
        let mut ok = true;
        for _ in SurfaceTag::ALL {
            match iter.next().expect("four results per subject") {
                Ok(entry) => surfaces.push(entry),
                Err(f) => {
                    log::warn!("{} {} failed at {}: {}", f.subject_id, f.surface, f.stage, f.message);
                    failures.push(f);
                    ok = false;
                }
            }
        }
        per_subject.push(ok.then_some(surfaces));
    }
    let stats = RunStats {
        subjects: manifest.rows.len(),
        subjects_kept: per_subject.iter().filter(|s| s.is_some()).count(),
        surfaces: tasks.len(),
        cache_hits: hits.into_inner(),
        eigensolves: solves.into_inner(),
        failed_surfaces: failures.len(),
    };
    log::info!(
        "signatures: {} surfaces, {} cache hits, {} eigensolves, {} failures",
        stats.surfaces,
        stats.cache_hits,
        stats.eigensolves,
        stats.failed_surfaces
    );
    // Surfaces absent from the manifest drop their subject but are not
    // processing failures.
    let failed: Vec<&FailureRecord> = failures.iter().filter(|f| f.stage != "manifest").collect();
    if failed.len() as f64 > config.max_failure_fraction * stats.surfaces as f64 {
        let first = failed[0];
        return Err(Error::Aborted(format!(
            "{} of {} surfaces failed (limit {:.0}%); first: {} {} at {}: {}",
            failed.len(),
            stats.surfaces,
            100.0 * config.max_failure_fraction,
            first.subject_id,
            first.surface,
            first.stage,
            first.message
        )));
    }
    let kept: Kept<'_> =
        per_subject.iter().enumerate().filter_map(|(i, s)| s.as_ref().map(|s| (i, s))).collect();
    if kept.is_empty() {
        return Err(Error::Aborted("no subject has all four surfaces".into()));
    }

    // Dictionary training, restricted to the declared training subjects.
    let dict_start = Instant::now();
    let (training_subjects, dictionaries) = match fixed_dictionary {
        Some(d) => (Vec::new(), vec![(None, d.clone())]),
        None => train_dictionaries(manifest, config, &kept)?,
    };
    let sigma_for = |d: &Dictionary| match config.sigma {
        Bandwidth::Fixed(s) => s,
        Bandwidth::Auto(_) => d.bandwidth,
    };
    let dictionary_info = dictionaries
        .iter()
        .map(|(g, d)| DictionaryInfo {
            surface: *g,
            size: d.size(),
            dim: d.dim(),
            bandwidth: d.bandwidth,
            sigma_used: sigma_for(d),
            iterations: d.iterations,
            inertia: d.inertia,
        })
        .collect();
    let dictionary_s = dict_start.elapsed().as_secs_f64();

    // Encoding and assembly.
    let enc_start = Instant::now();
    let dict_for = |tag: SurfaceTag| {
        &dictionaries
            .iter()
            .find(|(g, _)| g.is_none_or(|g| g == tag))
            .expect("dictionary for every tag")
            .1
    };
    let columns: Vec<Vec<f64>> = kept
        .par_iter()
        .map(|(i, surfaces)| {
            let histograms: HashMap<SurfaceTag, SurfaceHistogram> = SurfaceTag::ALL
                .iter()
                .zip(surfaces.iter())
                .map(|(&tag, e)| {
                    let dict = dict_for(tag);
                    encode_surface(&e.sgws, dict, sigma_for(dict), e.mesh_area, config.area_normalize)
                        .map(|h| (tag, h))
                })
                .collect::<Result<_>>()?;
            assemble_waveletbrain(&manifest.rows[*i].subject_id, &histograms, config.with_differences)
        })
        .collect::<Result<_>>()?;
    let shapedna: Vec<Vec<f64>> = kept
        .iter()
        .map(|(_, surfaces)| {
            let mut row = Vec::with_capacity(4 * config.shapedna_len);
            for e in surfaces.iter() {
                row.extend(shape_dna_from_spectrum(&e.eigenvalues, e.mesh_area, config.shapedna_len)?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let subject_ids: Vec<String> = kept.iter().map(|(i, _)| manifest.rows[*i].subject_id.clone()).collect();
    let waveletbrain = WaveletBrainMatrix::new(subject_ids, columns, block_layout(config.with_differences))?;
    let encoding_s = enc_start.elapsed().as_secs_f64();

    Ok(PipelineOutput {
        waveletbrain,
        shapedna,
        dictionaries,
        dictionary_info,
        training_subjects_hash: subject_set_hash(&training_subjects),
        training_subjects,
        failures,
        stats,
        timing: Timings {
            signatures_s,
            dictionary_s,
            encoding_s,
            total_s: started.elapsed().as_secs_f64(),
        },
    })
}

type Kept<'a> = Vec<(usize, &'a Vec<SurfaceSpectrum>)>;

/// Trains the shared (or per-surface) dictionaries on the declared training
/// subjects, or on every kept subject when none are declared.
fn train_dictionaries(
    manifest: &Manifest,
    config: &PipelineConfig,
    kept: &Kept<'_>,
) -> Result<(Vec<String>, Vec<(Option<SurfaceTag>, Dictionary)>)> {
    let training: Kept<'_> = match &config.train_subjects {
        None => kept.clone(),
        Some(ids) => {
            let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
            let chosen: Kept<'_> = kept
                .iter()
                .copied()
                .filter(|(i, _)| wanted.contains(manifest.rows[*i].subject_id.as_str()))
                .collect();
            if chosen.len() < wanted.len() {
                log::warn!(
                    "{} of {} training subjects are unavailable",
                    wanted.len() - chosen.len(),
                    wanted.len()
                );
            }
            chosen
        }
    };
    if training.is_empty() {
        return Err(Error::DegenerateData("no training subjects available for the dictionary".into()));
    }
    let training_subjects = training.iter().map(|(i, _)| manifest.rows[*i].subject_id.clone()).collect();
    let groups: Vec<Option<SurfaceTag>> = if config.per_surface_dictionaries {
        SurfaceTag::ALL.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let mut dictionaries = Vec::with_capacity(groups.len());
    for group in groups {
        let sigs: Vec<_> = training
            .iter()
            .flat_map(|(_, s)| {
                SurfaceTag::ALL
                    .iter()
                    .zip(s.iter())
                    .filter(move |(t, _)| group.is_none_or(|g| g == **t))
                    .map(|(_, e)| &e.sgws)
            })
            .collect();
        dictionaries.push((group, build_dictionary(&sigs, config.vocab, config.dict_seed)?));
    }
    Ok((training_subjects, dictionaries))
}
