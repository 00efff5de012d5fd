use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use surfwave::bof::{
    build_dictionary, encode_surface, load_dictionary, read_feature_csv, save_dictionary, write_feature_csv,
    SurfaceHistogram,
};
use surfwave::laplacian::{cotangent_system, eigendecompose_with, shape_dna, EigenOptions, EigenSolver, EigenSystem};
use surfwave::learn::{
    balance_classes, cross_validate_svm, paired_comparison, pls_loocv, ClassificationReport, SvmOptions,
};
use surfwave::mesh::{
    inspect_mesh, load_mesh, parse_mesh, surface_area, write_mesh, MeshFormat, TriangleMesh, ValidationPolicy,
};
use surfwave::pipeline::{
    classification_dataset, generate_cohort, parse_task, regression_dataset, run_experiments, run_pipeline,
    run_pipeline_with_dictionary, write_json, write_scatter_csv, Bandwidth, CohortConfig, Manifest, PipelineConfig,
    RunReport,
};
use surfwave::sgwt::{chi2_distance_map, compute_sgws, load_sgws, save_sgws, write_sgws_csv, SgwsMatrix};
use surfwave::synth::{Family as SynthFamily, SynthSpec};
use surfwave::{Error, Result};

use crate::{Cli, Command, Family, Global};

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Info { mesh, prune } => info(mesh, *prune),
        Command::Spectrum { mesh, k, dense } => spectrum(mesh, *k, *dense),
        Command::Shapedna { mesh, d } => {
            let eig = solve(&load_mesh(mesh, MeshFormat::Auto)?, d + 1, EigenSolver::Auto)?;
            let row = shape_dna(&eig, *d)?;
            let ids = [mesh.display().to_string()];
            write_feature_csv(std::io::stdout().lock(), &ids, &[row])
        }
        Command::Sgws { mesh, k, level, output, csv } => {
            let config = pipeline_config(g)?;
            let sgws = signatures(mesh, k.unwrap_or(config.eigenpairs), level.unwrap_or(config.level), &config)?;
            if *csv {
                write_sgws_csv(&sgws, create(output)?)
            } else {
                save_sgws(output, &sgws)
            }
        }
        Command::Distmap { mesh, reference, k, level, output } => {
            let config = pipeline_config(g)?;
            let m = load_mesh(mesh, MeshFormat::Auto)?;
            let sgws = signatures(mesh, k.unwrap_or(config.eigenpairs), level.unwrap_or(config.level), &config)?;
            let dist = chi2_distance_map(&sgws, *reference)?;
            distmap_csv(&m, &dist, output.as_deref())
        }
        Command::Dict { stores, k, output } => {
            let sigs = stores.iter().map(load_sgws).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&SgwsMatrix> = sigs.iter().collect();
            let dict = build_dictionary(&refs, *k, g.seed.unwrap_or(0))?;
            log::info!("dictionary: {} atoms, inertia {:.6e}", dict.size(), dict.inertia);
            save_dictionary(output, &dict)
        }
        Command::Encode { input, dict, k, level, area, no_normalize, output } => {
            let mut config = pipeline_config(g)?;
            config.eigenpairs = k.unwrap_or(config.eigenpairs);
            config.level = level.unwrap_or(config.level);
            let hist = encode(input, dict, *area, !*no_normalize, &config)?;
            let ids = [hist.surface_label.clone()];
            write_feature_csv(create(output)?, &ids, &[hist.values])
        }
        Command::Assemble { manifest, dict, diffs, output } => {
            let mut config = pipeline_config(g)?;
            config.with_differences |= *diffs;
            let manifest = Manifest::load(manifest)?;
            let dict = load_dictionary(dict)?;
            let out = run_pipeline_with_dictionary(&manifest, &config, g.cache.as_deref(), &dict)?;
            for f in &out.failures {
                log::warn!("dropped {}: {} {} at {}", f.subject_id, f.surface, f.kind, f.stage);
            }
            out.waveletbrain.write_csv(create(output)?)
        }
        Command::Classify { features, manifest, task, folds, output } => {
            let config = pipeline_config(g)?;
            let report = classify(features, manifest, task, *folds, g.seed.unwrap_or(0), &config.svm)?;
            emit(&report, output.as_deref())
        }
        Command::Regress { features, manifest, ncomp, output, scatter } => {
            let (ids, rows) = read_features(features)?;
            let ds = regression_dataset(&ids, &rows, &Manifest::load(manifest)?)?;
            let report = pls_loocv(&ds, *ncomp)?;
            write_scatter_csv(scatter, &report)?;
            emit(&report, output.as_deref())
        }
        Command::Compare { a, b } => compare(a, b),
        Command::Synth { family, sub, eps, bumps, width, output } => {
            let spec = SynthSpec {
                family: match family {
                    Family::Icosphere => SynthFamily::Icosphere,
                    Family::BumpSphere => SynthFamily::BumpSphere,
                },
                subdivision: *sub,
                amplitude: *eps,
                n_bumps: *bumps,
                bump_width: *width,
                seed: g.seed.unwrap_or(0),
            };
            write_mesh(output, &spec.generate()?, MeshFormat::Auto)
        }
        Command::SynthCohort { output } => {
            let path = g
                .config
                .as_ref()
                .ok_or_else(|| Error::Usage("synth-cohort needs --config <cohort.json>".into()))?;
            let mut cohort = CohortConfig::load(path)?;
            if let Some(seed) = g.seed {
                cohort.seed = seed;
            }
            let manifest = generate_cohort(&cohort, output)?;
            eprintln!("wrote {} subjects to {}", manifest.rows.len(), output.display());
            Ok(())
        }
        Command::Run { manifest, output, task, regress } => {
            let mut config = pipeline_config(g)?;
            if task.is_some() {
                config.task = task.clone();
            }
            config.regress |= *regress;
            config.validate()?;
            let manifest = Manifest::load(manifest)?;
            let out = run_pipeline(&manifest, &config, g.cache.as_deref())?;
            let experiments = run_experiments(&out, &manifest, &config)?;
            let report = RunReport::new(&out, &config, experiments);
            for path in report.write_outputs(&out, output)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

/// Pipeline settings from `--config`, with `--jobs` and `--seed` applied.
fn pipeline_config(g: &Global) -> Result<PipelineConfig> {
    let mut config = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(jobs) = g.jobs {
        config.jobs = jobs;
    }
    if let Some(seed) = g.seed {
        config.dict_seed = seed;
        config.cv_seed = seed;
        config.balance_seed = seed;
    }
    Ok(config)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => write_json(path, value),
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out).map_err(|e| Error::io("stdout", e))
        }
    }
}

fn info(path: &Path, prune: bool) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mesh = parse_mesh(&bytes, path, MeshFormat::Auto)?;
    let policy = if prune { ValidationPolicy::PRUNE } else { ValidationPolicy::STRICT };
    emit(
        &json!({
            "path": path,
            "num_vertices": mesh.num_vertices(),
            "num_triangles": mesh.num_triangles(),
            "area": surface_area(&mesh),
            "validation": inspect_mesh(&mesh, policy),
        }),
        None,
    )
}

fn solve(mesh: &TriangleMesh, k: usize, solver: EigenSolver) -> Result<EigenSystem> {
    let system = cotangent_system(mesh)?;
    let options = EigenOptions {
        solver,
        ..EigenOptions::default()
    };
    eigendecompose_with(&system, k, &options)
}

fn spectrum(path: &Path, k: usize, dense: bool) -> Result<()> {
    let solver = if dense { EigenSolver::Dense } else { EigenSolver::Auto };
    let eig = solve(&load_mesh(path, MeshFormat::Auto)?, k, solver)?;
    emit(
        &json!({
            "mesh": path,
            "mesh_area": eig.mesh_area,
            "eigenvalues": eig.eigenvalues,
        }),
        None,
    )
}

fn signatures(path: &Path, k: usize, level: usize, config: &PipelineConfig) -> Result<SgwsMatrix> {
    let mesh = load_mesh(path, MeshFormat::Auto)?;
    let k = k.min(mesh.num_vertices());
    let eig = solve(&mesh, k, config.solver)?;
    let mut sgws = compute_sgws(&eig, level)?;
    sgws.source_label = path.display().to_string();
    Ok(sgws)
}

fn distmap_csv(mesh: &TriangleMesh, dist: &[f64], output: Option<&Path>) -> Result<()> {
    let out: Box<dyn Write> = match output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vertex", "x", "y", "z", "distance"])?;
    for (i, (v, d)) in mesh.vertices().iter().zip(dist).enumerate() {
        w.write_record([i.to_string(), v[0].to_string(), v[1].to_string(), v[2].to_string(), d.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("distance map", e))
}

fn is_store(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("sgws"))
}

fn encode(
    input: &Path,
    dict_path: &Path,
    area: Option<f64>,
    normalize: bool,
    config: &PipelineConfig,
) -> Result<SurfaceHistogram> {
    let dict = load_dictionary(dict_path)?;
    let (sgws, mesh_area) = if is_store(input) {
        let sgws = load_sgws(input)?;
        let area = match (area, normalize) {
            (Some(a), _) => a,
            (None, false) => 1.0,
            (None, true) => {
                return Err(Error::Usage(
                    "a signature store carries no area; pass --area or --no-normalize".into(),
                ))
            }
        };
        (sgws, area)
    } else {
        let mesh = load_mesh(input, MeshFormat::Auto)?;
        let area = surface_area(&mesh);
        (signatures(input, config.eigenpairs, config.level, config)?, area)
    };
    let sigma = match config.sigma {
        Bandwidth::Fixed(s) => s,
        Bandwidth::Auto(_) => dict.bandwidth,
    };
    encode_surface(&sgws, &dict, sigma, mesh_area, normalize)
}

fn read_features(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_csv(file)
}

fn classify(
    features: &Path,
    manifest: &Path,
    task: &str,
    folds: usize,
    seed: u64,
    svm: &SvmOptions,
) -> Result<ClassificationReport> {
    let (ids, rows) = read_features(features)?;
    let ds = classification_dataset(&ids, &rows, &Manifest::load(manifest)?, parse_task(task)?)?;
    let ds = balance_classes(&ds, seed)?;
    cross_validate_svm(&ds, folds, svm, seed)
}

fn compare(a: &PathBuf, b: &PathBuf) -> Result<()> {
    let load = |p: &PathBuf| -> Result<ClassificationReport> {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Ok(serde_json::from_str(&text)?)
    };
    let (ra, rb) = (load(a)?, load(b)?);
    if ra.split_digest != rb.split_digest {
        return Err(Error::Mismatch(
            "the reports were cross-validated on different fold assignments".into(),
        ));
    }
    let test = paired_comparison(&ra.fold_accuracies, &rb.fold_accuracies)?;
    emit(
        &json!({
            "a": a,
            "b": b,
            "mean_accuracy_a": ra.mean_accuracy,
            "mean_accuracy_b": rb.mean_accuracy,
            "comparison": test,
        }),
        None,
    )
}
