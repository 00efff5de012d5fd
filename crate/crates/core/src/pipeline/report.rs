use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Diagnosis, DictionaryInfo, FailureRecord, Manifest, PipelineConfig, PipelineOutput, RunStats, Timings};
use crate::bof::{dictionary_to_bytes, write_feature_csv};
use crate::error::{Error, Result};
use crate::learn::{
    balance_classes, cross_validate_svm, paired_comparison, pls_loocv, ClassificationReport, LabeledDataset, Labels,
    PairedTest, RegressionReport,
};

/// Splits a task such as `AD-NC` into its two diagnoses.
pub fn parse_task(task: &str) -> Result<(Diagnosis, Diagnosis)> {
    let parts: Vec<&str> = task.split('-').collect();
    let [a, b] = parts.as_slice() else {
        return Err(Error::Usage(format!("task '{task}' must look like AD-NC")));
    };
    let (a, b): (Diagnosis, Diagnosis) = (
        a.parse().map_err(|e: Error| Error::Usage(e.to_string()))?,
        b.parse().map_err(|e: Error| Error::Usage(e.to_string()))?,
    );
    if a == b {
        return Err(Error::Usage(format!("task '{task}' compares a class with itself")));
    }
    Ok((a, b))
}

/// Subjects whose diagnosis belongs to the task, labelled by diagnosis.
pub fn classification_dataset(
    subject_ids: &[String],
    rows: &[Vec<f64>],
    manifest: &Manifest,
    task: (Diagnosis, Diagnosis),
) -> Result<LabeledDataset> {
    let mut keep_rows = Vec::new();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (id, row) in subject_ids.iter().zip(rows) {
        let dx = manifest.get(id).and_then(|r| r.diagnosis);
        if let Some(dx) = dx.filter(|d| *d == task.0 || *d == task.1) {
            keep_rows.push(row.clone());
            ids.push(id.clone());
            labels.push(dx.to_string());
        }
    }
    LabeledDataset::from_rows(&keep_rows, Labels::Classes(labels), ids)
}

/// Subjects with a recorded age.
pub fn regression_dataset(subject_ids: &[String], rows: &[Vec<f64>], manifest: &Manifest) -> Result<LabeledDataset> {
    let mut keep_rows = Vec::new();
    let mut ids = Vec::new();
    let mut ages = Vec::new();
    for (id, row) in subject_ids.iter().zip(rows) {
        if let Some(age) = manifest.get(id).and_then(|r| r.age) {
            keep_rows.push(row.clone());
            ids.push(id.clone());
            ages.push(age);
        }
    }
    LabeledDataset::from_rows(&keep_rows, Labels::Values(ages), ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationComparison {
    pub task: String,
    pub subjects: usize,
    pub waveletbrain: ClassificationReport,
    pub shapedna: ClassificationReport,
    /// WaveletBrain minus ShapeDNA, paired by fold.
    pub comparison: PairedTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionComparison {
    pub subjects: usize,
    pub waveletbrain: RegressionReport,
    pub shapedna: RegressionReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub classification: Option<ClassificationComparison>,
    pub regression: Option<RegressionComparison>,
}

/// Classification and regression experiments requested by `config`, each on
/// WaveletBrain and on the ShapeDNA baseline.
pub fn run_experiments(output: &PipelineOutput, manifest: &Manifest, config: &PipelineConfig) -> Result<ExperimentReport> {
    let ids = &output.waveletbrain.subject_ids;
    let mut report = ExperimentReport::default();
    if let Some(task) = &config.task {
        let pair = parse_task(task)?;
        let wb = classification_dataset(ids, &output.waveletbrain.columns, manifest, pair)?;
        let sd = classification_dataset(ids, &output.shapedna, manifest, pair)?;
        let wb = balance_classes(&wb, config.balance_seed)?;
        let sd = balance_classes(&sd, config.balance_seed)?;
        let a = cross_validate_svm(&wb, config.folds, &config.svm, config.cv_seed)?;
        let b = cross_validate_svm(&sd, config.folds, &config.svm, config.cv_seed)?;
        debug_assert_eq!(a.split_digest, b.split_digest);
        let comparison = paired_comparison(&a.fold_accuracies, &b.fold_accuracies)?;
        log::info!(
            "{task}: WaveletBrain {:.2}%, ShapeDNA {:.2}%, p = {:.4}",
            a.mean_accuracy,
            b.mean_accuracy,
            comparison.p_value
        );
        report.classification = Some(ClassificationComparison {
            task: task.clone(),
            subjects: wb.len(),
            waveletbrain: a,
            shapedna: b,
            comparison,
        });
    }
    if config.regress {
        let wb = regression_dataset(ids, &output.waveletbrain.columns, manifest)?;
        let sd = regression_dataset(ids, &output.shapedna, manifest)?;
        let cap = |ds: &LabeledDataset| config.pls_ncomp.min(ds.len().saturating_sub(2)).min(ds.features.ncols()).max(1);
        let a = pls_loocv(&wb, cap(&wb))?;
        let b = pls_loocv(&sd, cap(&sd))?;
        log::info!("age: WaveletBrain r = {:.3}, MAE = {:.2}; ShapeDNA r = {:.3}", a.pearson_r, a.mae, b.pearson_r);
        report.regression = Some(RegressionComparison {
            subjects: wb.len(),
            waveletbrain: a,
            shapedna: b,
        });
    }
    Ok(report)
}

/// Provenance and results of one pipeline run. Everything except `timing`
/// is reproducible from the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub stats: RunStats,
    pub failures: Vec<FailureRecord>,
    pub dictionaries: Vec<DictionaryInfo>,
    pub training_subjects: usize,
    pub training_subjects_hash: String,
    pub descriptor_layout: Vec<String>,
    pub descriptor_len: usize,
    pub experiments: ExperimentReport,
    pub timing: Timings,
}

impl RunReport {
    pub fn new(output: &PipelineOutput, config: &PipelineConfig, experiments: ExperimentReport) -> Self {
        Self {
            tool_version: crate::TOOL_VERSION.to_string(),
            config: config.clone(),
            stats: output.stats.clone(),
            failures: output.failures.clone(),
            dictionaries: output.dictionary_info.clone(),
            training_subjects: output.training_subjects.len(),
            training_subjects_hash: output.training_subjects_hash.clone(),
            descriptor_layout: output.waveletbrain.block_layout.clone(),
            descriptor_len: output.waveletbrain.descriptor_len(),
            experiments,
            timing: output.timing.clone(),
        }
    }

    /// Writes `Z.csv`, `shapedna.csv`, the dictionaries, `report.json` and,
    /// when regression ran, `scatter.csv` into `dir`.
    pub fn write_outputs(&self, output: &PipelineOutput, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let z = dir.join("Z.csv");
        output
            .waveletbrain
            .write_csv(std::fs::File::create(&z).map_err(|e| Error::io(&z, e))?)?;
        written.push(z);
        let s = dir.join("shapedna.csv");
        write_feature_csv(
            std::fs::File::create(&s).map_err(|e| Error::io(&s, e))?,
            &output.waveletbrain.subject_ids,
            &output.shapedna,
        )?;
        written.push(s);
        for (tag, dict) in &output.dictionaries {
            let name = match tag {
                None => "dict.bin".to_string(),
                Some(t) => format!("dict_{t}.bin"),
            };
            let p = dir.join(name);
            std::fs::write(&p, dictionary_to_bytes(dict)).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        if let Some(reg) = &self.experiments.regression {
            let p = dir.join("scatter.csv");
            write_scatter_csv(&p, &reg.waveletbrain)?;
            written.push(p);
        }
        let r = dir.join("report.json");
        write_json(&r, self)?;
        written.push(r);
        Ok(written)
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `subject_id,true_age,predicted_age` rows.
pub fn write_scatter_csv(path: &Path, report: &RegressionReport) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in &report.scatter_rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
