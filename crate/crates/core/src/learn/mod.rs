//! Descriptor evaluation: linear SVM classification under stratified
//! cross-validation, PLS age regression under leave-one-out, and paired
//! comparisons of fold accuracies.

mod pls;
mod stats;
mod svm;

pub use pls::{pls_fit, pls_loocv, PlsModel, RegressionReport, ScatterRow};
pub use stats::{mae, mean, paired_comparison, pearson_r, sample_std, PairedTest, PAIRED_TEST_NOTE};
pub use svm::{cross_validate_svm, train_linear_svm, ClassificationReport, LinearSvm, SvmOptions};

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-subject targets: class tags or real values (age in years).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    Classes(Vec<String>),
    Values(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `n x d`, one row per subject.
    pub features: DMatrix<f64>,
    pub labels: Labels,
    pub subject_ids: Vec<String>,
    pub group_ids: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(features: DMatrix<f64>, labels: Labels, subject_ids: Vec<String>) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || subject_ids.len() != n {
            return Err(Error::Dimension(format!(
                "{n} feature rows, {} labels, {} subject ids",
                labels.len(),
                subject_ids.len()
            )));
        }
        if n < 2 {
            return Err(Error::Domain(format!("a dataset needs at least 2 subjects, got {n}")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("features contain missing or non-finite values".into()));
        }
        match &labels {
            Labels::Classes(c) => {
                if c.iter().collect::<BTreeSet<_>>().len() < 2 {
                    return Err(Error::Domain("classification needs at least 2 classes".into()));
                }
            }
            Labels::Values(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Domain("regression targets contain non-finite values".into()));
                }
            }
        }
        Ok(Self {
            features,
            labels,
            subject_ids,
            group_ids: None,
        })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], labels: Labels, subject_ids: Vec<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("feature rows have different lengths".into()));
        }
        let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(features, labels, subject_ids)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The rows listed in `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let features = self.features.select_rows(indices);
        let labels = match &self.labels {
            Labels::Classes(c) => Labels::Classes(indices.iter().map(|&i| c[i].clone()).collect()),
            Labels::Values(v) => Labels::Values(indices.iter().map(|&i| v[i]).collect()),
        };
        Self {
            features,
            labels,
            subject_ids: indices.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            group_ids: self
                .group_ids
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    fn class_labels(&self) -> Result<&[String]> {
        match &self.labels {
            Labels::Classes(c) => Ok(c),
            Labels::Values(_) => Err(Error::Domain("expected class labels, found real values".into())),
        }
    }

    fn value_labels(&self) -> Result<&[f64]> {
        match &self.labels {
            Labels::Values(v) => Ok(v),
            Labels::Classes(_) => Err(Error::Domain("expected real-valued labels, found classes".into())),
        }
    }
}

/// Sorted distinct class names.
pub fn class_names(labels: &[String]) -> Vec<String> {
    labels.iter().collect::<BTreeSet<_>>().into_iter().cloned().collect()
}

/// Subsamples the larger of two classes, uniformly and seeded, down to the
/// size of the smaller one. Row order is preserved.
pub fn balance_classes(dataset: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let labels = dataset.class_labels()?;
    let names = class_names(labels);
    if names.len() != 2 {
        return Err(Error::Domain(format!("balancing needs exactly 2 classes, found {}", names.len())));
    }
    let members: Vec<Vec<usize>> = names
        .iter()
        .map(|c| (0..labels.len()).filter(|&i| &labels[i] == c).collect())
        .collect();
    let target = members[0].len().min(members[1].len());
    if members[0].len() == members[1].len() {
        return Ok(dataset.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::with_capacity(2 * target);
    for group in &members {
        if group.len() == target {
            keep.extend(group);
        } else {
            keep.extend(group.choose_multiple(&mut rng, target));
        }
    }
    keep.sort_unstable();
    Ok(dataset.subset(&keep))
}

/// Fold index per example. Each class is shuffled with `seed` and dealt
/// round-robin, continuing the deal across classes so fold sizes differ by
/// at most one.
pub fn stratified_folds(labels: &[String], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Domain(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    let mut next = 0;
    for class in class_names(labels) {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::Domain(format!(
                "class {class} has {} examples, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

/// Column means and standard deviations of the given rows; constant columns
/// get a unit scale.
pub(crate) fn column_stats(x: &DMatrix<f64>, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let d = x.ncols();
    let mut mu = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for j in 0..d {
        let m = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / n;
        let var = rows.iter().map(|&i| (x[(i, j)] - m).powi(2)).sum::<f64>() / n;
        mu[j] = m;
        sd[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    (mu, sd)
}
