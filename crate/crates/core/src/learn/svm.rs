//! Linear soft-margin SVM trained by dual coordinate descent.
//!
//! The bias is learned as the weight of a constant unit feature, so it is
//! regularised together with `w`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{class_names, column_stats, mean, sample_std, stratified_folds, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmOptions {
    /// Penalty on hinge losses.
    pub c: f64,
    /// Stop once `(primal - dual) <= tolerance * primal`.
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-6,
            max_epochs: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
    pub relative_gap: f64,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains on rows `x` with targets `y` in `{-1, +1}`. Coordinates are
/// visited in a seeded random order each epoch.
pub fn train_linear_svm(x: &[Vec<f64>], y: &[f64], options: &SvmOptions, seed: u64) -> Result<LinearSvm> {
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(Error::Dimension(format!("{n} rows for {} targets", y.len())));
    }
    if !(options.c > 0.0 && options.c.is_finite()) {
        return Err(Error::Domain(format!("SVM penalty must be positive, got {}", options.c)));
    }
    let d = x[0].len();
    let c = options.c;
    let q_diag: Vec<f64> = x.iter().map(|r| dot(r, r) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = f64::INFINITY;

    for epoch in 1..=options.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = y[i] * (dot(&w, &x[i]) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(&x[i]) {
                    *wj += step * xj;
                }
                b += step;
            }
        }
        let norm2 = dot(&w, &w) + b * b;
        let hinge: f64 = x
            .iter()
            .zip(y)
            .map(|(r, &t)| (1.0 - t * (dot(&w, r) + b)).max(0.0))
            .sum();
        let primal = 0.5 * norm2 + c * hinge;
        let dual = alpha.iter().sum::<f64>() - 0.5 * norm2;
        gap = (primal - dual) / primal.max(f64::MIN_POSITIVE);
        if gap <= options.tolerance {
            return Ok(LinearSvm {
                weights: w,
                bias: b,
                epochs: epoch,
                relative_gap: gap,
            });
        }
    }
    Err(Error::Convergence {
        iterations: options.max_epochs,
        residual: gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// `[positive, negative]`; confusion rows are true classes in this order.
    pub classes: Vec<String>,
    pub fold_accuracies: Vec<f64>,
    /// Percent.
    pub mean_accuracy: f64,
    /// Percent, sample standard deviation over folds.
    pub std_accuracy: f64,
    /// `confusion[t][p]`: examples of true class `t` predicted as `p`.
    pub confusion: [[usize; 2]; 2],
    pub n_examples: usize,
    pub folds: usize,
    pub seed: u64,
    pub svm: SvmOptions,
    /// Hash of the subject-to-fold assignment, used to check pairing.
    pub split_digest: String,
}

/// Stratified `folds`-fold evaluation of a linear SVM. Features are
/// standardised with training-fold statistics only.
pub fn cross_validate_svm(
    dataset: &LabeledDataset,
    folds: usize,
    options: &SvmOptions,
    seed: u64,
) -> Result<ClassificationReport> {
    let labels = dataset.class_labels()?;
    let classes = class_names(labels);
    if classes.len() != 2 {
        return Err(Error::Domain(format!("binary classification needs 2 classes, found {}", classes.len())));
    }
    let assignment = stratified_folds(labels, folds, seed)?;
    let y: Vec<f64> = labels.iter().map(|l| if *l == classes[0] { 1.0 } else { -1.0 }).collect();
    let x = &dataset.features;

    let outcomes: Vec<Vec<(usize, bool)>> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..x.nrows()).filter(|&i| assignment[i] != fold).collect();
            let test: Vec<usize> = (0..x.nrows()).filter(|&i| assignment[i] == fold).collect();
            let (mu, sd) = column_stats(x, &train);
            let rows = |idx: &[usize]| standardized_rows(x, idx, &mu, &sd);
            let train_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = train_linear_svm(&rows(&train), &train_y, options, seed.wrapping_add(fold as u64))?;
            Ok(test
                .iter()
                .zip(rows(&test))
                .map(|(&i, r)| (i, model.decision(&r) >= 0.0))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut confusion = [[0usize; 2]; 2];
    let mut fold_accuracies = Vec::with_capacity(folds);
    for fold in &outcomes {
        let mut correct = 0;
        for &(i, positive) in fold {
            let truth = usize::from(y[i] < 0.0);
            let predicted = usize::from(!positive);
            confusion[truth][predicted] += 1;
            correct += usize::from(truth == predicted);
        }
        fold_accuracies.push(correct as f64 / fold.len() as f64);
    }
    Ok(ClassificationReport {
        classes,
        mean_accuracy: 100.0 * mean(&fold_accuracies),
        std_accuracy: 100.0 * sample_std(&fold_accuracies),
        fold_accuracies,
        confusion,
        n_examples: x.nrows(),
        folds,
        seed,
        svm: options.clone(),
        split_digest: split_digest(&dataset.subject_ids, &assignment),
    })
}

fn standardized_rows(x: &DMatrix<f64>, idx: &[usize], mu: &[f64], sd: &[f64]) -> Vec<Vec<f64>> {
    idx.iter()
        .map(|&i| (0..x.ncols()).map(|j| (x[(i, j)] - mu[j]) / sd[j]).collect())
        .collect()
}

fn split_digest(ids: &[String], assignment: &[usize]) -> String {
    let mut h = blake3::Hasher::new();
    for (id, f) in ids.iter().zip(assignment) {
        h.update(id.as_bytes());
        h.update(&[0]);
        h.update(&(*f as u64).to_le_bytes());
    }
    h.finalize().to_hex().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::Labels;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_classes(n_per: usize, sep: f64, d: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (class, shift) in [("AD", sep), ("NC", 0.0)] {
            for _ in 0..n_per {
                let mut r: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                r[0] += shift;
                rows.push(r);
                labels.push(class.to_string());
            }
        }
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        LabeledDataset::from_rows(&rows, Labels::Classes(labels), ids).unwrap()
    }

    #[test]
    fn separable_classes_are_learned() {
        let ds = gaussian_classes(50, 6.0, 5, 1);
        let report = cross_validate_svm(&ds, 10, &SvmOptions::default(), 7).unwrap();
        assert!(report.mean_accuracy >= 99.0, "{}", report.mean_accuracy);
        assert_eq!(report.fold_accuracies.len(), 10);
        let total: usize = report.confusion.iter().flatten().sum();
        assert_eq!(total, 100);
        assert!((report.mean_accuracy - 100.0 * mean(&report.fold_accuracies)).abs() < 1e-12);
    }

    #[test]
    fn permuted_labels_sit_near_chance() {
        let mut ds = gaussian_classes(100, 6.0, 5, 2);
        if let Labels::Classes(c) = &mut ds.labels {
            c.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        }
        let report = cross_validate_svm(&ds, 10, &SvmOptions::default(), 7).unwrap();
        assert!((40.0..=60.0).contains(&report.mean_accuracy), "{}", report.mean_accuracy);
    }

    #[test]
    fn duplicated_columns_leave_predictions_unchanged() {
        let ds = gaussian_classes(25, 1.5, 4, 4);
        let dup = DMatrix::from_fn(ds.len(), 8, |i, j| ds.features[(i, j % 4)]);
        let ds2 = LabeledDataset { features: dup, ..ds.clone() };
        let opts = SvmOptions { c: 1e-3, ..Default::default() };
        let a = cross_validate_svm(&ds, 10, &opts, 5).unwrap();
        let b = cross_validate_svm(&ds2, 10, &opts, 5).unwrap();
        assert_eq!(a.fold_accuracies, b.fold_accuracies);
    }

    #[test]
    fn feature_scale_does_not_change_predictions() {
        // Training-fold standardisation absorbs any global positive scale.
        let ds = gaussian_classes(30, 2.0, 3, 6);
        let scaled = LabeledDataset { features: &ds.features * 250.0, ..ds.clone() };
        let a = cross_validate_svm(&ds, 5, &SvmOptions::default(), 1).unwrap();
        let b = cross_validate_svm(&scaled, 5, &SvmOptions::default(), 1).unwrap();
        assert_eq!(a.confusion, b.confusion);
        assert_eq!(a.fold_accuracies, b.fold_accuracies);
    }

    #[test]
    fn solver_reaches_duality_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] + 0.3 * r[1] > 0.0 { 1.0 } else { -1.0 }).collect();
        let model = train_linear_svm(&x, &y, &SvmOptions::default(), 0).unwrap();
        assert!(model.relative_gap <= 1e-6);
        assert!(matches!(
            train_linear_svm(&x, &y, &SvmOptions { c: 0.0, ..Default::default() }, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn test_rows_do_not_influence_their_fold() {
        let ds = gaussian_classes(20, 1.0, 3, 8);
        let assignment = stratified_folds(ds.class_labels().unwrap(), 4, 2).unwrap();
        let test_row = assignment.iter().position(|&f| f == 0).unwrap();
        let mut moved = ds.clone();
        for j in 0..3 {
            moved.features[(test_row, j)] += 1e3;
        }
        let train: Vec<usize> = (0..ds.len()).filter(|&i| assignment[i] != 0).collect();
        assert_eq!(column_stats(&ds.features, &train), column_stats(&moved.features, &train));
    }
}
