//! Single-response partial least squares (PLS1) via NIPALS.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mae, pearson_r, LabeledDataset};
use crate::error::{Error, Result};

/// Residual covariance below this fraction of the initial one ends extraction.
const EXHAUSTED: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct PlsModel {
    /// `d x a` weight vectors.
    pub weights: DMatrix<f64>,
    /// `d x a` X-loadings.
    pub loadings: DMatrix<f64>,
    /// Y-loadings, one per component.
    pub y_loadings: Vec<f64>,
    /// Regression vector on the original (uncentred) features.
    pub coefficients: DVector<f64>,
    pub intercept: f64,
    /// Components actually extracted; fewer than requested once `y` is fully explained.
    pub n_components: usize,
}

impl PlsModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Fits `ncomp` latent components of `x` (rows are samples) against `y`.
pub fn pls_fit(x: &DMatrix<f64>, y: &[f64], ncomp: usize) -> Result<PlsModel> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("{n} rows for {} targets", y.len())));
    }
    if ncomp == 0 || n < 2 || ncomp > (n - 1).min(d) {
        return Err(Error::Domain(format!(
            "{ncomp} components requested, at most min(n - 1, d) = {} allowed",
            n.saturating_sub(1).min(d)
        )));
    }
    let x_mean: DVector<f64> = DVector::from_fn(d, |j, _| x.column(j).mean());
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut e = x.clone();
    for (j, mut col) in e.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_mean[j]);
    }
    if e.iter().all(|v| *v == 0.0) {
        return Err(Error::Rank("features have zero variance".into()));
    }
    let mut f = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let mut weights = DMatrix::zeros(d, ncomp);
    let mut loadings = DMatrix::zeros(d, ncomp);
    let mut y_loadings = Vec::with_capacity(ncomp);
    let mut first_norm = None;
    for a in 0..ncomp {
        let mut w = e.tr_mul(&f);
        let norm = w.norm();
        let reference = *first_norm.get_or_insert(norm);
        if norm <= EXHAUSTED * reference || norm == 0.0 {
            break;
        }
        w /= norm;
        let t = &e * &w;
        let tt = t.dot(&t);
        if tt == 0.0 {
            break;
        }
        let p = e.tr_mul(&t) / tt;
        let q = f.dot(&t) / tt;
        e -= &t * p.transpose();
        f -= &t * q;
        weights.set_column(a, &w);
        loadings.set_column(a, &p);
        y_loadings.push(q);
    }
    let used = y_loadings.len();
    if used == 0 {
        return Err(Error::Rank("features carry no covariance with the response".into()));
    }
    let weights = weights.columns(0, used).clone_owned();
    let loadings = loadings.columns(0, used).clone_owned();
    // B = W (P^T W)^{-1} q
    let ptw = loadings.tr_mul(&weights);
    let inv = ptw
        .try_inverse()
        .ok_or_else(|| Error::Rank("loading-weight product is singular".into()))?;
    let coefficients = &weights * (inv * DVector::from_vec(y_loadings.clone()));
    let intercept = y_mean - coefficients.dot(&x_mean);
    Ok(PlsModel {
        weights,
        loadings,
        y_loadings,
        coefficients,
        intercept,
        n_components: used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub subject_id: String,
    pub true_age: f64,
    pub predicted_age: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub predictions: Vec<f64>,
    pub pearson_r: f64,
    /// Mean absolute error in years.
    pub mae: f64,
    pub ncomp: usize,
    pub scatter_rows: Vec<ScatterRow>,
}

/// Leave-one-out predictions: each subject from a model fitted on the rest.
pub fn pls_loocv(dataset: &LabeledDataset, ncomp: usize) -> Result<RegressionReport> {
    let y = dataset.value_labels()?;
    let n = dataset.len();
    let x = &dataset.features;
    let predictions: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|held| {
            let train: Vec<usize> = (0..n).filter(|&i| i != held).collect();
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = pls_fit(&xt, &yt, ncomp)?;
            let row: Vec<f64> = x.row(held).iter().copied().collect();
            Ok(model.predict(&row))
        })
        .collect::<Result<_>>()?;
    let scatter_rows = dataset
        .subject_ids
        .iter()
        .zip(y)
        .zip(&predictions)
        .map(|((id, &t), &p)| ScatterRow {
            subject_id: id.clone(),
            true_age: t,
            predicted_age: p,
        })
        .collect();
    Ok(RegressionReport {
        pearson_r: pearson_r(y, &predictions)?,
        mae: mae(y, &predictions)?,
        predictions,
        ncomp,
        scatter_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::Labels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn random_matrix(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn exact_linear_response_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(30, 5, &mut rng);
        let beta = [1.0, -2.0, 0.5, 3.0, 0.0];
        let y: Vec<f64> = (0..30).map(|i| 4.0 + (0..5).map(|j| beta[j] * x[(i, j)]).sum::<f64>()).collect();
        let model = pls_fit(&x, &y, 5).unwrap();
        for i in 0..30 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            assert!((model.predict(&row) - y[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn wide_collinear_features_fit() {
        // 40 columns built from 5 latent factors: rank 5 << d = 40.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let latent = random_matrix(20, 5, &mut rng);
        let mix = random_matrix(5, 40, &mut rng);
        let x = &latent * &mix;
        let y: Vec<f64> = (0..20).map(|i| latent[(i, 0)] - latent[(i, 3)]).collect();
        assert_eq!(x.clone().svd(false, false).rank(1e-9 * x.norm()), 5);
        let model = pls_fit(&x, &y, 5).unwrap();
        assert!(model.coefficients.iter().all(|b| b.is_finite()));
        let row: Vec<f64> = x.row(0).iter().copied().collect();
        assert!((model.predict(&row) - y[0]).abs() < 1e-6);
    }

    #[test]
    fn single_direction_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = random_matrix(200, 6, &mut rng) * 0.05;
        let dir = DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.0]).normalize();
        let s: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        for i in 0..200 {
            for j in 0..6 {
                x[(i, j)] += s[i] * dir[j];
            }
        }
        let model = pls_fit(&x, &s, 1).unwrap();
        let cos = model.weights.column(0).dot(&dir);
        assert!(cos.abs() >= 0.99, "{cos}");
    }

    #[test]
    fn fit_errors() {
        let x = DMatrix::from_element(5, 3, 2.0);
        assert!(matches!(pls_fit(&x, &[1.0, 2.0, 3.0, 4.0, 5.0], 1), Err(Error::Rank(_))));
        let x = DMatrix::from_fn(5, 3, |i, j| (i * j) as f64);
        assert!(matches!(pls_fit(&x, &[0.0; 5], 4), Err(Error::Domain(_))));
        assert!(matches!(pls_fit(&x, &[0.0; 5], 0), Err(Error::Domain(_))));
    }

    fn regression_set(n: usize, noise: f64, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(n, 8, &mut rng);
        let e = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| 60.0 + 3.0 * x[(i, 0)] - 2.0 * x[(i, 5)] + if noise > 0.0 { e.sample(&mut rng) } else { 0.0 })
            .collect();
        let ids = (0..n).map(|i| format!("s{i}")).collect();
        LabeledDataset::new(x, Labels::Values(y), ids).unwrap()
    }

    #[test]
    fn loocv_on_exact_model() {
        let ds = regression_set(40, 0.0, 4);
        let r = pls_loocv(&ds, 8).unwrap();
        assert!((r.pearson_r - 1.0).abs() < 1e-6);
        assert!(r.mae < 1e-6);
        assert_eq!(r.scatter_rows.len(), 40);
    }

    #[test]
    fn loocv_on_unrelated_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = regression_set(120, 0.0, 6);
        let y: Vec<f64> = (0..120).map(|_| rng.random::<f64>() * 30.0 + 50.0).collect();
        let null = LabeledDataset { labels: Labels::Values(y), ..ds };
        let r = pls_loocv(&null, 2).unwrap();
        assert!(r.pearson_r.abs() < 0.2, "{}", r.pearson_r);
    }

    #[test]
    fn noise_degrades_correlation() {
        let rs: Vec<f64> = [0.5, 2.0, 8.0]
            .iter()
            .map(|&s| pls_loocv(&regression_set(80, s, 7), 3).unwrap().pearson_r)
            .collect();
        assert!(rs[0] > rs[1] && rs[1] > rs[2], "{rs:?}");
    }

    #[test]
    fn report_metrics_match_definitions() {
        let r = pls_loocv(&regression_set(30, 1.0, 8), 3).unwrap();
        let t: Vec<f64> = r.scatter_rows.iter().map(|s| s.true_age).collect();
        let p: Vec<f64> = r.scatter_rows.iter().map(|s| s.predicted_age).collect();
        let n = t.len() as f64;
        let (mt, mp) = (t.iter().sum::<f64>() / n, p.iter().sum::<f64>() / n);
        let cov: f64 = t.iter().zip(&p).map(|(a, b)| (a - mt) * (b - mp)).sum();
        let vt: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
        let vp: f64 = p.iter().map(|b| (b - mp).powi(2)).sum();
        assert!((r.pearson_r - cov / (vt * vp).sqrt()).abs() < 1e-12);
        let mae: f64 = t.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
        assert!((r.mae - mae).abs() < 1e-12);
    }
}
