use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Provenance note attached to every comparison report.
pub const PAIRED_TEST_NOTE: &str = "two-sided paired t-test over common cross-validation folds";

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard deviation with the `n - 1` denominator; 0 for a single value.
pub fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Dimension(format!("correlation of {} and {} values", a.len(), b.len())));
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateData("correlation with a constant series".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn mae(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "MAE of {} and {} values",
            truth.len(),
            predicted.len()
        )));
    }
    Ok(truth.iter().zip(predicted).map(|(t, p)| (t - p).abs()).sum::<f64>() / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub p_value: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    /// Mean of `a - b`.
    pub mean_difference: f64,
    /// Set when the differences have zero variance; `p_value` is then 1.
    pub degenerate: bool,
    pub test: String,
}

/// Two-sided paired t-test on per-fold accuracies.
pub fn paired_comparison(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} folds against {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Domain("a paired test needs at least 2 folds".into()));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diff.len();
    let md = mean(&diff);
    let sd = sample_std(&diff);
    let df = n - 1;
    if sd == 0.0 || !sd.is_finite() {
        return Ok(PairedTest {
            p_value: 1.0,
            t_statistic: 0.0,
            degrees_of_freedom: df,
            mean_difference: md,
            degenerate: true,
            test: PAIRED_TEST_NOTE.into(),
        });
    }
    let t = md / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(PairedTest {
        p_value: p,
        t_statistic: t,
        degrees_of_freedom: df,
        mean_difference: md,
        degenerate: false,
        test: PAIRED_TEST_NOTE.into(),
    })
}
