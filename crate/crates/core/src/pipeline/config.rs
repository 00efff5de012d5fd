use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::EigenSolver;
use crate::learn::SvmOptions;

/// Soft-assignment bandwidth: `"auto"` takes the dictionary's mean
/// nearest-atom distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Fixed(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Auto(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Eigenpairs per surface.
    pub eigenpairs: usize,
    /// Wavelet scales per signature; signatures have `level + 1` rows.
    pub level: usize,
    pub vocab: usize,
    pub sigma: Bandwidth,
    pub dict_seed: u64,
    pub area_normalize: bool,
    pub with_differences: bool,
    /// Train one dictionary per surface tag instead of a shared one.
    pub per_surface_dictionaries: bool,
    /// When set, only these subjects contribute signatures to the dictionary.
    pub train_subjects: Option<Vec<String>>,
    /// Eigenvalues per surface in the ShapeDNA baseline.
    pub shapedna_len: usize,
    pub solver: EigenSolver,
    /// Share of surfaces allowed to fail before the run aborts.
    pub max_failure_fraction: f64,
    /// Worker threads; 0 uses all available cores.
    pub jobs: usize,
    /// Binary task such as `"AD-NC"`; classification is skipped when unset.
    pub task: Option<String>,
    pub folds: usize,
    pub cv_seed: u64,
    pub balance_seed: u64,
    pub svm: SvmOptions,
    /// Run PLS age regression when ages are available.
    pub regress: bool,
    pub pls_ncomp: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            eigenpairs: 201,
            level: 3,
            vocab: 64,
            sigma: Bandwidth::default(),
            dict_seed: 0,
            area_normalize: true,
            with_differences: false,
            per_surface_dictionaries: false,
            train_subjects: None,
            shapedna_len: 50,
            solver: EigenSolver::Auto,
            max_failure_fraction: 0.1,
            jobs: 0,
            task: None,
            folds: 10,
            cv_seed: 0,
            balance_seed: 0,
            svm: SvmOptions::default(),
            regress: false,
            pls_ncomp: 10,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eigenpairs", self.eigenpairs),
            ("level", self.level),
            ("vocab", self.vocab),
            ("shapedna_len", self.shapedna_len),
            ("folds", self.folds),
            ("pls_ncomp", self.pls_ncomp),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Usage(format!("config field {name} must be positive")));
        }
        if self.eigenpairs < 2 {
            return Err(Error::Usage("eigenpairs must be at least 2".into()));
        }
        if self.shapedna_len >= self.eigenpairs {
            return Err(Error::Usage(format!(
                "shapedna_len {} must be below eigenpairs {}",
                self.shapedna_len, self.eigenpairs
            )));
        }
        if let Bandwidth::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Usage(format!("sigma must be positive or \"auto\", got {s}")));
            }
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(Error::Usage("max_failure_fraction must lie in [0, 1]".into()));
        }
        if !(self.svm.c > 0.0 && self.svm.tolerance > 0.0 && self.svm.max_epochs > 0) {
            return Err(Error::Usage("svm settings must be positive".into()));
        }
        if let Some(task) = &self.task {
            super::parse_task(task)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"sigma\":\"auto\""));
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_and_fixed_sigma() {
        let c: PipelineConfig = serde_json::from_str(r#"{"eigenpairs": 101, "sigma": 0.5}"#).unwrap();
        assert_eq!(c.eigenpairs, 101);
        assert_eq!(c.sigma, Bandwidth::Fixed(0.5));
        assert_eq!(c.vocab, 64);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"eigenpair": 3}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sigma": "wide"}"#).is_err());
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        for c in [
            PipelineConfig { vocab: 0, ..Default::default() },
            PipelineConfig { sigma: Bandwidth::Fixed(-1.0), ..Default::default() },
            PipelineConfig { shapedna_len: 201, ..Default::default() },
            PipelineConfig { task: Some("AD".into()), ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::Usage(_))), "{c:?}");
        }
    }
}
