//! Synthetic cohorts of bump spheres with a manifest, for end-to-end runs.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Diagnosis, Manifest, ManifestRow, Sex};
use crate::bof::SurfaceTag;
use crate::error::{Error, Result};
use crate::mesh::{write_mesh, MeshFormat};
use crate::synth::{bump_sphere, SynthSpec};

/// Bump amplitude per subject: a constant or a uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AmplitudeDist {
    Fixed(f64),
    Uniform { low: f64, high: f64 },
}

impl AmplitudeDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            AmplitudeDist::Fixed(a) => a,
            AmplitudeDist::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    fn range(&self) -> (f64, f64) {
        match *self {
            AmplitudeDist::Fixed(a) => (a, a),
            AmplitudeDist::Uniform { low, high } => (low, high),
        }
    }
}

/// Bumps per subject: a constant or a uniform integer draw from `low..=high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BumpCount {
    Fixed(usize),
    Uniform { low: usize, high: usize },
}

impl BumpCount {
    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            BumpCount::Fixed(n) => n,
            BumpCount::Uniform { low, high } => rng.random_range(low..=high),
        }
    }

    fn range(&self) -> (usize, usize) {
        match *self {
            BumpCount::Fixed(n) => (n, n),
            BumpCount::Uniform { low, high } => (low, high),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortClass {
    /// Diagnosis written to the manifest; `None` writes `NA`.
    pub diagnosis: Option<Diagnosis>,
    pub count: usize,
    pub amplitude: AmplitudeDist,
}

/// `age = intercept + slope * amplitude + N(0, noise_sd^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeRule {
    pub intercept: f64,
    pub slope: f64,
    pub noise_sd: f64,
}

impl AgeRule {
    pub fn age(&self, amplitude: f64, noise: f64) -> f64 {
        self.intercept + self.slope * amplitude + noise
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    #[serde(default = "default_subdivision")]
    pub subdivision: u32,
    #[serde(default = "default_bumps")]
    pub n_bumps: BumpCount,
    #[serde(default = "default_width")]
    pub bump_width: f64,
    #[serde(default)]
    pub seed: u64,
    pub classes: Vec<CohortClass>,
    #[serde(default)]
    pub age: Option<AgeRule>,
}

fn default_subdivision() -> u32 {
    4
}

fn default_bumps() -> BumpCount {
    BumpCount::Fixed(30)
}

fn default_width() -> f64 {
    0.3
}

impl CohortConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn validate(&self) -> Result<()> {
        if self.classes.iter().map(|c| c.count).sum::<usize>() == 0 {
            return Err(Error::Usage("cohort has no subjects".into()));
        }
        for c in &self.classes {
            let (lo, hi) = c.amplitude.range();
            if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                return Err(Error::Usage(format!("amplitude range [{lo}, {hi}] must lie in (0, 1)")));
            }
        }
        let (lo, hi) = self.n_bumps.range();
        if !(lo >= 1 && lo <= hi) {
            return Err(Error::Usage(format!("bump count range [{lo}, {hi}] is empty or zero")));
        }
        if let Some(age) = &self.age {
            if !(age.noise_sd >= 0.0) {
                return Err(Error::Usage("age noise_sd must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Subject as drawn from the cohort distribution. The bump count is shared
/// by a subject's four surfaces; bump positions are not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSubject {
    pub subject_id: String,
    pub diagnosis: Option<Diagnosis>,
    pub amplitude: f64,
    pub n_bumps: usize,
    pub age: Option<f64>,
    pub sex: Sex,
    /// Bump-centre seed per surface, in [`SurfaceTag::ALL`] order.
    pub surface_seeds: [u64; 4],
}

/// Draws every subject; deterministic in `config.seed`.
pub fn draw_cohort(config: &CohortConfig) -> Result<Vec<CohortSubject>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut subjects = Vec::new();
    for class in &config.classes {
        for _ in 0..class.count {
            let amplitude = class.amplitude.sample(&mut rng);
            let n_bumps = config.n_bumps.sample(&mut rng);
            let noise = match &config.age {
                Some(rule) if rule.noise_sd > 0.0 => {
                    Normal::new(0.0, rule.noise_sd).expect("valid sd").sample(&mut rng)
                }
                _ => 0.0,
            };
            let sex = if rng.random::<bool>() { Sex::F } else { Sex::M };
            let surface_seeds = [rng.random(), rng.random(), rng.random(), rng.random()];
            subjects.push(CohortSubject {
                subject_id: format!("sub-{:04}", subjects.len() + 1),
                diagnosis: class.diagnosis,
                amplitude,
                n_bumps,
                age: config.age.map(|r| r.age(amplitude, noise)),
                sex,
                surface_seeds,
            });
        }
    }
    Ok(subjects)
}

/// Writes `meshes/<subject>_<tag>.off`, `manifest.csv` and `truth.csv`
/// under `dir` and returns the manifest.
pub fn generate_cohort(config: &CohortConfig, dir: &Path) -> Result<Manifest> {
    let subjects = draw_cohort(config)?;
    let mesh_dir = dir.join("meshes");
    std::fs::create_dir_all(&mesh_dir).map_err(|e| Error::io(&mesh_dir, e))?;
    let jobs: Vec<(usize, SurfaceTag)> = (0..subjects.len())
        .flat_map(|s| SurfaceTag::ALL.map(|t| (s, t)))
        .collect();
    jobs.par_iter()
        .map(|&(s, tag)| {
            let subject = &subjects[s];
            let spec = SynthSpec {
                bump_width: config.bump_width,
                ..SynthSpec::bump_sphere(
                    config.subdivision,
                    subject.amplitude,
                    subject.n_bumps,
                    subject.surface_seeds[tag as usize],
                )
            };
            let mesh = bump_sphere(&spec)?;
            write_mesh(mesh_dir.join(mesh_file(&subject.subject_id, tag)), &mesh, MeshFormat::Off)
        })
        .collect::<Result<()>>()?;

    let rows = subjects
        .iter()
        .map(|s| ManifestRow {
            subject_id: s.subject_id.clone(),
            paths: SurfaceTag::ALL.map(|t| PathBuf::from("meshes").join(mesh_file(&s.subject_id, t))),
            diagnosis: s.diagnosis,
            age: s.age,
            sex: Some(s.sex),
        })
        .collect();
    let manifest = Manifest::new(rows, dir)?;
    manifest.save(dir.join("manifest.csv"))?;

    let truth = dir.join("truth.csv");
    let mut w = csv::Writer::from_path(&truth)?;
    w.write_record(["subject_id", "amplitude", "n_bumps"])?;
    for s in &subjects {
        w.write_record([s.subject_id.clone(), s.amplitude.to_string(), s.n_bumps.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&truth, e))?;
    Ok(manifest)
}

fn mesh_file(subject: &str, tag: SurfaceTag) -> String {
    format!("{subject}_{tag}.off")
}
