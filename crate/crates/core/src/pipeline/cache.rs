//! Content-addressed store of per-surface signatures and spectra.
//!
//! An entry is `<key>.sgws` (signature store) plus `<key>.json` (eigenvalues
//! and area). Files are written under a temporary name and renamed, so a
//! concurrent reader sees either nothing or a complete file.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::EigenOptions;
use crate::sgwt::{parse_sgws, sgws_to_bytes, SgwsMatrix};

const KEY_VERSION: &str = "surfwave-cache-1";

static TEMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Everything downstream stages need from one surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpectrum {
    pub sgws: SgwsMatrix,
    pub eigenvalues: Vec<f64>,
    pub mesh_area: f64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    eigenvalues: Vec<f64>,
    mesh_area: f64,
    num_vertices: usize,
    label: String,
}

/// Hash of the mesh file contents and every parameter that affects the
/// signature.
pub fn cache_key(mesh_bytes: &[u8], eigenpairs: usize, level: usize, eigen: &EigenOptions) -> String {
    let mut h = blake3::Hasher::new();
    h.update(KEY_VERSION.as_bytes());
    h.update(&(mesh_bytes.len() as u64).to_le_bytes());
    h.update(mesh_bytes);
    h.update(&(eigenpairs as u64).to_le_bytes());
    h.update(&(level as u64).to_le_bytes());
    let solver = serde_json::to_string(eigen).expect("options serialise");
    h.update(solver.as_bytes());
    h.finalize().to_hex().to_string()
}

#[derive(Debug, Clone)]
pub struct SignatureCache {
    dir: PathBuf,
}

impl SignatureCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{key}.sgws")), self.dir.join(format!("{key}.json")))
    }

    /// The cached entry, or `None` when absent or unreadable.
    pub fn get(&self, key: &str, label: &str) -> Option<SurfaceSpectrum> {
        let (sgws_path, json_path) = self.paths(key);
        let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(json_path).ok()?).ok()?;
        let sgws = parse_sgws(&std::fs::read(sgws_path).ok()?, label).ok()?;
        if sgws.num_vertices() != sidecar.num_vertices {
            log::warn!("cache entry {key} is inconsistent; recomputing");
            return None;
        }
        Some(SurfaceSpectrum {
            sgws,
            eigenvalues: sidecar.eigenvalues,
            mesh_area: sidecar.mesh_area,
        })
    }

    pub fn put(&self, key: &str, entry: &SurfaceSpectrum) -> Result<()> {
        let (sgws_path, json_path) = self.paths(key);
        let sidecar = Sidecar {
            eigenvalues: entry.eigenvalues.clone(),
            mesh_area: entry.mesh_area,
            num_vertices: entry.sgws.num_vertices(),
            label: entry.sgws.source_label.clone(),
        };
        self.write_atomic(&sgws_path, &sgws_to_bytes(&entry.sgws))?;
        self.write_atomic(&json_path, &serde_json::to_vec_pretty(&sidecar)?)
    }

    fn write_atomic(&self, target: &Path, bytes: &[u8]) -> Result<()> {
        let n = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".tmp-{}-{n}", std::process::id()));
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, target).map_err(|e| Error::io(target, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn keys_depend_on_content_and_parameters() {
        let opts = EigenOptions::default();
        let a = cache_key(b"mesh", 201, 3, &opts);
        assert_eq!(a, cache_key(b"mesh", 201, 3, &opts));
        assert_ne!(a, cache_key(b"mesh!", 201, 3, &opts));
        assert_ne!(a, cache_key(b"mesh", 101, 3, &opts));
        assert_ne!(a, cache_key(b"mesh", 201, 2, &opts));
        let dense = EigenOptions { solver: crate::laplacian::EigenSolver::Dense, ..opts };
        assert_ne!(a, cache_key(b"mesh", 201, 3, &dense));
    }

    #[test]
    fn entries_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SignatureCache::open(dir.path().join("c")).unwrap();
        let entry = SurfaceSpectrum {
            sgws: SgwsMatrix {
                values: DMatrix::from_fn(4, 3, |r, c| (r as f64 + 0.1) / (c as f64 + 3.0)),
                level: 3,
                source_label: "lw".into(),
            },
            eigenvalues: vec![0.0, 1.0 / 3.0, 2.000000000000001],
            mesh_area: std::f64::consts::PI,
        };
        assert!(cache.get("k", "lw").is_none());
        cache.put("k", &entry).unwrap();
        assert_eq!(cache.get("k", "lw").unwrap(), entry);
        std::fs::write(dir.path().join("c/k.sgws"), b"junk").unwrap();
        assert!(cache.get("k", "lw").is_none());
    }
}
