//! Spectral graph wavelet signatures.
//!
//! For every vertex `j` the signature stacks `L` wavelet responses
//! `sum_l g(t_k lambda_l) xi_l(j)^2` (scales decreasing) and one scaling
//! response `sum_l h(lambda_l) xi_l(j)^2`. Sums run over the computed
//! eigenpairs only.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::laplacian::EigenSystem;

/// Peak of the wavelet kernel, `g(0) = 2 / (sqrt(3) pi^(1/4))`.
pub fn kernel_gamma() -> f64 {
    2.0 / (3f64.sqrt() * std::f64::consts::PI.powf(0.25))
}

/// Mexican-hat generating kernel `g(x) = gamma (1 - x^2) exp(-x^2 / 2)`.
pub fn kernel_g(x: f64) -> f64 {
    kernel_gamma() * (1.0 - x * x) * (-0.5 * x * x).exp()
}

/// Scaling kernel `h(x) = gamma exp(-(x / (0.3 lambda_min))^4)`.
pub fn kernel_h(x: f64, config: &KernelConfig) -> f64 {
    config.gamma * (-(x / (0.3 * config.lambda_min)).powi(4)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub level: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub gamma: f64,
    /// `level` scales, strictly decreasing from `2 / lambda_min` to `2 / lambda_max`.
    pub scales: Vec<f64>,
}

/// Log-equispaced scales between `2 / lambda_min` and `2 / lambda_max`, with
/// `lambda_min = lambda_max / 15`.
pub fn select_scales(lambda_max: f64, level: usize) -> Result<KernelConfig> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::Domain(format!("lambda_max must be positive, got {lambda_max}")));
    }
    if level == 0 {
        return Err(Error::Domain("resolution level must be at least 1".into()));
    }
    let lambda_min = lambda_max / 15.0;
    let t_first = 2.0 / lambda_min;
    let t_last = 2.0 / lambda_max;
    let scales = if level == 1 {
        vec![t_first]
    } else {
        let (lo, hi) = (t_last.ln(), t_first.ln());
        (0..level)
            .map(|k| match k {
                0 => t_first,
                k if k == level - 1 => t_last,
                k => (hi + (lo - hi) * k as f64 / (level - 1) as f64).exp(),
            })
            .collect()
    };
    Ok(KernelConfig {
        level,
        lambda_max,
        lambda_min,
        gamma: kernel_gamma(),
        scales,
    })
}

/// `p x m` signature matrix, `p = level + 1`; column `j` belongs to vertex `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgwsMatrix {
    pub values: DMatrix<f64>,
    pub level: usize,
    pub source_label: String,
}

impl SgwsMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_vertices(&self) -> usize {
        self.values.ncols()
    }
}

/// Per-vertex wavelet and scaling responses, with `lambda_max` taken as the
/// largest computed eigenvalue.
pub fn compute_sgws(eigsys: &EigenSystem, level: usize) -> Result<SgwsMatrix> {
    let k = eigsys.num_pairs();
    if k < 2 {
        return Err(Error::Dimension(format!("signatures need at least 2 eigenpairs, got {k}")));
    }
    let config = select_scales(eigsys.lambda_max(), level)?;
    let p = level + 1;
    // filter[r][l]: kernel response of row r at eigenvalue l
    let filter = DMatrix::from_fn(p, k, |r, l| {
        let lambda = eigsys.eigenvalues[l];
        if r < level {
            kernel_g(config.scales[r] * lambda)
        } else {
            kernel_h(lambda, &config)
        }
    });
    let m = eigsys.num_vertices();
    let mut values = DMatrix::zeros(p, m);
    let vecs = &eigsys.eigenvectors;
    for j in 0..m {
        for r in 0..p {
            let mut acc = 0.0;
            for l in 0..k {
                let x = vecs[(j, l)];
                acc += filter[(r, l)] * x * x;
            }
            values[(r, j)] = acc;
        }
    }
    Ok(SgwsMatrix {
        values,
        level,
        source_label: String::new(),
    })
}

/// Guard added to the chi-squared denominator.
pub const CHI2_EPSILON: f64 = 1e-12;

/// Chi-squared distance from `ref_vertex` to every vertex, min-max
/// normalised to `[0, 1]`.
///
/// Wavelet rows can be negative, so the denominator uses magnitudes:
/// `d(j) = 1/2 sum_r (s_r,ref - s_r,j)^2 / (|s_r,ref| + |s_r,j| + eps)`.
pub fn chi2_distance_map(sgws: &SgwsMatrix, ref_vertex: usize) -> Result<Vec<f64>> {
    let m = sgws.num_vertices();
    if ref_vertex >= m {
        return Err(Error::Dimension(format!("reference vertex {ref_vertex} out of range (m = {m})")));
    }
    let s = &sgws.values;
    let reference = s.column(ref_vertex);
    let mut d: Vec<f64> = s
        .column_iter()
        .map(|col| {
            0.5 * reference
                .iter()
                .zip(col.iter())
                .map(|(a, b)| (a - b).powi(2) / (a.abs() + b.abs() + CHI2_EPSILON))
                .sum::<f64>()
        })
        .collect();
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        d.iter_mut().for_each(|x| *x = (*x - lo) / (hi - lo));
    } else {
        d.iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(d)
}

const STORE_MAGIC: &[u8; 5] = b"SGWS1";

/// Binary signature store: magic `SGWS1`, little-endian `i32 p`, `i32 m`,
/// then `p * m` little-endian `f64` values in row-major order.
pub fn sgws_to_bytes(sgws: &SgwsMatrix) -> Vec<u8> {
    let (p, m) = sgws.values.shape();
    let mut buf = Vec::with_capacity(13 + 8 * p * m);
    buf.extend_from_slice(STORE_MAGIC);
    buf.extend_from_slice(&(p as i32).to_le_bytes());
    buf.extend_from_slice(&(m as i32).to_le_bytes());
    for r in 0..p {
        for j in 0..m {
            buf.extend_from_slice(&sgws.values[(r, j)].to_le_bytes());
        }
    }
    buf
}

pub fn write_sgws<W: Write>(sgws: &SgwsMatrix, mut out: W) -> std::io::Result<()> {
    out.write_all(&sgws_to_bytes(sgws))?;
    out.flush()
}

pub fn read_sgws<R: Read>(mut input: R, label: impl Into<String>) -> Result<SgwsMatrix> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<signature store>", e))?;
    parse_sgws(&bytes, label)
}

pub fn parse_sgws(bytes: &[u8], label: impl Into<String>) -> Result<SgwsMatrix> {
    if bytes.len() < 13 || &bytes[..5] != STORE_MAGIC {
        return Err(Error::Format("not an SGWS1 signature store".into()));
    }
    let dim = |at: usize| {
        let v = i32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("negative store dimension {v}")))
    };
    let (p, m) = (dim(5)?, dim(9)?);
    if p < 2 {
        return Err(Error::Format(format!("signature dimension {p} is below 2")));
    }
    let payload = &bytes[13..];
    if payload.len() != 8 * p * m {
        return Err(Error::Format(format!(
            "store declares {p}x{m} values but carries {} bytes",
            payload.len()
        )));
    }
    let mut values = DMatrix::zeros(p, m);
    for (idx, chunk) in payload.chunks_exact(8).enumerate() {
        values[(idx / m, idx % m)] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok(SgwsMatrix {
        values,
        level: p - 1,
        source_label: label.into(),
    })
}

pub fn save_sgws(path: impl AsRef<Path>, sgws: &SgwsMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, sgws_to_bytes(sgws)).map_err(|e| Error::io(path, e))
}

pub fn load_sgws(path: impl AsRef<Path>) -> Result<SgwsMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_sgws(&bytes, label)
}

/// CSV form of the `p x m` matrix: one line per signature row.
pub fn write_sgws_csv<W: Write>(sgws: &SgwsMatrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in sgws.values.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}
