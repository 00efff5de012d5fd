//! Cotangent Laplace-Beltrami discretisation, its generalized eigenproblem,
//! the manifold harmonic transform and the ShapeDNA baseline.
//!
//! The stiffness matrix is `C = D - W` with `w_ij = (cot a_ij + cot b_ij) / 2`
//! and the lumped mass is barycentric, `a_i = (1/3) * sum of incident triangle
//! areas`. Eigenpairs solve `C x = lambda A x` and are A-orthonormal, so the
//! forward transform uses the A-weighted inner product.

mod eigen;

pub use eigen::{eigendecompose, eigendecompose_with, EigenOptions, EigenSolver, EigenSystem};

use crate::error::{Error, Result};
use crate::mesh::{surface_area, TriangleMesh};
use crate::sparse::CsrMatrix;

/// Cotangents above this magnitude mean a near-zero angle.
pub const MAX_COTANGENT: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct LaplacianSystem {
    /// Symmetric stiffness `C = D - W`.
    pub stiffness: CsrMatrix,
    /// Diagonal of the lumped mass matrix `A`.
    pub mass: Vec<f64>,
    pub mesh_area: f64,
}

impl LaplacianSystem {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }
}

/// Assembles the cotangent stiffness and barycentric mass of `mesh`.
pub fn cotangent_system(mesh: &TriangleMesh) -> Result<LaplacianSystem> {
    let m = mesh.num_vertices();
    let mut triplets = Vec::with_capacity(mesh.num_triangles() * 12);
    let mut mass = vec![0.0; m];

    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = tri.map(|i| mesh.point(i));
        let area = mesh.triangle_area(t);
        for corner in 0..3 {
            let (i, j) = (tri[(corner + 1) % 3], tri[(corner + 2) % 3]);
            let u = p[(corner + 1) % 3] - p[corner];
            let v = p[(corner + 2) % 3] - p[corner];
            let cross = u.cross(&v).norm();
            let cot = u.dot(&v) / cross;
            if !cot.is_finite() || cot.abs() > MAX_COTANGENT {
                return Err(Error::DegenerateMesh(format!(
                    "triangle {t} has a near-zero angle at vertex {} (cot = {cot:.3e})",
                    tri[corner]
                )));
            }
            let w = 0.5 * cot;
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
            triplets.push((i, i, w));
            triplets.push((j, j, w));
        }
        for &i in tri {
            mass[i] += area / 3.0;
        }
    }

    if let Some(i) = mass.iter().position(|&a| a <= 0.0) {
        return Err(Error::DegenerateMesh(format!("vertex {i} has zero lumped area")));
    }
    Ok(LaplacianSystem {
        stiffness: CsrMatrix::from_triplets(m, &triplets),
        mass,
        mesh_area: surface_area(mesh),
    })
}

/// Forward manifold harmonic transform, `f_hat(l) = xi_l^T A f`.
pub fn mht(eigsys: &EigenSystem, f: &[f64], mass: &[f64]) -> Result<Vec<f64>> {
    let m = eigsys.num_vertices();
    if f.len() != m || mass.len() != m {
        return Err(Error::Dimension(format!(
            "signal has {} values and mass {} entries, mesh has {m} vertices",
            f.len(),
            mass.len()
        )));
    }
    let weighted: Vec<f64> = f.iter().zip(mass).map(|(x, a)| x * a).collect();
    Ok(eigsys
        .eigenvectors
        .column_iter()
        .map(|xi| xi.iter().zip(&weighted).map(|(a, b)| a * b).sum())
        .collect())
}

/// Inverse transform, `f(i) = sum_l f_hat(l) xi_l(i)`.
pub fn imht(eigsys: &EigenSystem, coeffs: &[f64]) -> Result<Vec<f64>> {
    let k = eigsys.num_pairs();
    if coeffs.len() != k {
        return Err(Error::Dimension(format!(
            "expected {k} spectral coefficients, got {}",
            coeffs.len()
        )));
    }
    let mut f = vec![0.0; eigsys.num_vertices()];
    for (xi, &c) in eigsys.eigenvectors.column_iter().zip(coeffs) {
        for (fi, x) in f.iter_mut().zip(xi.iter()) {
            *fi += c * x;
        }
    }
    Ok(f)
}

/// The `d` smallest non-zero eigenvalues scaled by the surface area.
pub fn shape_dna(eigsys: &EigenSystem, d: usize) -> Result<Vec<f64>> {
    shape_dna_from_spectrum(&eigsys.eigenvalues, eigsys.mesh_area, d)
}

/// [`shape_dna`] from an ascending spectrum whose first entry is the null mode.
pub fn shape_dna_from_spectrum(eigenvalues: &[f64], mesh_area: f64, d: usize) -> Result<Vec<f64>> {
    if d == 0 || d >= eigenvalues.len() {
        return Err(Error::Dimension(format!(
            "ShapeDNA length {d} needs 0 < d < k = {}",
            eigenvalues.len()
        )));
    }
    Ok(eigenvalues[1..=d].iter().map(|l| l * mesh_area).collect())
}
