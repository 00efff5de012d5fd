//! Generalized symmetric eigensolver for `C x = lambda A x` with diagonal `A`.
//!
//! Both paths work on the symmetrised operator `A^{-1/2} C A^{-1/2}`. Small
//! problems use a dense symmetric decomposition. Larger ones run a block
//! Lanczos iteration with full reorthogonalisation on the shift-inverted
//! operator `A^{1/2} (C + tau A)^{-1} A^{1/2}`, whose largest eigenvalues
//! `1 / (lambda + tau)` map to the smallest `lambda`. The shift `tau > 0`
//! makes the factorisation definite although `C` is singular on closed
//! surfaces.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Par, Side};
use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LaplacianSystem;
use crate::error::{Error, Result};

/// Problems up to this size are solved densely under [`EigenSolver::Auto`].
pub const DENSE_LIMIT: usize = 1024;

/// Shift relative to `trace(C) / trace(A)`.
const SHIFT_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSolver {
    #[default]
    Auto,
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenOptions {
    pub solver: EigenSolver,
    /// Ritz residual bound relative to the Ritz value of the shifted operator.
    pub tolerance: f64,
    pub block_size: usize,
    /// Krylov basis cap; defaults to `max(3k, k + 120)` clipped to `m`.
    pub max_basis: Option<usize>,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            solver: EigenSolver::Auto,
            tolerance: 1e-10,
            block_size: 8,
            max_basis: None,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// `m x k`, column `l` is the A-normalised eigenvector of `eigenvalues[l]`.
    pub eigenvectors: DMatrix<f64>,
    pub mesh_area: f64,
}

impl EigenSystem {
    pub fn num_pairs(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty eigensystem")
    }

    pub fn eigenvector(&self, l: usize) -> DVectorView<'_, f64> {
        self.eigenvectors.column(l)
    }
}

/// The `k` smallest eigenpairs with default options.
pub fn eigendecompose(system: &LaplacianSystem, k: usize) -> Result<EigenSystem> {
    eigendecompose_with(system, k, &EigenOptions::default())
}

pub fn eigendecompose_with(
    system: &LaplacianSystem,
    k: usize,
    options: &EigenOptions,
) -> Result<EigenSystem> {
    let m = system.dim();
    if k == 0 || k > m {
        return Err(Error::Dimension(format!("requested {k} eigenpairs of a {m}-vertex system")));
    }
    let dense = match options.solver {
        EigenSolver::Dense => true,
        EigenSolver::Sparse => false,
        EigenSolver::Auto => m <= DENSE_LIMIT,
    };
    let (eigenvalues, sym_vectors) = if dense {
        dense_smallest(system, k)?
    } else {
        block_lanczos(system, k, options)?
    };

    let mut eigenvectors = sym_vectors;
    let inv_sqrt_mass: Vec<f64> = system.mass.iter().map(|a| a.sqrt().recip()).collect();
    for mut col in eigenvectors.column_iter_mut() {
        for (x, s) in col.iter_mut().zip(&inv_sqrt_mass) {
            *x *= s;
        }
        fix_sign(col.as_mut_slice());
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        mesh_area: system.mesh_area,
    })
}

/// Flips `v` so that its entry of largest magnitude is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dense_smallest(system: &LaplacianSystem, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = system.dim();
    let s: Vec<f64> = system.mass.iter().map(|a| a.sqrt().recip()).collect();
    let mut op = DMatrix::zeros(m, m);
    for (i, j, v) in system.stiffness.triplets() {
        op[(i, j)] = v * s[i] * s[j];
    }
    let eig = SymmetricEigen::new(op);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m, k, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// `A^{1/2} (C + tau A)^{-1} A^{1/2}` through a sparse Cholesky factor.
struct ShiftInvert {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    sqrt_mass: Vec<f64>,
    shift: f64,
}

impl ShiftInvert {
    fn new(system: &LaplacianSystem) -> Result<Self> {
        let m = system.dim();
        let trace_c: f64 = system.stiffness.diagonal().iter().sum();
        let trace_a: f64 = system.mass.iter().sum();
        let mut shift = SHIFT_FACTOR * trace_c.abs().max(f64::MIN_POSITIVE) / trace_a;
        faer::set_global_parallelism(Par::Seq);
        for attempt in 0..4 {
            let mut entries: Vec<Triplet<usize, usize, f64>> = system
                .stiffness
                .triplets()
                .filter(|&(i, j, _)| i >= j)
                .map(|(i, j, v)| Triplet::new(i, j, v))
                .collect();
            entries.extend((0..m).map(|i| Triplet::new(i, i, shift * system.mass[i])));
            let k = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &entries)
                .map_err(|e| Error::Dimension(format!("cannot assemble shifted stiffness: {e:?}")))?;
            match k.sp_cholesky(Side::Lower) {
                Ok(llt) => {
                    return Ok(Self {
                        llt,
                        sqrt_mass: system.mass.iter().map(|a| a.sqrt()).collect(),
                        shift,
                    })
                }
                Err(e) => {
                    log::warn!("shifted stiffness factorisation failed (attempt {attempt}, shift {shift:.3e}): {e}");
                    shift *= 100.0;
                }
            }
        }
        Err(Error::Convergence {
            iterations: 0,
            residual: f64::INFINITY,
        })
    }

    fn apply(&self, block: &mut DMatrix<f64>) {
        let (m, b) = block.shape();
        for mut col in block.column_iter_mut() {
            for (x, s) in col.iter_mut().zip(&self.sqrt_mass) {
                *x *= s;
            }
        }
        let rhs = faer::MatMut::from_column_major_slice_mut(block.as_mut_slice(), m, b);
        self.llt.solve_in_place(rhs);
        for mut col in block.column_iter_mut() {
            for (x, s) in col.iter_mut().zip(&self.sqrt_mass) {
                *x *= s;
            }
        }
    }
}

fn random_unit_like(m: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(m, |_, _| StandardNormal.sample(rng))
}

/// Orthogonalises `v` against the first `ncols` columns of `basis` (twice).
fn project_out(basis: &DMatrix<f64>, ncols: usize, v: &mut DVector<f64>) {
    if ncols == 0 {
        return;
    }
    let q = basis.columns(0, ncols);
    for _ in 0..2 {
        let c = q.tr_mul(v);
        v.gemv(-1.0, &q, &c, 1.0);
    }
}

fn block_lanczos(
    system: &LaplacianSystem,
    k: usize,
    options: &EigenOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = system.dim();
    let op = ShiftInvert::new(system)?;
    let b = options.block_size.clamp(1, m);
    // An explicit cap is hard; the default one doubles on stagnation up to m.
    let hard_cap = options.max_basis.map_or(m, |c| c.max(k + b).min(m));
    let mut cap = options
        .max_basis
        .unwrap_or_else(|| (3 * k).max(k + 120))
        .max(k + b)
        .min(m);
    let tol = options.tolerance;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let mut basis = DMatrix::<f64>::zeros(m, cap);
    let mut proj = DMatrix::<f64>::zeros(cap, cap);
    let mut ncols = 0;
    while ncols < b.min(cap) {
        let mut v = random_unit_like(m, &mut rng);
        project_out(&basis, ncols, &mut v);
        let norm = v.norm();
        if norm > 1e-8 {
            basis.set_column(ncols, &(v / norm));
            ncols += 1;
        }
    }

    let mut block_start = 0;
    let mut next_check = (k + k / 5 + b).min(cap);
    let mut steps = 0;
    loop {
        steps += 1;
        let width = ncols - block_start;
        let mut w = basis.columns(block_start, width).clone_owned();
        op.apply(&mut w);

        for _ in 0..2 {
            let q = basis.columns(0, ncols);
            let coef = q.tr_mul(&w);
            w.gemm(-1.0, &q, &coef, 1.0);
            let mut target = proj.view_mut((0, block_start), (ncols, width));
            target += &coef;
        }

        if ncols >= next_check || ncols == cap {
            let n = ncols;
            let h = proj.view((0, 0), (n, n));
            let h = (&h + h.transpose()) * 0.5;
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
            let wanted = &order[..k];

            let mut worst = 0.0f64;
            for &i in wanted {
                let tail = eig.eigenvectors.view((block_start, i), (width, 1));
                let resid = (&w * tail).norm();
                worst = worst.max(resid / eig.eigenvalues[i].abs());
            }
            log::debug!("block lanczos: basis {n}, worst relative residual {worst:.3e}");
            if worst <= tol || n == m {
                let ritz = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, wanted[c])]);
                let vectors = basis.columns(0, n) * ritz;
                let values = wanted
                    .iter()
                    .map(|&i| eig.eigenvalues[i].recip() - op.shift)
                    .collect();
                return Ok((values, vectors));
            }
            if n == cap {
                if cap == hard_cap {
                    return Err(Error::Convergence {
                        iterations: steps,
                        residual: worst,
                    });
                }
                cap = (2 * cap).min(hard_cap);
                log::debug!("block lanczos: growing basis to {cap}");
                basis = basis.resize_horizontally(cap, 0.0);
                proj = proj.resize(cap, cap, 0.0);
            }
            next_check = (n + b.max(n / 10)).min(cap);
        }

        // Next block from the orthogonalised images, with deflation.
        let room = (cap - ncols).min(width);
        let start = ncols;
        let scale = w.column_iter().fold(0.0f64, |s, c| s.max(c.norm())).max(f64::MIN_POSITIVE);
        for c in 0..width {
            let mut v: DVector<f64> = w.column(c).clone_owned();
            let coef_prev = basis.columns(start, ncols - start).tr_mul(&v);
            project_out(&basis, ncols, &mut v);
            let norm = v.norm();
            if ncols - start < room && norm > 1e-10 * scale {
                let q = v / norm;
                basis.set_column(ncols, &q);
                for (r, cp) in coef_prev.iter().enumerate() {
                    proj[(start + r, block_start + c)] += cp;
                }
                proj[(ncols, block_start + c)] = norm;
                ncols += 1;
            } else {
                for (r, cp) in coef_prev.iter().enumerate() {
                    proj[(start + r, block_start + c)] += cp;
                }
            }
        }
        while ncols - start < room {
            let mut v = random_unit_like(m, &mut rng);
            project_out(&basis, ncols, &mut v);
            let norm = v.norm();
            if norm > 1e-8 {
                basis.set_column(ncols, &(v / norm));
                ncols += 1;
            }
        }
        block_start = start;
    }
}
