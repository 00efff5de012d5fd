//! Triangulated surfaces: construction, validation and measurement.

mod io;

pub use io::{
    decode_mesh, load_mesh, load_mesh_with, parse_freesurfer, parse_mesh, parse_off, parse_ply, write_freesurfer,
    write_mesh, write_off, write_ply, MeshFormat,
};

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative degeneracy threshold: a triangle is degenerate when its area is
/// below this factor times the squared bounding-box diagonal.
pub const DEGENERATE_AREA_FACTOR: f64 = 1e-12;

/// A triangulated surface. Coordinates keep the units of the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
    label: String,
}

impl TriangleMesh {
    /// Builds a mesh after structural checks (finite coordinates, indices in
    /// range). Geometric checks live in [`validate_mesh`].
    pub fn new(
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let m = vertices.len();
        if let Some(i) = vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::Format(format!("vertex {i} has a non-finite coordinate")));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= m) {
                return Err(Error::Format(format!(
                    "triangle {t} references vertex {bad} but the mesh has {m} vertices"
                )));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            label: label.into(),
        })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub(crate) fn point(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.vertices[i])
    }

    /// Area of triangle `t` from the cross-product formula.
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.point(a), self.point(b), self.point(c));
        0.5 * (pb - pa).cross(&(pc - pa)).norm()
    }

    /// Length of the bounding-box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (0..3).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt()
    }

    /// Applies `f` to every vertex, keeping the connectivity.
    pub fn map_vertices(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
            label: self.label.clone(),
        }
    }

    /// Relabels vertex `i` as `perm[i]`.
    pub fn permute_vertices(&self, perm: &[usize]) -> Result<Self> {
        let m = self.num_vertices();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Dimension(format!(
                "vertex permutation must be a bijection on {m} indices"
            )));
        }
        let mut vertices = vec![[0.0; 3]; m];
        for (i, &p) in perm.iter().enumerate() {
            vertices[p] = self.vertices[i];
        }
        let triangles = self
            .triangles
            .iter()
            .map(|t| [perm[t[0]], perm[t[1]], perm[t[2]]])
            .collect();
        Ok(Self {
            vertices,
            triangles,
            label: self.label.clone(),
        })
    }

    /// Number of distinct undirected edges.
    pub fn num_edges(&self) -> usize {
        edge_incidence(&self.triangles).len()
    }
}

/// Total surface area (sum of triangle areas).
pub fn surface_area(mesh: &TriangleMesh) -> f64 {
    (0..mesh.num_triangles()).map(|t| mesh.triangle_area(t)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    NonmanifoldEdges,
    DuplicateTriangles,
    DegenerateTriangles,
    IsolatedVertices,
}

impl IssueKind {
    pub const ALL: [IssueKind; 4] = [
        IssueKind::NonmanifoldEdges,
        IssueKind::DuplicateTriangles,
        IssueKind::DegenerateTriangles,
        IssueKind::IsolatedVertices,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// Any fatal issue is an error; the mesh is returned untouched.
    Strict,
    /// Duplicate triangles and isolated vertices are removed.
    Prune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationPolicy {
    pub mode: ValidationMode,
    /// Upgrades nonmanifold edges from a warning to a fatal issue.
    #[serde(default)]
    pub nonmanifold_fatal: bool,
}

impl ValidationPolicy {
    pub const STRICT: Self = Self {
        mode: ValidationMode::Strict,
        nonmanifold_fatal: false,
    };
    pub const PRUNE: Self = Self {
        mode: ValidationMode::Prune,
        nonmanifold_fatal: false,
    };

    fn is_fatal(&self, kind: IssueKind) -> bool {
        match kind {
            IssueKind::DegenerateTriangles => true,
            IssueKind::NonmanifoldEdges => self.nonmanifold_fatal,
            IssueKind::DuplicateTriangles | IssueKind::IsolatedVertices => {
                self.mode == ValidationMode::Strict
            }
        }
    }
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self::STRICT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_valid: bool,
    /// Issues found in the input mesh, keyed by kind.
    pub issue_counts: BTreeMap<IssueKind, usize>,
    pub pruned_vertices: usize,
    pub pruned_triangles: usize,
}

impl ValidationReport {
    pub fn count(&self, kind: IssueKind) -> usize {
        self.issue_counts.get(&kind).copied().unwrap_or(0)
    }

    fn summary(&self) -> String {
        self.issue_counts
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(k, n)| format!("{k:?}={n}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn edge_incidence(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut edges = HashMap::with_capacity(triangles.len() * 3 / 2);
    for t in triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            if a != b {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
    }
    edges
}

fn sorted_key(t: &[usize; 3]) -> [usize; 3] {
    let mut k = *t;
    k.sort_unstable();
    k
}

fn is_degenerate(mesh: &TriangleMesh, t: usize, threshold: f64) -> bool {
    let [a, b, c] = mesh.triangles[t];
    a == b || b == c || a == c || mesh.triangle_area(t) < threshold
}

/// Counts every issue kind without modifying the mesh. `is_valid` is judged
/// against `policy`.
pub fn inspect_mesh(mesh: &TriangleMesh, policy: ValidationPolicy) -> ValidationReport {
    let threshold = DEGENERATE_AREA_FACTOR * mesh.bbox_diagonal().powi(2);
    let degenerate = (0..mesh.num_triangles())
        .filter(|&t| is_degenerate(mesh, t, threshold))
        .count();

    let mut seen = HashMap::with_capacity(mesh.num_triangles());
    let mut duplicates = 0;
    for t in &mesh.triangles {
        if seen.insert(sorted_key(t), ()).is_some() {
            duplicates += 1;
        }
    }

    let nonmanifold = edge_incidence(&mesh.triangles)
        .values()
        .filter(|&&n| n > 2)
        .count();

    let mut referenced = vec![false; mesh.num_vertices()];
    for t in &mesh.triangles {
        for &i in t {
            referenced[i] = true;
        }
    }
    let isolated = referenced.iter().filter(|&&r| !r).count();

    let issue_counts: BTreeMap<_, _> = [
        (IssueKind::NonmanifoldEdges, nonmanifold),
        (IssueKind::DuplicateTriangles, duplicates),
        (IssueKind::DegenerateTriangles, degenerate),
        (IssueKind::IsolatedVertices, isolated),
    ]
    .into_iter()
    .collect();
    let is_valid = issue_counts
        .iter()
        .all(|(&k, &n)| n == 0 || !policy.is_fatal(k));
    ValidationReport {
        is_valid,
        issue_counts,
        pruned_vertices: 0,
        pruned_triangles: 0,
    }
}

/// Validates `mesh` under `policy`; prune mode also removes exact-duplicate
/// triangles and unreferenced vertices, reindexing the remainder.
pub fn validate_mesh(
    mesh: TriangleMesh,
    policy: ValidationPolicy,
) -> Result<(TriangleMesh, ValidationReport)> {
    let mut report = inspect_mesh(&mesh, policy);
    if !report.is_valid {
        return Err(Error::DegenerateMesh(format!(
            "{}: {}",
            mesh.label,
            report.summary()
        )));
    }
    if policy.mode == ValidationMode::Strict {
        return Ok((mesh, report));
    }

    let mut seen = HashMap::with_capacity(mesh.num_triangles());
    let kept: Vec<[usize; 3]> = mesh
        .triangles
        .iter()
        .filter(|t| seen.insert(sorted_key(t), ()).is_none())
        .copied()
        .collect();
    report.pruned_triangles = mesh.num_triangles() - kept.len();

    let mut new_index = vec![usize::MAX; mesh.num_vertices()];
    for t in &kept {
        for &i in t {
            new_index[i] = 0;
        }
    }
    let mut vertices = Vec::with_capacity(mesh.num_vertices());
    for (i, slot) in new_index.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = vertices.len();
            vertices.push(mesh.vertices[i]);
        }
    }
    report.pruned_vertices = mesh.num_vertices() - vertices.len();
    let triangles = kept
        .iter()
        .map(|t| [new_index[t[0]], new_index[t[1]], new_index[t[2]]])
        .collect();
    let pruned = TriangleMesh {
        vertices,
        triangles,
        label: mesh.label,
    };
    Ok((pruned, report))
}
