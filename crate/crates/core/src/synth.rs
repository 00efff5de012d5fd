//! Synthetic surfaces with known spectral ground truth.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

pub const MAX_SUBDIVISION: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Icosphere,
    BumpSphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub family: Family,
    #[serde(default = "default_subdivision")]
    pub subdivision: u32,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub n_bumps: usize,
    #[serde(default = "default_bump_width")]
    pub bump_width: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_subdivision() -> u32 {
    4
}

fn default_bump_width() -> f64 {
    0.3
}

impl SynthSpec {
    pub fn bump_sphere(subdivision: u32, amplitude: f64, n_bumps: usize, seed: u64) -> Self {
        Self {
            family: Family::BumpSphere,
            subdivision,
            amplitude,
            n_bumps,
            bump_width: default_bump_width(),
            seed,
        }
    }

    pub fn generate(&self) -> Result<TriangleMesh> {
        match self.family {
            Family::Icosphere => icosphere(self.subdivision),
            Family::BumpSphere => bump_sphere(self),
        }
    }
}

/// Unit-edge regular tetrahedron, the smallest closed triangulation.
pub fn tetrahedron() -> TriangleMesh {
    let h = 0.5 / 2f64.sqrt();
    TriangleMesh::new(
        vec![[0.5, 0.0, -h], [-0.5, 0.0, -h], [0.0, 0.5, h], [0.0, -0.5, h]],
        vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
        "tetrahedron",
    )
    .expect("static mesh")
}

/// Icosahedron subdivided `subdivision` times with every vertex projected to
/// the unit sphere; `10 * 4^s + 2` vertices.
pub fn icosphere(subdivision: u32) -> Result<TriangleMesh> {
    if subdivision > MAX_SUBDIVISION {
        return Err(Error::Domain(format!(
            "subdivision {subdivision} exceeds the limit of {MAX_SUBDIVISION}"
        )));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::from(*p).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivision {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }

    TriangleMesh::new(
        vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
        triangles,
        format!("icosphere-{subdivision}"),
    )
}

/// Icosphere with radial Gaussian lobes:
/// `r(v) = 1 + amplitude * sum_b exp(-angle(v, c_b)^2 / (2 width^2))`,
/// lobe centres drawn uniformly on the sphere from `seed`.
pub fn bump_sphere(spec: &SynthSpec) -> Result<TriangleMesh> {
    if !(spec.amplitude >= 0.0 && spec.amplitude < 1.0) {
        return Err(Error::Domain(format!(
            "bump amplitude must lie in [0, 1), got {}",
            spec.amplitude
        )));
    }
    if !(spec.bump_width > 0.0 && spec.bump_width.is_finite()) {
        return Err(Error::Domain(format!("bump width must be positive, got {}", spec.bump_width)));
    }
    let sphere = icosphere(spec.subdivision)?;
    if spec.amplitude == 0.0 {
        return Ok(sphere);
    }
    if spec.n_bumps == 0 {
        return Err(Error::Domain("a bump sphere needs at least one bump".into()));
    }
    let centres = bump_centres(spec.n_bumps, spec.seed);
    let two_w2 = 2.0 * spec.bump_width * spec.bump_width;
    let mut mesh = sphere.map_vertices(|p| {
        let v = Vector3::from(p);
        let lift: f64 = centres
            .iter()
            .map(|c| {
                let angle = v.dot(c).clamp(-1.0, 1.0).acos();
                (-angle * angle / two_w2).exp()
            })
            .sum();
        let r = 1.0 + spec.amplitude * lift;
        [r * p[0], r * p[1], r * p[2]]
    });
    mesh.set_label(format!(
        "bump-sphere-s{}-e{}-n{}-seed{}",
        spec.subdivision, spec.amplitude, spec.n_bumps, spec.seed
    ));
    Ok(mesh)
}

fn bump_centres(n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres = Vec::with_capacity(n);
    while centres.len() < n {
        let v = Vector3::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        );
        let norm: f64 = v.norm();
        if norm > 1e-12 {
            centres.push(v / norm);
        }
    }
    centres
}
