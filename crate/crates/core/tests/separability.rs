//! How far apart the ShapeDNA vectors of two bump-sphere classes lie,
//! relative to the spread inside a class. Thresholds are frozen from a
//! measurement on subdivision-2 spheres (within-class maximum 0.0283,
//! class-mean gap 0.0240, closest cross-class pair 0.0065).

use surfwave::laplacian::{cotangent_system, eigendecompose, shape_dna};
use surfwave::synth::{bump_sphere, SynthSpec};

fn shape_dna_10(amplitude: f64, seed: u64) -> Vec<f64> {
    let mesh = bump_sphere(&SynthSpec::bump_sphere(2, amplitude, 30, seed)).unwrap();
    let eig = eigendecompose(&cotangent_system(&mesh).unwrap(), 11).unwrap();
    shape_dna(&eig, 10).unwrap()
}

fn rel_dist(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (diff / b.iter().map(|y| y * y).sum::<f64>()).sqrt()
}

fn mean(rows: &[Vec<f64>]) -> Vec<f64> {
    (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64)
        .collect()
}

#[test]
fn amplitude_classes_separate_on_average_but_overlap_pairwise() {
    let low: Vec<_> = (1..=5).map(|s| shape_dna_10(0.05, s)).collect();
    let high: Vec<_> = (11..=15).map(|s| shape_dna_10(0.10, s)).collect();

    let mut within: f64 = 0.0;
    for class in [&low, &high] {
        for i in 0..class.len() {
            for j in 0..i {
                within = within.max(rel_dist(&class[i], &class[j]));
            }
        }
    }
    let closest = low
        .iter()
        .flat_map(|a| high.iter().map(move |b| rel_dist(a, b)))
        .fold(f64::INFINITY, f64::min);
    let gap = rel_dist(&mean(&low), &mean(&high));

    assert!(within < 0.035, "within-class spread {within}");
    assert!(gap > 0.02, "class-mean gap {gap}");
    // Individual spheres of different classes can be closer than 5%.
    assert!(closest < 0.05, "closest cross-class pair {closest}");
}
