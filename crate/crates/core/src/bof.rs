//! Bag-of-features encoding of per-vertex signatures.
//!
//! A shared vocabulary is learned with k-means over pooled signature columns.
//! Each surface is then soft-assigned against the atoms with a Gaussian kernel,
//! sum-pooled into a histogram and optionally divided by its area. Four
//! histograms per subject form one WaveletBrain column.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sgwt::SgwsMatrix;

pub const MAX_KMEANS_ITERATIONS: usize = 300;
/// Lloyd iterations stop once no atom moves more than this fraction of the
/// largest atom norm.
pub const KMEANS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// `p x k`, column `r` is atom `v_r`.
    pub atoms: DMatrix<f64>,
    /// Mean distance from each training signature to its nearest atom.
    pub bandwidth: f64,
    pub seed: u64,
    pub iterations: usize,
    pub inertia: f64,
}

impl Dictionary {
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn size(&self) -> usize {
        self.atoms.ncols()
    }
}

/// Learns a `k`-atom vocabulary from the pooled columns of `signatures`.
pub fn build_dictionary(signatures: &[&SgwsMatrix], k: usize, seed: u64) -> Result<Dictionary> {
    let Some(first) = signatures.first() else {
        return Err(Error::Domain("no signatures to train a dictionary on".into()));
    };
    let p = first.dim();
    if let Some(bad) = signatures.iter().find(|s| s.dim() != p) {
        return Err(Error::Dimension(format!(
            "signature '{}' has {} rows, expected {p}",
            bad.source_label,
            bad.dim()
        )));
    }
    let mut data = Vec::with_capacity(p * signatures.iter().map(|s| s.num_vertices()).sum::<usize>());
    for s in signatures {
        data.extend_from_slice(s.values.as_slice());
    }
    kmeans(&data, p, k, seed)
}

/// k-means++ seeded Lloyd iteration over `n = data.len() / p` points stored
/// contiguously.
pub fn kmeans(data: &[f64], p: usize, k: usize, seed: u64) -> Result<Dictionary> {
    if p == 0 || data.len() % p != 0 {
        return Err(Error::Dimension(format!("{} values do not split into {p}-vectors", data.len())));
    }
    let n = data.len() / p;
    if k == 0 || k > n {
        return Err(Error::Domain(format!("vocabulary size {k} needs 1..={n} training points")));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateData("training signatures contain non-finite values".into()));
    }
    let distinct = count_distinct(data, p, k);
    if distinct < k {
        return Err(Error::DegenerateData(format!(
            "only {distinct} distinct signatures for a vocabulary of {k}"
        )));
    }
    let point = |i: usize| &data[i * p..(i + 1) * p];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres = kmeans_plus_plus(data, p, k, &mut rng);

    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        assign(data, p, &centres, &mut labels, &mut dists);

        let mut sums = vec![0.0; k * p];
        let mut counts = vec![0usize; k];
        for (i, &r) in labels.iter().enumerate() {
            counts[r] += 1;
            for (s, x) in sums[r * p..(r + 1) * p].iter_mut().zip(point(i)) {
                *s += x;
            }
        }
        let mut next = centres.clone();
        let mut taken: Vec<usize> = Vec::new();
        for r in 0..k {
            if counts[r] > 0 {
                let c = counts[r] as f64;
                for (dst, s) in next[r * p..(r + 1) * p].iter_mut().zip(&sums[r * p..(r + 1) * p]) {
                    *dst = s / c;
                }
            } else {
                // Empty cluster: move it onto the worst-served point.
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("k <= n");
                taken.push(far);
                dists[far] = 0.0;
                next[r * p..(r + 1) * p].copy_from_slice(point(far));
            }
        }

        let scale = (0..k)
            .map(|r| norm(&next[r * p..(r + 1) * p]))
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let shift = (0..k)
            .map(|r| dist2(&next[r * p..(r + 1) * p], &centres[r * p..(r + 1) * p]).sqrt())
            .fold(0.0f64, f64::max);
        centres = next;
        if shift <= KMEANS_TOLERANCE * scale || iterations >= MAX_KMEANS_ITERATIONS {
            if iterations >= MAX_KMEANS_ITERATIONS && shift > KMEANS_TOLERANCE * scale {
                log::warn!("k-means stopped at {iterations} iterations (relative shift {:.3e})", shift / scale);
            }
            break;
        }
    }

    assign(data, p, &centres, &mut labels, &mut dists);
    let inertia = dists.iter().sum();
    let mut bandwidth = dists.iter().map(|d| d.sqrt()).sum::<f64>() / n as f64;
    if bandwidth <= 0.0 {
        bandwidth = 0.5 * min_atom_separation(&centres, p);
    }
    Ok(Dictionary {
        atoms: DMatrix::from_column_slice(p, k, &centres),
        bandwidth,
        seed,
        iterations,
        inertia,
    })
}

/// Number of distinct points, counting no further than `limit`.
fn count_distinct(data: &[f64], p: usize, limit: usize) -> usize {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for chunk in data.chunks_exact(p) {
        seen.insert(chunk.iter().map(|x| (x + 0.0).to_bits()).collect());
        if seen.len() >= limit {
            break;
        }
    }
    seen.len()
}

fn kmeans_plus_plus(data: &[f64], p: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = data.len() / p;
    let point = |i: usize| &data[i * p..(i + 1) * p];
    let mut centres = Vec::with_capacity(k * p);
    centres.extend_from_slice(point(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(point(i), &centres[..p])).collect();
    while centres.len() < k * p {
        let total: f64 = nearest.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in nearest.iter().enumerate() {
            if d > 0.0 {
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
        }
        // The distinct-point check guarantees a positive total here.
        let pick = pick.expect("a point away from every centre");
        let start = centres.len();
        centres.extend_from_slice(point(pick));
        let c = centres[start..].to_vec();
        nearest
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = d.min(dist2(point(i), &c)));
    }
    centres
}

/// Nearest centre (lowest index on ties) and squared distance per point.
fn assign(data: &[f64], p: usize, centres: &[f64], labels: &mut [usize], dists: &mut [f64]) {
    labels
        .par_iter_mut()
        .zip(dists.par_iter_mut())
        .enumerate()
        .for_each(|(i, (label, dist))| {
            let x = &data[i * p..(i + 1) * p];
            let (best, d) = centres
                .chunks_exact(p)
                .map(|c| dist2(x, c))
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (r, d)| if d < acc.1 { (r, d) } else { acc });
            *label = best;
            *dist = d;
        });
}

fn min_atom_separation(centres: &[f64], p: usize) -> f64 {
    let atoms: Vec<&[f64]> = centres.chunks_exact(p).collect();
    let mut best = f64::INFINITY;
    for (a, x) in atoms.iter().enumerate() {
        for y in &atoms[a + 1..] {
            best = best.min(dist2(x, y).sqrt());
        }
    }
    if best.is_finite() {
        best
    } else {
        1.0
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `k x m` Gaussian soft-assignment codes; every column is a probability
/// vector.
pub fn soft_assign(sgws: &SgwsMatrix, dict: &Dictionary, sigma: f64) -> Result<DMatrix<f64>> {
    if sgws.dim() != dict.dim() {
        return Err(Error::Dimension(format!(
            "signature has {} rows, dictionary atoms have {}",
            sgws.dim(),
            dict.dim()
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {sigma}")));
    }
    let k = dict.size();
    let m = sgws.num_vertices();
    let scale = -0.5 / (sigma * sigma);
    let mut codes = DMatrix::zeros(k, m);
    codes
        .as_mut_slice()
        .par_chunks_mut(k)
        .zip(sgws.values.as_slice().par_chunks(sgws.dim()))
        .for_each(|(u, s)| {
            for (r, atom) in dict.atoms.column_iter().enumerate() {
                u[r] = scale * dist2(s, atom.as_slice());
            }
            let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in u.iter_mut() {
                *x = (*x - top).exp();
                total += *x;
            }
            u.iter_mut().for_each(|x| *x /= total);
        });
    Ok(codes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceHistogram {
    pub values: Vec<f64>,
    pub surface_label: String,
    pub area_normalized: bool,
}

/// Sum pooling over vertices, `h_r = sum_i u_ri`, optionally divided by the
/// surface area.
pub fn pool_histogram(codes: &DMatrix<f64>, mesh_area: f64, normalize: bool) -> Result<SurfaceHistogram> {
    if normalize && !(mesh_area > 0.0 && mesh_area.is_finite()) {
        return Err(Error::Domain(format!("surface area must be positive, got {mesh_area}")));
    }
    let mut values: Vec<f64> = codes.row_iter().map(|row| row.iter().sum()).collect();
    if normalize {
        values.iter_mut().for_each(|h| *h /= mesh_area);
    }
    Ok(SurfaceHistogram {
        values,
        surface_label: String::new(),
        area_normalized: normalize,
    })
}

/// Soft-assignment followed by pooling for one surface.
pub fn encode_surface(
    sgws: &SgwsMatrix,
    dict: &Dictionary,
    sigma: f64,
    mesh_area: f64,
    normalize: bool,
) -> Result<SurfaceHistogram> {
    let codes = soft_assign(sgws, dict, sigma)?;
    let mut hist = pool_histogram(&codes, mesh_area, normalize)?;
    hist.surface_label = sgws.source_label.clone();
    Ok(hist)
}

/// Left/right white and gray matter surfaces, in block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SurfaceTag {
    LW,
    LG,
    RW,
    RG,
}

impl SurfaceTag {
    pub const ALL: [SurfaceTag; 4] = [SurfaceTag::LW, SurfaceTag::LG, SurfaceTag::RW, SurfaceTag::RG];

    pub fn as_str(self) -> &'static str {
        match self {
            SurfaceTag::LW => "LW",
            SurfaceTag::LG => "LG",
            SurfaceTag::RW => "RW",
            SurfaceTag::RG => "RG",
        }
    }
}

impl fmt::Display for SurfaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SurfaceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SurfaceTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown surface tag '{s}' (expected LW, LG, RW or RG)")))
    }
}

/// Block names of a descriptor column; gray-minus-white differences last.
pub fn block_layout(with_differences: bool) -> Vec<String> {
    let mut layout: Vec<String> = SurfaceTag::ALL.iter().map(|t| t.to_string()).collect();
    if with_differences {
        layout.push("LG-LW".into());
        layout.push("RG-RW".into());
    }
    layout
}

/// Concatenates `h_LW, h_LG, h_RW, h_RG` and, if requested,
/// `h_LG - h_LW, h_RG - h_RW`.
pub fn assemble_waveletbrain(
    subject: &str,
    histograms: &HashMap<SurfaceTag, SurfaceHistogram>,
    with_differences: bool,
) -> Result<Vec<f64>> {
    let mut blocks = Vec::with_capacity(4);
    for tag in SurfaceTag::ALL {
        let h = histograms.get(&tag).ok_or_else(|| Error::MissingSurface {
            subject: subject.to_string(),
            surface: tag.to_string(),
        })?;
        blocks.push(h);
    }
    let k = blocks[0].values.len();
    let normalized = blocks[0].area_normalized;
    for (tag, h) in SurfaceTag::ALL.iter().zip(&blocks) {
        if h.values.len() != k || h.area_normalized != normalized {
            return Err(Error::Mismatch(format!(
                "subject {subject}: histogram {tag} does not match LW in size or area normalisation"
            )));
        }
    }
    let mut z: Vec<f64> = blocks.iter().flat_map(|h| h.values.iter().copied()).collect();
    if with_differences {
        for (white, gray) in [(0, 1), (2, 3)] {
            z.extend(blocks[gray].values.iter().zip(&blocks[white].values).map(|(g, w)| g - w));
        }
    }
    Ok(z)
}

/// Cohort descriptor matrix; one column per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBrainMatrix {
    pub columns: Vec<Vec<f64>>,
    pub block_layout: Vec<String>,
    pub subject_ids: Vec<String>,
}

impl WaveletBrainMatrix {
    pub fn new(subject_ids: Vec<String>, columns: Vec<Vec<f64>>, block_layout: Vec<String>) -> Result<Self> {
        if subject_ids.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} subject ids for {} descriptor columns",
                subject_ids.len(),
                columns.len()
            )));
        }
        if let Some(first) = columns.first() {
            let d = first.len();
            if let Some(i) = columns.iter().position(|c| c.len() != d) {
                return Err(Error::Dimension(format!(
                    "descriptor of {} has length {}, expected {d}",
                    subject_ids[i],
                    columns[i].len()
                )));
            }
            if block_layout.is_empty() || d % block_layout.len() != 0 {
                return Err(Error::Dimension(format!(
                    "descriptor length {d} does not split into {} blocks",
                    block_layout.len()
                )));
            }
        }
        Ok(Self {
            columns,
            block_layout,
            subject_ids,
        })
    }

    pub fn num_subjects(&self) -> usize {
        self.columns.len()
    }

    pub fn descriptor_len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// Z.csv: header `subject_id,feat_0,...`, one row per subject.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_feature_csv(out, &self.subject_ids, &self.columns)
    }
}

/// Writes `subject_id,feat_0,...` rows with shortest round-trip floats.
pub fn write_feature_csv<W: Write>(out: W, subject_ids: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = rows.first().map_or(0, Vec::len);
    let mut header = vec!["subject_id".to_string()];
    header.extend((0..d).map(|j| format!("feat_{j}")));
    w.write_record(&header)?;
    for (id, row) in subject_ids.iter().zip(rows) {
        let mut record = vec![id.clone()];
        record.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("feature table", e))?;
    Ok(())
}

/// Reads a feature table written by [`write_feature_csv`].
pub fn read_feature_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("subject_id") {
        return Err(Error::Format("feature table must start with a subject_id column".into()));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        ids.push(record[0].to_string());
        let row = record
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad feature value '{v}'"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if let Some(first) = rows.first() {
        if rows.iter().any(|row| row.len() != first.len()) {
            return Err(Error::Format("feature rows have different lengths".into()));
        }
    }
    Ok((ids, rows))
}

const DICT_MAGIC: &[u8; 7] = b"SWDICT1";

/// Binary dictionary: magic `SWDICT1`, little-endian `u32 p`, `u32 k`,
/// `f64 bandwidth`, `u64 seed`, `u32 iterations`, `f64 inertia`, then the
/// `p * k` atom entries atom by atom.
pub fn dictionary_to_bytes(dict: &Dictionary) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + 8 * dict.atoms.len());
    out.extend_from_slice(DICT_MAGIC);
    out.extend_from_slice(&(dict.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(dict.size() as u32).to_le_bytes());
    out.extend_from_slice(&dict.bandwidth.to_le_bytes());
    out.extend_from_slice(&dict.seed.to_le_bytes());
    out.extend_from_slice(&(dict.iterations as u32).to_le_bytes());
    out.extend_from_slice(&dict.inertia.to_le_bytes());
    for x in dict.atoms.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn parse_dictionary(bytes: &[u8]) -> Result<Dictionary> {
    let header = DICT_MAGIC.len() + 4 + 4 + 8 + 8 + 4 + 8;
    if bytes.len() < header || &bytes[..DICT_MAGIC.len()] != DICT_MAGIC {
        return Err(Error::Format("not a dictionary file".into()));
    }
    let mut at = DICT_MAGIC.len();
    let mut take = |n: usize| {
        let s = &bytes[at..at + n];
        at += n;
        s
    };
    let p = u32::from_le_bytes(take(4).try_into().expect("4 bytes")) as usize;
    let k = u32::from_le_bytes(take(4).try_into().expect("4 bytes")) as usize;
    let bandwidth = f64::from_le_bytes(take(8).try_into().expect("8 bytes"));
    let seed = u64::from_le_bytes(take(8).try_into().expect("8 bytes"));
    let iterations = u32::from_le_bytes(take(4).try_into().expect("4 bytes")) as usize;
    let inertia = f64::from_le_bytes(take(8).try_into().expect("8 bytes"));
    if p == 0 || k == 0 || bytes.len() != header + 8 * p * k {
        return Err(Error::Format(format!(
            "dictionary of {p}x{k} atoms needs {} bytes, file has {}",
            header + 8 * p * k,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|x| !x.is_finite()) || !(bandwidth > 0.0) {
        return Err(Error::Format("dictionary contains non-finite atoms or bandwidth".into()));
    }
    Ok(Dictionary {
        atoms: DMatrix::from_column_slice(p, k, &values),
        bandwidth,
        seed,
        iterations,
        inertia,
    })
}

pub fn save_dictionary(path: impl AsRef<Path>, dict: &Dictionary) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dictionary_to_bytes(dict)).map_err(|e| Error::io(path, e))
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_dictionary(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand_distr::{Distribution, StandardNormal};

    fn sgws_from_columns(p: usize, cols: &[Vec<f64>]) -> SgwsMatrix {
        let flat: Vec<f64> = cols.iter().flatten().copied().collect();
        SgwsMatrix {
            values: DMatrix::from_column_slice(p, cols.len(), &flat),
            level: p - 1,
            source_label: "test".into(),
        }
    }

    fn hist(values: &[f64]) -> SurfaceHistogram {
        SurfaceHistogram {
            values: values.to_vec(),
            surface_label: String::new(),
            area_normalized: false,
        }
    }

    #[test]
    fn planted_clusters_are_recovered() {
        // Symmetric offsets make every cluster mean exactly its centre.
        let means = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 5.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cols = Vec::new();
        for mu in &means {
            for _ in 0..50 {
                let e: Vec<f64> = (0..3).map(|_| 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
                cols.push(mu.iter().zip(&e).map(|(m, x)| m + x).collect());
                cols.push(mu.iter().zip(&e).map(|(m, x)| m - x).collect());
            }
        }
        let s = sgws_from_columns(3, &cols);
        let dict = build_dictionary(&[&s], 3, 42).unwrap();
        for mu in &means {
            let best = dict
                .atoms
                .column_iter()
                .map(|a| dist2(a.as_slice(), mu).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-3, "mean {mu:?} missed by {best}");
        }
    }

    #[test]
    fn one_atom_per_distinct_point_gives_zero_inertia() {
        let cols = vec![vec![0.0, 1.0], vec![3.0, 1.0], vec![0.0, 1.0], vec![-2.0, 5.0]];
        let dict = build_dictionary(&[&sgws_from_columns(2, &cols)], 3, 9).unwrap();
        assert_eq!(dict.inertia, 0.0);
        assert!(dict.bandwidth > 0.0);
    }

    #[test]
    fn dictionary_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cols: Vec<Vec<f64>> = (0..400).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let s = sgws_from_columns(4, &cols);
        let a = build_dictionary(&[&s], 16, 3).unwrap();
        let b = build_dictionary(&[&s], 16, 3).unwrap();
        assert_eq!(dictionary_to_bytes(&a), dictionary_to_bytes(&b));
        let c = build_dictionary(&[&s], 16, 4).unwrap();
        assert_ne!(a.atoms, c.atoms);
        for i in 0..16 {
            for j in i + 1..16 {
                assert_ne!(a.atoms.column(i), a.atoms.column(j));
            }
        }
    }

    #[test]
    fn dictionary_errors() {
        let same = sgws_from_columns(2, &vec![vec![1.0, 2.0]; 10]);
        assert!(matches!(build_dictionary(&[&same], 2, 0), Err(Error::DegenerateData(_))));
        assert!(matches!(build_dictionary(&[&same], 11, 0), Err(Error::Domain(_))));
        let other = sgws_from_columns(3, &[vec![0.0; 3]]);
        assert!(matches!(build_dictionary(&[&same, &other], 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn dictionary_bytes_round_trip() {
        let cols = vec![vec![0.0, 1.0], vec![3.0, 1.0], vec![-2.0, 5.0], vec![1.0, 1.0]];
        let dict = build_dictionary(&[&sgws_from_columns(2, &cols)], 2, 1).unwrap();
        let bytes = dictionary_to_bytes(&dict);
        assert_eq!(parse_dictionary(&bytes).unwrap(), dict);
        assert!(parse_dictionary(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_dictionary(b"SGWS1....").is_err());
    }

    fn two_atom_dict(atoms: &[[f64; 2]]) -> Dictionary {
        let flat: Vec<f64> = atoms.iter().flatten().copied().collect();
        Dictionary {
            atoms: DMatrix::from_column_slice(2, atoms.len(), &flat),
            bandwidth: 1.0,
            seed: 0,
            iterations: 0,
            inertia: 0.0,
        }
    }

    #[test]
    fn soft_assignment_limits() {
        let dict = two_atom_dict(&[[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]]);
        let s = sgws_from_columns(2, &[vec![0.0, 0.0]]);
        let u = soft_assign(&s, &dict, 1.0).unwrap();
        assert_eq!(u[(0, 0)], 1.0);
        assert!(u[(1, 0)] < 1e-300 && u[(2, 0)] < 1e-300);

        let square = two_atom_dict(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]);
        let u = soft_assign(&s, &square, 0.7).unwrap();
        for r in 0..4 {
            assert!((u[(r, 0)] - 0.25).abs() < 1e-15);
        }
        assert!(matches!(soft_assign(&s, &square, 0.0), Err(Error::Domain(_))));
        let wrong = sgws_from_columns(3, &[vec![0.0; 3]]);
        assert!(matches!(soft_assign(&wrong, &square, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn tiny_bandwidth_recovers_hard_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let atoms: Vec<[f64; 2]> = (0..8).map(|_| [rng.random(), rng.random()]).collect();
        let dict = two_atom_dict(&atoms);
        let cols: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random(), rng.random()]).collect();
        let s = sgws_from_columns(2, &cols);
        let u = soft_assign(&s, &dict, 1e-4).unwrap();
        for (i, x) in cols.iter().enumerate() {
            let nearest = (0..8)
                .min_by(|&a, &b| dist2(x, &atoms[a]).total_cmp(&dist2(x, &atoms[b])))
                .unwrap();
            assert_eq!(u.column(i).argmax().0, nearest, "point {i}");
        }
    }

    #[test]
    fn pooling_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cols: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random(), rng.random()]).collect();
        let dict = two_atom_dict(&[[0.2, 0.2], [0.8, 0.3], [0.5, 0.9]]);
        let u = soft_assign(&sgws_from_columns(2, &cols), &dict, 0.2).unwrap();
        let h = pool_histogram(&u, 3.0, false).unwrap();
        assert!((h.values.iter().sum::<f64>() - 100.0).abs() < 1e-10);
        let hn = pool_histogram(&u, 3.0, true).unwrap();
        for (a, b) in h.values.iter().zip(&hn.values) {
            assert_eq!(a / 3.0, *b);
        }
        let doubled: Vec<Vec<f64>> = cols.iter().chain(&cols).cloned().collect();
        let u2 = soft_assign(&sgws_from_columns(2, &doubled), &dict, 0.2).unwrap();
        let h2 = pool_histogram(&u2, 3.0, false).unwrap();
        for (a, b) in h.values.iter().zip(&h2.values) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        assert!(matches!(pool_histogram(&u, 0.0, true), Err(Error::Domain(_))));
    }

    #[test]
    fn assembly_follows_fixed_layout() {
        let parts = [
            (SurfaceTag::RG, hist(&[0.0, 2.0])),
            (SurfaceTag::LW, hist(&[1.0, 0.0])),
            (SurfaceTag::RW, hist(&[2.0, 0.0])),
            (SurfaceTag::LG, hist(&[0.0, 1.0])),
        ];
        let map: HashMap<_, _> = parts.iter().cloned().collect();
        assert_eq!(
            assemble_waveletbrain("s", &map, false).unwrap(),
            vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 2.0]
        );
        let z = assemble_waveletbrain("s", &map, true).unwrap();
        assert_eq!(&z[8..], &[-1.0, 1.0, -2.0, 2.0]);
        let reversed: HashMap<_, _> = parts.iter().rev().cloned().collect();
        assert_eq!(assemble_waveletbrain("s", &reversed, true).unwrap(), z);
        assert_eq!(block_layout(true).len(), 6);

        let mut missing = map.clone();
        missing.remove(&SurfaceTag::RW);
        match assemble_waveletbrain("s1", &missing, false) {
            Err(Error::MissingSurface { subject, surface }) => assert_eq!((subject.as_str(), surface.as_str()), ("s1", "RW")),
            other => panic!("{other:?}"),
        }
        let mut uneven = map.clone();
        uneven.insert(SurfaceTag::LG, hist(&[1.0, 2.0, 3.0]));
        assert!(matches!(assemble_waveletbrain("s", &uneven, false), Err(Error::Mismatch(_))));
    }

    #[test]
    fn feature_csv_round_trip() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let rows = vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0]];
        let z = WaveletBrainMatrix::new(ids.clone(), rows.clone(), vec!["LW".into(), "LG".into()]).unwrap();
        let mut buf = Vec::new();
        z.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("subject_id,feat_0,feat_1\n"));
        assert_eq!(read_feature_csv(buf.as_slice()).unwrap(), (ids, rows));
        assert!(WaveletBrainMatrix::new(vec!["a".into()], vec![vec![1.0; 3]], vec!["LW".into(), "LG".into()]).is_err());
    }

    #[test]
    fn surface_tags_parse() {
        assert_eq!("lg".parse::<SurfaceTag>().unwrap(), SurfaceTag::LG);
        assert!("XX".parse::<SurfaceTag>().is_err());
    }

    proptest! {
        #[test]
        fn codes_are_probability_vectors(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40),
            sigma in 0.01f64..10.0,
        ) {
            let dict = two_atom_dict(&[[0.0, 0.0], [1.0, 2.0], [-3.0, 1.0]]);
            let cols: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
            let u = soft_assign(&sgws_from_columns(2, &cols), &dict, sigma).unwrap();
            for col in u.column_iter() {
                prop_assert!(col.iter().all(|&x| x >= 0.0));
                prop_assert!((col.sum() - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn pooling_ignores_vertex_order(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40),
            rot in 0usize..40,
        ) {
            let dict = two_atom_dict(&[[0.0, 0.0], [1.0, 2.0], [-3.0, 1.0]]);
            let mut cols: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
            let h = pool_histogram(&soft_assign(&sgws_from_columns(2, &cols), &dict, 1.0).unwrap(), 1.0, false).unwrap();
            let n = cols.len();
            cols.rotate_left(rot % n);
            cols.reverse();
            let g = pool_histogram(&soft_assign(&sgws_from_columns(2, &cols), &dict, 1.0).unwrap(), 1.0, false).unwrap();
            for (a, b) in h.values.iter().zip(&g.values) {
                prop_assert!((a - b).abs() <= 1e-12 * n as f64);
            }
        }
    }
}
