//! Readers and writers for OFF, ASCII PLY and FreeSurfer binary surfaces.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{validate_mesh, TriangleMesh, ValidationPolicy};
use crate::error::{Error, Result};

const FREESURFER_MAGIC: [u8; 3] = [0xFF, 0xFF, 0xFE];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshFormat {
    Off,
    PlyAscii,
    FreesurferBinary,
    Auto,
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "ply" | "ply-ascii" => Ok(Self::PlyAscii),
            "freesurfer" | "freesurfer-binary" | "fs" => Ok(Self::FreesurferBinary),
            "auto" => Ok(Self::Auto),
            other => Err(Error::Usage(format!("unknown mesh format '{other}'"))),
        }
    }
}

impl MeshFormat {
    /// Resolves `Auto` from magic bytes first, then the file extension.
    fn sniff(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.starts_with(&FREESURFER_MAGIC) {
            return Ok(Self::FreesurferBinary);
        }
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(16)]);
        let head = head.trim_start();
        if head.starts_with("OFF") {
            return Ok(Self::Off);
        }
        if head.starts_with("ply") {
            return Ok(Self::PlyAscii);
        }
        match extension(path).as_deref() {
            Some("off") => Ok(Self::Off),
            Some("ply") => Ok(Self::PlyAscii),
            _ => Err(Error::Format(format!(
                "cannot determine the format of {}",
                path.display()
            ))),
        }
    }

    /// Format implied by a path when writing: `.off`, `.ply`, anything else is
    /// FreeSurfer binary (FreeSurfer surfaces are named like `lh.white`).
    pub fn for_output(path: &Path) -> Self {
        match extension(path).as_deref() {
            Some("off") => Self::Off,
            Some("ply") => Self::PlyAscii,
            _ => Self::FreesurferBinary,
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

fn label_for(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads and strictly validates a mesh.
pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriangleMesh> {
    load_mesh_with(path, format, ValidationPolicy::STRICT)
}

pub fn load_mesh_with(
    path: impl AsRef<Path>,
    format: MeshFormat,
    policy: ValidationPolicy,
) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mesh(&bytes, path, format, policy)
}

/// Parses and validates mesh file contents already read from `path`; the
/// path supplies the label and, for `Auto`, an extension hint.
pub fn decode_mesh(
    bytes: &[u8],
    path: &Path,
    format: MeshFormat,
    policy: ValidationPolicy,
) -> Result<TriangleMesh> {
    Ok(validate_mesh(parse_mesh(bytes, path, format)?, policy)?.0)
}

/// As [`decode_mesh`] without validation; for inspecting faulty files.
pub fn parse_mesh(bytes: &[u8], path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    let format = match format {
        MeshFormat::Auto => MeshFormat::sniff(bytes, path)?,
        f => f,
    };
    let label = label_for(path);
    Ok(match format {
        MeshFormat::Off => parse_off(as_text(bytes)?, label)?,
        MeshFormat::PlyAscii => parse_ply(bytes, label)?,
        MeshFormat::FreesurferBinary => parse_freesurfer(bytes, label)?,
        MeshFormat::Auto => unreachable!(),
    })
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh, format: MeshFormat) -> Result<()> {
    let path = path.as_ref();
    let format = match format {
        MeshFormat::Auto => MeshFormat::for_output(path),
        f => f,
    };
    let bytes = match format {
        MeshFormat::Off => write_off(mesh).into_bytes(),
        MeshFormat::PlyAscii => write_ply(mesh).into_bytes(),
        _ => write_freesurfer(mesh),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn as_text(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|_| Error::Format("file is not valid UTF-8 text".into()))
}

fn parse_num<T: FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Format(format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::Format(format!("cannot parse {what} from '{tok}'")))
}

/// Lines with comments stripped and blanks skipped.
fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

pub fn parse_off(text: &str, label: impl Into<String>) -> Result<TriangleMesh> {
    let mut lines = content_lines(text);
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty OFF file".into()))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::Format(format!("expected OFF header, found '{header}'")))?
        .trim();
    let counts_line = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::Format("missing OFF counts line".into()))?
    } else {
        rest
    };
    let mut counts = counts_line.split_whitespace();
    let m: usize = parse_num(counts.next(), "vertex count")?;
    let g: usize = parse_num(counts.next(), "face count")?;

    let mut vertices = Vec::with_capacity(m);
    for i in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("OFF ended before vertex {i}")))?;
        let mut tok = line.split_whitespace();
        let mut p = [0.0; 3];
        for c in &mut p {
            *c = parse_num(tok.next(), "vertex coordinate")?;
        }
        vertices.push(p);
    }
    let mut triangles = Vec::with_capacity(g);
    for f in 0..g {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("OFF ended before face {f}")))?;
        let mut tok = line.split_whitespace();
        let n: usize = parse_num(tok.next(), "face arity")?;
        if n != 3 {
            return Err(Error::Format(format!("face {f} has {n} vertices; only triangles are supported")));
        }
        let mut t = [0usize; 3];
        for i in &mut t {
            *i = parse_num(tok.next(), "face index")?;
        }
        triangles.push(t);
    }
    TriangleMesh::new(vertices, triangles, label)
}

pub fn write_off(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "OFF");
    let _ = writeln!(out, "{} {} {}", mesh.num_vertices(), mesh.num_triangles(), mesh.num_edges());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    out
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

pub fn parse_ply(bytes: &[u8], label: impl Into<String>) -> Result<TriangleMesh> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Format("missing 'ply' magic line".into()));
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format("PLY header is not terminated".into()))?
            .trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => match tok.next() {
                Some("ascii") => {}
                Some(f) => return Err(Error::Format(format!("unsupported PLY format '{f}' (ASCII only)"))),
                None => return Err(Error::Format("PLY format line is empty".into())),
            },
            Some("element") => {
                let name = tok.next().unwrap_or_default().to_string();
                let count = parse_num(tok.next(), "PLY element count")?;
                elements.push(PlyElement {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Format("PLY property before any element".into()))?;
                let name = line.split_whitespace().last().unwrap_or_default().to_string();
                el.properties.push(name);
            }
            Some("end_header") => break,
            _ => {}
        }
    }

    let mut body = lines.map(str::trim).filter(|l| !l.is_empty());
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let pos = |n: &str| {
                    el.properties
                        .iter()
                        .position(|p| p == n)
                        .ok_or_else(|| Error::Format(format!("PLY vertex element lacks '{n}'")))
                };
                let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
                for i in 0..el.count {
                    let line = body
                        .next()
                        .ok_or_else(|| Error::Format(format!("PLY ended before vertex {i}")))?;
                    let vals: Vec<&str> = line.split_whitespace().collect();
                    let get = |k: usize| parse_num::<f64>(vals.get(k).copied(), "vertex coordinate");
                    vertices.push([get(ix)?, get(iy)?, get(iz)?]);
                }
            }
            "face" => {
                for f in 0..el.count {
                    let line = body
                        .next()
                        .ok_or_else(|| Error::Format(format!("PLY ended before face {f}")))?;
                    let mut tok = line.split_whitespace();
                    let n: usize = parse_num(tok.next(), "face arity")?;
                    if n != 3 {
                        return Err(Error::Format(format!("face {f} has {n} vertices; only triangles are supported")));
                    }
                    let mut t = [0usize; 3];
                    for i in &mut t {
                        *i = parse_num(tok.next(), "face index")?;
                    }
                    triangles.push(t);
                }
            }
            _ => {
                for _ in 0..el.count {
                    body.next();
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles, label)
}

pub fn write_ply(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.num_vertices(),
        mesh.num_triangles()
    );
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    out
}

struct BeReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BeReader<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated FreeSurfer file while reading {what}")))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let v = i32::from_be_bytes(self.take(what)?);
        usize::try_from(v).map_err(|_| Error::Format(format!("negative {what}: {v}")))
    }
}

/// FreeSurfer triangle surface: big-endian, magic `FF FF FE`, creator line
/// terminated by `\n\n`, vertex and face counts, float32 coordinates and
/// int32 indices.
pub fn parse_freesurfer(bytes: &[u8], label: impl Into<String>) -> Result<TriangleMesh> {
    if !bytes.starts_with(&FREESURFER_MAGIC) {
        return Err(Error::Format("missing FreeSurfer triangle magic FF FF FE".into()));
    }
    let body = &bytes[3..];
    let end = body
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Format("unterminated FreeSurfer creator string".into()))?;
    let mut r = BeReader {
        bytes: body,
        pos: end + 2,
    };
    let m = r.count("vertex count")?;
    let g = r.count("face count")?;
    let mut vertices = Vec::with_capacity(m);
    for _ in 0..m {
        let mut p = [0.0; 3];
        for c in &mut p {
            *c = f32::from_be_bytes(r.take("coordinates")?) as f64;
        }
        vertices.push(p);
    }
    let mut triangles = Vec::with_capacity(g);
    for _ in 0..g {
        let mut t = [0usize; 3];
        for i in &mut t {
            *i = r.count("face index")?;
        }
        triangles.push(t);
    }
    TriangleMesh::new(vertices, triangles, label)
}

pub fn write_freesurfer(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 12 * (mesh.num_vertices() + mesh.num_triangles()));
    out.extend_from_slice(&FREESURFER_MAGIC);
    out.extend_from_slice(format!("created by {}\n\n", crate::TOOL_VERSION).as_bytes());
    out.extend_from_slice(&(mesh.num_vertices() as i32).to_be_bytes());
    out.extend_from_slice(&(mesh.num_triangles() as i32).to_be_bytes());
    for v in mesh.vertices() {
        for &c in v {
            out.extend_from_slice(&(c as f32).to_be_bytes());
        }
    }
    for t in mesh.triangles() {
        for &i in t {
            out.extend_from_slice(&(i as i32).to_be_bytes());
        }
    }
    out
}
