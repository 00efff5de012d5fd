use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bof::SurfaceTag;
use crate::error::{Error, Result};

/// Token for missing metadata.
pub const NA: &str = "NA";

const COLUMNS: [&str; 8] = [
    "subject_id",
    "path_LW",
    "path_LG",
    "path_RW",
    "path_RG",
    "diagnosis",
    "age",
    "sex",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Diagnosis {
    AD,
    MCI,
    NC,
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Diagnosis::AD => "AD",
            Diagnosis::MCI => "MCI",
            Diagnosis::NC => "NC",
        })
    }
}

impl FromStr for Diagnosis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AD" => Ok(Diagnosis::AD),
            "MCI" => Ok(Diagnosis::MCI),
            "NC" => Ok(Diagnosis::NC),
            _ => Err(Error::Format(format!("unknown diagnosis '{s}' (expected AD, MCI, NC or NA)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::M => "M",
            Sex::F => "F",
        })
    }
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" => Ok(Sex::M),
            "F" => Ok(Sex::F),
            _ => Err(Error::Format(format!("unknown sex '{s}' (expected M, F or NA)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub subject_id: String,
    /// Surface paths in [`SurfaceTag::ALL`] order, as written in the manifest.
    pub paths: [PathBuf; 4],
    pub diagnosis: Option<Diagnosis>,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
}

impl ManifestRow {
    pub fn path(&self, tag: SurfaceTag) -> &Path {
        &self.paths[tag as usize]
    }

    /// True when the manifest lists no file for `tag` (empty or `NA`).
    pub fn is_missing(&self, tag: SurfaceTag) -> bool {
        let p = self.path(tag).as_os_str();
        p.is_empty() || p == NA
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// Relative surface paths are resolved against this directory.
    pub base_dir: PathBuf,
}

fn optional<T: FromStr<Err = Error>>(field: &str) -> Result<Option<T>> {
    if field.is_empty() || field == NA {
        Ok(None)
    } else {
        field.parse().map(Some)
    }
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for row in &rows {
            if row.subject_id.is_empty() {
                return Err(Error::Format("empty subject_id in manifest".into()));
            }
            if !seen.insert(row.subject_id.as_str()) {
                return Err(Error::Format(format!("duplicate subject_id '{}'", row.subject_id)));
            }
        }
        Ok(Self {
            rows,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(file, base)
    }

    pub fn parse<R: Read>(input: R, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers()?.clone();
        let index: Vec<usize> = COLUMNS
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == *c)
                    .ok_or_else(|| Error::Format(format!("manifest lacks column '{c}'")))
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let get = |c: usize| record.get(index[c]).unwrap_or("");
            let age = match get(6) {
                "" | NA => None,
                a => Some(
                    a.parse::<f64>()
                        .ok()
                        .filter(|a| a.is_finite())
                        .ok_or_else(|| at_row(line, Error::Format(format!("cannot parse age from '{a}'"))))?,
                ),
            };
            rows.push(ManifestRow {
                subject_id: get(0).to_string(),
                paths: [1, 2, 3, 4].map(|c| PathBuf::from(get(c))),
                diagnosis: optional(get(5)).map_err(|e| at_row(line, e))?,
                age,
                sex: optional(get(7)).map_err(|e| at_row(line, e))?,
            });
        }
        Self::new(rows, base_dir)
    }

    /// Absolute (or base-relative) location of a surface.
    pub fn resolve(&self, row: &ManifestRow, tag: SurfaceTag) -> PathBuf {
        let p = row.path(tag);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn get(&self, subject_id: &str) -> Option<&ManifestRow> {
        self.rows.iter().find(|r| r.subject_id == subject_id)
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for row in &self.rows {
            let na = |v: Option<String>| v.unwrap_or_else(|| NA.to_string());
            let mut record = vec![row.subject_id.clone()];
            record.extend(row.paths.iter().map(|p| p.to_string_lossy().into_owned()));
            record.push(na(row.diagnosis.map(|d| d.to_string())));
            record.push(na(row.age.map(|a| a.to_string())));
            record.push(na(row.sex.map(|s| s.to_string())));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("manifest", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(file)
    }
}

fn at_row(line: usize, e: Error) -> Error {
    Error::Format(format!("manifest row {}: {e}", line + 1))
}
