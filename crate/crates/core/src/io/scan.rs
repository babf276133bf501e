//! ASCII scan files.
//!
//! ```text
//! # comment
//! NODE x y z [roll pitch yaw]
//! P x y z
//! P x y z
//! NODE ...
//! ```
//!
//! Points are world-frame coordinates in meters. The optional orientation on a
//! `NODE` line is carried through but not applied.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scan {
    pub origin: [f64; 3],
    /// Sensor orientation (roll, pitch, yaw), informational only.
    pub rpy: [f64; 3],
    pub points: Vec<[f64; 3]>,
}

impl Scan {
    pub fn new(origin: [f64; 3], points: Vec<[f64; 3]>) -> Self {
        Scan { origin, rpy: [0.0; 3], points }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanFile {
    pub scans: Vec<Scan>,
}

impl ScanFile {
    pub fn point_count(&self) -> usize {
        self.scans.iter().map(|s| s.points.len()).sum()
    }

    /// True if any scan carries a non-zero orientation.
    pub fn has_rotation(&self) -> bool {
        self.scans.iter().any(|s| s.rpy != [0.0; 3])
    }
}

fn numbers(fields: &[&str], path: &str, line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                path: path.to_string(),
                line,
                msg: format!("not a number: {f:?}"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse { path: path.to_string(), line, msg: format!("non-finite value {f:?}") })
            }
        })
        .collect()
}

/// Parse scan text; `path` only labels errors.
pub fn parse_scans_str(text: &str, path: &str) -> Result<ScanFile> {
    let mut file = ScanFile::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        let err = |msg: String| Error::Parse { path: path.to_string(), line, msg };
        match fields[0] {
            "NODE" => {
                let v = numbers(&fields[1..], path, line)?;
                let rpy = match v.len() {
                    3 => [0.0; 3],
                    6 => [v[3], v[4], v[5]],
                    n => return Err(err(format!("NODE takes 3 or 6 numbers, got {n}"))),
                };
                file.scans.push(Scan { origin: [v[0], v[1], v[2]], rpy, points: Vec::new() });
            }
            "P" => {
                let v = numbers(&fields[1..], path, line)?;
                if v.len() != 3 {
                    return Err(err(format!("P takes 3 numbers, got {}", v.len())));
                }
                let scan = file.scans.last_mut().ok_or_else(|| err("point before any NODE".into()))?;
                scan.points.push([v[0], v[1], v[2]]);
            }
            other => return Err(err(format!("unknown record {other:?}"))),
        }
    }
    Ok(file)
}

pub fn parse_scans(path: impl AsRef<Path>) -> Result<ScanFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_scans_str(&text, &path.display().to_string())
}

/// Canonical text form. Floats use the shortest round-trip representation.
pub fn emit_scans(file: &ScanFile) -> String {
    let mut out = String::new();
    for s in &file.scans {
        let [x, y, z] = s.origin;
        let _ = write!(out, "NODE {x} {y} {z}");
        if s.rpy != [0.0; 3] {
            let [r, p, w] = s.rpy;
            let _ = write!(out, " {r} {p} {w}");
        }
        out.push('\n');
        for [x, y, z] in &s.points {
            let _ = writeln!(out, "P {x} {y} {z}");
        }
    }
    out
}

pub fn write_scans(path: impl AsRef<Path>, file: &ScanFile) -> Result<()> {
    std::fs::write(path, emit_scans(file))?;
    Ok(())
}
