//! Line-delimited JSON Stixel files.
//!
//! The first line is a header record, then one record per Stixel ordered by
//! column and bottom row:
//!
//! ```text
//! {"kind":"header","format":"stixels-v1","width":640,"height":480,...}
//! {"kind":"stixel","column":0,"v_bottom":1,"v_top":37,"geom":"ground","sem":0,"a":41.5,"b":-0.5,"energy":88.2}
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GeometricClass, Plane, Stixel, StixelColumn};

pub const FORMAT: &str = "stixels-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StixelFileHeader {
    pub format: String,
    /// Image size in pixels.
    pub width: usize,
    pub height: usize,
    /// Column height in coarse rows.
    pub column_height: usize,
    pub stixel_width: usize,
    pub vertical_downsample: usize,
    pub d_max: u32,
    pub columns: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StixelRecord {
    pub column: usize,
    pub v_bottom: usize,
    pub v_top: usize,
    pub geom: GeometricClass,
    pub sem: usize,
    pub a: f64,
    pub b: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header(StixelFileHeader),
    Stixel(StixelRecord),
}

/// Contents of a Stixel file.
#[derive(Debug, Clone, PartialEq)]
pub struct StixelFile {
    pub header: StixelFileHeader,
    pub columns: Vec<StixelColumn>,
    /// Per-Stixel energies, parallel to `columns`.
    pub energies: Vec<Vec<f64>>,
}

pub fn write_stixels(path: &Path, file: &StixelFile) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut emit = |line: &Line| -> Result<()> {
        let text = serde_json::to_string(line).expect("records serialize");
        writeln!(w, "{text}").map_err(|e| Error::io(path, e))
    };
    emit(&Line::Header(file.header.clone()))?;
    for (x, col) in file.columns.iter().enumerate() {
        for (i, s) in col.stixels().iter().enumerate() {
            emit(&Line::Stixel(StixelRecord {
                column: x,
                v_bottom: s.v_bottom,
                v_top: s.v_top,
                geom: s.geom_class,
                sem: s.sem_class,
                a: s.plane.a,
                b: s.plane.b,
                energy: file.energies.get(x).and_then(|e| e.get(i)).copied().unwrap_or(0.0),
            }))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a Stixel file. When `expected_hash` is given and differs from the
/// stored config hash, a warning is logged and returned alongside the data.
pub fn read_stixels(path: &Path, expected_hash: Option<&str>) -> Result<(StixelFile, Vec<String>)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut header: Option<StixelFileHeader> = None;
    let mut per_column: Vec<Vec<StixelRecord>> = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(&line).map_err(|e| parse_err(n, e.to_string()))?;
        match (rec, &header) {
            (Line::Header(h), None) if n == 1 => {
                if h.format != FORMAT {
                    return Err(parse_err(n, format!("unknown format {:?}", h.format)));
                }
                per_column = vec![Vec::new(); h.columns];
                header = Some(h);
            }
            (Line::Header(_), _) => return Err(parse_err(n, "header must be the first and only header line".into())),
            (Line::Stixel(_), None) => return Err(parse_err(n, "missing header".into())),
            (Line::Stixel(r), Some(h)) => {
                if r.column >= h.columns {
                    return Err(parse_err(n, format!("column {} out of range", r.column)));
                }
                per_column[r.column].push(r);
            }
        }
    }
    let header = header.ok_or_else(|| parse_err(1, "empty file".into()))?;
    let mut columns = Vec::with_capacity(header.columns);
    let mut energies = Vec::with_capacity(header.columns);
    if header.columns > 0 && per_column.iter().all(Vec::is_empty) {
        return Err(parse_err(1, "header lists columns but no Stixels follow".into()));
    }
    for (x, recs) in per_column.into_iter().enumerate() {
        let stixels = recs
            .iter()
            .map(|r| Stixel {
                v_bottom: r.v_bottom,
                v_top: r.v_top,
                geom_class: r.geom,
                sem_class: r.sem,
                plane: Plane::new(r.a, r.b),
            })
            .collect();
        let col = StixelColumn::new(stixels, header.column_height)
            .map_err(|e| Error::InvalidInput(format!("{}: column {x}: {e}", path.display())))?;
        energies.push(recs.iter().map(|r| r.energy).collect());
        columns.push(col);
    }
    let mut warnings = Vec::new();
    if let Some(expected) = expected_hash {
        if expected != header.config_hash {
            let msg = format!(
                "{}: written with config {} but current config is {expected}",
                path.display(),
                header.config_hash
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok((
        StixelFile {
            header,
            columns,
            energies,
        },
        warnings,
    ))
}
