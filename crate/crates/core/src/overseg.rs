//! Candidate Stixel boundaries: disparity extrema, semantic edges and
//! externally supplied cut masks.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::netpbm;
use crate::priors::CutSet;
use crate::types::{DisparityColumn, SemanticColumn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Below,
    Above,
}

/// Rows of the left/right local minima and maxima of the disparity series.
///
/// A plateau `t_p = .. = t_q` strictly below (or above) both neighbours makes
/// `p` a left extremum and `q` a right extremum; a single strict extremum is
/// both. Invalid pixels split the series into runs that are scanned
/// separately; plateaus touching a run end are not extrema.
pub fn extrema_rows(dcol: &DisparityColumn) -> Vec<usize> {
    let mut out = Vec::new();
    for (s, e) in valid_runs(dcol) {
        let val = |v: usize| dcol.disparity(v).expect("run rows are valid");
        let mut p = s;
        while p <= e {
            let mut q = p;
            while q < e && val(q + 1) == val(p) {
                q += 1;
            }
            if p > s && q < e {
                let side = |n: f64| if n > val(p) { Side::Above } else { Side::Below };
                let (lo, hi) = (side(val(p - 1)), side(val(q + 1)));
                if lo == hi {
                    out.push(p);
                    if q != p {
                        out.push(q);
                    }
                }
            }
            p = q + 1;
        }
    }
    out
}

/// Maximal runs `[s, e]` of valid disparities.
fn valid_runs(dcol: &DisparityColumn) -> Vec<(usize, usize)> {
    let h = dcol.height();
    let mut runs = Vec::new();
    let mut v = 1;
    while v <= h {
        if dcol.disparity(v).is_none() {
            v += 1;
            continue;
        }
        let s = v;
        while v < h && dcol.disparity(v + 1).is_some() {
            v += 1;
        }
        runs.push((s, v));
        v += 1;
    }
    runs
}

/// Extrema over-segmentation of one column.
///
/// An extremum at row `v` admits a Stixel ending at `v - 1` or at `v`; a valid
/// run `[s, e]` admits ends at `s - 1` and `e`. Rows 1 and `h` are always
/// included.
pub fn extrema_cuts(dcol: &DisparityColumn) -> CutSet {
    let h = dcol.height();
    let mut rows = vec![1, h];
    for v in extrema_rows(dcol) {
        rows.push(v);
        if v > 1 {
            rows.push(v - 1);
        }
    }
    for (s, e) in valid_runs(dcol) {
        if s > 1 {
            rows.push(s - 1);
        }
        rows.push(e);
    }
    CutSet::new(rows, h).expect("rows lie in 1..=h")
}

/// Rows `v` whose argmax class differs from the one at `v + 1`, plus `h`.
pub fn semantic_edge_cuts(scol: &SemanticColumn) -> CutSet {
    let h = scol.height();
    let rows = (1..h).filter(|&v| scol.argmax(v) != scol.argmax(v + 1)).collect();
    CutSet::new(rows, h).expect("rows lie in 1..=h")
}

/// Sorted union of two cut sets over the same column.
pub fn merge_cuts(a: &CutSet, b: &CutSet) -> CutSet {
    assert_eq!(a.height(), b.height(), "merging cut sets of different columns");
    let mut rows = Vec::with_capacity(a.len() + b.len());
    rows.extend_from_slice(a.rows());
    rows.extend_from_slice(b.rows());
    CutSet::new(rows, a.height()).expect("rows lie in 1..=h")
}

/// Per-column cut sets read from a mask file.
#[derive(Debug, Clone, PartialEq)]
pub struct CutMap {
    pub columns: Vec<CutSet>,
}

impl CutMap {
    /// Fraction of admissible rows over all columns.
    pub fn density(&self) -> f64 {
        mean_density(&self.columns)
    }
}

/// Mean cut density of a set of columns (0 when empty).
pub fn mean_density(columns: &[CutSet]) -> f64 {
    let rows: usize = columns.iter().map(|c| c.height()).sum();
    if rows == 0 {
        return 0.0;
    }
    columns.iter().map(|c| c.len()).sum::<usize>() as f64 / rows as f64
}

/// Reads a binary cut mask: an 8-bit graymap with one pixel per Stixel column
/// and coarse row, top row first. Pixel values are 0 (no cut) or 1/255 (cut).
pub fn load_cut_map(path: &Path, columns: usize, column_height: usize) -> Result<CutMap> {
    let img = netpbm::read_gray8(path)?;
    if img.dims() != (columns, column_height) {
        return Err(Error::DimensionMismatch(format!(
            "{}: cut mask is {}x{}, Stixel grid is {columns}x{column_height}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    let h = column_height;
    let mut out = Vec::with_capacity(columns);
    for x in 0..columns {
        let mut rows = Vec::new();
        for u in 1..=h {
            match img.get(x, h - u) {
                0 => {}
                1 | 255 => rows.push(u),
                value => {
                    return Err(Error::NotBinary {
                        path: path.to_path_buf(),
                        value: value as u16,
                    })
                }
            }
        }
        out.push(CutSet::new(rows, h)?);
    }
    Ok(CutMap { columns: out })
}
