//! Domain types shared by every stage of the pipeline.
//!
//! Row convention: rows inside a column are 1-based and counted bottom-up,
//! so `v = 1` is the lowest image row of the column and `v = h` the top one.
//! Images (see [`crate::image`]) keep the usual top-down raster order; the
//! conversion happens once when columns are extracted.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural class of a Stixel.
///
/// The declaration order doubles as the tie-break order used by inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometricClass {
    Ground,
    Object,
    Sky,
}

impl GeometricClass {
    pub const ALL: [GeometricClass; 3] = [Self::Ground, Self::Object, Self::Sky];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ground => "ground",
            Self::Object => "object",
            Self::Sky => "sky",
        }
    }
}

impl fmt::Display for GeometricClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeometricClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ground" => Ok(Self::Ground),
            "object" => Ok(Self::Object),
            "sky" => Ok(Self::Sky),
            other => Err(Error::InvalidInput(format!("unknown geometric class `{other}`"))),
        }
    }
}

/// One value per geometric class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub ground: T,
    pub object: T,
    pub sky: T,
}

impl<T> PerClass<T> {
    pub fn from_fn(mut f: impl FnMut(GeometricClass) -> T) -> Self {
        PerClass {
            ground: f(GeometricClass::Ground),
            object: f(GeometricClass::Object),
            sky: f(GeometricClass::Sky),
        }
    }
}

impl<T> Index<GeometricClass> for PerClass<T> {
    type Output = T;

    fn index(&self, class: GeometricClass) -> &T {
        match class {
            GeometricClass::Ground => &self.ground,
            GeometricClass::Object => &self.object,
            GeometricClass::Sky => &self.sky,
        }
    }
}

impl<T> IndexMut<GeometricClass> for PerClass<T> {
    fn index_mut(&mut self, class: GeometricClass) -> &mut T {
        match class {
            GeometricClass::Ground => &mut self.ground,
            GeometricClass::Object => &mut self.object,
            GeometricClass::Sky => &mut self.sky,
        }
    }
}

/// Affine disparity model over rows: `d(v) = b * v + a`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Plane {
    /// Disparity offset in pixels.
    pub a: f64,
    /// Disparity slope in pixels per row.
    pub b: f64,
}

impl Plane {
    pub const ZERO: Plane = Plane { a: 0.0, b: 0.0 };

    pub fn new(a: f64, b: f64) -> Self {
        Plane { a, b }
    }

    pub fn constant(a: f64) -> Self {
        Plane { a, b: 0.0 }
    }

    /// Disparity of the plane at (possibly fractional) row `v`.
    #[inline]
    pub fn disparity_at(&self, v: f64) -> f64 {
        self.b * v + self.a
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }
}

/// Evaluates `p` at integer row `v`.
#[inline]
pub fn plane_disparity(p: &Plane, v: usize) -> f64 {
    p.disparity_at(v as f64)
}

/// A single vertical segment of a column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stixel {
    pub v_bottom: usize,
    pub v_top: usize,
    pub geom_class: GeometricClass,
    pub sem_class: usize,
    pub plane: Plane,
}

impl Stixel {
    pub fn len(&self) -> usize {
        self.v_top + 1 - self.v_bottom
    }

    pub fn is_empty(&self) -> bool {
        self.v_top < self.v_bottom
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.v_bottom..=self.v_top).contains(&v)
    }

    /// Disparity predicted by the Stixel's plane at row `v`.
    #[inline]
    pub fn disparity_at(&self, v: usize) -> f64 {
        plane_disparity(&self.plane, v)
    }
}

/// A complete segmentation of one column: connected, non-overlapping and
/// exhaustive over rows `1..=height`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StixelColumn {
    stixels: Vec<Stixel>,
    height: usize,
}

impl StixelColumn {
    pub fn new(stixels: Vec<Stixel>, height: usize) -> Result<Self> {
        if height == 0 {
            return Err(Error::InvalidInput("column height must be at least 1".into()));
        }
        let Some(first) = stixels.first() else {
            return Err(Error::InvalidInput("column has no stixels".into()));
        };
        if first.v_bottom != 1 {
            return Err(Error::InvalidInput(format!(
                "first stixel starts at row {} instead of 1",
                first.v_bottom
            )));
        }
        for (i, s) in stixels.iter().enumerate() {
            if s.v_top < s.v_bottom {
                return Err(Error::InvalidInput(format!(
                    "stixel {i} has top {} below bottom {}",
                    s.v_top, s.v_bottom
                )));
            }
            if !s.plane.is_finite() {
                return Err(Error::InvalidInput(format!("stixel {i} has a non-finite plane")));
            }
            if i > 0 && s.v_bottom != stixels[i - 1].v_top + 1 {
                return Err(Error::InvalidInput(format!(
                    "stixel {i} starts at row {} but previous ends at {}",
                    s.v_bottom,
                    stixels[i - 1].v_top
                )));
            }
        }
        let last = stixels.last().expect("non-empty");
        if last.v_top != height {
            return Err(Error::InvalidInput(format!(
                "last stixel ends at row {} instead of {height}",
                last.v_top
            )));
        }
        Ok(StixelColumn { stixels, height })
    }

    pub fn stixels(&self) -> &[Stixel] {
        &self.stixels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.stixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stixels.is_empty()
    }

    /// The Stixel covering row `v`.
    pub fn stixel_at(&self, v: usize) -> Option<&Stixel> {
        let idx = self.stixels.partition_point(|s| s.v_top < v);
        self.stixels.get(idx).filter(|s| s.contains(v))
    }

    pub fn into_stixels(self) -> Vec<Stixel> {
        self.stixels
    }
}

/// Disparity measurements of one (down-sampled) column, bottom-up.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityColumn {
    values: Vec<Option<f64>>,
    confidences: Vec<f64>,
    d_max: u32,
}

impl DisparityColumn {
    pub fn new(values: Vec<Option<f64>>, confidences: Vec<f64>, d_max: u32) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("disparity column is empty".into()));
        }
        if values.len() != confidences.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} disparities but {} confidences",
                values.len(),
                confidences.len()
            )));
        }
        if d_max == 0 {
            return Err(Error::InvalidInput("d_max must be positive".into()));
        }
        for (i, d) in values.iter().enumerate() {
            if let Some(d) = *d {
                if !(0.0..=d_max as f64).contains(&d) {
                    return Err(Error::InvalidInput(format!(
                        "disparity {d} at row {} outside [0, {d_max}]",
                        i + 1
                    )));
                }
            }
        }
        for (i, &c) in confidences.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidInput(format!(
                    "confidence {c} at row {} outside [0, 1]",
                    i + 1
                )));
            }
        }
        Ok(DisparityColumn {
            values,
            confidences,
            d_max,
        })
    }

    /// Column with unit confidence everywhere.
    pub fn from_values(values: Vec<Option<f64>>, d_max: u32) -> Result<Self> {
        let conf = vec![1.0; values.len()];
        Self::new(values, conf, d_max)
    }

    pub fn height(&self) -> usize {
        self.values.len()
    }

    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    /// Disparity at 1-based row `v`; `None` marks an invalid measurement.
    #[inline]
    pub fn disparity(&self, v: usize) -> Option<f64> {
        self.values[v - 1]
    }

    #[inline]
    pub fn confidence(&self, v: usize) -> f64 {
        self.confidences[v - 1]
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }
}

/// Tolerance on the per-row sum of semantic scores.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

/// Per-row normalized semantic class scores of one column, bottom-up.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticColumn {
    scores: Vec<f64>,
    class_count: usize,
}

impl SemanticColumn {
    /// `scores` is row-major: row `v` occupies `scores[(v-1)*C .. v*C]`.
    pub fn new(scores: Vec<f64>, class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::InvalidInput("class count must be at least 1".into()));
        }
        if scores.is_empty() || !scores.len().is_multiple_of(class_count) {
            return Err(Error::DimensionMismatch(format!(
                "{} scores is not a positive multiple of {class_count} classes",
                scores.len()
            )));
        }
        for (r, row) in scores.chunks_exact(class_count).enumerate() {
            if row.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(Error::InvalidInput(format!("score outside [0, 1] at row {}", r + 1)));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "scores at row {} sum to {sum}, not 1",
                    r + 1
                )));
            }
        }
        Ok(SemanticColumn {
            scores,
            class_count,
        })
    }

    /// Column whose rows all carry the same score vector.
    pub fn uniform_rows(row: &[f64], height: usize) -> Result<Self> {
        let scores = row.iter().copied().cycle().take(row.len() * height).collect();
        Self::new(scores, row.len())
    }

    /// Softened one-hot scores: `softness` mass on the label, the rest spread evenly.
    pub fn from_labels(labels: &[usize], class_count: usize, softness: f64) -> Result<Self> {
        let mut scores = Vec::with_capacity(labels.len() * class_count);
        for &l in labels {
            if l >= class_count {
                return Err(Error::InvalidInput(format!("label {l} >= class count {class_count}")));
            }
            scores.extend(soft_one_hot(l, class_count, softness));
        }
        Self::new(scores, class_count)
    }

    pub fn height(&self) -> usize {
        self.scores.len() / self.class_count
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    #[inline]
    pub fn row(&self, v: usize) -> &[f64] {
        &self.scores[(v - 1) * self.class_count..v * self.class_count]
    }

    /// Highest-scoring class at row `v` (lowest index wins ties).
    pub fn argmax(&self, v: usize) -> usize {
        argmax(self.row(v))
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in row.iter().enumerate() {
        if s > row[best] {
            best = i;
        }
    }
    best
}

/// Score vector with `softness` on `label` and the remainder spread over the other classes.
pub fn soft_one_hot(label: usize, class_count: usize, softness: f64) -> impl Iterator<Item = f64> {
    let rest = if class_count > 1 {
        (1.0 - softness) / (class_count - 1) as f64
    } else {
        0.0
    };
    (0..class_count).map(move |c| {
        if c == label {
            if class_count > 1 {
                softness
            } else {
                1.0
            }
        } else {
            rest
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stixel(b: usize, t: usize, g: GeometricClass) -> Stixel {
        Stixel {
            v_bottom: b,
            v_top: t,
            geom_class: g,
            sem_class: 0,
            plane: Plane::ZERO,
        }
    }

    #[test]
    fn plane_disparity_examples() {
        assert_eq!(plane_disparity(&Plane::new(5.0, 0.0), 17), 5.0);
        assert_eq!(plane_disparity(&Plane::new(0.0, 1.0), 4), 4.0);
        assert_eq!(plane_disparity(&Plane::new(2.5, -0.5), 10), -2.5);
    }

    #[test]
    fn column_rejects_gaps_and_bad_ends() {
        let ok = StixelColumn::new(
            vec![stixel(1, 3, GeometricClass::Ground), stixel(4, 6, GeometricClass::Sky)],
            6,
        );
        assert!(ok.is_ok());
        assert!(StixelColumn::new(vec![stixel(2, 6, GeometricClass::Ground)], 6).is_err());
        assert!(StixelColumn::new(vec![stixel(1, 5, GeometricClass::Ground)], 6).is_err());
        assert!(StixelColumn::new(
            vec![stixel(1, 2, GeometricClass::Ground), stixel(4, 6, GeometricClass::Sky)],
            6
        )
        .is_err());
        assert!(StixelColumn::new(vec![], 6).is_err());
    }

    #[test]
    fn stixel_lookup_by_row() {
        let col = StixelColumn::new(
            vec![
                stixel(1, 3, GeometricClass::Ground),
                stixel(4, 4, GeometricClass::Object),
                stixel(5, 9, GeometricClass::Sky),
            ],
            9,
        )
        .unwrap();
        assert_eq!(col.stixel_at(1).unwrap().geom_class, GeometricClass::Ground);
        assert_eq!(col.stixel_at(4).unwrap().geom_class, GeometricClass::Object);
        assert_eq!(col.stixel_at(9).unwrap().geom_class, GeometricClass::Sky);
        assert!(col.stixel_at(10).is_none());
    }

    #[test]
    fn disparity_column_validation() {
        assert!(DisparityColumn::from_values(vec![Some(0.0), None, Some(64.0)], 64).is_ok());
        assert!(DisparityColumn::from_values(vec![Some(64.5)], 64).is_err());
        assert!(DisparityColumn::from_values(vec![Some(-0.1)], 64).is_err());
        assert!(DisparityColumn::new(vec![Some(1.0)], vec![1.5], 64).is_err());
        assert!(DisparityColumn::from_values(vec![], 64).is_err());
    }

    #[test]
    fn semantic_column_requires_normalized_rows() {
        assert!(SemanticColumn::new(vec![0.5, 0.5, 0.2, 0.8], 2).is_ok());
        assert!(SemanticColumn::new(vec![0.5, 0.6], 2).is_err());
        assert!(SemanticColumn::new(vec![0.5, 0.5, 0.5], 2).is_err());
        let col = SemanticColumn::from_labels(&[0, 2, 1], 3, 0.9).unwrap();
        assert_eq!(col.argmax(1), 0);
        assert_eq!(col.argmax(2), 2);
        assert_eq!(col.argmax(3), 1);
    }

    proptest! {
        #[test]
        fn plane_disparity_is_affine(a in -100.0f64..100.0, b in -5.0f64..5.0, v1 in 1usize..2000, v2 in 1usize..2000) {
            let p = Plane::new(a, b);
            let mid = p.disparity_at((v1 + v2) as f64 / 2.0);
            let lhs = plane_disparity(&p, v1) + plane_disparity(&p, v2);
            prop_assert!((lhs - 2.0 * mid).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn accepted_columns_cover_every_row_once(cuts in proptest::collection::btree_set(1usize..40, 0..10)) {
            let h = 40;
            let mut ends: Vec<usize> = cuts.into_iter().filter(|&c| c < h).collect();
            ends.push(h);
            let mut stixels = Vec::new();
            let mut start = 1;
            for e in ends {
                stixels.push(stixel(start, e, GeometricClass::Object));
                start = e + 1;
            }
            let col = StixelColumn::new(stixels, h).unwrap();
            let covered: usize = col.stixels().iter().map(Stixel::len).sum();
            prop_assert_eq!(covered, h);
        }
    }
}
