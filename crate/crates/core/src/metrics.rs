//! Rendering Stixels back to dense images and evaluating them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DisparityImage, Grid, LabelImage, StixelGrid, VOID_LABEL};
use crate::types::{GeometricClass, StixelColumn};

/// Absolute error above which a disparity is an outlier (px).
pub const OUTLIER_ABS: f64 = 3.0;
/// Relative error above which a disparity is an outlier.
pub const OUTLIER_REL: f64 = 0.05;

/// Dense images reconstructed from Stixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub disparity: DisparityImage,
    pub labels: LabelImage,
}

/// Paints every pixel with the disparity and semantic class of its Stixel.
///
/// Planes are evaluated on the coarse row axis at each fine row's position and
/// clamped to `[0, d_max]`; Sky renders 0.
pub fn render(columns: &[StixelColumn], grid: &StixelGrid, d_max: u32) -> Result<Rendered> {
    if columns.len() != grid.columns() {
        return Err(Error::DimensionMismatch(format!(
            "{} Stixel columns for a grid of {}",
            columns.len(),
            grid.columns()
        )));
    }
    if let Some(c) = columns.iter().find(|c| c.height() != grid.column_height()) {
        return Err(Error::DimensionMismatch(format!(
            "column height {} for a grid of {} rows",
            c.height(),
            grid.column_height()
        )));
    }
    let (w, h) = (grid.image_width, grid.image_height);
    let mut disparity = Grid::filled(w, h, 0.0f32);
    let mut labels = Grid::filled(w, h, 0u8);
    for (x_col, col) in columns.iter().enumerate() {
        for r in 1..=h {
            let s = col.stixel_at(grid.coarse_row(r)).expect("column covers every row");
            let d = match s.geom_class {
                GeometricClass::Sky => 0.0,
                _ => s.plane.disparity_at(grid.coarse_coordinate(r)).clamp(0.0, d_max as f64),
            };
            let y = grid.image_y(r);
            for x in grid.x_range(x_col) {
                disparity.set(x, y, d as f32);
                labels.set(x, y, s.sem_class.min(254) as u8);
            }
        }
    }
    Ok(Rendered { disparity, labels })
}

/// Outlier test: absolute error above 3 px or relative error above 5%.
/// A missing prediction is an outlier.
#[inline]
pub fn is_disparity_outlier(pred: f64, gt: f64) -> bool {
    if pred.is_nan() {
        return true;
    }
    let err = (pred - gt).abs();
    err > OUTLIER_ABS || err > OUTLIER_REL * gt
}

/// Fraction of outliers over pixels with valid (finite, non-negative) ground truth.
pub fn disparity_outlier_rate(pred: &DisparityImage, gt: &DisparityImage) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {:?} but ground truth is {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let mut valid = 0usize;
    let mut outliers = 0usize;
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if !(g.is_finite() && g >= 0.0) {
            continue;
        }
        valid += 1;
        outliers += usize::from(is_disparity_outlier(p as f64, g as f64));
    }
    if valid == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(outliers as f64 / valid as f64)
}

/// Mean intersection-over-union over the classes present in the ground truth.
/// Void ground-truth pixels are ignored.
pub fn mean_iou(pred: &LabelImage, gt: &LabelImage, class_count: usize) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {:?} but ground truth is {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fneg = vec![0usize; class_count];
    let mut any = false;
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if g == VOID_LABEL {
            continue;
        }
        let g = g as usize;
        if g >= class_count {
            return Err(Error::InvalidInput(format!("ground-truth label {g} >= class count {class_count}")));
        }
        any = true;
        let p = p as usize;
        if p == g {
            tp[g] += 1;
        } else {
            fneg[g] += 1;
            if p < class_count {
                fp[p] += 1;
            }
        }
    }
    if !any {
        return Err(Error::NoValidPixels);
    }
    let present: Vec<usize> = (0..class_count).filter(|&c| tp[c] + fneg[c] > 0).collect();
    let sum: f64 = present
        .iter()
        .map(|&c| tp[c] as f64 / (tp[c] + fp[c] + fneg[c]) as f64)
        .sum();
    Ok(sum / present.len() as f64)
}

/// Evaluation summary of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub stixel_count: usize,
    pub columns: usize,
    pub outlier_rate: Option<f64>,
    pub mean_iou: Option<f64>,
    pub cut_density: Option<f64>,
    /// Wall time per pipeline stage, in seconds.
    pub stage_seconds: BTreeMap<String, f64>,
    pub total_seconds: f64,
    /// Frame rate; absent when no time was recorded or there is nothing to segment.
    pub hz: Option<f64>,
}

/// Stixel count, per-stage timings and frame rate.
pub fn summarize(columns: &[StixelColumn], timings: &[(&str, Duration)]) -> EvaluationReport {
    let stage_seconds: BTreeMap<String, f64> = timings.iter().map(|(k, d)| (k.to_string(), d.as_secs_f64())).collect();
    let total = timings.iter().fold(0.0, |acc, (_, d)| acc + d.as_secs_f64());
    let hz = if columns.is_empty() || total <= 0.0 { None } else { Some(1.0 / total) };
    EvaluationReport {
        stixel_count: columns.iter().map(StixelColumn::len).sum(),
        columns: columns.len(),
        outlier_rate: None,
        mean_iou: None,
        cut_density: None,
        stage_seconds,
        total_seconds: total,
        hz,
    }
}

impl EvaluationReport {
    /// `key=value` lines; absent values print as `undefined`.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v}"));
        let mut s = String::new();
        let _ = writeln!(s, "stixel_count={}", self.stixel_count);
        let _ = writeln!(s, "columns={}", self.columns);
        let _ = writeln!(s, "outlier_rate={}", opt(self.outlier_rate));
        let _ = writeln!(s, "mean_iou={}", opt(self.mean_iou));
        let _ = writeln!(s, "cut_density={}", opt(self.cut_density));
        for (k, v) in &self.stage_seconds {
            let _ = writeln!(s, "time.{k}={v}");
        }
        let _ = writeln!(s, "total_seconds={}", self.total_seconds);
        let _ = writeln!(s, "hz={}", opt(self.hz));
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
