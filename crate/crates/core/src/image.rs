//! Dense image containers and down-sampling into Stixel columns.
//!
//! Images are stored row-major with `y = 0` at the top. Stixel rows count
//! from the bottom: fine row `r` (1-based) is image row `height - r`.

use crate::config::{DownsampleMode, StixelModelConfig};
use crate::error::{Error, Result};
use crate::types::{soft_one_hot, DisparityColumn, SemanticColumn};

/// Label value marking unannotated pixels.
pub const VOID_LABEL: u8 = 255;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Grid { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// Disparities in pixels; NaN marks an invalid measurement.
pub type DisparityImage = Grid<f32>;
/// Per-pixel confidences in `[0, 1]`.
pub type ConfidenceImage = Grid<f32>;
/// Semantic class labels; [`VOID_LABEL`] is unannotated.
pub type LabelImage = Grid<u8>;

/// Per-pixel class scores stored planar: `[class][y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticImage {
    width: usize,
    height: usize,
    class_count: usize,
    scores: Vec<f32>,
}

impl SemanticImage {
    /// Scores must be non-negative; each pixel is renormalized to sum 1.
    pub fn new(width: usize, height: usize, class_count: usize, mut scores: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || class_count == 0 {
            return Err(Error::InvalidInput(format!(
                "empty semantic volume {width}x{height}x{class_count}"
            )));
        }
        let plane = width * height;
        if scores.len() != plane * class_count {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{class_count} volume needs {} scores, got {}",
                plane * class_count,
                scores.len()
            )));
        }
        for p in 0..plane {
            let mut sum = 0.0f64;
            for c in 0..class_count {
                let s = scores[c * plane + p];
                if !(s >= 0.0) || !s.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "score {s} at pixel ({}, {}) class {c}",
                        p % width,
                        p / width
                    )));
                }
                sum += s as f64;
            }
            if sum <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "scores at pixel ({}, {}) sum to zero",
                    p % width,
                    p / width
                )));
            }
            for c in 0..class_count {
                let s = &mut scores[c * plane + p];
                *s = (*s as f64 / sum) as f32;
            }
        }
        Ok(SemanticImage {
            width,
            height,
            class_count,
            scores,
        })
    }

    /// Softened one-hot scores from a label image; void pixels get uniform scores.
    pub fn from_labels(labels: &LabelImage, class_count: usize, softness: f64) -> Result<Self> {
        let (w, h) = labels.dims();
        let plane = w * h;
        let mut scores = vec![0.0f32; plane * class_count];
        for (p, &l) in labels.data().iter().enumerate() {
            if l == VOID_LABEL {
                for c in 0..class_count {
                    scores[c * plane + p] = 1.0 / class_count as f32;
                }
            } else if (l as usize) < class_count {
                for (c, s) in soft_one_hot(l as usize, class_count, softness).enumerate() {
                    scores[c * plane + p] = s as f32;
                }
            } else {
                return Err(Error::InvalidInput(format!(
                    "label {l} at pixel ({}, {}) >= class count {class_count}",
                    p % w,
                    p / w
                )));
            }
        }
        Self::new(w, h, class_count, scores)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    #[inline]
    pub fn score(&self, x: usize, y: usize, class: usize) -> f32 {
        self.scores[class * self.width * self.height + y * self.width + x]
    }

    /// Planar score data, `[class][y][x]`.
    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    /// Label image of per-pixel argmax classes.
    pub fn argmax_labels(&self) -> LabelImage {
        let mut out = Grid::filled(self.width, self.height, 0u8);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut best = 0;
                for c in 1..self.class_count {
                    if self.score(x, y, c) > self.score(x, y, best) {
                        best = c;
                    }
                }
                out.set(x, y, best as u8);
            }
        }
        out
    }
}

/// Geometry of the Stixel grid over an image.
///
/// Columns are `stixel_width` pixels wide from the left edge; rows are
/// `vertical_downsample` pixels tall from the bottom edge. Partial blocks at
/// the right and top borders form their own column or row. Stixel rows and
/// plane parameters are expressed in these coarse row units, disparities in
/// full-resolution pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StixelGrid {
    pub image_width: usize,
    pub image_height: usize,
    pub stixel_width: usize,
    pub vertical_downsample: usize,
}

impl StixelGrid {
    pub fn new(image_width: usize, image_height: usize, cfg: &StixelModelConfig) -> Self {
        StixelGrid {
            image_width,
            image_height,
            stixel_width: cfg.stixel_width,
            vertical_downsample: cfg.vertical_downsample,
        }
    }

    pub fn columns(&self) -> usize {
        self.image_width.div_ceil(self.stixel_width)
    }

    /// Column height in coarse rows.
    pub fn column_height(&self) -> usize {
        self.image_height.div_ceil(self.vertical_downsample)
    }

    /// Image x range covered by `column`.
    pub fn x_range(&self, column: usize) -> std::ops::Range<usize> {
        let x0 = column * self.stixel_width;
        x0..(x0 + self.stixel_width).min(self.image_width)
    }

    /// Fine rows (1-based, bottom-up) covered by coarse row `u`.
    pub fn fine_rows(&self, u: usize) -> std::ops::RangeInclusive<usize> {
        let r0 = (u - 1) * self.vertical_downsample + 1;
        r0..=(u * self.vertical_downsample).min(self.image_height)
    }

    /// Coarse row containing fine row `r`.
    #[inline]
    pub fn coarse_row(&self, r: usize) -> usize {
        r.div_ceil(self.vertical_downsample)
    }

    /// Position of fine row `r` on the continuous coarse row axis, so that a
    /// coarse plane evaluated there interpolates between block centres.
    #[inline]
    pub fn coarse_coordinate(&self, r: usize) -> f64 {
        let vd = self.vertical_downsample as f64;
        (r as f64 - (vd + 1.0) / 2.0) / vd + 1.0
    }

    /// Image row of fine row `r`.
    #[inline]
    pub fn image_y(&self, r: usize) -> usize {
        self.image_height - r
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Builds the measurement columns of Stixel column `column`.
///
/// A coarse pixel is valid when any of its fine pixels holds a finite,
/// non-negative disparity; its disparity is the median (or mean) of those,
/// clamped to `d_max`, and its confidence the mean of their confidences.
/// Semantic scores are averaged over the whole block.
pub fn extract_column(
    grid: &StixelGrid,
    column: usize,
    disparity: &DisparityImage,
    confidence: Option<&ConfidenceImage>,
    semantic: &SemanticImage,
    cfg: &StixelModelConfig,
) -> Result<(DisparityColumn, SemanticColumn)> {
    let h = grid.column_height();
    let cc = semantic.class_count();
    let xs = grid.x_range(column);
    let mut values = Vec::with_capacity(h);
    let mut confs = Vec::with_capacity(h);
    let mut scores = Vec::with_capacity(h * cc);
    let mut block = Vec::new();
    let mut acc = vec![0.0f64; cc];
    for u in 1..=h {
        block.clear();
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut conf_sum = 0.0;
        for r in grid.fine_rows(u) {
            let y = grid.image_y(r);
            for x in xs.clone() {
                let d = disparity.get(x, y);
                if d.is_finite() && d >= 0.0 {
                    block.push((d as f64).min(cfg.d_max as f64));
                    conf_sum += confidence.map_or(1.0, |c| c.get(x, y) as f64);
                }
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += semantic.score(x, y, c) as f64;
                }
            }
        }
        if block.is_empty() {
            values.push(None);
            confs.push(1.0);
        } else {
            let n = block.len() as f64;
            let d = match cfg.downsample {
                DownsampleMode::Median => median(&mut block),
                DownsampleMode::Mean => block.iter().sum::<f64>() / n,
            };
            values.push(Some(d));
            confs.push((conf_sum / n).clamp(0.0, 1.0));
        }
        let total: f64 = acc.iter().sum();
        scores.extend(acc.iter().map(|a| a / total));
    }
    Ok((
        DisparityColumn::new(values, confs, cfg.d_max)?,
        SemanticColumn::new(scores, cc)?,
    ))
}

/// Checks that the inputs of one frame agree in size and class count.
pub fn check_inputs(
    disparity: &DisparityImage,
    confidence: Option<&ConfidenceImage>,
    semantic: &SemanticImage,
    cfg: &StixelModelConfig,
) -> Result<()> {
    if disparity.dims() != semantic.dims() {
        return Err(Error::DimensionMismatch(format!(
            "disparity is {:?} but semantic is {:?}",
            disparity.dims(),
            semantic.dims()
        )));
    }
    if let Some(c) = confidence {
        if c.dims() != disparity.dims() {
            return Err(Error::DimensionMismatch(format!(
                "disparity is {:?} but confidence is {:?}",
                disparity.dims(),
                c.dims()
            )));
        }
        if let Some(bad) = c.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("confidence {bad} outside [0, 1]")));
        }
    }
    if semantic.class_count() != cfg.class_count() {
        return Err(Error::ClassCountMismatch {
            expected: cfg.class_count(),
            found: semantic.class_count(),
        });
    }
    Ok(())
}
