//! Synthetic scenes with exact ground truth.
//!
//! A scene is described in TOML:
//!
//! ```toml
//! width = 320
//! height = 240
//! d_max = 128
//! noise_sigma = 0.5
//! outlier_rate = 0.05
//! invalid_rate = 0.0
//! rng_seed = 7
//!
//! [[ground]]          # bottom-up row ranges, inclusive, tiling 1..=G
//! rows = [1, 120]
//! a = 70.0
//! b = -0.5
//!
//! [[objects]]         # columns are [x0, x1); later objects cover earlier ones
//! columns = [100, 160]
//! rows = [60, 150]
//! a = 40.0
//! class = 2
//! ```
//!
//! Rows above the last ground segment are sky. Row `v` is image row
//! `height - v`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ConfidenceImage, DisparityImage, Grid, LabelImage, SemanticImage};
use crate::types::{GeometricClass, Plane, Stixel, StixelColumn};

fn default_softness() -> f64 {
    0.9
}

fn default_class_count() -> usize {
    4
}

fn default_sky_class() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundSegment {
    pub rows: [usize; 2],
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub columns: [usize; 2],
    pub rows: [usize; 2],
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub d_max: u32,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub outlier_rate: f64,
    #[serde(default)]
    pub invalid_rate: f64,
    /// Measured disparities are rounded to multiples of this step (0 = off),
    /// mimicking the discrete output of a block matcher.
    #[serde(default)]
    pub quantization: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Score mass on the true class; the rest is spread evenly.
    #[serde(default = "default_softness")]
    pub semantic_softness: f64,
    #[serde(default = "default_class_count")]
    pub class_count: usize,
    #[serde(default = "default_sky_class")]
    pub sky_class: usize,
    #[serde(default)]
    pub ground: Vec<GroundSegment>,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
}

/// Generated images and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub disparity: DisparityImage,
    pub disparity_gt: DisparityImage,
    pub confidence: ConfidenceImage,
    pub labels: LabelImage,
    pub semantic: SemanticImage,
    /// One column per image column at full vertical resolution.
    pub gt_columns: Vec<StixelColumn>,
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Region {
    Ground(usize),
    Object(usize),
    Sky,
}

impl SceneSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| spec_err(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidSpec(m) => Error::InvalidSpec(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(spec_err("width and height must be positive"));
        }
        if self.d_max == 0 {
            return Err(spec_err("d_max must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(spec_err("noise_sigma must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.outlier_rate) {
            return Err(spec_err("outlier_rate must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.invalid_rate) || self.invalid_rate + self.outlier_rate > 1.0 {
            return Err(spec_err("invalid_rate must lie in [0, 1] and rates must sum to at most 1"));
        }
        if !(self.quantization >= 0.0 && self.quantization.is_finite()) {
            return Err(spec_err("quantization must be finite and non-negative"));
        }
        if self.class_count == 0 || self.class_count > 255 {
            return Err(spec_err("class_count must lie in 1..=255"));
        }
        let lo = 1.0 / self.class_count as f64;
        if !(lo..=1.0).contains(&self.semantic_softness) {
            return Err(spec_err(format!("semantic_softness must lie in [{lo}, 1]")));
        }
        if self.sky_class >= self.class_count {
            return Err(spec_err("sky_class out of range"));
        }
        let in_range = |p: Plane, rows: [usize; 2], what: &str| -> Result<()> {
            for v in rows {
                let d = p.disparity_at(v as f64);
                if !(0.0..=self.d_max as f64).contains(&d) {
                    return Err(spec_err(format!("{what} disparity {d} at row {v} outside [0, {}]", self.d_max)));
                }
            }
            Ok(())
        };
        let mut next = 1;
        for (i, g) in self.ground.iter().enumerate() {
            if g.rows[0] != next || g.rows[1] < g.rows[0] || g.rows[1] > self.height {
                return Err(spec_err(format!(
                    "ground segment {i} rows {:?} must continue at row {next} and stay within the image",
                    g.rows
                )));
            }
            if g.class >= self.class_count {
                return Err(spec_err(format!("ground segment {i} class out of range")));
            }
            in_range(Plane::new(g.a, g.b), g.rows, &format!("ground segment {i}"))?;
            next = g.rows[1] + 1;
        }
        for (i, o) in self.objects.iter().enumerate() {
            let [x0, x1] = o.columns;
            let [r0, r1] = o.rows;
            if x0 >= x1 || x1 > self.width || r0 == 0 || r0 > r1 || r1 > self.height {
                return Err(spec_err(format!("object {i} box {:?} x {:?} outside the image", o.columns, o.rows)));
            }
            if o.class >= self.class_count {
                return Err(spec_err(format!("object {i} class out of range")));
            }
            in_range(Plane::new(o.a, o.b), o.rows, &format!("object {i}"))?;
        }
        Ok(())
    }

    fn region(&self, x: usize, v: usize) -> Region {
        if let Some(i) = self
            .objects
            .iter()
            .rposition(|o| (o.columns[0]..o.columns[1]).contains(&x) && (o.rows[0]..=o.rows[1]).contains(&v))
        {
            return Region::Object(i);
        }
        match self.ground.iter().position(|g| (g.rows[0]..=g.rows[1]).contains(&v)) {
            Some(i) => Region::Ground(i),
            None => Region::Sky,
        }
    }

    fn region_stixel(&self, region: Region, v_bottom: usize, v_top: usize) -> Stixel {
        let (geom_class, sem_class, plane) = match region {
            Region::Ground(i) => {
                let g = &self.ground[i];
                (GeometricClass::Ground, g.class, Plane::new(g.a, g.b))
            }
            Region::Object(i) => {
                let o = &self.objects[i];
                (GeometricClass::Object, o.class, Plane::new(o.a, o.b))
            }
            Region::Sky => (GeometricClass::Sky, self.sky_class, Plane::ZERO),
        };
        Stixel {
            v_bottom,
            v_top,
            geom_class,
            sem_class,
            plane,
        }
    }

    /// Ground-truth Stixels of image column `x`.
    fn gt_column(&self, x: usize) -> StixelColumn {
        let h = self.height;
        let mut stixels = Vec::new();
        let mut start = 1;
        let mut current = self.region(x, 1);
        for v in 2..=h + 1 {
            let r = if v <= h { Some(self.region(x, v)) } else { None };
            if r != Some(current) {
                stixels.push(self.region_stixel(current, start, v - 1));
                if let Some(r) = r {
                    current = r;
                    start = v;
                }
            }
        }
        StixelColumn::new(stixels, h).expect("runs tile the column")
    }
}

/// Disparity of a ground-truth Stixel at full-resolution row `v`.
pub fn gt_disparity(s: &Stixel, v: usize, d_max: u32) -> f64 {
    match s.geom_class {
        GeometricClass::Sky => 0.0,
        _ => s.plane.disparity_at(v as f64).clamp(0.0, d_max as f64),
    }
}

/// Renders the scene and draws its measurement noise. Deterministic for a
/// given spec, including the seed.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let d_max = spec.d_max as f64;
    let gt_columns: Vec<StixelColumn> = (0..w).map(|x| spec.gt_column(x)).collect();
    let mut disparity_gt = Grid::filled(w, h, 0.0f32);
    let mut labels = Grid::filled(w, h, 0u8);
    for (x, col) in gt_columns.iter().enumerate() {
        for s in col.stixels() {
            for v in s.v_bottom..=s.v_top {
                disparity_gt.set(x, h - v, gt_disparity(s, v, spec.d_max) as f32);
                labels.set(x, h - v, s.sem_class as u8);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| spec_err(e.to_string()))?;
    let mut disparity = Grid::filled(w, h, 0.0f32);
    for y in 0..h {
        for x in 0..w {
            // Every pixel consumes the same draws so the stream stays aligned.
            let u: f64 = rng.gen();
            let outlier = rng.gen_range(0.0..=d_max);
            let n = noise.sample(&mut rng);
            let d = if u < spec.invalid_rate {
                f32::NAN
            } else {
                let raw = if u < spec.invalid_rate + spec.outlier_rate {
                    outlier
                } else {
                    disparity_gt.get(x, y) as f64 + n
                };
                let q = if spec.quantization > 0.0 {
                    (raw / spec.quantization).round() * spec.quantization
                } else {
                    raw
                };
                q.clamp(0.0, d_max) as f32
            };
            disparity.set(x, y, d);
        }
    }
    let semantic = SemanticImage::from_labels(&labels, spec.class_count, spec.semantic_softness)?;
    Ok(Scene {
        disparity,
        disparity_gt,
        confidence: Grid::filled(w, h, 1.0),
        labels,
        semantic,
        gt_columns,
    })
}
