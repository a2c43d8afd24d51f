//! Model configuration.
//!
//! Every constant of the energy lives in [`StixelModelConfig`]. Files are TOML
//! with keys mirroring the field names; missing keys take the defaults listed
//! in `docs/config.md`. Plane quantities (prior means and deviations) are in
//! units of the down-sampled row grid the solver works on.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{GeometricClass, PerClass};

/// Piecewise-linear penalty `alpha± + beta± * delta`, selected by the sign of `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewisePrior {
    pub alpha_neg: f64,
    pub beta_neg: f64,
    pub alpha_pos: f64,
    pub beta_pos: f64,
}

impl PiecewisePrior {
    pub const ZERO: PiecewisePrior = PiecewisePrior {
        alpha_neg: 0.0,
        beta_neg: 0.0,
        alpha_pos: 0.0,
        beta_pos: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderingPrior {
    pub alpha: f64,
    pub beta: f64,
}

/// Gaussian prior over the plane parameters of one geometric class.
///
/// A `fix_*` flag pins the parameter to its mean and removes it from fitting;
/// the matching sigma is then ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanePrior {
    pub mu_a: f64,
    pub mu_b: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub fix_a: bool,
    pub fix_b: bool,
    /// Normalizer `log Z`, subtracted from the quadratic.
    pub log_z: f64,
}

impl Default for PlanePrior {
    fn default() -> Self {
        PlanePrior {
            mu_a: 0.0,
            mu_b: 0.0,
            sigma_a: 1.0e3,
            sigma_b: 1.0,
            fix_a: false,
            fix_b: false,
            log_z: 0.0,
        }
    }
}

/// How blocks of pixels collapse into one down-sampled disparity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DownsampleMode {
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StixelModelConfig {
    /// Weight of the semantic data term.
    pub w_l: f64,
    /// Prior probability of a valid disparity measurement.
    pub p_val: f64,
    /// Outlier probability of a valid measurement.
    pub p_out: f64,
    /// Disparity noise per geometric class, in pixels.
    pub sigma_disp: PerClass<f64>,
    /// Cost paid by every Stixel.
    pub c_mc: f64,
    pub gravity: PiecewisePrior,
    pub ordering: OrderingPrior,
    pub ground_gap: PiecewisePrior,
    /// `transition[cur][prev]`, indexed ground/object/sky.
    pub transition: [[f64; 3]; 3],
    pub plane_prior: PerClass<PlanePrior>,
    pub stixel_width: usize,
    pub vertical_downsample: usize,
    pub downsample: DownsampleMode,
    pub d_max: u32,
    /// Geometric class of every semantic class; its length is the class count.
    pub class_geometry: Vec<GeometricClass>,
    /// Mass given to the labelled class when expanding label maps into scores.
    pub label_softness: f64,
    /// One robust reweighting step after the closed-form plane fit.
    pub reweight: bool,
}

impl Default for StixelModelConfig {
    fn default() -> Self {
        StixelModelConfig {
            w_l: 1.0,
            p_val: 0.9,
            p_out: 0.15,
            sigma_disp: PerClass {
                ground: 1.0,
                object: 1.0,
                sky: 1.0,
            },
            c_mc: 10.0,
            gravity: PiecewisePrior {
                alpha_neg: 2.0,
                beta_neg: -1.0,
                alpha_pos: 2.0,
                beta_pos: 1.0,
            },
            ordering: OrderingPrior {
                alpha: 2.0,
                beta: 1.0,
            },
            ground_gap: PiecewisePrior {
                alpha_neg: 5.0,
                beta_neg: -2.0,
                alpha_pos: 5.0,
                beta_pos: 2.0,
            },
            transition: [[0.0, 0.0, 50.0], [0.0, 0.0, 50.0], [0.0, 0.0, 0.0]],
            plane_prior: PerClass {
                ground: PlanePrior {
                    sigma_a: 1.0e3,
                    sigma_b: 1.0,
                    ..PlanePrior::default()
                },
                object: PlanePrior {
                    sigma_a: 1.0e3,
                    sigma_b: 0.05,
                    fix_b: true,
                    ..PlanePrior::default()
                },
                sky: PlanePrior {
                    fix_a: true,
                    fix_b: true,
                    ..PlanePrior::default()
                },
            },
            stixel_width: 8,
            vertical_downsample: 8,
            downsample: DownsampleMode::Median,
            d_max: 128,
            class_geometry: vec![
                GeometricClass::Ground,
                GeometricClass::Object,
                GeometricClass::Object,
                GeometricClass::Sky,
            ],
            label_softness: 0.9,
            reweight: false,
        }
    }
}

impl StixelModelConfig {
    pub fn class_count(&self) -> usize {
        self.class_geometry.len()
    }

    /// Semantic classes compatible with a geometric class.
    pub fn semantic_classes(&self, geom: GeometricClass) -> impl Iterator<Item = usize> + '_ {
        self.class_geometry
            .iter()
            .enumerate()
            .filter(move |(_, &g)| g == geom)
            .map(|(i, _)| i)
    }

    #[inline]
    pub fn transition_cost(&self, prev: GeometricClass, cur: GeometricClass) -> f64 {
        self.transition[cur.index()][prev.index()]
    }

    /// Checks every invariant; the error names the first violated field.
    pub fn validate(&self) -> Result<()> {
        fn finite(field: &str, x: f64) -> Result<()> {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be finite, got {x}")))
            }
        }
        fn open_unit(field: &str, x: f64) -> Result<()> {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must lie in (0, 1), got {x}")))
            }
        }
        fn positive(field: &str, x: f64) -> Result<()> {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {x}")))
            }
        }

        finite("w_l", self.w_l)?;
        if self.w_l < 0.0 {
            return Err(Error::config("w_l", "must be non-negative"));
        }
        open_unit("p_val", self.p_val)?;
        open_unit("p_out", self.p_out)?;
        for g in GeometricClass::ALL {
            positive(&format!("sigma_disp.{g}"), self.sigma_disp[g])?;
        }
        finite("c_mc", self.c_mc)?;
        for (name, p) in [("gravity", &self.gravity), ("ground_gap", &self.ground_gap)] {
            finite(&format!("{name}.alpha_neg"), p.alpha_neg)?;
            finite(&format!("{name}.beta_neg"), p.beta_neg)?;
            finite(&format!("{name}.alpha_pos"), p.alpha_pos)?;
            finite(&format!("{name}.beta_pos"), p.beta_pos)?;
        }
        finite("ordering.alpha", self.ordering.alpha)?;
        finite("ordering.beta", self.ordering.beta)?;
        for (cur, row) in self.transition.iter().enumerate() {
            for (prev, &g) in row.iter().enumerate() {
                let field = format!("transition[{cur}][{prev}]");
                finite(&field, g)?;
                if g < 0.0 {
                    return Err(Error::config(field, format!("must be >= 0, got {g}")));
                }
            }
        }
        for g in GeometricClass::ALL {
            let p = &self.plane_prior[g];
            let base = format!("plane_prior.{g}");
            finite(&format!("{base}.mu_a"), p.mu_a)?;
            finite(&format!("{base}.mu_b"), p.mu_b)?;
            finite(&format!("{base}.log_z"), p.log_z)?;
            if !p.fix_a {
                positive(&format!("{base}.sigma_a"), p.sigma_a)?;
            }
            if !p.fix_b {
                positive(&format!("{base}.sigma_b"), p.sigma_b)?;
            }
        }
        if self.stixel_width == 0 {
            return Err(Error::config("stixel_width", "must be at least 1"));
        }
        if self.vertical_downsample == 0 {
            return Err(Error::config("vertical_downsample", "must be at least 1"));
        }
        if self.d_max == 0 {
            return Err(Error::config("d_max", "must be positive"));
        }
        if self.class_geometry.is_empty() {
            return Err(Error::config("class_geometry", "needs at least one class"));
        }
        for g in GeometricClass::ALL {
            if self.semantic_classes(g).next().is_none() {
                return Err(Error::config(
                    "class_geometry",
                    format!("no semantic class maps to geometric class `{g}`"),
                ));
            }
        }
        let c = self.class_count() as f64;
        if !(self.label_softness >= 1.0 / c && self.label_softness <= 1.0) {
            return Err(Error::config(
                "label_softness",
                format!("must lie in [1/C, 1], got {}", self.label_softness),
            ));
        }
        Ok(())
    }

    /// Parses a TOML document; keys it omits keep their default values.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.to_string()))?;
        let mut merged = toml::Table::try_from(StixelModelConfig::default())
            .expect("default config serializes to TOML");
        merge_tables(&mut merged, user);
        let cfg: StixelModelConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidConfig { field, reason } => Error::InvalidConfig {
                field,
                reason: format!("{reason} (in {})", path.display()),
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Short stable digest of the configuration, embedded in outputs.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes to JSON");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
