//! Prior energies.
//!
//! Segmentation constraints (first Stixel starts at row 1, last ends at `h`,
//! consecutive Stixels are connected, top >= bottom) are never evaluated as
//! energies: inference only enumerates segmentations that satisfy them.
//! Everything here is a finite penalty. Piecewise-linear priors are clamped
//! below at zero so a badly signed slope can never reward a violation.

use crate::config::{PiecewisePrior, StixelModelConfig};
use crate::error::{Error, Result};
use crate::types::{GeometricClass, Plane, Stixel};

/// Admissible Stixel end rows of one column, sorted ascending, always containing `h`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CutSet {
    rows: Vec<usize>,
    height: usize,
}

impl CutSet {
    /// Builds a cut set from arbitrary rows; `height` is added, duplicates removed.
    pub fn new(mut rows: Vec<usize>, height: usize) -> Result<Self> {
        if height == 0 {
            return Err(Error::InvalidInput("cut set height must be at least 1".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r == 0 || r > height) {
            return Err(Error::InvalidInput(format!("cut row {bad} outside [1, {height}]")));
        }
        rows.push(height);
        rows.sort_unstable();
        rows.dedup();
        Ok(CutSet { rows, height })
    }

    /// Every row is admissible: no pruning.
    pub fn full(height: usize) -> Self {
        CutSet {
            rows: (1..=height).collect(),
            height,
        }
    }

    /// Only the column top: a single Stixel spans the column.
    pub fn top_only(height: usize) -> Self {
        CutSet {
            rows: vec![height],
            height,
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.rows.binary_search(&v).is_ok()
    }

    /// Fraction of rows that are admissible cuts.
    pub fn density(&self) -> f64 {
        self.rows.len() as f64 / self.height as f64
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.height
    }
}

/// Per-Stixel model complexity cost.
#[inline]
pub fn model_complexity_cost(cfg: &StixelModelConfig) -> f64 {
    cfg.c_mc
}

#[inline]
fn piecewise(p: &PiecewisePrior, delta: f64) -> f64 {
    let raw = if delta < 0.0 {
        p.alpha_neg + p.beta_neg * delta
    } else if delta > 0.0 {
        p.alpha_pos + p.beta_pos * delta
    } else {
        return 0.0;
    };
    raw.max(0.0)
}

/// Penalizes an object that does not rest on the ground Stixel below it.
pub fn gravity_cost(prev: &Stixel, cur: &Stixel, cfg: &StixelModelConfig) -> f64 {
    if prev.geom_class != GeometricClass::Ground || cur.geom_class != GeometricClass::Object {
        return 0.0;
    }
    let delta = cur.disparity_at(cur.v_bottom) - prev.disparity_at(prev.v_top);
    piecewise(&cfg.gravity, delta)
}

/// Penalizes a stacked object that is closer than the object below it.
///
/// Distances are compared at the shared boundary: the upper Stixel at its
/// bottom row, the lower one at its top row.
pub fn ordering_cost(prev: &Stixel, cur: &Stixel, cfg: &StixelModelConfig) -> f64 {
    if prev.geom_class != GeometricClass::Object || cur.geom_class != GeometricClass::Object {
        return 0.0;
    }
    let delta = cur.disparity_at(cur.v_bottom) - prev.disparity_at(prev.v_top);
    if delta > 0.0 {
        (cfg.ordering.alpha + cfg.ordering.beta * delta).max(0.0)
    } else {
        0.0
    }
}

/// Penalizes a disparity step between two consecutive ground Stixels,
/// measured at the bottom row of the upper one.
pub fn ground_gap_cost(prev: &Stixel, cur: &Stixel, cfg: &StixelModelConfig) -> f64 {
    if prev.geom_class != GeometricClass::Ground || cur.geom_class != GeometricClass::Ground {
        return 0.0;
    }
    let delta = cur.disparity_at(cur.v_bottom) - prev.disparity_at(cur.v_bottom);
    piecewise(&cfg.ground_gap, delta)
}

/// Class transition cost `gamma[cur][prev]`.
#[inline]
pub fn transition_cost(prev: GeometricClass, cur: GeometricClass, cfg: &StixelModelConfig) -> f64 {
    cfg.transition_cost(prev, cur)
}

/// Gaussian plane prior of `class`; pinned parameters contribute nothing.
pub fn plane_prior_cost(plane: &Plane, class: GeometricClass, cfg: &StixelModelConfig) -> f64 {
    let p = &cfg.plane_prior[class];
    let mut cost = 0.0;
    if !p.fix_a {
        let r = (plane.a - p.mu_a) / p.sigma_a;
        cost += r * r;
    }
    if !p.fix_b {
        let r = (plane.b - p.mu_b) / p.sigma_b;
        cost += r * r;
    }
    cost - p.log_z
}

/// Terms paid by every Stixel regardless of its neighbour: model complexity
/// plus plane prior. For the first Stixel of a column this is the whole prior.
#[inline]
pub fn stixel_prior(s: &Stixel, cfg: &StixelModelConfig) -> f64 {
    model_complexity_cost(cfg) + plane_prior_cost(&s.plane, s.geom_class, cfg)
}

/// Structural priors of an adjacent pair: gravity, ordering, ground gap and transition.
#[inline]
pub fn structural_prior(prev: &Stixel, cur: &Stixel, cfg: &StixelModelConfig) -> f64 {
    gravity_cost(prev, cur, cfg)
        + ordering_cost(prev, cur, cfg)
        + ground_gap_cost(prev, cur, cfg)
        + transition_cost(prev.geom_class, cur.geom_class, cfg)
}

/// Full prior attributed to `cur` given the Stixel below it, or `None` when the
/// pair is not connected (an inadmissible configuration).
pub fn pairwise_prior(prev: &Stixel, cur: &Stixel, cfg: &StixelModelConfig) -> Option<f64> {
    if cur.v_bottom != prev.v_top + 1 || cur.v_top < cur.v_bottom {
        return None;
    }
    Some(stixel_prior(cur, cfg) + structural_prior(prev, cur, cfg))
}

/// Cut prior with binary confidences: free where a cut is admissible,
/// infinite (never enumerated) elsewhere.
pub fn cut_prior_cost(v: usize, cuts: &CutSet) -> f64 {
    if cuts.contains(v) {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Cut prior for a graded confidence `o` in `[0, 1]`: `-ln(o)`.
pub fn graded_cut_prior_cost(confidence: f64) -> f64 {
    -confidence.clamp(0.0, 1.0).ln()
}
