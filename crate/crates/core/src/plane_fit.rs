//! Closed-form plane estimation per candidate segment.
//!
//! For a segment and geometric class the plane minimizes
//!
//! ```text
//! sum_valid (c_v * (d_v - (b*v + a)) / sigma)^2
//!   + ((a - mu_a) / sigma_a)^2 + ((b - mu_b) / sigma_b)^2
//! ```
//!
//! i.e. the Gaussian part of the sensor model plus the plane prior. The
//! outlier mixture is ignored while fitting and applied when the fitted plane
//! is scored. All sums come from prefix arrays, so a fit costs O(1).

use crate::config::StixelModelConfig;
use crate::likelihood::{log_gaussian_normalizer, semantic_pixel_cost};
use crate::numeric::Dd;
use crate::types::{DisparityColumn, GeometricClass, Plane, SemanticColumn};

/// Prefix sums over rows of one column. Disparity moments are weighted by
/// `c_v^2` and skip invalid pixels; the class noise `1/sigma^2` is applied at
/// query time so a single pass serves every class.
#[derive(Debug, Clone)]
pub struct ColumnAccumulators {
    height: usize,
    class_count: usize,
    w: Vec<Dd>,
    wv: Vec<Dd>,
    wvv: Vec<Dd>,
    wd: Vec<Dd>,
    wvd: Vec<Dd>,
    valid: Vec<u32>,
    semantic: Vec<Dd>,
}

/// Weighted moments of one segment, centred on the segment midpoint `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentMoments {
    pub center: f64,
    /// `sum w`
    pub s0: f64,
    /// `sum w (v - m)`
    pub su: f64,
    /// `sum w (v - m)^2`
    pub suu: f64,
    /// `sum w v^2`
    pub svv: f64,
    /// `sum w d`
    pub td: f64,
    /// `sum w (v - m) d`
    pub tud: f64,
}

impl SegmentMoments {
    /// Accumulates the moments row by row, without prefix sums.
    pub fn direct(v_b: usize, v_t: usize, dcol: &DisparityColumn) -> Self {
        let center = (v_b + v_t) as f64 / 2.0;
        let mut m = SegmentMoments {
            center,
            s0: 0.0,
            su: 0.0,
            suu: 0.0,
            svv: 0.0,
            td: 0.0,
            tud: 0.0,
        };
        for v in v_b..=v_t {
            if let Some(d) = dcol.disparity(v) {
                let c = dcol.confidence(v);
                let w = c * c;
                let u = v as f64 - center;
                m.s0 += w;
                m.su += w * u;
                m.suu += w * u * u;
                m.svv += w * (v as f64) * (v as f64);
                m.td += w * d;
                m.tud += w * u * d;
            }
        }
        m
    }
}

impl ColumnAccumulators {
    pub fn build(dcol: &DisparityColumn, scol: &SemanticColumn, cfg: &StixelModelConfig) -> Self {
        let h = dcol.height();
        let cc = scol.class_count();
        let mut acc = ColumnAccumulators {
            height: h,
            class_count: cc,
            w: Vec::with_capacity(h + 1),
            wv: Vec::with_capacity(h + 1),
            wvv: Vec::with_capacity(h + 1),
            wd: Vec::with_capacity(h + 1),
            wvd: Vec::with_capacity(h + 1),
            valid: Vec::with_capacity(h + 1),
            semantic: Vec::with_capacity((h + 1) * cc),
        };
        let (mut w, mut wv, mut wvv, mut wd, mut wvd) = (Dd::ZERO, Dd::ZERO, Dd::ZERO, Dd::ZERO, Dd::ZERO);
        let mut valid = 0u32;
        acc.w.push(w);
        acc.wv.push(wv);
        acc.wvv.push(wvv);
        acc.wd.push(wd);
        acc.wvd.push(wvd);
        acc.valid.push(valid);
        acc.semantic.extend(std::iter::repeat_n(Dd::ZERO, cc));
        for v in 1..=h {
            if let Some(d) = dcol.disparity(v) {
                let c = dcol.confidence(v);
                let c2 = c * c;
                let vf = v as f64;
                w = w + c2;
                wv = wv + c2 * vf;
                wvv = wvv + c2 * vf * vf;
                wd = wd + c2 * d;
                wvd = wvd + c2 * vf * d;
                valid += 1;
            }
            acc.w.push(w);
            acc.wv.push(wv);
            acc.wvv.push(wvv);
            acc.wd.push(wd);
            acc.wvd.push(wvd);
            acc.valid.push(valid);
            let base = (v - 1) * cc;
            for (c, &score) in scol.row(v).iter().enumerate() {
                let prev = acc.semantic[base + c];
                acc.semantic.push(prev + semantic_pixel_cost(score, cfg.w_l));
            }
        }
        acc
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of valid disparities in rows `v_b..=v_t`.
    #[inline]
    pub fn valid_count(&self, v_b: usize, v_t: usize) -> usize {
        (self.valid[v_t] - self.valid[v_b - 1]) as usize
    }

    #[inline]
    pub fn invalid_count(&self, v_b: usize, v_t: usize) -> usize {
        v_t + 1 - v_b - self.valid_count(v_b, v_t)
    }

    /// Summed semantic cost of class `sem` over rows `v_b..=v_t`.
    #[inline]
    pub fn semantic_cost(&self, v_b: usize, v_t: usize, sem: usize) -> f64 {
        (self.semantic[v_t * self.class_count + sem] - self.semantic[(v_b - 1) * self.class_count + sem]).to_f64()
    }

    /// Cheapest semantic class compatible with `geom` and its summed cost.
    /// Ties go to the lowest class index.
    pub fn best_semantic(&self, v_b: usize, v_t: usize, geom: GeometricClass, cfg: &StixelModelConfig) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for sem in cfg.semantic_classes(geom) {
            let cost = self.semantic_cost(v_b, v_t, sem);
            if cost < best.1 || best.0 == usize::MAX {
                best = (sem, cost);
            }
        }
        best
    }

    /// Segment moments from prefix sums.
    pub fn moments(&self, v_b: usize, v_t: usize) -> SegmentMoments {
        let (lo, hi) = (v_b - 1, v_t);
        let m = (v_b + v_t) as f64 / 2.0;
        let s0 = self.w[hi] - self.w[lo];
        let s1 = self.wv[hi] - self.wv[lo];
        let s2 = self.wvv[hi] - self.wvv[lo];
        let t0 = self.wd[hi] - self.wd[lo];
        let t1 = self.wvd[hi] - self.wvd[lo];
        SegmentMoments {
            center: m,
            s0: s0.to_f64(),
            su: (s1 - s0 * m).to_f64(),
            suu: (s2 - s1 * (2.0 * m) + s0 * (m * m)).to_f64(),
            svv: s2.to_f64(),
            td: t0.to_f64(),
            tud: (t1 - t0 * m).to_f64(),
        }
    }
}

/// Minimizer of the weighted least-squares objective given segment moments.
pub fn solve_plane(mom: &SegmentMoments, class: GeometricClass, cfg: &StixelModelConfig) -> Plane {
    let p = &cfg.plane_prior[class];
    let k = 1.0 / (cfg.sigma_disp[class] * cfg.sigma_disp[class]);
    let m = mom.center;
    // Uncentred first moments.
    let s1 = mom.su + m * mom.s0;
    let t1 = mom.tud + m * mom.td;
    match (p.fix_a, p.fix_b) {
        (true, true) => Plane::new(p.mu_a, p.mu_b),
        (false, true) => {
            let pa = 1.0 / (p.sigma_a * p.sigma_a);
            let a = (k * (mom.td - p.mu_b * s1) + pa * p.mu_a) / (k * mom.s0 + pa);
            Plane::new(a, p.mu_b)
        }
        (true, false) => {
            let pb = 1.0 / (p.sigma_b * p.sigma_b);
            let b = (k * (t1 - p.mu_a * s1) + pb * p.mu_b) / (k * mom.svv + pb);
            Plane::new(p.mu_a, b)
        }
        (false, false) => {
            // Solve for (a', b) with a = a' - b m, the offset at the segment centre.
            let pa = 1.0 / (p.sigma_a * p.sigma_a);
            let pb = 1.0 / (p.sigma_b * p.sigma_b);
            let a11 = k * mom.s0 + pa;
            let a12 = k * mom.su - pa * m;
            let a22 = k * mom.suu + pa * m * m + pb;
            let r1 = k * mom.td + pa * p.mu_a;
            let r2 = k * mom.tud - pa * m * p.mu_a + pb * p.mu_b;
            // Expanded determinant: a sum of non-negative terms.
            let det = k * k * (mom.s0 * mom.suu - mom.su * mom.su).max(0.0)
                + k * pa * mom.svv
                + k * mom.s0 * pb
                + pa * pb;
            let a_c = (r1 * a22 - a12 * r2) / det;
            let b = (a11 * r2 - a12 * r1) / det;
            Plane::new(a_c - b * m, b)
        }
    }
}

/// Closed-form plane of rows `v_b..=v_t` for `class`.
pub fn fit_plane(v_b: usize, v_t: usize, class: GeometricClass, acc: &ColumnAccumulators, cfg: &StixelModelConfig) -> Plane {
    solve_plane(&acc.moments(v_b, v_t), class, cfg)
}

/// The quadratic objective minimized by [`fit_plane`], evaluated row by row.
pub fn fit_objective(plane: &Plane, v_b: usize, v_t: usize, class: GeometricClass, dcol: &DisparityColumn, cfg: &StixelModelConfig) -> f64 {
    let sigma = cfg.sigma_disp[class];
    let mut e = 0.0;
    for v in v_b..=v_t {
        if let Some(d) = dcol.disparity(v) {
            let r = dcol.confidence(v) * (d - plane.disparity_at(v as f64)) / sigma;
            e += r * r;
        }
    }
    let p = &cfg.plane_prior[class];
    if !p.fix_a {
        e += ((plane.a - p.mu_a) / p.sigma_a).powi(2);
    }
    if !p.fix_b {
        e += ((plane.b - p.mu_b) / p.sigma_b).powi(2);
    }
    e
}

/// One robust reweighting step: each valid pixel is weighted by its posterior
/// probability of being an inlier under `initial`, then the plane is refitted.
pub fn refit_reweighted(
    v_b: usize,
    v_t: usize,
    class: GeometricClass,
    initial: Plane,
    dcol: &DisparityColumn,
    cfg: &StixelModelConfig,
) -> Plane {
    let sigma = cfg.sigma_disp[class];
    let log_uniform = cfg.p_out.ln() - (cfg.d_max as f64 + 1.0).ln();
    let log_gauss_weight = (1.0 - cfg.p_out).ln();
    let center = (v_b + v_t) as f64 / 2.0;
    let mut mom = SegmentMoments {
        center,
        s0: 0.0,
        su: 0.0,
        suu: 0.0,
        svv: 0.0,
        td: 0.0,
        tud: 0.0,
    };
    for v in v_b..=v_t {
        let Some(d) = dcol.disparity(v) else { continue };
        let c = dcol.confidence(v);
        if c == 0.0 {
            continue;
        }
        let vf = v as f64;
        let mu = initial.disparity_at(vf);
        let scale = sigma / c;
        let x = (d - mu) / scale;
        let log_g = log_gauss_weight - x * x - log_gaussian_normalizer(mu, scale, cfg.d_max);
        let inlier = 1.0 / (1.0 + (log_uniform - log_g).exp());
        let w = c * c * inlier;
        let u = vf - center;
        mom.s0 += w;
        mom.su += w * u;
        mom.suu += w * u * u;
        mom.svv += w * vf * vf;
        mom.td += w * d;
        mom.tud += w * u * d;
    }
    solve_plane(&mom, class, cfg)
}
