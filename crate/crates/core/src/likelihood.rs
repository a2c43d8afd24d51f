//! Data energies: the semantic term and the robust disparity sensor model.
//!
//! A valid disparity `d` observed at row `v` of a Stixel with expected
//! disparity `mu = b*v + a` has probability
//!
//! ```text
//! p_val * ( p_out / Z_U + (1 - p_out) / Z_G * exp(-(c * (d - mu) / sigma)^2) )
//! ```
//!
//! and an invalid measurement has probability `1 - p_val`. Both normalizers
//! are sums over the integer disparities `0..=d_max`: `Z_U = d_max + 1`, and
//! `Z_G` sums the Gaussian kernel around `mu`, so the model is a proper
//! distribution over the discrete range for every `mu`. Costs are negative
//! log-probabilities in nats.

use crate::config::StixelModelConfig;
use crate::types::{DisparityColumn, GeometricClass, PerClass, Plane, SemanticColumn, Stixel};

/// Scores below this floor are clamped before taking the logarithm.
pub const SEMANTIC_FLOOR: f64 = 1e-6;

/// Half-width of the Gaussian summation window in units of the kernel scale.
const WINDOW_SIGMAS: f64 = 8.0;

/// Subdivisions of the unit interval in the normalizer lookup table.
const TABLE_STEPS: usize = 4096;

/// Summed data energy of a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDataCost {
    pub total: f64,
    pub per_pixel_valid_count: usize,
}

/// `-w_l * log(l_v(c))` with the score floored at [`SEMANTIC_FLOOR`].
#[inline]
pub fn semantic_pixel_cost(score: f64, w_l: f64) -> f64 {
    -w_l * score.max(SEMANTIC_FLOOR).ln()
}

/// `ln Z_G` by direct summation of `exp(-((d - mu) / scale)^2)` over `d in 0..=d_max`.
///
/// `scale` is `sigma / c`; an infinite scale (zero confidence) gives a flat kernel.
/// The sum is taken relative to the largest term, so centres far outside the
/// disparity range stay finite.
pub fn log_gaussian_normalizer(mu: f64, scale: f64, d_max: u32) -> f64 {
    let top = d_max as f64;
    if !scale.is_finite() {
        return (top + 1.0).ln();
    }
    let nearest = mu.round().clamp(0.0, top);
    let peak = ((nearest - mu) / scale).powi(2);
    let half = (WINDOW_SIGMAS * scale).ceil() + 1.0;
    let lo = (nearest - half).max(0.0) as u32;
    let hi = (nearest + half).min(top) as u32;
    let mut sum = 0.0;
    for d in lo..=hi {
        let z = (d as f64 - mu) / scale;
        sum += (peak - z * z).exp();
    }
    sum.ln() - peak
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Mixture cost of a valid measurement given `ln Z_G` and the scaled residual.
#[inline]
fn mixture_cost(neg_log_p_val: f64, log_uniform: f64, log_gauss_weight: f64, x2: f64, log_zg: f64) -> f64 {
    neg_log_p_val - log_add_exp(log_uniform, log_gauss_weight - x2 - log_zg)
}

/// Sensor model constants shared by the direct and tabulated evaluations.
#[derive(Debug, Clone, Copy)]
struct SensorConstants {
    neg_log_p_val: f64,
    neg_log_invalid: f64,
    log_uniform: f64,
    log_gauss_weight: f64,
    d_max: u32,
}

impl SensorConstants {
    fn new(p_val: f64, p_out: f64, d_max: u32) -> Self {
        SensorConstants {
            neg_log_p_val: -p_val.ln(),
            neg_log_invalid: -(1.0 - p_val).ln(),
            log_uniform: p_out.ln() - (d_max as f64 + 1.0).ln(),
            log_gauss_weight: (1.0 - p_out).ln(),
            d_max,
        }
    }

    fn valid_cost_direct(&self, d: f64, c: f64, mu: f64, sigma: f64) -> f64 {
        if c == 0.0 {
            return mixture_cost(
                self.neg_log_p_val,
                self.log_uniform,
                self.log_gauss_weight,
                0.0,
                (self.d_max as f64 + 1.0).ln(),
            );
        }
        let scale = sigma / c;
        let x = (d - mu) / scale;
        let log_zg = log_gaussian_normalizer(mu, scale, self.d_max);
        mixture_cost(self.neg_log_p_val, self.log_uniform, self.log_gauss_weight, x * x, log_zg)
    }
}

/// Disparity cost of an explicit `(p_val, p_out, sigma)` sensor.
///
/// This is the reference evaluation; [`DisparityModel`] is the fast path used by
/// inference and agrees with it to rounding.
pub fn disparity_cost(d_v: Option<f64>, c_v: f64, mu: f64, sigma: f64, p_val: f64, p_out: f64, d_max: u32) -> f64 {
    let k = SensorConstants::new(p_val, p_out, d_max);
    match d_v {
        None => k.neg_log_invalid,
        Some(d) => k.valid_cost_direct(d, c_v, mu, sigma),
    }
}

/// Disparity energy of pixel `v` under `stixel`.
pub fn disparity_pixel_cost(d_v: Option<f64>, c_v: f64, stixel: &Stixel, v: usize, cfg: &StixelModelConfig) -> f64 {
    disparity_cost(
        d_v,
        c_v,
        stixel.disparity_at(v),
        cfg.sigma_disp[stixel.geom_class],
        cfg.p_val,
        cfg.p_out,
        cfg.d_max,
    )
}

/// Data energy of rows `v_b..=v_t` evaluated pixel by pixel.
#[allow(clippy::too_many_arguments)]
pub fn segment_data_cost(
    v_b: usize,
    v_t: usize,
    geom_class: GeometricClass,
    sem_class: usize,
    plane: Plane,
    dcol: &DisparityColumn,
    scol: &SemanticColumn,
    cfg: &StixelModelConfig,
) -> SegmentDataCost {
    let stixel = Stixel {
        v_bottom: v_b,
        v_top: v_t,
        geom_class,
        sem_class,
        plane,
    };
    let mut total = 0.0;
    let mut valid = 0;
    for v in v_b..=v_t {
        let d = dcol.disparity(v);
        valid += usize::from(d.is_some());
        total += disparity_pixel_cost(d, dcol.confidence(v), &stixel, v, cfg);
        total += semantic_pixel_cost(scol.row(v)[sem_class], cfg.w_l);
    }
    SegmentDataCost {
        total,
        per_pixel_valid_count: valid,
    }
}

/// `ln Z_G` as a function of the fractional part of the centre, for centres
/// far enough from both ends of the disparity range that truncation is
/// negligible. Stored as values and slopes for cubic Hermite interpolation.
#[derive(Debug, Clone)]
struct NormalizerTable {
    scale: f64,
    log_z: Vec<f64>,
    slope: Vec<f64>,
    interior_lo: f64,
    interior_hi: f64,
}

impl NormalizerTable {
    fn new(scale: f64, d_max: u32) -> Self {
        let half = (WINDOW_SIGMAS * scale).ceil() + 1.0;
        let k_max = half as i64 + 1;
        let mut log_z = Vec::with_capacity(TABLE_STEPS + 1);
        let mut slope = Vec::with_capacity(TABLE_STEPS + 1);
        for i in 0..=TABLE_STEPS {
            let f = i as f64 / TABLE_STEPS as f64;
            let (mut z, mut dz) = (0.0, 0.0);
            for k in -k_max..=k_max {
                let r = (k as f64 - f) / scale;
                let e = (-r * r).exp();
                z += e;
                dz += 2.0 * r / scale * e;
            }
            log_z.push(z.ln());
            slope.push(dz / z);
        }
        NormalizerTable {
            scale,
            log_z,
            slope,
            interior_lo: half,
            interior_hi: d_max as f64 - half - 1.0,
        }
    }

    #[inline]
    fn lookup(&self, mu: f64) -> Option<f64> {
        if !(mu >= self.interior_lo && mu <= self.interior_hi) {
            return None;
        }
        let f = mu - mu.floor();
        let pos = f * TABLE_STEPS as f64;
        let i = (pos as usize).min(TABLE_STEPS - 1);
        let t = pos - i as f64;
        let h = 1.0 / TABLE_STEPS as f64;
        let (y0, y1) = (self.log_z[i], self.log_z[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        Some(
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                + (t3 - 2.0 * t2 + t) * m0
                + (-2.0 * t3 + 3.0 * t2) * y1
                + (t3 - t2) * m1,
        )
    }
}

/// Precomputed sensor model for one configuration.
///
/// Unit-confidence pixels with a centre well inside the disparity range use a
/// tabulated `ln Z_G` (interpolation error below 1e-12); all other pixels fall
/// back to direct summation.
#[derive(Debug, Clone)]
pub struct DisparityModel {
    k: SensorConstants,
    sigma: PerClass<f64>,
    tables: PerClass<NormalizerTable>,
}

impl DisparityModel {
    pub fn new(cfg: &StixelModelConfig) -> Self {
        let k = SensorConstants::new(cfg.p_val, cfg.p_out, cfg.d_max);
        DisparityModel {
            k,
            sigma: cfg.sigma_disp,
            tables: PerClass::from_fn(|g| NormalizerTable::new(cfg.sigma_disp[g], cfg.d_max)),
        }
    }

    /// Cost of an invalid measurement, `-ln(1 - p_val)`.
    #[inline]
    pub fn invalid_cost(&self) -> f64 {
        self.k.neg_log_invalid
    }

    /// Cost of a valid measurement `d` with confidence `c` against expected disparity `mu`.
    #[inline]
    pub fn valid_cost(&self, d: f64, c: f64, mu: f64, class: GeometricClass) -> f64 {
        let sigma = self.sigma[class];
        if c == 1.0 {
            let table = &self.tables[class];
            if let Some(log_zg) = table.lookup(mu) {
                let x = (d - mu) / table.scale;
                return mixture_cost(self.k.neg_log_p_val, self.k.log_uniform, self.k.log_gauss_weight, x * x, log_zg);
            }
        }
        self.k.valid_cost_direct(d, c, mu, sigma)
    }

    #[inline]
    pub fn pixel_cost(&self, d: Option<f64>, c: f64, mu: f64, class: GeometricClass) -> f64 {
        match d {
            None => self.invalid_cost(),
            Some(d) => self.valid_cost(d, c, mu, class),
        }
    }
}
