//! End-to-end acceptance checks. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stixel_core::image::extract_column;
use stixel_core::inference::Segmenter;
use stixel_core::likelihood::{disparity_cost, disparity_pixel_cost, semantic_pixel_cost, DisparityModel};
use stixel_core::metrics::{self, is_disparity_outlier, mean_iou, render};
use stixel_core::plane_fit::{fit_objective, fit_plane, ColumnAccumulators};
use stixel_core::priors::{stixel_prior, structural_prior};
use stixel_core::scene::{GroundSegment, SceneObject};
use stixel_core::{
    generate, segment_image, CutPlan, CutSet, DisparityColumn, Frame, GeometricClass, Grid, PerClass,
    PiecewisePrior, Plane, Scene, SceneSpec, SemanticColumn, Stixel, StixelColumn,
    StixelModelConfig,
};

/// Energy agreement between the solver and exhaustive search.
const ORACLE_TOL: f64 = 1e-9;
const ORACLE_COLUMNS: usize = 500;
const ORACLE_MAX_HEIGHT: usize = 12;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
/// Relative agreement with the constant-model reference.
const REDUCTION_TOL: f64 = 1e-9;
const PLANE_SEGMENTS: usize = 1000;
/// Grid-search agreement per plane parameter.
const GRID_TOL: f64 = 2e-3;
const NORMALIZATION_TOL: f64 = 1e-6;
const MAX_SLANTED_OUTLIER_RATE: f64 = 0.05;
const MAX_OUTLIER_RATIO: f64 = 0.5;
const MAX_CUT_DENSITY: f64 = 0.5;
const MAX_TIME_RATIO: f64 = 0.5;
const REFERENCE_DENSITY: f64 = 0.30;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("full-cut identity", full_cut_identity),
        ("constant-model reduction", constant_model_reduction),
        ("slanted road", slanted_road),
        ("cut-prior speedup", cut_prior_speedup),
        ("plane-fit optimality", plane_fit_optimality),
        ("likelihood normalization", likelihood_normalization),
        ("metric golden values", metric_goldens),
        ("thread determinism", thread_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.pass);
        println!("{tag} {}. {name}: {} ({:.1} s)", i + 1, outcome.detail, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn scene_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/scenes")
}

fn random_piecewise(rng: &mut ChaCha8Rng) -> PiecewisePrior {
    PiecewisePrior {
        alpha_neg: rng.gen_range(0.0..10.0),
        beta_neg: rng.gen_range(-3.0..3.0),
        alpha_pos: rng.gen_range(0.0..10.0),
        beta_pos: rng.gen_range(-3.0..3.0),
    }
}

fn random_config(rng: &mut ChaCha8Rng) -> StixelModelConfig {
    use GeometricClass::{Ground as G, Object as O, Sky as S};
    let geometries = [vec![G, O, O, S], vec![G, O, S], vec![G, G, O, O, S], vec![S, O, G]];
    let mut cfg = StixelModelConfig {
        w_l: rng.gen_range(0.0..3.0),
        p_val: rng.gen_range(0.5..0.99),
        p_out: rng.gen_range(0.01..0.5),
        sigma_disp: PerClass::from_fn(|_| rng.gen_range(0.3..3.0)),
        c_mc: rng.gen_range(0.0..20.0),
        gravity: random_piecewise(rng),
        ground_gap: random_piecewise(rng),
        ordering: stixel_core::OrderingPrior {
            alpha: rng.gen_range(0.0..10.0),
            beta: rng.gen_range(-3.0..3.0),
        },
        d_max: *[16u32, 64, 128].choose(rng).unwrap(),
        class_geometry: geometries.choose(rng).unwrap().clone(),
        reweight: rng.gen_bool(0.3),
        ..StixelModelConfig::default()
    };
    for row in cfg.transition.iter_mut() {
        for t in row.iter_mut() {
            *t = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..30.0) };
        }
    }
    for g in [GeometricClass::Ground, GeometricClass::Object] {
        let p = &mut cfg.plane_prior[g];
        p.mu_a = rng.gen_range(0.0..cfg.d_max as f64);
        p.mu_b = rng.gen_range(-1.0..1.0);
        p.sigma_a = rng.gen_range(0.5..100.0);
        p.sigma_b = rng.gen_range(0.05..2.0);
        p.fix_a = rng.gen_bool(0.1);
        p.fix_b = rng.gen_bool(0.4);
        p.log_z = rng.gen_range(-2.0..2.0);
    }
    cfg.label_softness = rng.gen_range(1.0 / cfg.class_count() as f64..=1.0);
    cfg.validate().expect("random config is valid");
    cfg
}

fn random_column(rng: &mut ChaCha8Rng, h: usize, cfg: &StixelModelConfig) -> (DisparityColumn, SemanticColumn) {
    let top = cfg.d_max as f64;
    let mut level = rng.gen_range(0.0..top);
    let vals = (0..h)
        .map(|_| {
            // Piecewise-smooth with jumps, so that structure competes with noise.
            if rng.gen_bool(0.2) {
                level = rng.gen_range(0.0..top);
            }
            rng.gen_bool(0.85).then(|| (level + rng.gen_range(-1.5..1.5)).clamp(0.0, top))
        })
        .collect();
    let conf = (0..h).map(|_| if rng.gen_bool(0.6) { 1.0 } else { rng.gen_range(0.0..=1.0) }).collect();
    let labels: Vec<usize> = (0..h).map(|_| rng.gen_range(0..cfg.class_count())).collect();
    (
        DisparityColumn::new(vals, conf, cfg.d_max).unwrap(),
        SemanticColumn::from_labels(&labels, cfg.class_count(), cfg.label_softness).unwrap(),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut energy_fail, mut seg_fail, mut worst) = (0, 0, 0.0f64);
    for _ in 0..ORACLE_COLUMNS {
        let cfg = random_config(&mut rng);
        let seg = Segmenter::new(&cfg).unwrap();
        let h = rng.gen_range(1..=ORACLE_MAX_HEIGHT);
        let (d, s) = random_column(&mut rng, h, &cfg);
        let p = rng.gen_range(0.0..=1.0);
        let cuts = CutSet::new((1..h).filter(|_| rng.gen_bool(p)).collect(), h).unwrap();
        let dp = seg.segment(&d, &s, &cuts).unwrap();
        let bf = seg.brute_force(&d, &s, &cuts).unwrap();
        let diff = (dp.energy - bf.energy).abs();
        worst = worst.max(diff);
        energy_fail += usize::from(diff > ORACLE_TOL);
        seg_fail += usize::from(dp.column != bf.column);
    }
    let elapsed = start.elapsed();
    Outcome::new(
        energy_fail == 0 && seg_fail == 0 && elapsed < ORACLE_BUDGET,
        format!(
            "{ORACLE_COLUMNS} columns, energy mismatches {energy_fail}, segmentation mismatches {seg_fail}, \
             max |dE| {worst:.1e}, {:.1} s of {} s budget",
            elapsed.as_secs_f64(),
            ORACLE_BUDGET.as_secs()
        ),
    )
}

/// A small random street scene: a ground ramp, a few boxes, sky above.
fn random_spec(rng: &mut ChaCha8Rng, width: usize, height: usize) -> SceneSpec {
    let d_max = 128;
    let g_top = rng.gen_range(height / 4..=height / 2);
    let b = rng.gen_range(-0.6..0.0);
    let a = rng.gen_range(40.0..110.0f64).max(-b * g_top as f64 + 1.0);
    let objects = (0..rng.gen_range(0..=3))
        .map(|_| {
            let x0 = rng.gen_range(0..width - 1);
            let x1 = rng.gen_range(x0 + 1..=width);
            let r0 = rng.gen_range(1..height);
            let r1 = rng.gen_range(r0..=height);
            SceneObject {
                columns: [x0, x1],
                rows: [r0, r1],
                a: rng.gen_range(5.0..120.0),
                b: 0.0,
                class: rng.gen_range(1..=2),
            }
        })
        .collect();
    let spec = SceneSpec {
        width,
        height,
        d_max,
        noise_sigma: rng.gen_range(0.0..1.0),
        outlier_rate: rng.gen_range(0.0..0.08),
        invalid_rate: rng.gen_range(0.0..0.08),
        quantization: *[0.0, 0.35, 1.0].choose(rng).unwrap(),
        rng_seed: rng.gen::<u32>() as u64,
        semantic_softness: rng.gen_range(0.5..1.0),
        class_count: 4,
        sky_class: 3,
        ground: vec![GroundSegment {
            rows: [1, g_top],
            a,
            b,
            class: 0,
        }],
        objects,
    };
    spec.validate().expect("random spec is valid");
    spec
}

fn frame_of(scene: &Scene) -> Frame<'_> {
    Frame {
        disparity: &scene.disparity,
        confidence: None,
        semantic: &scene.semantic,
    }
}

fn stixels_bitwise_equal(x: &StixelColumn, y: &StixelColumn) -> bool {
    x.len() == y.len()
        && x.stixels().iter().zip(y.stixels()).all(|(p, q)| {
            p.v_bottom == q.v_bottom
                && p.v_top == q.v_top
                && p.geom_class == q.geom_class
                && p.sem_class == q.sem_class
                && p.plane.a.to_bits() == q.plane.a.to_bits()
                && p.plane.b.to_bits() == q.plane.b.to_bits()
        })
}

fn full_cut_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut columns, mut mismatches) = (0, 0);
    for _ in 0..50 {
        let spec = random_spec(&mut rng, 48, 96);
        let scene = generate(&spec).unwrap();
        let cfg = StixelModelConfig {
            vertical_downsample: *[2usize, 3, 4].choose(&mut rng).unwrap(),
            stixel_width: 8,
            ..StixelModelConfig::default()
        };
        let seg = Segmenter::new(&cfg).unwrap();
        let sol = segment_image(&frame_of(&scene), &CutPlan::All, Some(1), &cfg).unwrap();
        for (x, got) in sol.columns.iter().enumerate() {
            let (d, s) = extract_column(&sol.grid, x, &scene.disparity, None, &scene.semantic, &cfg).unwrap();
            let reference = seg.segment_full(&d, &s).unwrap();
            let same = got.energy.to_bits() == reference.energy.to_bits()
                && got.segment_energies.len() == reference.segment_energies.len()
                && got
                    .segment_energies
                    .iter()
                    .zip(&reference.segment_energies)
                    .all(|(p, q)| p.to_bits() == q.to_bits())
                && stixels_bitwise_equal(&got.column, &reference.column);
            columns += 1;
            mismatches += usize::from(!same);
        }
    }
    Outcome::new(mismatches == 0, format!("50 frames, {columns} columns, {mismatches} not bitwise identical"))
}

/// Constant-disparity Stixel model written out directly: slopes are fixed,
/// intercepts are weighted means, costs are summed pixel by pixel, and every
/// (class, bottom, top) state is scanned over all predecessors.
struct ConstantModel<'a> {
    cfg: &'a StixelModelConfig,
}

impl ConstantModel<'_> {
    fn stixel(&self, b: usize, t: usize, g: GeometricClass, d: &DisparityColumn, s: &SemanticColumn) -> (Stixel, f64) {
        let cfg = self.cfg;
        let p = &cfg.plane_prior[g];
        assert!(p.fix_b, "reference needs pinned slopes");
        let a = if p.fix_a {
            p.mu_a
        } else {
            let k = 1.0 / (cfg.sigma_disp[g] * cfg.sigma_disp[g]);
            let pa = 1.0 / (p.sigma_a * p.sigma_a);
            let (mut num, mut den) = (pa * p.mu_a, pa);
            for v in b..=t {
                if let Some(x) = d.disparity(v) {
                    let w = k * d.confidence(v) * d.confidence(v);
                    num += w * (x - p.mu_b * v as f64);
                    den += w;
                }
            }
            num / den
        };
        let sem = cfg
            .semantic_classes(g)
            .map(|c| (c, (b..=t).map(|v| semantic_pixel_cost(s.row(v)[c], cfg.w_l)).sum::<f64>()))
            .fold((usize::MAX, f64::INFINITY), |best, (c, e)| if e < best.1 { (c, e) } else { best });
        let st = Stixel {
            v_bottom: b,
            v_top: t,
            geom_class: g,
            sem_class: sem.0,
            plane: Plane::new(a, p.mu_b),
        };
        let disp: f64 = (b..=t).map(|v| disparity_pixel_cost(d.disparity(v), d.confidence(v), &st, v, cfg)).sum();
        (st, disp + sem.1 + stixel_prior(&st, cfg))
    }

    fn solve(&self, d: &DisparityColumn, s: &SemanticColumn) -> (StixelColumn, f64) {
        let h = d.height();
        let classes = GeometricClass::ALL;
        // best[t][b][g]: cheapest column ending with Stixel (b..=t, g).
        let mut best = vec![vec![[(f64::INFINITY, None::<(usize, usize)>); 3]; h + 1]; h + 1];
        let mut cand = vec![vec![[None::<Stixel>; 3]; h + 1]; h + 1];
        for t in 1..=h {
            for b in 1..=t {
                for (gi, &g) in classes.iter().enumerate() {
                    let (st, unary) = self.stixel(b, t, g, d, s);
                    cand[t][b][gi] = Some(st);
                    if b == 1 {
                        best[t][b][gi] = (unary, None);
                        continue;
                    }
                    for pb in 1..b {
                        for pg in 0..3 {
                            let prev = cand[b - 1][pb][pg].as_ref().unwrap();
                            let e = best[b - 1][pb][pg].0 + unary + structural_prior(prev, &st, self.cfg);
                            if e < best[t][b][gi].0 {
                                best[t][b][gi] = (e, Some((pb, pg)));
                            }
                        }
                    }
                }
            }
        }
        let (mut b, mut g, mut energy) = (0, 0, f64::INFINITY);
        for pb in 1..=h {
            for pg in 0..3 {
                if best[h][pb][pg].0 < energy {
                    (b, g, energy) = (pb, pg, best[h][pb][pg].0);
                }
            }
        }
        let mut stixels = Vec::new();
        let mut t = h;
        loop {
            stixels.push(cand[t][b][g].unwrap());
            match best[t][b][g].1 {
                Some((pb, pg)) => {
                    t = b - 1;
                    (b, g) = (pb, pg);
                }
                None => break,
            }
        }
        stixels.reverse();
        (StixelColumn::new(stixels, h).unwrap(), energy)
    }
}

fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0)
}

fn constant_model_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut columns, mut mismatches) = (0, 0);
    for _ in 0..50 {
        let spec = random_spec(&mut rng, 48, 96);
        let scene = generate(&spec).unwrap();
        let mut cfg = StixelModelConfig {
            vertical_downsample: 3,
            stixel_width: 8,
            ..StixelModelConfig::default()
        };
        cfg.plane_prior.object.fix_b = true;
        cfg.plane_prior.object.mu_b = 0.0;
        cfg.plane_prior.ground.fix_b = true;
        cfg.plane_prior.ground.mu_b = rng.gen_range(-2.0..0.0);
        let sol = segment_image(&frame_of(&scene), &CutPlan::All, None, &cfg).unwrap();
        let reference = ConstantModel { cfg: &cfg };
        for (x, got) in sol.columns.iter().enumerate() {
            let (d, s) = extract_column(&sol.grid, x, &scene.disparity, None, &scene.semantic, &cfg).unwrap();
            let (col, energy) = reference.solve(&d, &s);
            let same = close(got.energy, energy, REDUCTION_TOL)
                && got.column.len() == col.len()
                && got.column.stixels().iter().zip(col.stixels()).all(|(p, q)| {
                    p.v_bottom == q.v_bottom
                        && p.v_top == q.v_top
                        && p.geom_class == q.geom_class
                        && p.sem_class == q.sem_class
                        && close(p.plane.a, q.plane.a, REDUCTION_TOL)
                        && p.plane.b == q.plane.b
                });
            columns += 1;
            mismatches += usize::from(!same);
        }
    }
    Outcome::new(mismatches == 0, format!("50 frames, {columns} columns, {mismatches} differ from the constant-model reference"))
}

fn outlier_rate_of(scene: &Scene, cfg: &StixelModelConfig) -> f64 {
    let sol = segment_image(&frame_of(scene), &CutPlan::All, None, cfg).unwrap();
    let rendered = render(&sol.stixel_columns(), &sol.grid, cfg.d_max).unwrap();
    metrics::disparity_outlier_rate(&rendered.disparity, &scene.disparity_gt).unwrap()
}

fn slanted_road() -> Outcome {
    let spec = SceneSpec::load(&scene_dir().join("slanted_road.toml")).unwrap();
    let scene = generate(&spec).unwrap();
    let slanted = StixelModelConfig::default();
    let mut pinned = slanted.clone();
    pinned.plane_prior.ground.fix_b = true;
    let r_slanted = outlier_rate_of(&scene, &slanted);
    let r_pinned = outlier_rate_of(&scene, &pinned);
    Outcome::new(
        r_slanted < MAX_SLANTED_OUTLIER_RATE && r_slanted < MAX_OUTLIER_RATIO * r_pinned,
        format!(
            "outlier rate slanted {:.2}% vs pinned slope {:.2}% (need < {:.0}% and < {MAX_OUTLIER_RATIO}x)",
            100.0 * r_slanted,
            100.0 * r_pinned,
            100.0 * MAX_SLANTED_OUTLIER_RATE
        ),
    )
}

fn cut_prior_speedup() -> Outcome {
    let cfg = StixelModelConfig::default();
    let (mut t_all, mut t_extrema) = (Duration::ZERO, Duration::ZERO);
    let mut densities = Vec::new();
    for i in 1..=3 {
        let spec = SceneSpec::load(&scene_dir().join(format!("tall_{i}.toml"))).unwrap();
        assert_eq!(spec.height, 1080);
        let scene = generate(&spec).unwrap();
        let frame = frame_of(&scene);
        // Best of two runs per plan, single-threaded.
        let time = |plan: &CutPlan| {
            (0..2)
                .map(|_| {
                    let t = Instant::now();
                    let sol = segment_image(&frame, plan, Some(1), &cfg).unwrap();
                    (t.elapsed(), sol.cut_density)
                })
                .min_by_key(|r| r.0)
                .unwrap()
        };
        t_all += time(&CutPlan::All).0;
        let (t, density) = time(&CutPlan::Extrema);
        t_extrema += t;
        densities.push(density);
    }
    let ratio = t_extrema.as_secs_f64() / t_all.as_secs_f64();
    let max_density = densities.iter().cloned().fold(0.0, f64::max);
    let mean_density = densities.iter().sum::<f64>() / densities.len() as f64;
    Outcome::new(
        max_density <= MAX_CUT_DENSITY && ratio <= MAX_TIME_RATIO,
        format!(
            "3 frames of 1080 rows, extrema/all time {ratio:.3} (need <= {MAX_TIME_RATIO}), \
             cut density mean {:.1}% max {:.1}% (reference {:.0}%)",
            100.0 * mean_density,
            100.0 * max_density,
            100.0 * REFERENCE_DENSITY
        ),
    )
}

/// Minimizes a convex function of one variable on successively finer grids,
/// down to a step of 1e-5.
fn grid_1d(f: impl Fn(f64) -> f64, mut centre: f64, mut step: f64, mut half: i32) -> f64 {
    loop {
        let mut best = (f64::INFINITY, centre);
        for i in -half..=half {
            let x = centre + i as f64 * step;
            let e = f(x);
            if e < best.0 {
                best = (e, x);
            }
        }
        centre = best.1;
        if step <= 1e-5 {
            return centre;
        }
        step /= 10.0;
        half = 10;
    }
}

/// Grid minimization over (disparity at the segment centre, slope): an outer
/// search over the slope of the objective already minimized over the offset.
fn grid_search(f: impl Fn(f64, f64) -> f64, ca: f64, cb: f64, free_a: bool, free_b: bool) -> (f64, f64) {
    let inner = |b: f64| if free_a { grid_1d(|a| f(a, b), ca, 1.0, 100) } else { ca };
    let b = if free_b { grid_1d(|b| f(inner(b), b), cb, 0.5, 200) } else { cb };
    (inner(b), b)
}

fn plane_fit_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut stationary_fail, mut grid_fail) = (0, 0);
    for _ in 0..PLANE_SEGMENTS {
        let mut cfg = StixelModelConfig::default();
        cfg.sigma_disp = PerClass::from_fn(|_| rng.gen_range(0.5..2.0));
        for g in [GeometricClass::Ground, GeometricClass::Object] {
            let p = &mut cfg.plane_prior[g];
            p.mu_a = rng.gen_range(0.0..60.0);
            p.mu_b = rng.gen_range(-1.0..1.0);
            p.sigma_a = rng.gen_range(0.5..50.0);
            p.sigma_b = rng.gen_range(0.05..2.0);
            p.fix_b = rng.gen_bool(0.3);
        }
        let len = rng.gen_range(1..=10);
        let v0 = rng.gen_range(1..=30);
        let h = v0 + len - 1;
        let vals = (0..h).map(|_| rng.gen_bool(0.9).then(|| rng.gen_range(0.0..64.0))).collect();
        let conf = (0..h).map(|_| if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.1..=1.0) }).collect();
        let d = DisparityColumn::new(vals, conf, 64).unwrap();
        let s = SemanticColumn::from_labels(&vec![0; h], 4, 0.9).unwrap();
        let acc = ColumnAccumulators::build(&d, &s, &cfg);
        for g in [GeometricClass::Ground, GeometricClass::Object] {
            let p = fit_plane(v0, h, g, &acc, &cfg);
            let free_b = !cfg.plane_prior[g].fix_b;
            let e0 = fit_objective(&p, v0, h, g, &d, &cfg);
            let steps = [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4), (1e-4, 1e-4), (1e-4, -1e-4)];
            let stationary = steps.iter().filter(|(_, db)| free_b || *db == 0.0).all(|&(da, db)| {
                fit_objective(&Plane::new(p.a + da, p.b + db), v0, h, g, &d, &cfg) >= e0 - 1e-9 * e0.abs().max(1.0)
            });
            stationary_fail += usize::from(!stationary);
            let m = (v0 + h) as f64 / 2.0;
            let start_b = if free_b { 0.0 } else { cfg.plane_prior[g].mu_b };
            let (ac, b) = grid_search(
                |ac, b| fit_objective(&Plane::new(ac - b * m, b), v0, h, g, &d, &cfg),
                32.0,
                start_b,
                true,
                free_b,
            );
            let a = ac - b * m;
            grid_fail += usize::from((a - p.a).abs() > GRID_TOL || (b - p.b).abs() > GRID_TOL);
        }
    }
    Outcome::new(
        stationary_fail == 0 && grid_fail == 0,
        format!(
            "{PLANE_SEGMENTS} segments x 2 classes, {stationary_fail} not stationary, \
             {grid_fail} off the grid optimum by > {GRID_TOL}"
        ),
    )
}

fn likelihood_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut cfg = StixelModelConfig {
            p_val: rng.gen_range(0.05..0.99),
            p_out: rng.gen_range(0.01..0.9),
            d_max: rng.gen_range(8..=256),
            ..StixelModelConfig::default()
        };
        cfg.sigma_disp = PerClass::from_fn(|_| rng.gen_range(0.2..5.0));
        let model = DisparityModel::new(&cfg);
        let g = *GeometricClass::ALL.choose(&mut rng).unwrap();
        let plane = Plane::new(rng.gen_range(-20.0..cfg.d_max as f64 + 20.0), rng.gen_range(-2.0..2.0));
        let v = rng.gen_range(1..=20);
        let mu = plane.disparity_at(v as f64);
        let c = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.0..=1.0) };
        let invalid = (-model.invalid_cost()).exp();
        let fast: f64 = (0..=cfg.d_max).map(|x| (-model.valid_cost(x as f64, c, mu, g)).exp()).sum::<f64>() + invalid;
        let direct: f64 = (0..=cfg.d_max)
            .map(|x| (-disparity_cost(Some(x as f64), c, mu, cfg.sigma_disp[g], cfg.p_val, cfg.p_out, cfg.d_max)).exp())
            .sum::<f64>()
            + invalid;
        worst = worst.max((fast - 1.0).abs()).max((direct - 1.0).abs());
    }
    Outcome::new(worst <= NORMALIZATION_TOL, format!("100 triples, max |sum - 1| = {worst:.1e}"))
}

fn metric_goldens() -> Outcome {
    let mut failures = Vec::new();
    if !is_disparity_outlier(104.9, 100.0) {
        failures.push("gt 100 / pred 104.9 should be an outlier");
    }
    if is_disparity_outlier(102.0, 100.0) {
        failures.push("gt 100 / pred 102 should be an inlier");
    }
    let gt = Grid::new(4, 1, vec![1.0f32, 20.0, 50.0, 100.0]).unwrap();
    let shifted = Grid::new(4, 1, gt.data().iter().map(|d| d + 4.0).collect()).unwrap();
    if metrics::disparity_outlier_rate(&shifted, &gt).unwrap() != 1.0 {
        failures.push("pred = gt + 4 should give rate 1");
    }
    if metrics::disparity_outlier_rate(&gt, &gt).unwrap() != 0.0 {
        failures.push("pred = gt should give rate 0");
    }
    // Class 0 perfect, class 1 overlapping a third of its union.
    let labels_gt = Grid::new(5, 1, vec![0u8, 0, 1, 1, 1]).unwrap();
    let pred = Grid::new(5, 1, vec![0u8, 0, 1, 2, 2]).unwrap();
    let iou = mean_iou(&pred, &labels_gt, 3).unwrap();
    if format!("{iou:.4}") != "0.6667" {
        failures.push("IoU golden should format to 0.6667");
    }
    let detail = if failures.is_empty() {
        format!("outlier disjunction cases and IoU {iou:.4} reproduced")
    } else {
        failures.join("; ")
    };
    Outcome::new(failures.is_empty(), detail)
}

fn run_cli(args: &[&std::ffi::OsStr]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stixels"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn thread_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    for i in 0..10 {
        let spec = random_spec(&mut rng, 160, 240);
        let frame_dir = dir.path().join(format!("frame{i}"));
        std::fs::create_dir_all(&frame_dir).unwrap();
        let spec_path = frame_dir.join("scene.toml");
        std::fs::write(&spec_path, spec.to_toml_string()).unwrap();
        run_cli(&["gen".as_ref(), spec_path.as_os_str(), "--out-dir".as_ref(), frame_dir.as_os_str()]).unwrap();
        let cuts = if i % 2 == 0 { "none" } else { "extrema" };
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let out = frame_dir.join(format!("stixels_{threads}.jsonl"));
            run_cli(&[
                "segment".as_ref(),
                frame_dir.join("disparity.pfm").as_os_str(),
                frame_dir.join("semantic_scores.bin").as_os_str(),
                "--cuts".as_ref(),
                cuts.as_ref(),
                "--threads".as_ref(),
                threads.as_ref(),
                "--out".as_ref(),
                out.as_os_str(),
            ])
            .unwrap();
            outputs.push(std::fs::read(&out).unwrap());
        }
        if outputs[0] != outputs[1] {
            differing.push(i);
        }
    }
    Outcome::new(
        differing.is_empty(),
        format!("10 frames, --threads 1 vs 4, differing outputs: {differing:?}"),
    )
}
