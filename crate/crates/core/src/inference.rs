//! Column-wise energy minimization.
//!
//! A segmentation of a column is a sequence of Stixels; its energy is the sum
//! over Stixels of the data cost, the per-Stixel prior, and the structural
//! prior against the Stixel directly below. Gravity, ordering and ground-gap
//! costs depend on the fitted plane of that lower Stixel, so the recursion
//! keys its states on the whole last segment `(class, start, end)` rather
//! than on `(class, end)`; this keeps the minimum exact.
//!
//! Ties are broken deterministically: lower energy, then fewer Stixels, then
//! comparing Stixels from the top of the column downward, a lower bottom row
//! first and then the class order Ground < Object < Sky.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::StixelModelConfig;
use crate::error::{Error, Result};
use crate::image::{check_inputs, extract_column, ConfidenceImage, DisparityImage, SemanticImage, StixelGrid};
use crate::likelihood::{segment_data_cost, DisparityModel};
use crate::numeric::Dd;
use crate::overseg::{extrema_cuts, mean_density, merge_cuts, semantic_edge_cuts};
use crate::plane_fit::{fit_plane, refit_reweighted, ColumnAccumulators};
use crate::priors::{pairwise_prior, stixel_prior, structural_prior, CutSet};
use crate::types::{DisparityColumn, GeometricClass, PerClass, Plane, SemanticColumn, Stixel, StixelColumn};

/// Largest column height and cut count accepted by [`brute_force_column`].
pub const BRUTE_FORCE_LIMIT: usize = 14;

const CLASSES: [GeometricClass; 3] = GeometricClass::ALL;

/// Minimum-energy segmentation of one column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSolution {
    pub column: StixelColumn,
    /// Total energy of `column`.
    pub energy: f64,
    /// Energy attributed to each Stixel: data cost, Stixel prior and the
    /// structural prior against the Stixel below. Sums to `energy`.
    pub segment_energies: Vec<f64>,
}

/// Best Stixel for one segment and geometric class.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    plane: Plane,
    sem: usize,
    data: f64,
    unary: f64,
}

impl Candidate {
    fn stixel(&self, v_bottom: usize, v_top: usize, geom_class: GeometricClass) -> Stixel {
        Stixel {
            v_bottom,
            v_top,
            geom_class,
            sem_class: self.sem,
            plane: self.plane,
        }
    }
}

/// Configuration-dependent state shared by all columns of an image.
#[derive(Debug, Clone)]
pub struct Segmenter {
    cfg: StixelModelConfig,
    model: DisparityModel,
}

/// Scores candidate segments of one column.
struct ColumnScorer<'a> {
    seg: &'a Segmenter,
    dcol: &'a DisparityColumn,
    acc: ColumnAccumulators,
    /// Prefix sums of pixel costs for classes whose plane is fully pinned.
    pinned: PerClass<Option<Vec<Dd>>>,
}

impl<'a> ColumnScorer<'a> {
    fn new(seg: &'a Segmenter, dcol: &'a DisparityColumn, scol: &'a SemanticColumn) -> Self {
        let cfg = &seg.cfg;
        let acc = ColumnAccumulators::build(dcol, scol, cfg);
        let pinned = PerClass::from_fn(|g| {
            let p = &cfg.plane_prior[g];
            if !(p.fix_a && p.fix_b) {
                return None;
            }
            let plane = Plane::new(p.mu_a, p.mu_b);
            let mut prefix = Vec::with_capacity(dcol.height() + 1);
            let mut sum = Dd::ZERO;
            prefix.push(sum);
            for v in 1..=dcol.height() {
                sum = sum + seg.model.pixel_cost(dcol.disparity(v), dcol.confidence(v), plane.disparity_at(v as f64), g);
                prefix.push(sum);
            }
            Some(prefix)
        });
        ColumnScorer { seg, dcol, acc, pinned }
    }

    fn candidate(&self, v_b: usize, v_t: usize, class: GeometricClass) -> Candidate {
        let cfg = &self.seg.cfg;
        let (plane, disparity) = match &self.pinned[class] {
            Some(prefix) => {
                let p = &cfg.plane_prior[class];
                (Plane::new(p.mu_a, p.mu_b), (prefix[v_t] - prefix[v_b - 1]).to_f64())
            }
            None => {
                let mut plane = fit_plane(v_b, v_t, class, &self.acc, cfg);
                if cfg.reweight {
                    plane = refit_reweighted(v_b, v_t, class, plane, self.dcol, cfg);
                }
                let mut sum = 0.0;
                for v in v_b..=v_t {
                    sum += self.seg.model.pixel_cost(
                        self.dcol.disparity(v),
                        self.dcol.confidence(v),
                        plane.disparity_at(v as f64),
                        class,
                    );
                }
                (plane, sum)
            }
        };
        let (sem, sem_cost) = self.acc.best_semantic(v_b, v_t, class, cfg);
        let stixel = Stixel {
            v_bottom: v_b,
            v_top: v_t,
            geom_class: class,
            sem_class: sem,
            plane,
        };
        Candidate {
            plane,
            sem,
            data: disparity + sem_cost,
            unary: stixel_prior(&stixel, cfg),
        }
    }
}

/// Candidates of every segment `[starts[k], ends[j]]`, `k <= j`, stored at
/// `j (j + 1) / 2 + k`.
struct SegmentTable {
    starts: Vec<usize>,
    ends: Vec<usize>,
    cands: Vec<[Candidate; 3]>,
}

#[inline]
fn tri(j: usize, k: usize) -> usize {
    j * (j + 1) / 2 + k
}

impl SegmentTable {
    fn new(scorer: &ColumnScorer, ends: &[usize]) -> Self {
        let n = ends.len();
        let starts: Vec<usize> = (0..n).map(|k| if k == 0 { 1 } else { ends[k - 1] + 1 }).collect();
        let mut cands = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for &s in &starts[..=j] {
                cands.push(CLASSES.map(|g| scorer.candidate(s, ends[j], g)));
            }
        }
        SegmentTable {
            starts,
            ends: ends.to_vec(),
            cands,
        }
    }

    #[inline]
    fn get(&self, k: usize, j: usize, c: usize) -> &Candidate {
        &self.cands[tri(j, k)][c]
    }

    fn stixel(&self, k: usize, j: usize, c: usize) -> Stixel {
        self.get(k, j, c).stixel(self.starts[k], self.ends[j], CLASSES[c])
    }
}

/// Whether the structural prior of `prev -> cur` depends on `prev`'s plane.
#[inline]
fn plane_dependent(prev: GeometricClass, cur: GeometricClass) -> bool {
    use GeometricClass::*;
    matches!((prev, cur), (Ground, Object) | (Object, Object) | (Ground, Ground))
}

/// Energy added by Stixel `cur` on top of `prev` (or as the first Stixel).
#[inline]
fn increment(cand: &Candidate, prev: Option<&Stixel>, cur: &Stixel, cfg: &StixelModelConfig) -> f64 {
    match prev {
        None => cand.data + cand.unary,
        Some(p) => cand.data + (cand.unary + structural_prior(p, cur, cfg)),
    }
}

#[derive(Debug, Clone, Copy)]
struct State {
    cost: f64,
    count: u32,
    /// Start index and class of the Stixel below.
    prev: Option<(u32, u8)>,
}

const UNREACHED: State = State {
    cost: f64::INFINITY,
    count: u32::MAX,
    prev: None,
};

/// Lexicographic `(cost, count, index, class)` comparison.
#[inline]
fn better(cost: f64, count: u32, k: usize, c: usize, best: (f64, u32, usize, usize)) -> bool {
    if cost != best.0 {
        return cost < best.0;
    }
    if count != best.1 {
        return count < best.1;
    }
    (k, c) < (best.2, best.3)
}

/// Runs the recursion over a segment table and backtracks the optimum.
fn solve(table: &SegmentTable, h: usize, cfg: &StixelModelConfig) -> ColumnSolution {
    let n = table.ends.len();
    let mut states = vec![[UNREACHED; 3]; n * (n + 1) / 2];
    for j in 0..n {
        for k in 0..=j {
            for c in 0..3 {
                let cand = table.get(k, j, c);
                let cur = table.stixel(k, j, c);
                let state = if k == 0 {
                    State {
                        cost: increment(cand, None, &cur, cfg),
                        count: 1,
                        prev: None,
                    }
                } else {
                    let mut best = (f64::INFINITY, u32::MAX, usize::MAX, usize::MAX);
                    let mut found = None;
                    for pc in 0..3 {
                        let dependent = plane_dependent(CLASSES[pc], CLASSES[c]);
                        // Plane-independent pairs share one increment for every predecessor.
                        let fixed = (!dependent).then(|| {
                            cand.data + (cand.unary + cfg.transition_cost(CLASSES[pc], CLASSES[c]))
                        });
                        for kp in 0..k {
                            let ps = &states[tri(k - 1, kp)][pc];
                            let e = match fixed {
                                Some(e) => e,
                                None => increment(cand, Some(&table.stixel(kp, k - 1, pc)), &cur, cfg),
                            };
                            let total = ps.cost + e;
                            if better(total, ps.count + 1, kp, pc, best) {
                                best = (total, ps.count + 1, kp, pc);
                                found = Some((kp as u32, pc as u8));
                            }
                        }
                    }
                    State {
                        cost: best.0,
                        count: best.1,
                        prev: found,
                    }
                };
                states[tri(j, k)][c] = state;
            }
        }
    }
    let mut best = (f64::INFINITY, u32::MAX, usize::MAX, usize::MAX);
    for k in 0..n {
        for c in 0..3 {
            let s = &states[tri(n - 1, k)][c];
            if better(s.cost, s.count, k, c, best) {
                best = (s.cost, s.count, k, c);
            }
        }
    }
    // Backtrack from the top Stixel.
    let mut seq = Vec::new();
    let (mut k, mut j, mut c) = (best.2, n - 1, best.3);
    loop {
        seq.push((k, j, c));
        match states[tri(j, k)][c].prev {
            Some((kp, pc)) => {
                j = k - 1;
                k = kp as usize;
                c = pc as usize;
            }
            None => break,
        }
    }
    seq.reverse();
    finish(table, &seq, h, best.0, cfg)
}

/// Builds the solution for a bottom-up list of `(start index, end index, class)`.
fn finish(table: &SegmentTable, seq: &[(usize, usize, usize)], h: usize, energy: f64, cfg: &StixelModelConfig) -> ColumnSolution {
    let stixels: Vec<Stixel> = seq.iter().map(|&(k, j, c)| table.stixel(k, j, c)).collect();
    let segment_energies = seq
        .iter()
        .enumerate()
        .map(|(i, &(k, j, c))| {
            let prev = i.checked_sub(1).map(|p| &stixels[p]);
            increment(table.get(k, j, c), prev, &stixels[i], cfg)
        })
        .collect();
    ColumnSolution {
        column: StixelColumn::new(stixels, h).expect("recursion yields a connected column"),
        energy,
        segment_energies,
    }
}

fn check_columns(dcol: &DisparityColumn, scol: &SemanticColumn) -> Result<()> {
    if dcol.height() != scol.height() {
        return Err(Error::HeightMismatch {
            disparity: dcol.height(),
            semantic: scol.height(),
        });
    }
    Ok(())
}

impl Segmenter {
    pub fn new(cfg: &StixelModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Segmenter {
            cfg: cfg.clone(),
            model: DisparityModel::new(cfg),
        })
    }

    pub fn config(&self) -> &StixelModelConfig {
        &self.cfg
    }

    fn check(&self, dcol: &DisparityColumn, scol: &SemanticColumn) -> Result<()> {
        check_columns(dcol, scol)?;
        if scol.class_count() != self.cfg.class_count() {
            return Err(Error::ClassCountMismatch {
                expected: self.cfg.class_count(),
                found: scol.class_count(),
            });
        }
        if dcol.d_max() != self.cfg.d_max {
            return Err(Error::InvalidInput(format!(
                "column d_max {} differs from config d_max {}",
                dcol.d_max(),
                self.cfg.d_max
            )));
        }
        Ok(())
    }

    /// Minimum-energy segmentation whose Stixels all end on rows in `cuts`.
    pub fn segment(&self, dcol: &DisparityColumn, scol: &SemanticColumn, cuts: &CutSet) -> Result<ColumnSolution> {
        self.check(dcol, scol)?;
        if cuts.is_empty() {
            return Err(Error::EmptyCutSet);
        }
        if cuts.height() != dcol.height() {
            return Err(Error::DimensionMismatch(format!(
                "cut set for {} rows applied to a column of {}",
                cuts.height(),
                dcol.height()
            )));
        }
        let scorer = ColumnScorer::new(self, dcol, scol);
        let table = SegmentTable::new(&scorer, cuts.rows());
        Ok(solve(&table, dcol.height(), &self.cfg))
    }

    /// Minimum-energy segmentation with every row admissible as a boundary,
    /// written directly over rows without a cut set.
    pub fn segment_full(&self, dcol: &DisparityColumn, scol: &SemanticColumn) -> Result<ColumnSolution> {
        self.check(dcol, scol)?;
        let h = dcol.height();
        let cfg = &self.cfg;
        let scorer = ColumnScorer::new(self, dcol, scol);
        // cand[t][b - 1] for segment [b, t], 1-based rows.
        let cand: Vec<Vec<[Candidate; 3]>> = (0..=h)
            .map(|t| (1..=t).map(|b| CLASSES.map(|g| scorer.candidate(b, t, g))).collect())
            .collect();
        let stixel = |b: usize, t: usize, c: usize| cand[t][b - 1][c].stixel(b, t, CLASSES[c]);
        // best[t][b][c]: cheapest segmentation of 1..=t whose last Stixel is [b, t] of class c.
        let mut best: Vec<Vec<[State; 3]>> = (0..=h).map(|t| vec![[UNREACHED; 3]; t + 1]).collect();
        for t in 1..=h {
            for b in 1..=t {
                for c in 0..3 {
                    let cur = stixel(b, t, c);
                    let cd = &cand[t][b - 1][c];
                    if b == 1 {
                        best[t][b][c] = State {
                            cost: increment(cd, None, &cur, cfg),
                            count: 1,
                            prev: None,
                        };
                        continue;
                    }
                    let mut key = (f64::INFINITY, u32::MAX, usize::MAX, usize::MAX);
                    let mut prev = None;
                    for pc in 0..3 {
                        for pb in 1..b {
                            let ps = &best[b - 1][pb][pc];
                            let e = increment(cd, Some(&stixel(pb, b - 1, pc)), &cur, cfg);
                            let total = ps.cost + e;
                            if better(total, ps.count + 1, pb, pc, key) {
                                key = (total, ps.count + 1, pb, pc);
                                prev = Some((pb as u32, pc as u8));
                            }
                        }
                    }
                    best[t][b][c] = State {
                        cost: key.0,
                        count: key.1,
                        prev,
                    };
                }
            }
        }
        let mut key = (f64::INFINITY, u32::MAX, usize::MAX, usize::MAX);
        for b in 1..=h {
            for c in 0..3 {
                let s = &best[h][b][c];
                if better(s.cost, s.count, b, c, key) {
                    key = (s.cost, s.count, b, c);
                }
            }
        }
        let mut rows = Vec::new();
        let (mut b, mut t, mut c) = (key.2, h, key.3);
        loop {
            rows.push((b, t, c));
            match best[t][b][c].prev {
                Some((pb, pc)) => {
                    t = b - 1;
                    b = pb as usize;
                    c = pc as usize;
                }
                None => break,
            }
        }
        rows.reverse();
        let stixels: Vec<Stixel> = rows.iter().map(|&(b, t, c)| stixel(b, t, c)).collect();
        let segment_energies = rows
            .iter()
            .enumerate()
            .map(|(i, &(b, t, c))| increment(&cand[t][b - 1][c], i.checked_sub(1).map(|p| &stixels[p]), &stixels[i], cfg))
            .collect();
        Ok(ColumnSolution {
            column: StixelColumn::new(stixels, h).expect("recursion yields a connected column"),
            energy: key.0,
            segment_energies,
        })
    }

    /// Exhaustive search over every admissible segmentation and class
    /// assignment. Exponential; limited to small columns.
    pub fn brute_force(&self, dcol: &DisparityColumn, scol: &SemanticColumn, cuts: &CutSet) -> Result<ColumnSolution> {
        self.check(dcol, scol)?;
        let h = dcol.height();
        if h > BRUTE_FORCE_LIMIT || cuts.len() > BRUTE_FORCE_LIMIT {
            return Err(Error::TooLarge(format!(
                "{h} rows and {} cuts (limit {BRUTE_FORCE_LIMIT})",
                cuts.len()
            )));
        }
        if cuts.height() != h {
            return Err(Error::DimensionMismatch(format!("cut set for {} rows applied to a column of {h}", cuts.height())));
        }
        let scorer = ColumnScorer::new(self, dcol, scol);
        let table = SegmentTable::new(&scorer, cuts.rows());
        let mut search = Search {
            table: &table,
            cfg: &self.cfg,
            path: Vec::new(),
            best: None,
        };
        search.descend(0, None, 0.0);
        let (energy, path) = search.best.expect("at least one segmentation exists");
        Ok(finish(&table, &path, h, energy, &self.cfg))
    }
}

struct Search<'a> {
    table: &'a SegmentTable,
    cfg: &'a StixelModelConfig,
    path: Vec<(usize, usize, usize)>,
    best: Option<(f64, Vec<(usize, usize, usize)>)>,
}

impl Search<'_> {
    /// Places every possible next Stixel starting at start index `k`.
    fn descend(&mut self, k: usize, prev: Option<Stixel>, total: f64) {
        let n = self.table.ends.len();
        if k == n {
            self.offer(total);
            return;
        }
        for j in k..n {
            for c in 0..3 {
                let cur = self.table.stixel(k, j, c);
                let e = match &prev {
                    None => {
                        let cand = self.table.get(k, j, c);
                        cand.data + cand.unary
                    }
                    Some(p) => {
                        let prior = pairwise_prior(p, &cur, self.cfg).expect("segments are adjacent");
                        self.table.get(k, j, c).data + prior
                    }
                };
                let next = if prev.is_none() { e } else { total + e };
                self.path.push((k, j, c));
                self.descend(j + 1, Some(cur), next);
                self.path.pop();
            }
        }
    }

    fn offer(&mut self, total: f64) {
        let replace = match &self.best {
            None => true,
            Some((cost, path)) => {
                if total != *cost {
                    total < *cost
                } else if self.path.len() != path.len() {
                    self.path.len() < path.len()
                } else {
                    // Top Stixel first: lower start, then lower class.
                    let key = |p: &[(usize, usize, usize)]| p.iter().rev().map(|&(k, _, c)| (k, c)).collect::<Vec<_>>();
                    key(&self.path) < key(path)
                }
            }
        };
        if replace {
            self.best = Some((total, self.path.clone()));
        }
    }
}

/// Minimum-energy segmentation of one column restricted to `cuts`.
pub fn segment_column(dcol: &DisparityColumn, scol: &SemanticColumn, cuts: &CutSet, cfg: &StixelModelConfig) -> Result<ColumnSolution> {
    check_columns(dcol, scol)?;
    Segmenter::new(cfg)?.segment(dcol, scol, cuts)
}

/// Minimum-energy segmentation of one column without any cut restriction.
pub fn segment_column_full(dcol: &DisparityColumn, scol: &SemanticColumn, cfg: &StixelModelConfig) -> Result<ColumnSolution> {
    check_columns(dcol, scol)?;
    Segmenter::new(cfg)?.segment_full(dcol, scol)
}

/// Exhaustive reference for [`segment_column`]; at most 14 rows and 14 cuts.
pub fn brute_force_column(dcol: &DisparityColumn, scol: &SemanticColumn, cuts: &CutSet, cfg: &StixelModelConfig) -> Result<ColumnSolution> {
    check_columns(dcol, scol)?;
    Segmenter::new(cfg)?.brute_force(dcol, scol, cuts)
}

/// Energy of a segmentation re-evaluated pixel by pixel from the model
/// definitions, independently of the accumulators used during the search.
pub fn evaluate_energy(column: &StixelColumn, dcol: &DisparityColumn, scol: &SemanticColumn, cfg: &StixelModelConfig) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<&Stixel> = None;
    for s in column.stixels() {
        total += segment_data_cost(s.v_bottom, s.v_top, s.geom_class, s.sem_class, s.plane, dcol, scol, cfg).total;
        total += match prev {
            None => stixel_prior(s, cfg),
            Some(p) => pairwise_prior(p, s, cfg).unwrap_or(f64::INFINITY),
        };
        prev = Some(s);
    }
    total
}

/// Where Stixel boundaries may fall.
#[derive(Debug, Clone, PartialEq)]
pub enum CutPlan {
    /// Every row (no cut prior).
    All,
    /// Disparity extrema merged with semantic edges.
    Extrema,
    /// Externally supplied per-column cuts merged with semantic edges.
    Map(Vec<CutSet>),
}

/// Inputs of one frame.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub disparity: &'a DisparityImage,
    pub confidence: Option<&'a ConfidenceImage>,
    pub semantic: &'a SemanticImage,
}

/// Result of segmenting a frame.
#[derive(Debug, Clone)]
pub struct FrameSolution {
    pub grid: StixelGrid,
    pub columns: Vec<ColumnSolution>,
    /// Mean fraction of rows admissible as boundaries.
    pub cut_density: f64,
    pub timings: Vec<(&'static str, Duration)>,
}

impl FrameSolution {
    pub fn stixel_columns(&self) -> Vec<StixelColumn> {
        self.columns.iter().map(|c| c.column.clone()).collect()
    }
}

fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Segments every Stixel column of a frame, in parallel over columns.
///
/// `threads` bounds the worker count (`None` uses the global pool). Results
/// are ordered by column and independent of the thread count.
pub fn segment_image(frame: &Frame, plan: &CutPlan, threads: Option<usize>, cfg: &StixelModelConfig) -> Result<FrameSolution> {
    check_inputs(frame.disparity, frame.confidence, frame.semantic, cfg)?;
    let segmenter = Segmenter::new(cfg)?;
    let grid = StixelGrid::new(frame.disparity.width(), frame.disparity.height(), cfg);
    let h = grid.column_height();
    if let CutPlan::Map(cuts) = plan {
        if cuts.len() != grid.columns() || cuts.iter().any(|c| c.height() != h) {
            return Err(Error::DimensionMismatch(format!(
                "cut map has {} columns of height {:?}, grid is {}x{h}",
                cuts.len(),
                cuts.first().map(CutSet::height),
                grid.columns()
            )));
        }
    }
    run_in_pool(threads, || {
        let t0 = Instant::now();
        let inputs = (0..grid.columns())
            .into_par_iter()
            .map(|x| extract_column(&grid, x, frame.disparity, frame.confidence, frame.semantic, cfg))
            .collect::<Result<Vec<_>>>()?;
        let t1 = Instant::now();
        let cuts: Vec<CutSet> = inputs
            .par_iter()
            .enumerate()
            .map(|(x, (d, s))| match plan {
                CutPlan::All => CutSet::full(h),
                CutPlan::Extrema => merge_cuts(&extrema_cuts(d), &semantic_edge_cuts(s)),
                CutPlan::Map(m) => merge_cuts(&m[x], &semantic_edge_cuts(s)),
            })
            .collect();
        let t2 = Instant::now();
        let columns = inputs
            .par_iter()
            .zip(cuts.par_iter())
            .map(|((d, s), c)| segmenter.segment(d, s, c))
            .collect::<Result<Vec<_>>>()?;
        let t3 = Instant::now();
        log::debug!("segmented {} columns of {h} rows", columns.len());
        Ok(FrameSolution {
            grid,
            columns,
            cut_density: mean_density(&cuts),
            timings: vec![("downsample", t1 - t0), ("cuts", t2 - t1), ("inference", t3 - t2)],
        })
    })?
}
