use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stixel_core::io::{self, StixelFile, StixelFileHeader};
use stixel_core::metrics::{self, render};
use stixel_core::overseg::load_cut_map;
use stixel_core::{
    CutPlan, CutSet, DisparityColumn, Frame, Segmenter, SemanticColumn, StixelGrid, StixelModelConfig,
};

#[derive(Parser, Debug)]
#[command(name = "stixels", version, about = "Slanted Stixel segmentation of disparity and semantic maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment one frame into Stixels.
    Segment(SegmentArgs),
    /// Evaluate a Stixel file against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene from a TOML spec.
    Gen(GenArgs),
    /// Compare the solver with exhaustive search on small columns.
    Oracle(OracleArgs),
    /// Print the default model configuration as TOML.
    Defaults,
}

#[derive(clap::Args, Debug)]
struct SegmentArgs {
    /// Disparity map (16-bit PGM, value/256, or PFM).
    disparity: PathBuf,
    /// Semantic label map (8-bit PGM) or score volume.
    semantic: PathBuf,
    /// Per-pixel confidence in [0, 1] (8-bit/16-bit PGM or PFM).
    #[arg(long)]
    confidence: Option<PathBuf>,
    /// Model configuration (TOML); defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Candidate boundaries: none, extrema or file:PATH.
    #[arg(long, default_value = "none")]
    cuts: String,
    /// Stixel width in pixels, overriding the config.
    #[arg(long)]
    width: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for disparity.ppm and classes.ppm renderings.
    #[arg(long)]
    viz: Option<PathBuf>,
    /// Output Stixel file.
    #[arg(long, default_value = "stixels.jsonl")]
    out: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    stixels: PathBuf,
    /// Ground-truth disparity; invalid pixels are skipped.
    #[arg(long)]
    gt_disparity: Option<PathBuf>,
    /// Ground-truth labels (8-bit PGM, 255 = void).
    #[arg(long)]
    gt_labels: Option<PathBuf>,
    /// Config used for the class count and the hash check.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(clap::Args, Debug)]
struct GenArgs {
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(clap::Args, Debug)]
struct OracleArgs {
    /// Number of random columns.
    #[arg(long, default_value_t = 200)]
    columns: usize,
    /// Largest column height.
    #[arg(long, default_value_t = 10)]
    max_height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum energy difference accepted as equal.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

fn load_config(path: Option<&Path>) -> Result<StixelModelConfig> {
    match path {
        Some(p) => Ok(StixelModelConfig::load(p)?),
        None => Ok(StixelModelConfig::default()),
    }
}

fn run_segment(args: &SegmentArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(w) = args.width {
        cfg.stixel_width = w;
    }
    cfg.validate()?;
    let t0 = Instant::now();
    let disparity = io::read_disparity(&args.disparity)?;
    let confidence = args.confidence.as_deref().map(io::read_confidence).transpose()?;
    let semantic = io::read_semantic(&args.semantic, cfg.class_count(), cfg.label_softness)?;
    let load_time = t0.elapsed();

    let grid = StixelGrid::new(disparity.width(), disparity.height(), &cfg);
    let plan = match args.cuts.as_str() {
        "none" | "all" => CutPlan::All,
        "extrema" => CutPlan::Extrema,
        other => match other.strip_prefix("file:") {
            Some(p) => CutPlan::Map(load_cut_map(Path::new(p), grid.columns(), grid.column_height())?.columns),
            None => bail!("unknown --cuts value {other:?}; expected none, extrema or file:PATH"),
        },
    };
    let frame = Frame {
        disparity: &disparity,
        confidence: confidence.as_ref(),
        semantic: &semantic,
    };
    let solution = stixel_core::segment_image(&frame, &plan, args.threads, &cfg)?;
    let columns = solution.stixel_columns();

    let file = StixelFile {
        header: StixelFileHeader {
            format: io::stixel_file::FORMAT.to_string(),
            width: grid.image_width,
            height: grid.image_height,
            column_height: grid.column_height(),
            stixel_width: grid.stixel_width,
            vertical_downsample: grid.vertical_downsample,
            d_max: cfg.d_max,
            columns: columns.len(),
            config_hash: cfg.hash(),
        },
        energies: solution.columns.iter().map(|c| c.segment_energies.clone()).collect(),
        columns,
    };
    io::write_stixels(&args.out, &file)?;
    if let Some(dir) = &args.viz {
        let rendered = render(&file.columns, &grid, cfg.d_max)?;
        io::write_visualization(dir, &rendered, &file.columns, &grid, cfg.d_max)?;
    }

    let mut timings = vec![("load", load_time)];
    timings.extend(solution.timings.iter().copied());
    let mut report = metrics::summarize(&file.columns, &timings);
    report.cut_density = Some(solution.cut_density);
    print_report(&report, args.format);
    log::info!("wrote {}", args.out.display());
    Ok(())
}

fn print_report(report: &stixel_core::EvaluationReport, format: Format) {
    match format {
        Format::Text => print!("{}", report.to_text()),
        Format::Json => println!("{}", report.to_json()),
    }
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.config.as_deref().map(|p| load_config(Some(p))).transpose()?;
    let hash = cfg.as_ref().map(StixelModelConfig::hash);
    let (file, warnings) = io::read_stixels(&args.stixels, hash.as_deref())?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let h = &file.header;
    let grid = StixelGrid {
        image_width: h.width,
        image_height: h.height,
        stixel_width: h.stixel_width,
        vertical_downsample: h.vertical_downsample,
    };
    let rendered = render(&file.columns, &grid, h.d_max)?;
    let mut report = metrics::summarize(&file.columns, &[]);
    if let Some(p) = &args.gt_disparity {
        let gt = io::read_disparity(p)?;
        report.outlier_rate = Some(metrics::disparity_outlier_rate(&rendered.disparity, &gt).with_context(|| p.display().to_string())?);
    }
    if let Some(p) = &args.gt_labels {
        let gt = io::read_labels(p)?;
        let classes = cfg.as_ref().map_or_else(|| StixelModelConfig::default().class_count(), |c| c.class_count());
        report.mean_iou = Some(metrics::mean_iou(&rendered.labels, &gt, classes).with_context(|| p.display().to_string())?);
    }
    print_report(&report, args.format);
    Ok(())
}

fn run_gen(args: &GenArgs) -> Result<()> {
    let spec = stixel_core::SceneSpec::load(&args.spec)?;
    let scene = stixel_core::generate(&spec)?;
    let dir = &args.out_dir;
    fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    io::write_disparity_pfm(&dir.join("disparity.pfm"), &scene.disparity)?;
    io::write_disparity_pfm(&dir.join("disparity_gt.pfm"), &scene.disparity_gt)?;
    io::netpbm::write_pfm(&dir.join("confidence.pfm"), &scene.confidence)?;
    io::write_labels(&dir.join("semantic_labels.pgm"), &scene.labels)?;
    io::write_score_volume(&dir.join("semantic_scores.bin"), &scene.semantic)?;
    let header = StixelFileHeader {
        format: io::stixel_file::FORMAT.to_string(),
        width: spec.width,
        height: spec.height,
        column_height: spec.height,
        stixel_width: 1,
        vertical_downsample: 1,
        d_max: spec.d_max,
        columns: scene.gt_columns.len(),
        config_hash: "ground-truth".to_string(),
    };
    let file = StixelFile {
        header,
        energies: scene.gt_columns.iter().map(|c| vec![0.0; c.len()]).collect(),
        columns: scene.gt_columns,
    };
    io::write_stixels(&dir.join("gt_stixels.jsonl"), &file)?;
    println!("wrote scene {}x{} to {}", spec.width, spec.height, dir.display());
    Ok(())
}

fn random_column(rng: &mut ChaCha8Rng, h: usize, cfg: &StixelModelConfig) -> Result<(DisparityColumn, SemanticColumn, CutSet)> {
    let d_max = cfg.d_max as f64;
    let vals = (0..h)
        .map(|_| rng.gen_bool(0.85).then(|| rng.gen_range(0.0..d_max)))
        .collect();
    let conf = (0..h).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let labels: Vec<usize> = (0..h).map(|_| rng.gen_range(0..cfg.class_count())).collect();
    let cuts = CutSet::new((1..h).filter(|_| rng.gen_bool(0.5)).collect(), h)?;
    Ok((
        DisparityColumn::new(vals, conf, cfg.d_max)?,
        SemanticColumn::from_labels(&labels, cfg.class_count(), cfg.label_softness)?,
        cuts,
    ))
}

fn run_oracle(args: &OracleArgs) -> Result<bool> {
    let cfg = load_config(args.config.as_deref())?;
    let segmenter = Segmenter::new(&cfg)?;
    let max_h = args.max_height.clamp(1, stixel_core::inference::BRUTE_FORCE_LIMIT);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (mut energy_ok, mut seg_ok) = (0usize, 0usize);
    let mut worst = 0.0f64;
    for i in 0..args.columns {
        let h = rng.gen_range(1..=max_h);
        let (d, s, cuts) = random_column(&mut rng, h, &cfg)?;
        let dp = segmenter.segment(&d, &s, &cuts)?;
        let bf = segmenter.brute_force(&d, &s, &cuts)?;
        let diff = (dp.energy - bf.energy).abs();
        worst = worst.max(diff);
        if diff <= args.tolerance {
            energy_ok += 1;
        } else {
            eprintln!("column {i} (h={h}): energy {} vs exhaustive {}", dp.energy, bf.energy);
        }
        if dp.column == bf.column {
            seg_ok += 1;
        } else {
            eprintln!("column {i} (h={h}): segmentation differs from exhaustive search");
        }
    }
    println!("columns={}", args.columns);
    println!("energy_match={energy_ok}");
    println!("segmentation_match={seg_ok}");
    println!("max_energy_diff={worst:e}");
    Ok(energy_ok == args.columns && seg_ok == args.columns)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Segment(a) => run_segment(a).map(|_| true),
        Command::Eval(a) => run_eval(a).map(|_| true),
        Command::Gen(a) => run_gen(a).map(|_| true),
        Command::Oracle(a) => run_oracle(a),
        Command::Defaults => {
            print!("{}", StixelModelConfig::default().to_toml_string());
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
