use std::path::Path;
use std::process::{Command, Output};

use stixel_core::image::Grid;
use stixel_core::io::netpbm::write_gray8;
use stixel_core::StixelModelConfig;

const NOISELESS: &str = r#"
width = 24
height = 40
d_max = 64
rng_seed = 1

[[ground]]
rows = [1, 16]
a = 40.0
b = -1.0

[[objects]]
columns = [6, 14]
rows = [8, 30]
a = 31.0
class = 1
"#;

const FINE: &str = "stixel_width = 1\nvertical_downsample = 1\nd_max = 64\n";

fn stixels(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stixels")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = stixels(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value<'a>(report: &'a str, key: &str) -> &'a str {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn noiseless_scene(dir: &Path) {
    std::fs::write(dir.join("scene.toml"), NOISELESS).unwrap();
    std::fs::write(dir.join("fine.toml"), FINE).unwrap();
    ok(&["gen", p(&dir.join("scene.toml")), "--out-dir", p(dir)]);
}

#[test]
fn noiseless_round_trip_has_no_outliers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    noiseless_scene(d);
    for (sem, cuts) in [("semantic_labels.pgm", "none"), ("semantic_scores.bin", "extrema")] {
        let out = d.join(format!("{cuts}.jsonl"));
        ok(&[
            "segment",
            p(&d.join("disparity.pfm")),
            p(&d.join(sem)),
            "--config",
            p(&d.join("fine.toml")),
            "--cuts",
            cuts,
            "--out",
            p(&out),
        ]);
        let report = ok(&[
            "eval",
            "--stixels",
            p(&out),
            "--gt-disparity",
            p(&d.join("disparity_gt.pfm")),
            "--gt-labels",
            p(&d.join("semantic_labels.pgm")),
        ]);
        assert_eq!(value(&report, "outlier_rate"), "0", "{cuts}: {report}");
        assert_eq!(value(&report, "mean_iou"), "1", "{cuts}: {report}");
    }
}

#[test]
fn ground_truth_stixels_evaluate_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    noiseless_scene(d);
    let report = ok(&[
        "eval",
        "--stixels",
        p(&d.join("gt_stixels.jsonl")),
        "--gt-disparity",
        p(&d.join("disparity_gt.pfm")),
        "--format",
        "json",
    ]);
    assert!(report.contains("\"outlier_rate\": 0.0"), "{report}");
}

#[test]
fn segment_report_and_visualization() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    noiseless_scene(d);
    let report = ok(&[
        "segment",
        p(&d.join("disparity.pfm")),
        p(&d.join("semantic_labels.pgm")),
        "--width",
        "4",
        "--threads",
        "2",
        "--viz",
        p(&d.join("viz")),
        "--out",
        p(&d.join("s.jsonl")),
    ]);
    assert_eq!(value(&report, "columns"), "6");
    assert_eq!(value(&report, "cut_density"), "1");
    assert!(value(&report, "stixel_count").parse::<usize>().unwrap() >= 6);
    assert!(d.join("viz/disparity.ppm").exists());
    assert!(d.join("viz/classes.ppm").exists());
}

#[test]
fn cut_map_file_restricts_boundaries() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    noiseless_scene(d);
    // Default grid: 3 columns of 5 coarse rows; allow a boundary after row 2.
    let mut mask = Grid::filled(3, 5, 0u8);
    for x in 0..3 {
        mask.set(x, 5 - 2, 255);
    }
    write_gray8(&d.join("cuts.pgm"), &mask).unwrap();
    let report = ok(&[
        "segment",
        p(&d.join("disparity.pfm")),
        p(&d.join("semantic_labels.pgm")),
        "--cuts",
        &format!("file:{}", p(&d.join("cuts.pgm"))),
        "--out",
        p(&d.join("s.jsonl")),
    ]);
    assert!(value(&report, "cut_density").parse::<f64>().unwrap() < 1.0);
}

#[test]
fn config_hash_mismatch_warns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    noiseless_scene(d);
    ok(&[
        "segment",
        p(&d.join("disparity.pfm")),
        p(&d.join("semantic_labels.pgm")),
        "--out",
        p(&d.join("s.jsonl")),
    ]);
    let out = stixels(&["eval", "--stixels", p(&d.join("s.jsonl")), "--config", p(&d.join("fine.toml"))]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn defaults_parse_back() {
    let text = ok(&["defaults"]);
    assert_eq!(StixelModelConfig::from_toml_str(&text).unwrap(), StixelModelConfig::default());
}

#[test]
fn oracle_reports_agreement() {
    let report = ok(&["oracle", "--columns", "30", "--max-height", "8", "--seed", "4"]);
    assert_eq!(value(&report, "energy_match"), "30");
    assert_eq!(value(&report, "segmentation_match"), "30");
}

#[test]
fn unknown_flag_prints_usage() {
    let out = stixels(&["segment", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_inputs_fail_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("missing.pfm");
    let out = stixels(&["segment", p(&missing), p(&missing)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.pfm"));

    std::fs::write(d.join("trunc.pgm"), b"P5\n4 4\n65535\n\x00").unwrap();
    let out = stixels(&["segment", p(&d.join("trunc.pgm")), p(&missing)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trunc.pgm"));

    noiseless_scene(d);
    let out = stixels(&[
        "segment",
        p(&d.join("disparity.pfm")),
        p(&d.join("semantic_labels.pgm")),
        "--cuts",
        "sometimes",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--cuts"));
}
