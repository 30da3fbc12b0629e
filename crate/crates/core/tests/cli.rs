use std::path::Path;
use std::process::{Command, Output};

fn linescan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linescan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen_small(dir: &Path) {
    let out = linescan(&[
        "gen",
        "--out",
        dir.to_str().unwrap(),
        "--name",
        "small",
        "--lines",
        "240",
        "--pixels",
        "48",
        "--bands",
        "12",
        "--target-base-size",
        "8",
        "--target-columns",
        "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn run_writes_one_row_per_seed_and_direction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d);
    let cube = d.join("small.hadc");
    let mask = d.join("small_gt.hadc");
    let out = linescan(&[
        "run",
        "--detector",
        "erx",
        "--cube",
        cube.to_str().unwrap(),
        "--mask",
        mask.to_str().unwrap(),
        "--alpha",
        "0.1",
        "--dims",
        "5",
        "--buffer",
        "20",
        "--seeds",
        "5",
        "--directions",
        "both",
        "--roc",
        "--heatmap",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&d.join("results.csv"));
    let runs: Vec<_> = rows.iter().filter(|r| &r[3] != "mean±sd").collect();
    let aggregates: Vec<_> = rows.iter().filter(|r| &r[3] == "mean±sd").collect();
    assert_eq!(runs.len(), 10);
    assert_eq!(aggregates.len(), 2);
    assert!(runs.iter().all(|r| r[9].contains("alpha=0.1") && r[9].contains("dims=5")));
    assert!(aggregates.iter().all(|r| &r[9] == "runs=5"));

    let roc = csv::Reader::from_path(d.join("roc_erx_forward_0.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect::<Vec<_>>();
    assert_eq!(&roc[0][0], "inf");
    assert_eq!(&roc[roc.len() - 1][0], "-inf");
    assert!(d.join("heatmap_erx_flipped_4.hadc").exists());
    assert!(d.join("heatmap_erx_flipped_4_warmup.hadc").exists());

    // The metrics command reproduces the run's AUC from the dumped scores.
    let out = linescan(&[
        "metrics",
        "--scores",
        d.join("heatmap_erx_forward_0.hadc").to_str().unwrap(),
        "--mask",
        mask.to_str().unwrap(),
        "--warmup",
        d.join("heatmap_erx_forward_0_warmup.hadc").to_str().unwrap(),
        "--buffer",
        "20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let auc: f64 = runs.iter().find(|r| &r[2] == "forward" && &r[3] == "0").unwrap()[4]
        .parse()
        .unwrap();
    let recomputed: f64 = text
        .split_whitespace()
        .find_map(|w| w.strip_prefix("auc="))
        .unwrap()
        .parse()
        .unwrap();
    // Scores are stored as f32, so only rounding-level differences remain.
    assert!((auc - recomputed).abs() < 1e-3, "{auc} vs {recomputed}");
}

#[test]
fn deterministic_detector_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d);
    let out = linescan(&[
        "run",
        "--detector",
        "rx-baseline",
        "--cube",
        d.join("small.hadc").to_str().unwrap(),
        "--mask",
        d.join("small_gt.hadc").to_str().unwrap(),
        "--buffer",
        "21",
        "--seeds",
        "3",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&d.join("results.csv"));
    let agg = rows.iter().find(|r| &r[3] == "mean±sd").unwrap();
    for col in 4..7 {
        assert!(agg[col].ends_with("±0.000000"), "{}", &agg[col]);
    }
}

#[test]
fn ablation_enumerates_settings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d);
    let out = linescan(&[
        "ablate",
        "--cube",
        d.join("small.hadc").to_str().unwrap(),
        "--mask",
        d.join("small_gt.hadc").to_str().unwrap(),
        "--sweep",
        "alpha",
        "--seeds",
        "2",
        "--buffer",
        "20",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&d.join("ablation.csv"));
    assert_eq!(rows.iter().filter(|r| &r[3] != "mean±sd").count(), 8 * 2);
    assert!(rows.iter().any(|r| &r[0] == "erx[no-ema]"));
}

#[test]
fn bench_single_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = linescan(&[
        "bench",
        "--detector",
        "erx",
        "--sweep",
        "bands",
        "--bands",
        "10,20",
        "--fixed-pixels",
        "50",
        "--lines",
        "120",
        "--repeats",
        "1",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&d.join("throughput.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap() > 0.0 && &r[6] == "0.000"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d);
    let cube = d.join("small.hadc");
    let cube = cube.to_str().unwrap();
    let out_dir = d.to_str().unwrap();

    let bad_name = linescan(&["run", "--detector", "rx", "--cube", cube, "--out", out_dir]);
    assert_eq!(bad_name.status.code(), Some(2));
    let bad_alpha = linescan(&["run", "--alpha", "0", "--cube", cube, "--out", out_dir]);
    assert_eq!(bad_alpha.status.code(), Some(2));

    std::fs::write(d.join("junk.hadc"), b"not a cube").unwrap();
    let junk = linescan(&["run", "--cube", d.join("junk.hadc").to_str().unwrap(), "--out", out_dir]);
    assert_eq!(junk.status.code(), Some(3));
    let missing = linescan(&["run", "--cube", d.join("none.hadc").to_str().unwrap(), "--out", out_dir]);
    assert_eq!(missing.status.code(), Some(3));

    // A mask with no anomalies leaves the AUC undefined.
    let mask = linescan_ad::GroundTruthMask::zeros(240, 48);
    linescan_ad::io::write_mask(d.join("empty_gt.hadc"), &mask).unwrap();
    let undefined = linescan(&[
        "run",
        "--cube",
        cube,
        "--mask",
        d.join("empty_gt.hadc").to_str().unwrap(),
        "--buffer",
        "20",
        "--out",
        out_dir,
    ]);
    assert_eq!(undefined.status.code(), Some(4));
}
