//! Run orchestration shared by the command-line front end: repeated runs
//! over seeds and scan directions, ablation sweeps and throughput sweeps.

use crate::cube::{DataCube, Direction, GroundTruthMask, StreamConfig};
use crate::datagen::gen_random_cube;
use crate::detectors::{run_detector, DetectorKind, DetectorSpec, RunOutput};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_run, mean_sd, RocSummary, RunRecord};

/// Scan directions requested on the command line.
pub fn parse_directions(s: &str) -> Result<Vec<Direction>> {
    match s {
        "both" => Ok(vec![Direction::Forward, Direction::Flipped]),
        other => Ok(vec![other.parse()?]),
    }
}

/// One detector run with its evaluation, if a mask was supplied.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub label: String,
    pub seed: u64,
    pub direction: Direction,
    pub output: RunOutput,
    pub roc: Option<RocSummary>,
    pub record: RunRecord,
}

/// Runs `spec` once per seed and direction. Without a mask the AUC fields of
/// the records are NaN.
pub fn run_repeated(
    label: &str,
    spec: &DetectorSpec,
    cube: &DataCube,
    mask: Option<&GroundTruthMask>,
    seeds: &[u64],
    directions: &[Direction],
) -> Result<Vec<RunResult>> {
    if let Some(m) = mask {
        m.check_matches(cube)?;
    }
    let mut out = Vec::with_capacity(seeds.len() * directions.len());
    for &direction in directions {
        let cfg = StreamConfig::new(direction, spec.buffer_len());
        cfg.validate(cube.lines())?;
        for &seed in seeds {
            let run_spec = spec.clone().with_seed(seed);
            let mut det = run_spec.build(cube.bands())?;
            let output = run_detector(det.as_mut(), cube, &cfg)?;
            let roc = mask
                .map(|m| evaluate_run(&output.lines, m, &cfg, output.score_kind))
                .transpose()?;
            let (auc, auc_td, auc_bs) = roc
                .as_ref()
                .map_or((f64::NAN, f64::NAN, f64::NAN), |r| (r.auc, r.auc_td, r.auc_bs));
            let record = RunRecord {
                detector: label.to_owned(),
                dataset: cube.name.clone(),
                direction: direction.to_string(),
                seed,
                auc,
                auc_td,
                auc_bs,
                lps: output.lines_per_second(),
                warmup_lines: output.lines.iter().filter(|l| l.warmup).count(),
                config: run_spec.snapshot(),
            };
            out.push(RunResult {
                label: label.to_owned(),
                seed,
                direction,
                output,
                roc,
                record,
            });
        }
    }
    Ok(out)
}

/// A labelled detector configuration inside an ablation sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationSetting {
    pub label: String,
    pub spec: DetectorSpec,
}

pub const DEFAULT_DIMS_SWEEP: [usize; 7] = [1, 3, 5, 10, 20, 30, 50];
pub const DEFAULT_ALPHA_SWEEP: [f64; 7] = [1.0, 0.9, 0.5, 0.1, 0.01, 1e-3, 1e-4];

/// ERX over each projected dimension, plus the unprojected variant.
pub fn dims_settings(base: &DetectorSpec, dims: &[usize]) -> Vec<AblationSetting> {
    let mut out: Vec<AblationSetting> = dims
        .iter()
        .map(|&d| {
            let mut spec = base.clone();
            spec.kind = DetectorKind::Erx;
            spec.erx.dims = d;
            spec.erx.no_srp = false;
            AblationSetting {
                label: format!("erx[dims={d}]"),
                spec,
            }
        })
        .collect();
    let mut spec = base.clone();
    spec.kind = DetectorKind::Erx;
    spec.erx.no_srp = true;
    out.push(AblationSetting {
        label: "erx[no-srp]".into(),
        spec,
    });
    out
}

/// ERX over each momentum, plus the equal-weight incremental variant.
pub fn alpha_settings(base: &DetectorSpec, alphas: &[f64]) -> Vec<AblationSetting> {
    let mut out: Vec<AblationSetting> = alphas
        .iter()
        .map(|&a| {
            let mut spec = base.clone();
            spec.kind = DetectorKind::Erx;
            spec.erx.alpha = a;
            spec.erx.use_incremental = false;
            AblationSetting {
                label: format!("erx[alpha={a}]"),
                spec,
            }
        })
        .collect();
    let mut spec = base.clone();
    spec.kind = DetectorKind::Erx;
    spec.erx.use_incremental = true;
    out.push(AblationSetting {
        label: "erx[no-ema]".into(),
        spec,
    });
    out
}

pub fn run_ablation(
    settings: &[AblationSetting],
    cube: &DataCube,
    mask: &GroundTruthMask,
    seeds: &[u64],
    directions: &[Direction],
) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    for s in settings {
        for r in run_repeated(&s.label, &s.spec, cube, Some(mask), seeds, directions)? {
            records.push(r.record);
        }
    }
    Ok(records)
}

/// Throughput of one detector at one cube shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ThroughputReport {
    pub detector: String,
    pub pixels: usize,
    pub bands: usize,
    pub lines: usize,
    pub repeats: usize,
    pub lps_mean: f64,
    pub lps_sd: f64,
    pub host: String,
}

/// Operating system, architecture, core count and CPU model where known.
pub fn host_description() -> String {
    let cores = std::thread::available_parallelism().map_or(0, |n| n.get());
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_owned())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{}-{} {} cores {}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cores,
        cpu
    )
}

/// Streams a uniform random cube through `spec` `repeats` times. Timing
/// covers detector work only, warmup lines included.
pub fn measure_throughput(
    spec: &DetectorSpec,
    pixels: usize,
    bands: usize,
    lines: usize,
    repeats: usize,
    seed: u64,
) -> Result<ThroughputReport> {
    if repeats == 0 {
        return Err(Error::config("repeats must be at least 1"));
    }
    let cube = gen_random_cube(pixels, lines, bands, seed)?;
    let cfg = StreamConfig::new(Direction::Forward, spec.buffer_len());
    cfg.validate(lines)?;
    let mut lps = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut det = spec.clone().with_seed(seed + r as u64).build(bands)?;
        lps.push(run_detector(det.as_mut(), &cube, &cfg)?.lines_per_second());
    }
    let (lps_mean, lps_sd) = mean_sd(&lps);
    Ok(ThroughputReport {
        detector: spec.kind.to_string(),
        pixels,
        bands,
        lines,
        repeats,
        lps_mean,
        lps_sd,
        host: host_description(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub detectors: Vec<DetectorSpec>,
    pub band_sweep: Vec<usize>,
    pub pixel_sweep: Vec<usize>,
    pub fixed_pixels: usize,
    pub fixed_bands: usize,
    pub lines: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            detectors: DetectorKind::ALL.iter().map(|&k| DetectorSpec::new(k)).collect(),
            band_sweep: (10..=200).step_by(10).collect(),
            pixel_sweep: (100..=1500).step_by(100).collect(),
            fixed_pixels: 500,
            fixed_bands: 50,
            lines: 3000,
            repeats: 5,
            seed: 0,
        }
    }
}

/// Band sweep at fixed width, then pixel sweep at fixed band count.
pub fn run_bench(cfg: &BenchConfig, mut progress: impl FnMut(&ThroughputReport)) -> Result<Vec<ThroughputReport>> {
    let mut out = Vec::new();
    let shapes = cfg
        .band_sweep
        .iter()
        .map(|&b| (cfg.fixed_pixels, b))
        .chain(cfg.pixel_sweep.iter().map(|&p| (p, cfg.fixed_bands)));
    for (pixels, bands) in shapes {
        for spec in &cfg.detectors {
            let report = measure_throughput(spec, pixels, bands, cfg.lines, cfg.repeats, cfg.seed)?;
            progress(&report);
            out.push(report);
        }
    }
    Ok(out)
}

pub fn write_throughput_csv(path: impl AsRef<std::path::Path>, reports: &[ThroughputReport]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["detector", "pixels", "bands", "lines", "repeats", "lps_mean", "lps_sd", "host"])?;
    for r in reports {
        w.write_record([
            r.detector.clone(),
            r.pixels.to_string(),
            r.bands.to_string(),
            r.lines.to_string(),
            r.repeats.to_string(),
            format!("{:.3}", r.lps_mean),
            format!("{:.3}", r.lps_sd),
            r.host.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
