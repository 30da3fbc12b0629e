use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use linescan_ad::bench::{
    alpha_settings, dims_settings, parse_directions, run_ablation, run_bench, run_repeated,
    write_throughput_csv, BenchConfig, DEFAULT_ALPHA_SWEEP, DEFAULT_DIMS_SWEEP,
};
use linescan_ad::cube::ScoredLine;
use linescan_ad::datagen::{gen_random_cube, gen_synthetic, SyntheticSpec};
use linescan_ad::detectors::{DetectorKind, DetectorSpec, ScoreKind};
use linescan_ad::io::{
    heatmap_cube, read_cube, read_mask, warmup_mask, write_cube, write_mask, write_results_csv,
    write_roc_csv,
};
use linescan_ad::metrics::{aggregate, evaluate_run, RunRecord};
use linescan_ad::{Direction, Error, Result, StreamConfig, DEFAULT_BUFFER_LEN};

#[derive(Parser)]
#[command(name = "linescan", version, about = "Streaming anomaly detection for line-scan hyperspectral cubes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic anomaly cube and its mask, or a uniform random cube.
    Gen(GenArgs),
    /// Run detectors over a cube, optionally scoring them against a mask.
    Run(RunArgs),
    /// Throughput sweeps over band count and line width.
    Bench(BenchArgs),
    /// ERX sweeps over projected dimension and momentum.
    Ablate(AblateArgs),
    /// Evaluate a stored score heatmap against a mask.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "synth")]
    name: String,
    #[arg(long, default_value_t = 2400)]
    lines: usize,
    #[arg(long, default_value_t = 600)]
    pixels: usize,
    #[arg(long, default_value_t = 90)]
    bands: usize,
    #[arg(long)]
    transition_width: Option<usize>,
    #[arg(long)]
    target_columns: Option<usize>,
    #[arg(long)]
    target_base_size: Option<usize>,
    /// Comma-separated background fractions, one target row each.
    #[arg(long, value_delimiter = ',')]
    mixing_fractions: Option<Vec<f64>>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    brightness_sigma: Option<f64>,
    #[arg(long)]
    illumination_amplitude: Option<f64>,
    #[arg(long)]
    illumination_period: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write an i.i.d. uniform cube instead (no mask).
    #[arg(long)]
    random: bool,
}

#[derive(Args, Clone)]
struct DetectorFlags {
    /// ERX momentum.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// ERX projected dimension.
    #[arg(long, default_value_t = 5)]
    dims: usize,
    #[arg(long, default_value_t = DEFAULT_BUFFER_LEN)]
    buffer: usize,
    /// Initial ERX regularization.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Skip the random projection.
    #[arg(long)]
    no_srp: bool,
    /// Equal-weight batched statistics instead of moving averages.
    #[arg(long)]
    incremental: bool,
    /// RX-BIL discard fraction.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// LBL-AD principal components.
    #[arg(long, default_value_t = 3)]
    components: usize,
    /// Keep flagged pixels in the LBL-AD background update.
    #[arg(long)]
    no_adaptive_exclude: bool,
}

impl DetectorFlags {
    fn spec(&self, kind: DetectorKind) -> DetectorSpec {
        let mut spec = DetectorSpec::new(kind);
        spec.erx.alpha = self.alpha;
        spec.erx.dims = self.dims;
        spec.erx.buffer_len = self.buffer;
        spec.erx.epsilon = self.epsilon;
        spec.erx.no_srp = self.no_srp;
        spec.erx.use_incremental = self.incremental;
        spec.eta = self.eta;
        spec.components = self.components;
        spec.adaptive_exclude = !self.no_adaptive_exclude;
        spec
    }
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated detector names, or `all`.
    #[arg(long, default_value = "erx")]
    detector: String,
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[command(flatten)]
    flags: DetectorFlags,
    /// Number of seeds, starting at --seed-base.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// forward, flipped or both.
    #[arg(long, default_value = "forward")]
    directions: String,
    /// Write one ROC CSV per run.
    #[arg(long)]
    roc: bool,
    /// Write per-pixel scores of each run as a one-band cube.
    #[arg(long)]
    heatmap: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "all")]
    detector: String,
    #[command(flatten)]
    flags: DetectorFlags,
    #[arg(long, value_delimiter = ',')]
    bands: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pixels: Option<Vec<usize>>,
    /// Width used by the band sweep.
    #[arg(long, default_value_t = 500)]
    fixed_pixels: usize,
    /// Band count used by the pixel sweep.
    #[arg(long, default_value_t = 50)]
    fixed_bands: usize,
    #[arg(long, default_value_t = 3000)]
    lines: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// bands, pixels or both.
    #[arg(long, default_value = "both")]
    sweep: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[command(flatten)]
    flags: DetectorFlags,
    /// dims, alpha or both.
    #[arg(long, default_value = "both")]
    sweep: String,
    #[arg(long, value_delimiter = ',')]
    dims_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    alpha_list: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, default_value = "forward")]
    directions: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// One-band score cube in stream order, as written by `run --heatmap`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Warmup flags written next to the heatmap.
    #[arg(long)]
    warmup: Option<PathBuf>,
    /// Direction the scores were produced in.
    #[arg(long, default_value = "forward")]
    direction: String,
    #[arg(long, default_value_t = DEFAULT_BUFFER_LEN)]
    buffer: usize,
    /// Write the ROC samples to this CSV.
    #[arg(long)]
    roc: Option<PathBuf>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn parse_detectors(s: &str) -> Result<Vec<DetectorKind>> {
    if s == "all" {
        return Ok(DetectorKind::ALL.to_vec());
    }
    s.split(',').map(|d| d.trim().parse()).collect()
}

fn seed_list(base: u64, count: u64) -> Result<Vec<u64>> {
    if count == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    Ok((base..base + count).collect())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    ensure_dir(&a.out)?;
    let cube_path = a.out.join(format!("{}.hadc", a.name));
    if a.random {
        let cube = gen_random_cube(a.pixels, a.lines, a.bands, a.seed)?;
        write_cube(&cube_path, &cube)?;
        println!("wrote {}", cube_path.display());
        return Ok(());
    }
    let mut spec = SyntheticSpec::with_shape(a.lines, a.pixels, a.bands);
    spec.seed = a.seed;
    if let Some(v) = a.transition_width {
        spec.transition_width = v;
    }
    if let Some(v) = a.target_columns {
        spec.target_columns = v;
    }
    if let Some(v) = a.target_base_size {
        spec.target_base_size = v;
    }
    if let Some(v) = a.mixing_fractions {
        spec.mixing_fractions = v;
    }
    if let Some(v) = a.noise_sigma {
        spec.noise_sigma = v;
    }
    if let Some(v) = a.brightness_sigma {
        spec.brightness_sigma = v;
    }
    if let Some(v) = a.illumination_amplitude {
        spec.illumination_amplitude = v;
    }
    if let Some(v) = a.illumination_period {
        spec.illumination_period = v;
    }
    let (mut cube, mask) = gen_synthetic(&spec)?;
    cube.name = a.name.clone();
    let mask_path = a.out.join(format!("{}_gt.hadc", a.name));
    write_cube(&cube_path, &cube)?;
    write_mask(&mask_path, &mask)?;
    println!(
        "wrote {} and {} ({} anomalous pixels)",
        cube_path.display(),
        mask_path.display(),
        mask.anomaly_count()
    );
    Ok(())
}

fn print_record(r: &RunRecord) {
    println!(
        "{:<14} {:<8} seed={:<3} auc={:.4} auc_td={:.4} auc_bs={:.4} lps={:.1}",
        r.detector, r.direction, r.seed, r.auc, r.auc_td, r.auc_bs, r.lps
    );
}

fn write_heatmap(out: &Path, stem: &str, lines: &[ScoredLine], kind: ScoreKind) -> Result<()> {
    write_cube(out.join(format!("{stem}.hadc")), &heatmap_cube(lines, kind, stem)?)?;
    write_mask(out.join(format!("{stem}_warmup.hadc")), &warmup_mask(lines)?)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let kinds = parse_detectors(&a.detector)?;
    let directions = parse_directions(&a.directions)?;
    let seeds = seed_list(a.seed_base, a.seeds)?;
    let cube = read_cube(&a.cube)?;
    let mask = a.mask.as_ref().map(read_mask).transpose()?;
    ensure_dir(&a.out)?;
    let mut records = Vec::new();
    for kind in kinds {
        let spec = a.flags.spec(kind);
        let runs = run_repeated(kind.as_str(), &spec, &cube, mask.as_ref(), &seeds, &directions)?;
        for run in runs {
            let stem = format!("{}_{}_{}", run.label, run.direction, run.seed);
            if a.roc {
                if let Some(roc) = &run.roc {
                    write_roc_csv(a.out.join(format!("roc_{stem}.csv")), roc)?;
                }
            }
            if a.heatmap {
                write_heatmap(&a.out, &format!("heatmap_{stem}"), &run.output.lines, run.output.score_kind)?;
            }
            print_record(&run.record);
            records.push(run.record);
        }
    }
    let path = a.out.join("results.csv");
    write_results_csv(&path, &records, &aggregate(&records))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let defaults = BenchConfig::default();
    let (with_bands, with_pixels) = match a.sweep.as_str() {
        "both" => (true, true),
        "bands" => (true, false),
        "pixels" => (false, true),
        other => return Err(Error::Config(format!("unknown sweep '{other}'"))),
    };
    let cfg = BenchConfig {
        detectors: parse_detectors(&a.detector)?
            .into_iter()
            .map(|k| a.flags.spec(k))
            .collect(),
        band_sweep: if with_bands {
            a.bands.unwrap_or(defaults.band_sweep)
        } else {
            Vec::new()
        },
        pixel_sweep: if with_pixels {
            a.pixels.unwrap_or(defaults.pixel_sweep)
        } else {
            Vec::new()
        },
        fixed_pixels: a.fixed_pixels,
        fixed_bands: a.fixed_bands,
        lines: a.lines,
        repeats: a.repeats,
        seed: a.seed,
    };
    ensure_dir(&a.out)?;
    let reports = run_bench(&cfg, |r| {
        println!(
            "{:<12} pixels={:<5} bands={:<4} lps={:.1}±{:.1}",
            r.detector, r.pixels, r.bands, r.lps_mean, r.lps_sd
        )
    })?;
    let path = a.out.join("throughput.csv");
    write_throughput_csv(&path, &reports)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let base = a.flags.spec(DetectorKind::Erx);
    let mut settings = Vec::new();
    let (dims, alphas) = match a.sweep.as_str() {
        "both" => (true, true),
        "dims" => (true, false),
        "alpha" => (false, true),
        other => return Err(Error::Config(format!("unknown sweep '{other}'"))),
    };
    if dims {
        settings.extend(dims_settings(&base, &a.dims_list.unwrap_or_else(|| DEFAULT_DIMS_SWEEP.to_vec())));
    }
    if alphas {
        settings.extend(alpha_settings(&base, &a.alpha_list.unwrap_or_else(|| DEFAULT_ALPHA_SWEEP.to_vec())));
    }
    let cube = read_cube(&a.cube)?;
    let mask = read_mask(&a.mask)?;
    let seeds = seed_list(a.seed_base, a.seeds)?;
    let directions = parse_directions(&a.directions)?;
    ensure_dir(&a.out)?;
    let records = run_ablation(&settings, &cube, &mask, &seeds, &directions)?;
    let aggregates = aggregate(&records);
    for g in &aggregates {
        println!(
            "{:<18} {:<8} auc={:.4}±{:.4} lps={:.1}±{:.1}",
            g.detector, g.direction, g.auc.0, g.auc.1, g.lps.0, g.lps.1
        );
    }
    let path = a.out.join("ablation.csv");
    write_results_csv(&path, &records, &aggregates)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let scores = read_cube(&a.scores)?;
    if scores.bands() != 1 {
        return Err(Error::Data(format!("score cube has {} bands, expected 1", scores.bands())));
    }
    let mask = read_mask(&a.mask)?;
    let warmup = a.warmup.as_ref().map(read_mask).transpose()?;
    let cfg = StreamConfig::new(a.direction.parse::<Direction>()?, a.buffer);
    cfg.validate(scores.lines())?;
    let lines: Vec<ScoredLine> = (0..scores.lines())
        .map(|t| {
            let raw = scores.line_slice(t).iter().map(|&v| f64::from(v)).collect();
            let flagged = warmup.as_ref().is_some_and(|w| w.get(t, 0) == 1);
            ScoredLine::from_raw(t, raw, flagged)
        })
        .collect();
    let roc = evaluate_run(&lines, &mask, &cfg, ScoreKind::Raw)?;
    println!("auc={:.6} auc_td={:.6} auc_bs={:.6}", roc.auc, roc.auc_td, roc.auc_bs);
    if let Some(path) = a.roc {
        write_roc_csv(&path, &roc)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
