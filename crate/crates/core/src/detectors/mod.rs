//! Detector interface plus the four comparison detectors.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::cube::{stream_cube, DataCube, ScoredLine, SpectralLine, StreamConfig};
use crate::erx::{Erx, ErxConfig};
use crate::error::{Error, Result};

mod lblad;
mod rtckrxd;
mod rx_baseline;
mod rxbil;

pub use lblad::{LblAd, LblAdConfig, EXCLUDE_THRESHOLD, EIGEN_FLOOR};
pub use rtckrxd::RtCkRxd;
pub use rx_baseline::RxBaseline;
pub use rxbil::{retained_pixels, RxBil, MAX_CHUNK};

/// Which score vector a detector's output should be evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreKind {
    Raw,
    Normalized,
}

/// A streaming detector. Lines are pushed in emission order; each call
/// returns whatever lines became ready, and `finish` flushes the rest.
/// Over a whole stream every input line comes back exactly once.
pub trait Detector: Send {
    fn name(&self) -> &'static str;

    fn push(&mut self, line: &SpectralLine<'_>) -> Result<Vec<ScoredLine>>;

    fn finish(&mut self) -> Result<Vec<ScoredLine>> {
        Ok(Vec::new())
    }

    fn score_kind(&self) -> ScoreKind {
        ScoreKind::Raw
    }
}

/// Regularization shared by the comparison detectors.
pub const BASELINE_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Erx,
    RxBaseline,
    RtCkRxd,
    RxBil,
    LblAd,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Erx,
        DetectorKind::RxBaseline,
        DetectorKind::RtCkRxd,
        DetectorKind::RxBil,
        DetectorKind::LblAd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Erx => "erx",
            DetectorKind::RxBaseline => "rx-baseline",
            DetectorKind::RtCkRxd => "rt-ck-rxd",
            DetectorKind::RxBil => "rx-bil",
            DetectorKind::LblAd => "lbl-ad",
        }
    }

    /// Whether repeated seeds change the output.
    pub fn is_randomized(self) -> bool {
        matches!(self, DetectorKind::Erx | DetectorKind::RxBil)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown detector '{s}'")))
    }
}

/// Everything needed to build any detector for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub erx: ErxConfig,
    /// RX-BIL discard fraction.
    pub eta: f64,
    /// LBL-AD principal components.
    pub components: usize,
    pub adaptive_exclude: bool,
}

impl DetectorSpec {
    pub fn new(kind: DetectorKind) -> Self {
        Self {
            kind,
            erx: ErxConfig::default(),
            eta: 0.5,
            components: 3,
            adaptive_exclude: true,
        }
    }

    pub fn buffer_len(&self) -> usize {
        self.erx.buffer_len
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.erx.seed = seed;
        self
    }

    pub fn build(&self, bands: usize) -> Result<Box<dyn Detector>> {
        let buffer = self.erx.buffer_len;
        Ok(match self.kind {
            DetectorKind::Erx => Box::new(Erx::new(self.erx.clone(), bands)?),
            DetectorKind::RxBaseline => Box::new(RxBaseline::new(buffer, bands)?),
            DetectorKind::RtCkRxd => Box::new(RtCkRxd::new(buffer, bands)?),
            DetectorKind::RxBil => Box::new(RxBil::new(bands, self.eta, self.erx.seed, buffer)?),
            DetectorKind::LblAd => Box::new(LblAd::new(
                LblAdConfig {
                    components: self.components,
                    buffer_len: buffer,
                    adaptive_exclude: self.adaptive_exclude,
                },
                bands,
            )?),
        })
    }

    /// Compact `key=value` description for result files.
    pub fn snapshot(&self) -> String {
        let e = &self.erx;
        match self.kind {
            DetectorKind::Erx => format!(
                "dims={};alpha={};buffer={};epsilon={};seed={};no_srp={};incremental={}",
                e.dims, e.alpha, e.buffer_len, e.epsilon, e.seed, e.no_srp, e.use_incremental
            ),
            DetectorKind::RxBaseline | DetectorKind::RtCkRxd => {
                format!("buffer={};epsilon={BASELINE_EPSILON}", e.buffer_len)
            }
            DetectorKind::RxBil => format!(
                "buffer={};eta={};seed={};chunk={MAX_CHUNK}",
                e.buffer_len, self.eta, e.seed
            ),
            DetectorKind::LblAd => format!(
                "buffer={};components={};adaptive_exclude={}",
                e.buffer_len, self.components, self.adaptive_exclude
            ),
        }
    }
}

/// Scored stream plus the wall time spent inside the detector.
#[derive(Clone, Debug)]
pub struct RunOutput {
    /// One entry per input line, ordered by line index.
    pub lines: Vec<ScoredLine>,
    pub elapsed: Duration,
    pub score_kind: ScoreKind,
}

impl RunOutput {
    pub fn lines_per_second(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs > 0.0 {
            self.lines.len() as f64 / secs
        } else {
            f64::INFINITY
        }
    }
}

/// Feeds a whole cube through a detector. Timing runs from the first line fed
/// to the last scored line returned.
pub fn run_detector(
    detector: &mut dyn Detector,
    cube: &DataCube,
    cfg: &StreamConfig,
) -> Result<RunOutput> {
    let stream = stream_cube(cube, cfg)?;
    let mut lines = Vec::with_capacity(cube.lines());
    let start = Instant::now();
    for line in stream {
        lines.extend(detector.push(&line)?);
    }
    lines.extend(detector.finish()?);
    let elapsed = start.elapsed();
    lines.sort_by_key(|l| l.index);
    if lines.len() != cube.lines() || lines.iter().enumerate().any(|(i, l)| l.index != i) {
        return Err(Error::Data(format!(
            "{} emitted {} lines for a {}-line stream",
            detector.name(),
            lines.len(),
            cube.lines()
        )));
    }
    Ok(RunOutput {
        lines,
        elapsed,
        score_kind: detector.score_kind(),
    })
}

/// Copies a line's pixels into a row-major `f64` buffer.
pub(crate) fn widen(line: &SpectralLine<'_>, out: &mut Vec<f64>) {
    out.clear();
    out.extend(line.as_slice().iter().map(|&v| f64::from(v)));
}

pub(crate) fn check_bands(line: &SpectralLine<'_>, bands: usize) -> Result<()> {
    if line.num_bands() != bands {
        return Err(Error::dim(format!(
            "line has {} bands, detector was built for {bands}",
            line.num_bands()
        )));
    }
    Ok(())
}
