//! Exponentially moving RX detector.
//!
//! Each line is projected to a handful of dimensions, scored by Mahalanobis
//! distance against the background mean and covariance accumulated from the
//! *previous* lines, then folded into those statistics with momentum `alpha`.
//! Distances are computed through a Cholesky factor of `K + eps I` and a
//! forward substitution, so no inverse is ever formed.

use ndarray::{Array1, Array2, ArrayView2};

use crate::cube::{ScoredLine, SpectralLine};
use crate::detectors::{Detector, ScoreKind};
use crate::error::{Error, Result};
use crate::linalg::{regularized_cholesky, RunningStats};
use crate::projection::{generate_srp, Projection, DEFAULT_DIMS};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Regularization ceiling when a factorization keeps failing.
pub const MAX_EPSILON: f64 = 1e-1;

#[derive(Clone, Debug, PartialEq)]
pub struct ErxConfig {
    pub dims: usize,
    pub alpha: f64,
    pub buffer_len: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Work on the raw bands instead of a random projection.
    pub no_srp: bool,
    /// Equal-weight (batched Welford) statistics instead of moving averages.
    pub use_incremental: bool,
}

impl Default for ErxConfig {
    fn default() -> Self {
        Self {
            dims: DEFAULT_DIMS,
            alpha: DEFAULT_ALPHA,
            buffer_len: crate::cube::DEFAULT_BUFFER_LEN,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            no_srp: false,
            use_incremental: false,
        }
    }
}

impl ErxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.dims == 0 {
            return Err(Error::config("projected dimensions must be at least 1"));
        }
        Ok(())
    }
}

/// Background model carried from line to line.
#[derive(Clone, Debug)]
pub struct ErxState {
    pub projection: Projection,
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
    /// Lines processed so far.
    pub lines_seen: usize,
    initialized: bool,
    incremental: Option<RunningStats>,
}

impl ErxState {
    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn dims(&self) -> usize {
        self.projection.output_dims()
    }

    /// Pixels folded into the equal-weight statistics (incremental mode only).
    pub fn incremental_count(&self) -> Option<u64> {
        self.incremental.as_ref().map(|s| s.count)
    }

    /// Sets the background directly from a line's statistics.
    pub fn seed_background(&mut self, mean: Array1<f64>, cov: Array2<f64>) {
        self.mean = mean;
        self.cov = cov;
        self.initialized = true;
    }

    /// Moving-average update: `x <- (1 - alpha) x + alpha x_hat`.
    pub fn ema_update(&mut self, mean_hat: &Array1<f64>, cov_hat: &Array2<f64>, alpha: f64) {
        if !self.initialized {
            self.seed_background(mean_hat.clone(), cov_hat.clone());
            return;
        }
        let keep = 1.0 - alpha;
        self.mean.zip_mut_with(mean_hat, |m, &h| *m = keep * *m + alpha * h);
        self.cov.zip_mut_with(cov_hat, |k, &h| *k = keep * *k + alpha * h);
    }

    /// Equal-weight update with every pixel of a projected line.
    fn incremental_update(&mut self, z: ArrayView2<'_, f64>) {
        let stats = self
            .incremental
            .get_or_insert_with(|| RunningStats::new(z.ncols()));
        stats.update_batch(z);
        self.mean.assign(&stats.mean);
        self.cov = stats.covariance();
        self.initialized = true;
    }
}

pub fn erx_init(cfg: &ErxConfig, bands: usize) -> Result<ErxState> {
    cfg.validate()?;
    if bands == 0 {
        return Err(Error::config("cube must have at least one band"));
    }
    let projection = if cfg.no_srp {
        Projection::Identity { bands }
    } else {
        Projection::Sparse(generate_srp(bands, cfg.dims, cfg.seed)?)
    };
    let d = projection.output_dims();
    Ok(ErxState {
        projection,
        mean: Array1::zeros(d),
        cov: Array2::zeros((d, d)),
        lines_seen: 0,
        initialized: false,
        incremental: cfg.use_incremental.then(|| RunningStats::new(d)),
    })
}

/// Column mean and unbiased (`1/(p-1)`) covariance of a projected line.
pub fn line_stats(z: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let p = z.nrows();
    if p < 2 {
        return Err(Error::DegenerateLine(format!(
            "line covariance needs at least 2 pixels, got {p}"
        )));
    }
    let d = z.ncols();
    let mut mean = Array1::<f64>::zeros(d);
    for row in z.rows() {
        mean += &row;
    }
    mean /= p as f64;
    let m = mean.as_slice().expect("fresh array");
    // Upper triangle, row-major.
    let mut acc = vec![0.0; d * d];
    let mut dev = vec![0.0; d];
    for row in z.rows() {
        for ((dj, &x), &mj) in dev.iter_mut().zip(row.iter()).zip(m) {
            *dj = x - mj;
        }
        for i in 0..d {
            let di = dev[i];
            let out = &mut acc[i * d + i..(i + 1) * d];
            for (o, &dj) in out.iter_mut().zip(&dev[i..]) {
                *o += di * dj;
            }
        }
    }
    let denom = (p - 1) as f64;
    let mut cov = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in i..d {
            let v = acc[i * d + j] / denom;
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    Ok((mean, cov))
}

/// Streaming ERX detector.
#[derive(Clone, Debug)]
pub struct Erx {
    cfg: ErxConfig,
    state: ErxState,
    projected: Vec<f64>,
    dev: Vec<f64>,
    solved: Vec<f64>,
    /// Regularization used for the most recent line.
    last_epsilon: f64,
}

impl Erx {
    pub fn new(cfg: ErxConfig, bands: usize) -> Result<Self> {
        let state = erx_init(&cfg, bands)?;
        let d = state.dims();
        let eps = cfg.epsilon;
        Ok(Self {
            cfg,
            state,
            projected: Vec::new(),
            dev: vec![0.0; d],
            solved: vec![0.0; d],
            last_epsilon: eps,
        })
    }

    pub fn config(&self) -> &ErxConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ErxState {
        &self.state
    }

    pub fn last_epsilon(&self) -> f64 {
        self.last_epsilon
    }

    /// Scores one line against the background from earlier lines, then
    /// updates the background with it.
    pub fn score_line(&mut self, line: &SpectralLine<'_>) -> Result<ScoredLine> {
        let p = line.num_pixels();
        let d = self.state.dims();
        if line.num_bands() != self.state.projection.input_dims() {
            return Err(Error::dim(format!(
                "line has {} bands, detector was built for {}",
                line.num_bands(),
                self.state.projection.input_dims()
            )));
        }
        let mut projected = std::mem::take(&mut self.projected);
        projected.resize(p * d, 0.0);
        let result = self.score_projected(line.index, p, &mut projected, line.as_slice());
        self.projected = projected;
        result
    }

    fn score_projected(
        &mut self,
        index: usize,
        p: usize,
        projected: &mut [f64],
        raw_line: &[f32],
    ) -> Result<ScoredLine> {
        let d = self.state.dims();
        self.state.projection.project_into(raw_line, projected)?;
        let z = ArrayView2::from_shape((p, d), &*projected).expect("p*d buffer");

        if !self.state.is_initialized() {
            // The first line is its own background.
            if self.cfg.use_incremental {
                self.state.incremental_update(z);
            } else {
                let (mu, k) = line_stats(z)?;
                self.state.seed_background(mu, k);
            }
            let raw = self.distances(z)?;
            return Ok(self.finish_line(index, raw));
        }

        let raw = self.distances(z)?;
        if self.cfg.use_incremental {
            self.state.incremental_update(z);
        } else {
            let (mu_hat, k_hat) = line_stats(z)?;
            self.state.ema_update(&mu_hat, &k_hat, self.cfg.alpha);
        }
        Ok(self.finish_line(index, raw))
    }

    fn finish_line(&mut self, index: usize, raw: Vec<f64>) -> ScoredLine {
        let warmup = self.state.lines_seen < self.cfg.buffer_len;
        self.state.lines_seen += 1;
        ScoredLine::from_raw(index, raw, warmup)
    }

    fn distances(&mut self, z: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let (l, eps) = regularized_cholesky(self.state.cov.view(), self.cfg.epsilon, MAX_EPSILON)?;
        self.last_epsilon = eps;
        let d = z.ncols();
        let mean = self.state.mean.as_slice().expect("mean is contiguous");
        let zs = z.as_slice().expect("projected line is contiguous");
        let mut out = Vec::with_capacity(z.nrows());
        for pixel in zs.chunks_exact(d) {
            for j in 0..d {
                self.dev[j] = pixel[j] - mean[j];
            }
            let q = l.quadratic_form(&self.dev, &mut self.solved)?;
            out.push(q.sqrt());
        }
        Ok(out)
    }
}

impl Detector for Erx {
    fn name(&self) -> &'static str {
        "erx"
    }

    fn push(&mut self, line: &SpectralLine<'_>) -> Result<Vec<ScoredLine>> {
        Ok(vec![self.score_line(line)?])
    }

    fn score_kind(&self) -> ScoreKind {
        ScoreKind::Normalized
    }
}
