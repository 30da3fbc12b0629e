use ndarray::Array2;

use super::{check_bands, widen, Detector, BASELINE_EPSILON};
use crate::cube::{ScoredLine, SpectralLine};
use crate::error::{Error, Result};
use crate::erx::MAX_EPSILON;
use crate::linalg::{cholesky_lower, rank1_update_in_place, regularized_cholesky, symmetrize};

/// Real-time causal RX with pixel-wise updates of the inverse covariance.
///
/// Seeded from the first `buffer_len` lines; afterwards every pixel is scored
/// against the current mean and inverse covariance and then folded in:
///
/// ```text
/// n  <- n + 1
/// mu <- mu + (x - mu) / n
/// K  <- (n-1)/n K + 1/n (x - mu)(x - mu)^T      (new mu)
/// ```
///
/// with `K^-1` carried through a rank-one Woodbury update of `n/(n-1) K^-1`.
#[derive(Clone, Debug)]
pub struct RtCkRxd {
    buffer_len: usize,
    bands: usize,
    pixels: usize,
    seed_buffer: Vec<f64>,
    mean: Vec<f64>,
    inv: Array2<f64>,
    count: u64,
    seeded: bool,
    seen: usize,
    skipped: usize,
    line_buf: Vec<f64>,
    dev: Vec<f64>,
    u: Vec<f64>,
    scratch: Vec<f64>,
}

impl RtCkRxd {
    pub fn new(buffer_len: usize, bands: usize) -> Result<Self> {
        if buffer_len == 0 {
            return Err(Error::config("buffer length must be at least 1"));
        }
        if bands == 0 {
            return Err(Error::config("cube must have at least one band"));
        }
        Ok(Self {
            buffer_len,
            bands,
            pixels: 0,
            seed_buffer: Vec::new(),
            mean: vec![0.0; bands],
            inv: Array2::zeros((bands, bands)),
            count: 0,
            seeded: false,
            seen: 0,
            skipped: 0,
            line_buf: Vec::new(),
            dev: vec![0.0; bands],
            u: vec![0.0; bands],
            scratch: vec![0.0; bands],
        })
    }

    /// Pixels whose update was skipped for numerical instability.
    pub fn skipped_updates(&self) -> usize {
        self.skipped
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn inverse(&self) -> &Array2<f64> {
        &self.inv
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Seeds mean and inverse covariance (population, `1/n`) from a block of
    /// row-major pixels.
    pub fn seed_from_pixels(&mut self, pixels: &[f64]) -> Result<()> {
        let b = self.bands;
        let n = pixels.len() / b;
        if n == 0 {
            return Err(Error::Data("cannot seed from an empty buffer".into()));
        }
        let mut mean = vec![0.0; b];
        for px in pixels.chunks_exact(b) {
            for j in 0..b {
                mean[j] += px[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = Array2::<f64>::zeros((b, b));
        for px in pixels.chunks_exact(b) {
            for i in 0..b {
                let di = px[i] - mean[i];
                for j in i..b {
                    cov[[i, j]] += di * (px[j] - mean[j]);
                }
            }
        }
        cov /= n as f64;
        symmetrize_upper(&mut cov);
        let l = match cholesky_lower(cov.view()) {
            Ok(l) => l,
            Err(_) => regularized_cholesky(cov.view(), BASELINE_EPSILON, MAX_EPSILON)?.0,
        };
        self.inv = l.inverse_of_product()?;
        self.mean = mean;
        self.count = n as u64;
        self.seeded = true;
        Ok(())
    }

    fn quad(&self, dev: &[f64]) -> f64 {
        let b = self.bands;
        let inv = self.inv.as_slice().expect("standard layout");
        let mut q = 0.0;
        for i in 0..b {
            let row = &inv[i * b..(i + 1) * b];
            let r: f64 = row.iter().zip(dev).map(|(a, d)| a * d).sum();
            q += dev[i] * r;
        }
        q
    }

    fn score_only(&mut self, pixels: &[f64]) -> Vec<f64> {
        let b = self.bands;
        let mut raw = Vec::with_capacity(pixels.len() / b);
        let mut dev = std::mem::take(&mut self.dev);
        for px in pixels.chunks_exact(b) {
            for j in 0..b {
                dev[j] = px[j] - self.mean[j];
            }
            raw.push(self.quad(&dev).max(0.0).sqrt());
        }
        self.dev = dev;
        raw
    }

    /// Scores then folds in each pixel, in order.
    pub fn score_and_update(&mut self, pixels: &[f64]) -> Vec<f64> {
        let b = self.bands;
        let mut raw = Vec::with_capacity(pixels.len() / b);
        let mut dev = std::mem::take(&mut self.dev);
        for px in pixels.chunks_exact(b) {
            for j in 0..b {
                dev[j] = px[j] - self.mean[j];
            }
            raw.push(self.quad(&dev).max(0.0).sqrt());

            let n = (self.count + 1) as f64;
            let scale = n / (n - 1.0);
            let inv_sqrt_n = 1.0 / n.sqrt();
            for j in 0..b {
                // x - mu_new = (x - mu_old) (n-1)/n
                self.u[j] = dev[j] * (n - 1.0) / n * inv_sqrt_n;
            }
            self.inv.mapv_inplace(|v| v * scale);
            match rank1_update_in_place(&mut self.inv, &self.u, 1.0, &mut self.scratch) {
                Ok(()) => {
                    for j in 0..b {
                        self.mean[j] += dev[j] / n;
                    }
                    self.count += 1;
                }
                Err(_) => {
                    // The update is rejected before touching the matrix.
                    self.inv.mapv_inplace(|v| v / scale);
                    self.skipped += 1;
                }
            }
        }
        self.dev = dev;
        raw
    }
}

fn symmetrize_upper(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            m[[i, j]] = m[[j, i]];
        }
    }
    symmetrize(m);
}

impl Detector for RtCkRxd {
    fn name(&self) -> &'static str {
        "rt-ck-rxd"
    }

    fn push(&mut self, line: &SpectralLine<'_>) -> Result<Vec<ScoredLine>> {
        check_bands(line, self.bands)?;
        if self.seen == 0 {
            self.pixels = line.num_pixels();
        } else if line.num_pixels() != self.pixels {
            return Err(Error::dim("pixel count changed mid-stream"));
        }
        let t = self.seen;
        self.seen += 1;
        let mut buf = std::mem::take(&mut self.line_buf);
        widen(line, &mut buf);
        let out = if !self.seeded {
            self.seed_buffer.extend_from_slice(&buf);
            if t + 1 == self.buffer_len {
                let seed = std::mem::take(&mut self.seed_buffer);
                self.seed_from_pixels(&seed)?;
                ScoredLine::from_raw(line.index, self.score_only(&buf), true)
            } else {
                ScoredLine::unscored(line.index, self.pixels)
            }
        } else {
            let raw = self.score_and_update(&buf);
            ScoredLine::from_raw(line.index, raw, t < self.buffer_len)
        };
        self.line_buf = buf;
        Ok(vec![out])
    }
}
