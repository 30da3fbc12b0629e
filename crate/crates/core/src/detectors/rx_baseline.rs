use std::collections::VecDeque;

use ndarray::Array2;

use super::{check_bands, Detector, BASELINE_EPSILON};
use crate::cube::{ScoredLine, SpectralLine};
use crate::error::{Error, Result};
use crate::erx::MAX_EPSILON;
use crate::linalg::{cholesky_lower, regularized_cholesky, LowerTriangular};

/// Rolling-buffer RX: mean and covariance over every pixel of the last
/// `buffer_len` lines, applied to the centre line of the buffer.
///
/// Buffer sums are maintained incrementally (add the new line, subtract the
/// evicted one) around a shift point, and rebuilt from scratch every
/// `buffer_len` lines to bound round-off drift.
#[derive(Clone, Debug)]
pub struct RxBaseline {
    capacity: usize,
    bands: usize,
    pixels: usize,
    buffer: VecDeque<(usize, Vec<f32>)>,
    shift: Vec<f64>,
    sum: Vec<f64>,
    /// Upper triangle of the shifted outer-product sum.
    outer: Vec<f64>,
    pushes_since_rebuild: usize,
    next_emit: usize,
    seen: usize,
    dev: Vec<f64>,
    solved: Vec<f64>,
}

impl RxBaseline {
    pub fn new(buffer_len: usize, bands: usize) -> Result<Self> {
        if buffer_len == 0 {
            return Err(Error::config("buffer length must be at least 1"));
        }
        if bands == 0 {
            return Err(Error::config("cube must have at least one band"));
        }
        Ok(Self {
            capacity: buffer_len,
            bands,
            pixels: 0,
            buffer: VecDeque::with_capacity(buffer_len),
            shift: vec![0.0; bands],
            sum: vec![0.0; bands],
            outer: vec![0.0; bands * bands],
            pushes_since_rebuild: 0,
            next_emit: 0,
            seen: 0,
            dev: vec![0.0; bands],
            solved: vec![0.0; bands],
        })
    }

    /// Offset of the scored line within a full buffer.
    pub fn centre(&self) -> usize {
        self.capacity / 2
    }

    fn accumulate(&mut self, slab: &[f32], sign: f64) {
        let b = self.bands;
        for pixel in slab.chunks_exact(b) {
            for j in 0..b {
                self.dev[j] = f64::from(pixel[j]) - self.shift[j];
            }
            for i in 0..b {
                let di = sign * self.dev[i];
                self.sum[i] += di;
                let row = &mut self.outer[i * b..(i + 1) * b];
                for j in i..b {
                    row[j] += di * self.dev[j];
                }
            }
        }
    }

    fn rebuild(&mut self) {
        let b = self.bands;
        let n = (self.buffer.len() * self.pixels) as f64;
        let mut mean = vec![0.0; b];
        for (_, slab) in &self.buffer {
            for pixel in slab.chunks_exact(b) {
                for j in 0..b {
                    mean[j] += f64::from(pixel[j]);
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        self.shift = mean;
        self.sum.iter_mut().for_each(|v| *v = 0.0);
        self.outer.iter_mut().for_each(|v| *v = 0.0);
        let buffer = std::mem::take(&mut self.buffer);
        for (_, slab) in &buffer {
            self.accumulate(slab, 1.0);
        }
        self.buffer = buffer;
        self.pushes_since_rebuild = 0;
    }

    /// Mean and population covariance of the buffered pixels.
    fn statistics(&self) -> (Vec<f64>, Array2<f64>) {
        let b = self.bands;
        let n = (self.buffer.len() * self.pixels) as f64;
        let shifted_mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let mut cov = Array2::<f64>::zeros((b, b));
        for i in 0..b {
            for j in i..b {
                let v = self.outer[i * b + j] / n - shifted_mean[i] * shifted_mean[j];
                cov[[i, j]] = v;
                cov[[j, i]] = v;
            }
        }
        let mean = shifted_mean
            .iter()
            .zip(&self.shift)
            .map(|(m, s)| m + s)
            .collect();
        (mean, cov)
    }

    fn factor(cov: &Array2<f64>) -> Result<LowerTriangular> {
        match cholesky_lower(cov.view()) {
            Ok(l) => Ok(l),
            Err(_) => Ok(regularized_cholesky(cov.view(), BASELINE_EPSILON, MAX_EPSILON)?.0),
        }
    }

    fn score_centre(&mut self) -> Result<ScoredLine> {
        let (mean, cov) = self.statistics();
        let l = Self::factor(&cov)?;
        let (index, slab) = &self.buffer[self.centre()];
        let index = *index;
        let b = self.bands;
        let mut raw = Vec::with_capacity(self.pixels);
        let mut dev = vec![0.0; b];
        for pixel in slab.chunks_exact(b) {
            for j in 0..b {
                dev[j] = f64::from(pixel[j]) - mean[j];
            }
            let q = l.quadratic_form(&dev, &mut self.solved)?;
            raw.push(q.max(0.0).sqrt());
        }
        Ok(ScoredLine::from_raw(index, raw, false))
    }
}

impl Detector for RxBaseline {
    fn name(&self) -> &'static str {
        "rx-baseline"
    }

    fn push(&mut self, line: &SpectralLine<'_>) -> Result<Vec<ScoredLine>> {
        check_bands(line, self.bands)?;
        if self.seen == 0 {
            self.pixels = line.num_pixels();
        } else if line.num_pixels() != self.pixels {
            return Err(Error::dim("pixel count changed mid-stream"));
        }
        self.seen += 1;

        let mut out = Vec::new();
        let slab = line.as_slice().to_vec();
        if self.buffer.len() == self.capacity {
            let (_, old) = self.buffer.pop_front().expect("full buffer");
            self.accumulate(&old, -1.0);
        }
        if self.buffer.is_empty() {
            self.buffer.push_back((line.index, slab));
            self.rebuild();
        } else {
            self.accumulate(&slab, 1.0);
            self.buffer.push_back((line.index, slab));
            self.pushes_since_rebuild += 1;
            if self.pushes_since_rebuild >= self.capacity {
                self.rebuild();
            }
        }

        if self.buffer.len() == self.capacity {
            let scored = self.score_centre()?;
            // Lines that can never be a centre are emitted unscored.
            while self.next_emit < scored.index {
                out.push(ScoredLine::unscored(self.next_emit, self.pixels));
                self.next_emit += 1;
            }
            self.next_emit = scored.index + 1;
            out.push(scored);
        }
        Ok(out)
    }

    fn finish(&mut self) -> Result<Vec<ScoredLine>> {
        let out = (self.next_emit..self.seen)
            .map(|t| ScoredLine::unscored(t, self.pixels))
            .collect();
        self.next_emit = self.seen;
        Ok(out)
    }
}
