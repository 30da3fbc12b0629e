use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_bands, widen, Detector, BASELINE_EPSILON};
use crate::cube::{ScoredLine, SpectralLine};
use crate::error::{Error, Result};
use crate::erx::MAX_EPSILON;
use crate::linalg::{block_update_in_place, cholesky_lower, regularized_cholesky, symmetrize};

/// Largest block folded into the inverse in one Woodbury step.
pub const MAX_CHUNK: usize = 32;

/// Pixels of line `line_index` kept for the background update, sorted.
/// `ceil(p * (1 - eta))` pixels are drawn without replacement from a stream
/// of the seeded generator dedicated to that line.
pub fn retained_pixels(seed: u64, line_index: usize, pixels: usize, eta: f64) -> Vec<usize> {
    let keep = ((pixels as f64) * (1.0 - eta)).ceil().max(0.0) as usize;
    let keep = keep.min(pixels);
    if keep == pixels {
        return (0..pixels).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(line_index as u64);
    let mut idx = rand::seq::index::sample(&mut rng, pixels, keep).into_vec();
    idx.sort_unstable();
    idx
}

/// Line-wise RX on the correlation matrix with block Woodbury updates and
/// random pixel discard.
///
/// The state is the inverse of the un-normalized sum `S = sum x x^T` and the
/// pixel count `n`, so `R^-1 = n S^-1` and `delta = sqrt(n x^T S^-1 x)`.
#[derive(Clone, Debug)]
pub struct RxBil {
    bands: usize,
    pixels: usize,
    eta: f64,
    seed: u64,
    buffer_len: usize,
    sum_inv: Array2<f64>,
    count: u64,
    initialized: bool,
    seen: usize,
    skipped: usize,
    line_buf: Vec<f64>,
}

impl RxBil {
    pub fn new(bands: usize, eta: f64, seed: u64, buffer_len: usize) -> Result<Self> {
        if bands == 0 {
            return Err(Error::config("cube must have at least one band"));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::config(format!("discard fraction must be in [0, 1], got {eta}")));
        }
        Ok(Self {
            bands,
            pixels: 0,
            eta,
            seed,
            buffer_len,
            sum_inv: Array2::zeros((bands, bands)),
            count: 0,
            initialized: false,
            seen: 0,
            skipped: 0,
            line_buf: Vec::new(),
        })
    }

    /// Current inverse correlation `R^-1 = n S^-1`.
    pub fn inverse_correlation(&self) -> Array2<f64> {
        &self.sum_inv * self.count as f64
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn skipped_pixels(&self) -> usize {
        self.skipped
    }

    /// Initializes from the correlation `(1/p) sum x x^T` of one line,
    /// regularized with `eps I` only when it is not positive definite.
    pub fn init_from_line(&mut self, x: ArrayView2<'_, f64>) -> Result<()> {
        let p = x.nrows();
        if p == 0 {
            return Err(Error::Data("cannot initialize from an empty line".into()));
        }
        let mut r = x.t().dot(&x);
        r /= p as f64;
        symmetrize(&mut r);
        let l = match cholesky_lower(r.view()) {
            Ok(l) => l,
            Err(_) => regularized_cholesky(r.view(), BASELINE_EPSILON, MAX_EPSILON)?.0,
        };
        self.sum_inv = l.inverse_of_product()? / p as f64;
        self.count = p as u64;
        self.initialized = true;
        Ok(())
    }

    pub fn score(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let n = self.count as f64;
        let b = self.bands;
        let inv = self.sum_inv.as_slice().expect("standard layout");
        x.rows()
            .into_iter()
            .map(|row| {
                let row = row.as_slice().expect("row-major line");
                let mut q = 0.0;
                for i in 0..b {
                    let r: f64 = inv[i * b..(i + 1) * b]
                        .iter()
                        .zip(row)
                        .map(|(a, v)| a * v)
                        .sum();
                    q += row[i] * r;
                }
                (n * q).max(0.0).sqrt()
            })
            .collect()
    }

    /// Folds the selected rows into the inverse in chunks of at most
    /// [`MAX_CHUNK`], halving a chunk whose inner system is singular.
    pub fn update(&mut self, x: ArrayView2<'_, f64>, rows: &[usize]) {
        let mut start = 0;
        while start < rows.len() {
            let mut size = MAX_CHUNK.min(rows.len() - start);
            loop {
                let block = x.select(ndarray::Axis(0), &rows[start..start + size]);
                // A failed update leaves the inverse untouched.
                match block_update_in_place(&mut self.sum_inv, block.view()) {
                    Ok(()) => {
                        self.count += size as u64;
                        start += size;
                        break;
                    }
                    Err(_) if size > 1 => size /= 2,
                    Err(_) => {
                        self.skipped += 1;
                        start += 1;
                        break;
                    }
                }
            }
        }
    }
}

impl Detector for RxBil {
    fn name(&self) -> &'static str {
        "rx-bil"
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
        let x = ArrayView2::from_shape((self.pixels, self.bands), &buf).expect("p*b buffer");
        let raw = if !self.initialized {
            self.init_from_line(x)?;
            self.score(x)
        } else {
            let raw = self.score(x);
            let rows = retained_pixels(self.seed, line.index, self.pixels, self.eta);
            self.update(x, &rows);
            raw
        };
        self.line_buf = buf;
        Ok(vec![ScoredLine::from_raw(line.index, raw, t < self.buffer_len)])
    }
}
