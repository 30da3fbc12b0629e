//! Sparse random projection of spectral lines.
//!
//! Weights follow the very sparse law with sparsity `s = sqrt(b)`: each entry
//! is `+sqrt(s/d)` or `-sqrt(s/d)` with probability `1/(2s)` each and zero
//! otherwise. Matrices are drawn from a `ChaCha8Rng` seeded with the run seed,
//! so a seed fully determines the projection on every platform.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::SpectralLine;
use crate::error::{Error, Result};

/// Projected dimensions used unless configured otherwise.
pub const DEFAULT_DIMS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct SrpMatrix {
    weights: Array2<f64>,
    /// Non-zero entries as `(band, dim, value)`, band-major.
    active: Vec<(usize, usize, f64)>,
    seed: u64,
}

impl SrpMatrix {
    /// Builds a projection from explicit weights (mainly for tests).
    pub fn from_weights(weights: Array2<f64>, seed: u64) -> Self {
        let active = weights
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v))
            .collect();
        Self {
            weights,
            active,
            seed,
        }
    }

    pub fn bands(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dims(&self) -> usize {
        self.weights.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn sparsity(&self) -> f64 {
        (self.bands() as f64).sqrt()
    }

    /// Magnitude of every non-zero weight.
    pub fn magnitude(&self) -> f64 {
        (self.sparsity() / self.dims() as f64).sqrt()
    }

    pub fn nonzero_count(&self) -> usize {
        self.active.len()
    }
}

/// Draws a `b x d` sparse random projection matrix.
pub fn generate_srp(bands: usize, dims: usize, seed: u64) -> Result<SrpMatrix> {
    if bands == 0 || dims == 0 {
        return Err(Error::config(format!(
            "projection needs b >= 1 and d >= 1, got b={bands}, d={dims}"
        )));
    }
    let s = (bands as f64).sqrt();
    let value = (s / dims as f64).sqrt();
    let p_half = 1.0 / (2.0 * s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Array2::<f64>::zeros((bands, dims));
    for w in weights.iter_mut() {
        let u: f64 = rng.random();
        *w = if u < p_half {
            value
        } else if u < 2.0 * p_half {
            -value
        } else {
            0.0
        };
    }
    Ok(SrpMatrix::from_weights(weights, seed))
}

/// How a detector maps raw bands to its working dimensions.
#[derive(Clone, Debug, PartialEq)]
pub enum Projection {
    Sparse(SrpMatrix),
    /// No reduction: the working space is the raw bands.
    Identity { bands: usize },
}

impl Projection {
    pub fn input_dims(&self) -> usize {
        match self {
            Projection::Sparse(w) => w.bands(),
            Projection::Identity { bands } => *bands,
        }
    }

    pub fn output_dims(&self) -> usize {
        match self {
            Projection::Sparse(w) => w.dims(),
            Projection::Identity { bands } => *bands,
        }
    }

    /// Projects a row-major `p x b` slab into a row-major `p x d` buffer.
    pub fn project_into(&self, line: &[f32], out: &mut [f64]) -> Result<()> {
        let b = self.input_dims();
        let d = self.output_dims();
        if !line.len().is_multiple_of(b) || out.len() != line.len() / b * d {
            return Err(Error::dim(format!(
                "line of {} values does not match projection {b}x{d}",
                line.len()
            )));
        }
        match self {
            Projection::Identity { .. } => {
                for (o, &x) in out.iter_mut().zip(line) {
                    *o = f64::from(x);
                }
            }
            Projection::Sparse(w) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (pixel, z) in line.chunks_exact(b).zip(out.chunks_exact_mut(d)) {
                    for &(band, dim, value) in &w.active {
                        z[dim] += value * f64::from(pixel[band]);
                    }
                }
            }
        }
        Ok(())
    }
}

/// `Z = X W` for one line.
pub fn project_line(line: &SpectralLine<'_>, w: &SrpMatrix) -> Result<Array2<f64>> {
    if line.num_bands() != w.bands() {
        return Err(Error::dim(format!(
            "line has {} bands, projection expects {}",
            line.num_bands(),
            w.bands()
        )));
    }
    let p = line.num_pixels();
    let mut out = vec![0.0; p * w.dims()];
    Projection::Sparse(w.clone()).project_into(line.as_slice(), &mut out)?;
    Ok(Array2::from_shape_vec((p, w.dims()), out).expect("p*d buffer"))
}
