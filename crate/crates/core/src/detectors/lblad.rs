use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{check_bands, widen, Detector};
use crate::cube::{ScoredLine, SpectralLine};
use crate::error::{Error, Result};
use crate::linalg::{power_deflation_eigs, EigenPairs, PowerOptions, RunningStats};

/// Normalized score above which a pixel position is kept out of the next
/// line's background update.
pub const EXCLUDE_THRESHOLD: f64 = 3.0;
/// Floor applied to eigenvalues before dividing by them.
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LblAdConfig {
    pub components: usize,
    pub buffer_len: usize,
    pub adaptive_exclude: bool,
}

impl Default for LblAdConfig {
    fn default() -> Self {
        Self {
            components: 3,
            buffer_len: crate::cube::DEFAULT_BUFFER_LEN,
            adaptive_exclude: true,
        }
    }
}

/// Line-by-line principal-subspace RX.
///
/// An equal-weight running covariance is refreshed with every line; its top
/// `k` eigenpairs come from warm-started power iteration, and each pixel is
/// scored by `sqrt(sum_j z_j^2 / e_j)` with `z = E^T (x - mu)`.
#[derive(Clone, Debug)]
pub struct LblAd {
    cfg: LblAdConfig,
    bands: usize,
    pixels: usize,
    stats: RunningStats,
    eigs: Option<EigenPairs>,
    excluded: Vec<bool>,
    seen: usize,
    nonconverged: usize,
    power: PowerOptions,
    line_buf: Vec<f64>,
}

impl LblAd {
    pub fn new(cfg: LblAdConfig, bands: usize) -> Result<Self> {
        if bands == 0 {
            return Err(Error::config("cube must have at least one band"));
        }
        if cfg.components == 0 || cfg.components > bands {
            return Err(Error::config(format!(
                "components must be in 1..={bands}, got {}",
                cfg.components
            )));
        }
        if cfg.buffer_len == 0 {
            return Err(Error::config("buffer length must be at least 1"));
        }
        Ok(Self {
            cfg,
            bands,
            pixels: 0,
            stats: RunningStats::new(bands),
            eigs: None,
            excluded: Vec::new(),
            seen: 0,
            nonconverged: 0,
            power: PowerOptions::default(),
            line_buf: Vec::new(),
        })
    }

    pub fn stats(&self) -> &RunningStats {
        &self.stats
    }

    pub fn eigenpairs(&self) -> Option<&EigenPairs> {
        self.eigs.as_ref()
    }

    /// Lines whose eigenpairs did not converge and were carried over.
    pub fn nonconverged_lines(&self) -> usize {
        self.nonconverged
    }

    fn refresh_subspace(&mut self) -> Result<()> {
        let cov = self.stats.covariance();
        let warm = self.eigs.as_ref().map(|e| e.vectors.view());
        let fresh = power_deflation_eigs(cov.view(), self.cfg.components, warm, &self.power)?;
        if fresh.converged || self.eigs.is_none() {
            if !fresh.converged {
                self.nonconverged += 1;
            }
            self.eigs = Some(fresh);
        } else {
            self.nonconverged += 1;
        }
        Ok(())
    }

    fn score(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let eigs = self.eigs.as_ref().expect("subspace is initialized before scoring");
        let inv_e: Array1<f64> = eigs.values.mapv(|e| 1.0 / e.max(EIGEN_FLOOR));
        let centred = &x - &self.stats.mean.view().insert_axis(Axis(0));
        let z: Array2<f64> = centred.dot(&eigs.vectors);
        z.rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(inv_e.iter())
                    .map(|(v, w)| v * v * w)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

impl Detector for LblAd {
    fn name(&self) -> &'static str {
        "lbl-ad"
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

        let out = if t + 1 < self.cfg.buffer_len {
            self.stats.update_batch(x);
            ScoredLine::unscored(line.index, self.pixels)
        } else {
            if self.cfg.adaptive_exclude && !self.excluded.is_empty() {
                let keep: Vec<usize> = (0..self.pixels).filter(|&i| !self.excluded[i]).collect();
                self.stats.update_batch(x.select(Axis(0), &keep).view());
            } else {
                self.stats.update_batch(x);
            }
            self.refresh_subspace()?;
            let scored = ScoredLine::from_raw(line.index, self.score(x), t < self.cfg.buffer_len);
            self.excluded = scored
                .norm_scores
                .iter()
                .map(|&s| s > EXCLUDE_THRESHOLD)
                .collect();
            scored
        };
        self.line_buf = buf;
        Ok(vec![out])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_case_is_scaled_deviation() {
        let cfg = LblAdConfig {
            components: 1,
            buffer_len: 1,
            adaptive_exclude: false,
        };
        let mut det = LblAd::new(cfg, 1).unwrap();
        let data = [1.0f32, 2.0, 3.0, 6.0];
        let out = det.push(&SpectralLine::new(0, 4, 1, &data).unwrap()).unwrap();
        let mean = 3.0;
        let var = ((4.0 + 1.0 + 0.0 + 9.0) / 3.0f64).max(EIGEN_FLOOR);
        for (s, &x) in out[0].raw_scores.iter().zip(&data) {
            let expected = (f64::from(x) - mean).abs() / var.sqrt();
            assert!((s - expected).abs() < 1e-9, "{s} vs {expected}");
        }
    }

    #[test]
    fn rejects_too_many_components() {
        let cfg = LblAdConfig {
            components: 4,
            ..LblAdConfig::default()
        };
        assert!(LblAd::new(cfg, 3).is_err());
    }
}
