//! Synthetic cubes: a non-stationary anomaly scene and uniform noise cubes
//! for throughput sweeps.
//!
//! The anomaly scene walks through background classes along-track with linear
//! blends between neighbouring regions. Square targets sit on a regular grid:
//! one grid column per along-track position, with sizes halving from column
//! to column, and one grid row per mixing fraction across-track.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cube::{DataCube, GroundTruthMask};
use crate::error::{Error, Result};

/// Smooth stand-in radiance profiles, evaluated at `bands` points.
pub mod signatures {
    fn grid(bands: usize) -> impl Iterator<Item = f64> {
        let denom = (bands.max(2) - 1) as f64;
        (0..bands).map(move |i| i as f64 / denom)
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn bump(w: f64, centre: f64, width: f64) -> f64 {
        (-((w - centre) / width).powi(2)).exp()
    }

    /// Low visible response with a small green peak and a steep red edge.
    pub fn vegetation(bands: usize) -> Vec<f32> {
        grid(bands)
            .map(|w| 0.06 + 0.05 * bump(w, 0.3, 0.06) + 0.45 * sigmoid((w - 0.55) / 0.03))
            .map(|v| v as f32)
            .collect()
    }

    /// Bright, slowly rising.
    pub fn sand(bands: usize) -> Vec<f32> {
        grid(bands)
            .map(|w| 0.25 + 0.35 * w - 0.12 * w * w)
            .map(|v| v as f32)
            .collect()
    }

    /// Dark, decaying towards the infrared.
    pub fn water(bands: usize) -> Vec<f32> {
        grid(bands)
            .map(|w| 0.03 + 0.16 * (-w / 0.25).exp())
            .map(|v| v as f32)
            .collect()
    }

    /// Flat grey surface used for the targets.
    pub fn asphalt(bands: usize) -> Vec<f32> {
        grid(bands)
            .map(|w| 0.17 + 0.06 * w + 0.02 * bump(w, 0.7, 0.1))
            .map(|v| v as f32)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub lines: usize,
    pub pixels: usize,
    pub bands: usize,
    /// Background classes, visited in order along-track.
    pub class_signatures: Vec<Vec<f32>>,
    /// Lines over which one class blends into the next.
    pub transition_width: usize,
    pub target_columns: usize,
    /// Side of the largest target, in pixels; halves per column.
    pub target_base_size: usize,
    /// Background fraction mixed into each target row, one row per entry.
    pub mixing_fractions: Vec<f64>,
    pub anomaly_signature: Vec<f32>,
    /// Relative per-band Gaussian noise.
    pub noise_sigma: f64,
    /// Relative per-pixel brightness variation of the background.
    pub brightness_sigma: f64,
    /// Amplitude of the slow along-track illumination gain.
    pub illumination_amplitude: f64,
    /// Period of the illumination gain, in lines.
    pub illumination_period: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::with_shape(2400, 600, 90)
    }
}

impl SyntheticSpec {
    /// Default recipe at a custom size.
    pub fn with_shape(lines: usize, pixels: usize, bands: usize) -> Self {
        Self {
            lines,
            pixels,
            bands,
            class_signatures: vec![
                signatures::sand(bands),
                signatures::vegetation(bands),
                signatures::water(bands),
            ],
            transition_width: 200,
            target_columns: 6,
            target_base_size: 16,
            mixing_fractions: vec![0.1, 0.2, 0.3, 0.5],
            anomaly_signature: signatures::asphalt(bands),
            noise_sigma: 0.05,
            brightness_sigma: 0.1,
            illumination_amplitude: 0.3,
            illumination_period: 800,
            seed: 0,
        }
    }

    /// Side length of targets in grid column `column`.
    pub fn target_size(&self, column: usize) -> usize {
        (self.target_base_size >> column.min(63)).max(1)
    }

    /// `(first_line, first_pixel, size)` of every target, column-major.
    pub fn target_extents(&self) -> Vec<(usize, usize, usize, f64)> {
        let rows = self.mixing_fractions.len();
        let mut out = Vec::with_capacity(rows * self.target_columns);
        for c in 0..self.target_columns {
            let size = self.target_size(c);
            let centre_line = (2 * c + 1) * self.lines / (2 * self.target_columns);
            for (r, &f) in self.mixing_fractions.iter().enumerate() {
                let centre_px = (2 * r + 1) * self.pixels / (2 * rows);
                out.push((
                    centre_line.saturating_sub(size / 2),
                    centre_px.saturating_sub(size / 2),
                    size,
                    f,
                ));
            }
        }
        out
    }

    /// Anomalous pixel count implied by the grid arithmetic.
    pub fn anomaly_pixel_count(&self) -> usize {
        let per_row: usize = (0..self.target_columns)
            .map(|c| self.target_size(c).pow(2))
            .sum();
        per_row * self.mixing_fractions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lines == 0 || self.pixels == 0 || self.bands == 0 {
            return Err(Error::config("synthetic cube dimensions must be positive"));
        }
        if self.class_signatures.is_empty() {
            return Err(Error::config("at least one background class is required"));
        }
        for sig in self.class_signatures.iter().chain([&self.anomaly_signature]) {
            if sig.len() != self.bands {
                return Err(Error::config(format!(
                    "signature has {} bands, cube has {}",
                    sig.len(),
                    self.bands
                )));
            }
        }
        if self.mixing_fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return Err(Error::config("mixing fractions must lie in [0, 1]"));
        }
        if self.target_base_size == 0 {
            return Err(Error::config("target size must be at least 1 pixel"));
        }
        if self.noise_sigma < 0.0 || self.brightness_sigma < 0.0 {
            return Err(Error::config("noise levels must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.illumination_amplitude) {
            return Err(Error::config("illumination amplitude must lie in [0, 1)"));
        }
        if self.illumination_period == 0 {
            return Err(Error::config("illumination period must be at least 1 line"));
        }
        let rows = self.mixing_fractions.len();
        if self.target_columns > 0 && rows > 0 {
            let col_pitch = self.lines / self.target_columns;
            let row_pitch = self.pixels / rows;
            if self.target_base_size > col_pitch || self.target_base_size > row_pitch {
                return Err(Error::config(format!(
                    "targets of {} px do not fit a {}x{} grid cell",
                    self.target_base_size, col_pitch, row_pitch
                )));
            }
        }
        for (l0, p0, s, _) in self.target_extents() {
            if l0 + s > self.lines || p0 + s > self.pixels {
                return Err(Error::config("target overflows the image bounds"));
            }
        }
        Ok(())
    }

    /// Blend weights of the background classes at native line `t`.
    pub fn class_weights(&self, t: usize) -> Vec<f64> {
        let k = self.class_signatures.len();
        let mut w = vec![0.0; k];
        if k == 1 {
            w[0] = 1.0;
            return w;
        }
        let region = self.lines as f64 / k as f64;
        let pos = t as f64 + 0.5;
        let idx = ((pos / region) as usize).min(k - 1);
        w[idx] = 1.0;
        let half = self.transition_width as f64 / 2.0;
        if half > 0.0 {
            // Blend across the nearest boundary.
            for boundary in 1..k {
                let b = boundary as f64 * region;
                let d = pos - b;
                if d.abs() < half {
                    let frac = (d + half) / (2.0 * half);
                    w.iter_mut().for_each(|v| *v = 0.0);
                    w[boundary - 1] = 1.0 - frac;
                    w[boundary] = frac;
                }
            }
        }
        w
    }

    /// Illumination gain applied to every pixel of native line `t`.
    pub fn illumination(&self, t: usize) -> f64 {
        let phase = t as f64 / self.illumination_period as f64;
        1.0 + self.illumination_amplitude * (std::f64::consts::TAU * phase).sin()
    }

    /// Noise-free background spectrum at native line `t`.
    pub fn background_at(&self, t: usize) -> Vec<f64> {
        let w = self.class_weights(t);
        let mut out = vec![0.0; self.bands];
        for (wk, sig) in w.iter().zip(&self.class_signatures) {
            if *wk == 0.0 {
                continue;
            }
            for (o, &s) in out.iter_mut().zip(sig) {
                *o += wk * f64::from(s);
            }
        }
        out
    }
}

/// Builds the anomaly scene and its ground truth.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(DataCube, GroundTruthMask)> {
    spec.validate()?;
    let (l, p, b) = (spec.lines, spec.pixels, spec.bands);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = vec![0f32; l * p * b];
    let mut mask = GroundTruthMask::zeros(l, p);

    // Target lookup: for each pixel, the mixing fraction if it is a target.
    let mut target_mix: Vec<Option<f64>> = vec![None; l * p];
    for (l0, p0, s, f) in spec.target_extents() {
        for t in l0..l0 + s {
            for i in p0..p0 + s {
                target_mix[t * p + i] = Some(f);
                mask.set(t, i, 1);
            }
        }
    }

    let anomaly: Vec<f64> = spec.anomaly_signature.iter().map(|&v| f64::from(v)).collect();
    let mut bg = vec![0.0; b];
    for t in 0..l {
        let base = spec.background_at(t);
        let gain = spec.illumination(t);
        for i in 0..p {
            let brightness = 1.0 + spec.brightness_sigma * normal(&mut rng);
            for j in 0..b {
                bg[j] = base[j] * brightness * (1.0 + spec.noise_sigma * normal(&mut rng));
            }
            let out = &mut data[(t * p + i) * b..(t * p + i + 1) * b];
            match target_mix[t * p + i] {
                None => {
                    for (o, &v) in out.iter_mut().zip(&bg) {
                        *o = (gain * v) as f32;
                    }
                }
                Some(f) => {
                    for j in 0..b {
                        let a = anomaly[j] * (1.0 + spec.noise_sigma * normal(&mut rng));
                        out[j] = (gain * ((1.0 - f) * a + f * bg[j])) as f32;
                    }
                }
            }
        }
    }
    let cube = DataCube::new(l, p, b, data, format!("synthetic-{}", spec.seed))?;
    Ok((cube, mask))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// I.i.d. uniform `[0, 1)` cube.
pub fn gen_random_cube(pixels: usize, lines: usize, bands: usize, seed: u64) -> Result<DataCube> {
    if pixels == 0 || lines == 0 || bands == 0 {
        return Err(Error::config("random cube dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..lines * pixels * bands).map(|_| rng.random::<f32>()).collect();
    DataCube::new(lines, pixels, bands, data, format!("random-{pixels}x{lines}x{bands}-{seed}"))
}
