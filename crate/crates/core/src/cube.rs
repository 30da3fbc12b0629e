//! Data model shared by all detectors and the push-broom replay of a cube.
//!
//! A [`DataCube`] is stored line-major (line, then pixel, then band) so that a
//! single camera line is one contiguous slab of `pixels * bands` values.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Lines x pixels x bands radiance values.
#[derive(Clone, Debug, PartialEq)]
pub struct DataCube {
    lines: usize,
    pixels: usize,
    bands: usize,
    data: Vec<f32>,
    pub name: String,
}

impl DataCube {
    pub fn new(
        lines: usize,
        pixels: usize,
        bands: usize,
        data: Vec<f32>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if lines == 0 || pixels == 0 || bands == 0 {
            return Err(Error::Data(format!(
                "cube dimensions must be positive, got {lines}x{pixels}x{bands}"
            )));
        }
        let expected = lines
            .checked_mul(pixels)
            .and_then(|v| v.checked_mul(bands))
            .ok_or_else(|| Error::Data("cube dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::dim(format!(
                "cube data has {} values, expected {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite radiance at flat index {pos}")));
        }
        Ok(Self {
            lines,
            pixels,
            bands,
            data,
            name: name.into(),
        })
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Raw slab for native line `t`.
    pub fn line_slice(&self, t: usize) -> &[f32] {
        let len = self.pixels * self.bands;
        &self.data[t * len..(t + 1) * len]
    }

    pub fn line(&self, t: usize) -> SpectralLine<'_> {
        SpectralLine::new(t, self.pixels, self.bands, self.line_slice(t))
            .expect("slab shape is consistent with cube")
    }

    /// Same cube with the line order reversed.
    pub fn flipped(&self) -> DataCube {
        let len = self.pixels * self.bands;
        let mut data = Vec::with_capacity(self.data.len());
        for slab in self.data.chunks_exact(len).rev() {
            data.extend_from_slice(slab);
        }
        DataCube {
            lines: self.lines,
            pixels: self.pixels,
            bands: self.bands,
            data,
            name: self.name.clone(),
        }
    }
}

/// One camera line: `pixels x bands` radiance values.
#[derive(Clone, Copy, Debug)]
pub struct SpectralLine<'a> {
    pub index: usize,
    pub pixels: ArrayView2<'a, f32>,
}

impl<'a> SpectralLine<'a> {
    pub fn new(index: usize, pixels: usize, bands: usize, slab: &'a [f32]) -> Result<Self> {
        let view = ArrayView2::from_shape((pixels, bands), slab)
            .map_err(|e| Error::dim(format!("line slab: {e}")))?;
        Ok(Self { index, pixels: view })
    }

    pub fn num_pixels(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn num_bands(&self) -> usize {
        self.pixels.ncols()
    }

    /// Contiguous row-major values (`pixels * bands`).
    pub fn as_slice(&self) -> &'a [f32] {
        self.pixels
            .to_slice()
            .expect("spectral lines are always standard layout")
    }
}

/// Per-pixel anomaly labels, `lines x pixels`, 1 = anomaly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthMask {
    lines: usize,
    pixels: usize,
    data: Vec<u8>,
}

impl GroundTruthMask {
    pub fn new(lines: usize, pixels: usize, data: Vec<u8>) -> Result<Self> {
        if lines == 0 || pixels == 0 {
            return Err(Error::Data("mask dimensions must be positive".into()));
        }
        if data.len() != lines * pixels {
            return Err(Error::dim(format!(
                "mask has {} values, expected {}",
                data.len(),
                lines * pixels
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::Data(format!(
                "mask value {} at flat index {pos} is not 0 or 1",
                data[pos]
            )));
        }
        Ok(Self {
            lines,
            pixels,
            data,
        })
    }

    pub fn zeros(lines: usize, pixels: usize) -> Self {
        Self {
            lines,
            pixels,
            data: vec![0; lines * pixels],
        }
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.pixels..(t + 1) * self.pixels]
    }

    pub fn get(&self, line: usize, pixel: usize) -> u8 {
        self.data[line * self.pixels + pixel]
    }

    pub fn set(&mut self, line: usize, pixel: usize, value: u8) {
        self.data[line * self.pixels + pixel] = value;
    }

    pub fn anomaly_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn check_matches(&self, cube: &DataCube) -> Result<()> {
        if self.lines != cube.lines() || self.pixels != cube.pixels() {
            return Err(Error::dim(format!(
                "mask is {}x{} but cube is {}x{}",
                self.lines,
                self.pixels,
                cube.lines(),
                cube.pixels()
            )));
        }
        Ok(())
    }

    pub fn flipped(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.pixels).rev() {
            data.extend_from_slice(row);
        }
        Self {
            lines: self.lines,
            pixels: self.pixels,
            data,
        }
    }
}

/// Detector output for one line.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredLine {
    pub index: usize,
    /// Mahalanobis distances, one per pixel.
    pub raw_scores: Vec<f64>,
    /// Line-normalized distances.
    pub norm_scores: Vec<f64>,
    pub decisions: Option<Vec<u8>>,
    pub warmup: bool,
}

impl ScoredLine {
    /// Builds a line from raw distances, filling in the normalized scores.
    pub fn from_raw(index: usize, raw_scores: Vec<f64>, warmup: bool) -> Self {
        let norm_scores = normalize_line(&raw_scores);
        Self {
            index,
            raw_scores,
            norm_scores,
            decisions: None,
            warmup,
        }
    }

    /// Placeholder for a line a detector could not score.
    pub fn unscored(index: usize, pixels: usize) -> Self {
        Self {
            index,
            raw_scores: vec![0.0; pixels],
            norm_scores: vec![0.0; pixels],
            decisions: None,
            warmup: true,
        }
    }

    pub fn with_threshold(mut self, tau: f64) -> Self {
        self.decisions = Some(apply_threshold(&self.norm_scores, tau));
        self
    }
}

/// Standard deviation below which a line is treated as constant.
pub const ZERO_VARIANCE: f64 = 1e-12;

/// Zero-mean, unit-variance rescaling of a distance vector (population std).
/// A constant vector maps to all zeros.
pub fn normalize_line(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < ZERO_VARIANCE {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - mean) / std).collect()
}

/// `1` where the score reaches `tau`.
pub fn apply_threshold(scores: &[f64], tau: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= tau)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Flipped,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Flipped => "flipped",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "flipped" => Ok(Direction::Flipped),
            other => Err(Error::config(format!("unknown direction '{other}'"))),
        }
    }
}

pub const DEFAULT_BUFFER_LEN: usize = 99;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamConfig {
    pub direction: Direction,
    pub buffer_len: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            direction: Direction::Forward,
            buffer_len: DEFAULT_BUFFER_LEN,
        }
    }
}

impl StreamConfig {
    pub fn new(direction: Direction, buffer_len: usize) -> Self {
        Self {
            direction,
            buffer_len,
        }
    }

    pub fn validate(&self, lines: usize) -> Result<()> {
        if self.buffer_len == 0 {
            return Err(Error::config("buffer length must be at least 1"));
        }
        if self.buffer_len >= lines {
            return Err(Error::config(format!(
                "buffer length {} must be smaller than the line count {lines}",
                self.buffer_len
            )));
        }
        Ok(())
    }
}

/// Replays a cube one line at a time. Emitted indices always run `0..lines`
/// in emission order, whichever direction the cube is read in.
pub struct LineStream<'a> {
    cube: &'a DataCube,
    direction: Direction,
    next: usize,
}

impl<'a> Iterator for LineStream<'a> {
    type Item = SpectralLine<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        let lines = self.cube.lines();
        if self.next >= lines {
            return None;
        }
        let native = match self.direction {
            Direction::Forward => self.next,
            Direction::Flipped => lines - 1 - self.next,
        };
        let mut line = self.cube.line(native);
        line.index = self.next;
        self.next += 1;
        Some(line)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.cube.lines() - self.next;
        (rest, Some(rest))
    }
}

impl ExactSizeIterator for LineStream<'_> {}

pub fn stream_cube<'a>(cube: &'a DataCube, cfg: &StreamConfig) -> Result<LineStream<'a>> {
    cfg.validate(cube.lines())?;
    Ok(LineStream {
        cube,
        direction: cfg.direction,
        next: 0,
    })
}

/// Reorders labels to follow the line order of [`stream_cube`].
pub fn mask_for_stream(mask: &GroundTruthMask, cfg: &StreamConfig) -> GroundTruthMask {
    match cfg.direction {
        Direction::Forward => mask.clone(),
        Direction::Flipped => mask.flipped(),
    }
}
