//! Python bindings. Arrays cross the boundary as flat lists plus a shape.

use std::sync::Mutex;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use linescan_ad::bench::run_repeated;
use linescan_ad::cube::{self, SpectralLine};
use linescan_ad::datagen::{self, SyntheticSpec};
use linescan_ad::detectors::{self, DetectorKind, DetectorSpec};
use linescan_ad::{io, metrics, Direction, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Hyperspectral cube stored line, pixel, band.
#[pyclass(module = "linescan_ad", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Cube {
    inner: cube::DataCube,
}

#[pymethods]
impl Cube {
    #[new]
    #[pyo3(signature = (lines, pixels, bands, data, name = "cube".to_owned()))]
    fn new(lines: usize, pixels: usize, bands: usize, data: Vec<f32>, name: String) -> PyResult<Self> {
        let inner = cube::DataCube::new(lines, pixels, bands, data, name).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn lines(&self) -> usize {
        self.inner.lines()
    }

    #[getter]
    fn pixels(&self) -> usize {
        self.inner.pixels()
    }

    #[getter]
    fn bands(&self) -> usize {
        self.inner.bands()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.lines(), self.inner.pixels(), self.inner.bands())
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// All values as a flat list.
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    /// One line as a flat `pixels * bands` list.
    fn line(&self, t: usize) -> PyResult<Vec<f32>> {
        if t >= self.inner.lines() {
            return Err(PyIndexError::new_err(format!("line {t} out of range")));
        }
        Ok(self.inner.line_slice(t).to_vec())
    }

    fn flipped(&self) -> Self {
        Self {
            inner: self.inner.flipped(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Cube(name={:?}, lines={}, pixels={}, bands={})",
            self.inner.name,
            self.inner.lines(),
            self.inner.pixels(),
            self.inner.bands()
        )
    }
}

/// Binary ground truth, one row per line.
#[pyclass(module = "linescan_ad", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Mask {
    inner: cube::GroundTruthMask,
}

#[pymethods]
impl Mask {
    #[new]
    fn new(lines: usize, pixels: usize, data: Vec<u8>) -> PyResult<Self> {
        let inner = cube::GroundTruthMask::new(lines, pixels, data).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.lines(), self.inner.pixels())
    }

    fn data(&self) -> Vec<u8> {
        self.inner.data().to_vec()
    }

    fn anomaly_count(&self) -> usize {
        self.inner.anomaly_count()
    }
}

/// Per-pixel output for one line.
#[pyclass(module = "linescan_ad", frozen, get_all)]
struct ScoredLine {
    index: usize,
    raw_scores: Vec<f64>,
    norm_scores: Vec<f64>,
    warmup: bool,
}

impl From<cube::ScoredLine> for ScoredLine {
    fn from(l: cube::ScoredLine) -> Self {
        Self {
            index: l.index,
            raw_scores: l.raw_scores,
            norm_scores: l.norm_scores,
            warmup: l.warmup,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn detector_spec(
    kind: &str,
    alpha: f64,
    dims: usize,
    buffer: usize,
    seed: u64,
    no_srp: bool,
    incremental: bool,
    eta: f64,
    components: usize,
) -> PyResult<DetectorSpec> {
    let kind: DetectorKind = kind.parse().map_err(to_py)?;
    let mut spec = DetectorSpec::new(kind).with_seed(seed);
    spec.erx.alpha = alpha;
    spec.erx.dims = dims;
    spec.erx.buffer_len = buffer;
    spec.erx.no_srp = no_srp;
    spec.erx.use_incremental = incremental;
    spec.eta = eta;
    spec.components = components;
    Ok(spec)
}

/// Streaming detector fed one line at a time.
#[pyclass(module = "linescan_ad")]
struct Detector {
    inner: Mutex<Box<dyn detectors::Detector>>,
    bands: usize,
    next_index: usize,
}

impl Detector {
    fn detector(&self) -> std::sync::MutexGuard<'_, Box<dyn detectors::Detector>> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[pymethods]
impl Detector {
    #[new]
    #[pyo3(signature = (kind, bands, alpha = 0.1, dims = 5, buffer = 99, seed = 0, no_srp = false, incremental = false, eta = 0.5, components = 3))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        kind: &str,
        bands: usize,
        alpha: f64,
        dims: usize,
        buffer: usize,
        seed: u64,
        no_srp: bool,
        incremental: bool,
        eta: f64,
        components: usize,
    ) -> PyResult<Self> {
        let spec = detector_spec(kind, alpha, dims, buffer, seed, no_srp, incremental, eta, components)?;
        Ok(Self {
            inner: Mutex::new(spec.build(bands).map_err(to_py)?),
            bands,
            next_index: 0,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.detector().name()
    }

    /// Pushes one line given as a flat `pixels * bands` list. Returns the
    /// lines that became available, which may be none or an earlier line.
    fn push(&mut self, pixels: usize, data: Vec<f32>) -> PyResult<Vec<ScoredLine>> {
        let line = SpectralLine::new(self.next_index, pixels, self.bands, &data).map_err(to_py)?;
        let out = self.detector().push(&line).map_err(to_py)?;
        self.next_index += 1;
        Ok(out.into_iter().map(ScoredLine::from).collect())
    }

    /// Flushes lines still held back at end of stream.
    fn finish(&mut self) -> PyResult<Vec<ScoredLine>> {
        let out = self.detector().finish().map_err(to_py)?;
        Ok(out.into_iter().map(ScoredLine::from).collect())
    }
}

/// Runs a detector over a whole cube and returns a dict of metrics.
#[pyfunction]
#[pyo3(signature = (kind, cube, mask = None, seed = 0, direction = "forward", alpha = 0.1, dims = 5, buffer = 99, no_srp = false, incremental = false, eta = 0.5, components = 3))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    kind: &str,
    cube: &Cube,
    mask: Option<&Mask>,
    seed: u64,
    direction: &str,
    alpha: f64,
    dims: usize,
    buffer: usize,
    no_srp: bool,
    incremental: bool,
    eta: f64,
    components: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = detector_spec(kind, alpha, dims, buffer, seed, no_srp, incremental, eta, components)?;
    let dir: Direction = direction.parse().map_err(to_py)?;
    let runs = run_repeated(kind, &spec, &cube.inner, mask.map(|m| &m.inner), &[seed], &[dir])
        .map_err(to_py)?;
    let r = &runs[0].record;
    let d = PyDict::new(py);
    d.set_item("detector", &r.detector)?;
    d.set_item("direction", &r.direction)?;
    d.set_item("seed", r.seed)?;
    d.set_item("auc", r.auc)?;
    d.set_item("auc_td", r.auc_td)?;
    d.set_item("auc_bs", r.auc_bs)?;
    d.set_item("lps", r.lps)?;
    d.set_item("warmup_lines", r.warmup_lines)?;
    d.set_item("config", &r.config)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (lines = 2400, pixels = 600, bands = 90, seed = 0, target_base_size = None, noise_sigma = None))]
fn gen_synthetic(
    lines: usize,
    pixels: usize,
    bands: usize,
    seed: u64,
    target_base_size: Option<usize>,
    noise_sigma: Option<f64>,
) -> PyResult<(Cube, Mask)> {
    let mut spec = SyntheticSpec::with_shape(lines, pixels, bands);
    spec.seed = seed;
    if let Some(s) = target_base_size {
        spec.target_base_size = s;
    }
    if let Some(s) = noise_sigma {
        spec.noise_sigma = s;
    }
    let (c, m) = datagen::gen_synthetic(&spec).map_err(to_py)?;
    Ok((Cube { inner: c }, Mask { inner: m }))
}

#[pyfunction]
fn gen_random_cube(pixels: usize, lines: usize, bands: usize, seed: u64) -> PyResult<Cube> {
    let inner = datagen::gen_random_cube(pixels, lines, bands, seed).map_err(to_py)?;
    Ok(Cube { inner })
}

#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::roc_auc(&scores, &labels).map_err(to_py)
}

#[pyfunction]
fn auc_td_bs(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<(f64, f64)> {
    metrics::auc_td_bs(&scores, &labels).map_err(to_py)
}

#[pyfunction]
fn read_cube(path: &str) -> PyResult<Cube> {
    Ok(Cube {
        inner: io::read_cube(path).map_err(to_py)?,
    })
}

#[pyfunction]
fn write_cube(path: &str, cube: &Cube) -> PyResult<()> {
    io::write_cube(path, &cube.inner).map_err(to_py)
}

#[pyfunction]
fn read_mask(path: &str) -> PyResult<Mask> {
    Ok(Mask {
        inner: io::read_mask(path).map_err(to_py)?,
    })
}

#[pyfunction]
fn write_mask(path: &str, mask: &Mask) -> PyResult<()> {
    io::write_mask(path, &mask.inner).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "linescan_ad")]
fn linescan_ad_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Cube>()?;
    m.add_class::<Mask>()?;
    m.add_class::<ScoredLine>()?;
    m.add_class::<Detector>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(gen_random_cube, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(auc_td_bs, m)?)?;
    m.add_function(wrap_pyfunction!(read_cube, m)?)?;
    m.add_function(wrap_pyfunction!(write_cube, m)?)?;
    m.add_function(wrap_pyfunction!(read_mask, m)?)?;
    m.add_function(wrap_pyfunction!(write_mask, m)?)?;
    Ok(())
}
