//! On-disk formats.
//!
//! Cubes, masks and score heatmaps share one little-endian container:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "HADC"
//! 4       2     version (1)
//! 6       4     lines
//! 10      4     pixels
//! 14      4     bands
//! 18      1     dtype (1 = f32, 2 = u8)
//! 19      1     layout (1 = line, pixel, band)
//! 20      4     name length n
//! 24      n     name, UTF-8
//! 24+n    ...   payload
//! ```
//!
//! Run results and ROC samples are written as CSV.

use std::fs;
use std::path::Path;

use crate::cube::{DataCube, GroundTruthMask, ScoredLine};
use crate::detectors::ScoreKind;
use crate::error::{Error, Result};
use crate::metrics::{Aggregate, RocSummary, RunRecord};

pub const MAGIC: [u8; 4] = *b"HADC";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
pub const DTYPE_U8: u8 = 2;
pub const LAYOUT_LINE_PIXEL_BAND: u8 = 1;
const FIXED_HEADER: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubeFileHeader {
    pub version: u16,
    pub lines: u32,
    pub pixels: u32,
    pub bands: u32,
    pub dtype: u8,
    pub layout: u8,
    pub name: String,
}

impl CubeFileHeader {
    fn element_size(&self) -> usize {
        match self.dtype {
            DTYPE_F32 => 4,
            _ => 1,
        }
    }

    pub fn payload_len(&self) -> u64 {
        self.lines as u64 * self.pixels as u64 * self.bands as u64 * self.element_size() as u64
    }

    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER + self.name.len()
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.lines.to_le_bytes());
        out.extend_from_slice(&self.pixels.to_le_bytes());
        out.extend_from_slice(&self.bands.to_le_bytes());
        out.push(self.dtype);
        out.push(self.layout);
        out.extend_from_slice(&(self.name.len() as u32).to_le_bytes());
        out.extend_from_slice(self.name.as_bytes());
    }

    /// Parses and validates a header, checking the payload length against
    /// the bytes that follow it.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: usize, message: String| Error::Format {
            offset: offset as u64,
            message,
        };
        if bytes.len() < FIXED_HEADER {
            return Err(fmt(bytes.len(), format!("header needs {FIXED_HEADER} bytes")));
        }
        if bytes[0..4] != MAGIC {
            return Err(fmt(0, format!("bad magic {:?}", &bytes[0..4])));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u16_at(4);
        if version != VERSION {
            return Err(fmt(4, format!("unsupported version {version}")));
        }
        let (lines, pixels, bands) = (u32_at(6), u32_at(10), u32_at(14));
        for (offset, value, field) in [(6, lines, "lines"), (10, pixels, "pixels"), (14, bands, "bands")] {
            if value == 0 {
                return Err(fmt(offset, format!("{field} must be positive")));
            }
        }
        let dtype = bytes[18];
        if dtype != DTYPE_F32 && dtype != DTYPE_U8 {
            return Err(fmt(18, format!("unsupported dtype {dtype}")));
        }
        let layout = bytes[19];
        if layout != LAYOUT_LINE_PIXEL_BAND {
            return Err(fmt(19, format!("unsupported layout {layout}")));
        }
        let name_len = u32_at(20) as usize;
        let name_end = FIXED_HEADER
            .checked_add(name_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| fmt(20, format!("name length {name_len} runs past end of file")))?;
        let name = std::str::from_utf8(&bytes[FIXED_HEADER..name_end])
            .map_err(|e| fmt(FIXED_HEADER + e.valid_up_to(), "name is not UTF-8".into()))?
            .to_owned();
        let header = Self {
            version,
            lines,
            pixels,
            bands,
            dtype,
            layout,
            name,
        };
        let actual = (bytes.len() - name_end) as u64;
        if actual != header.payload_len() {
            return Err(fmt(
                name_end,
                format!("payload has {actual} bytes, header declares {}", header.payload_len()),
            ));
        }
        Ok(header)
    }
}

fn dim_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::dim(format!("{what} {value} exceeds u32")))
}

pub fn encode_cube(cube: &DataCube) -> Result<Vec<u8>> {
    let header = CubeFileHeader {
        version: VERSION,
        lines: dim_u32(cube.lines(), "lines")?,
        pixels: dim_u32(cube.pixels(), "pixels")?,
        bands: dim_u32(cube.bands(), "bands")?,
        dtype: DTYPE_F32,
        layout: LAYOUT_LINE_PIXEL_BAND,
        name: cube.name.clone(),
    };
    let mut out = Vec::with_capacity(header.encoded_len() + cube.data().len() * 4);
    header.encode(&mut out);
    for v in cube.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_cube(bytes: &[u8]) -> Result<DataCube> {
    let header = CubeFileHeader::decode(bytes)?;
    let start = header.encoded_len();
    if header.dtype != DTYPE_F32 {
        return Err(Error::Format {
            offset: 18,
            message: format!("expected a float32 cube, found dtype {}", header.dtype),
        });
    }
    let data: Vec<f32> = bytes[start..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format {
            offset: (start + 4 * pos) as u64,
            message: "non-finite radiance".into(),
        });
    }
    DataCube::new(
        header.lines as usize,
        header.pixels as usize,
        header.bands as usize,
        data,
        header.name,
    )
}

pub fn encode_mask(mask: &GroundTruthMask, name: &str) -> Result<Vec<u8>> {
    let header = CubeFileHeader {
        version: VERSION,
        lines: dim_u32(mask.lines(), "lines")?,
        pixels: dim_u32(mask.pixels(), "pixels")?,
        bands: 1,
        dtype: DTYPE_U8,
        layout: LAYOUT_LINE_PIXEL_BAND,
        name: name.to_owned(),
    };
    let mut out = Vec::with_capacity(header.encoded_len() + mask.data().len());
    header.encode(&mut out);
    out.extend_from_slice(mask.data());
    Ok(out)
}

pub fn decode_mask(bytes: &[u8]) -> Result<GroundTruthMask> {
    let header = CubeFileHeader::decode(bytes)?;
    let start = header.encoded_len();
    if header.dtype != DTYPE_U8 || header.bands != 1 {
        return Err(Error::Format {
            offset: 14,
            message: format!(
                "expected a u8 mask with one band, found dtype {} with {} bands",
                header.dtype, header.bands
            ),
        });
    }
    let payload = &bytes[start..];
    if let Some(pos) = payload.iter().position(|&v| v > 1) {
        return Err(Error::Format {
            offset: (start + pos) as u64,
            message: format!("mask value {} is not 0 or 1", payload[pos]),
        });
    }
    GroundTruthMask::new(header.lines as usize, header.pixels as usize, payload.to_vec())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_cube(path: impl AsRef<Path>, cube: &DataCube) -> Result<()> {
    write_bytes(path.as_ref(), &encode_cube(cube)?)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<DataCube> {
    decode_cube(&read_bytes(path.as_ref())?)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &GroundTruthMask) -> Result<()> {
    let name = path
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_bytes(path.as_ref(), &encode_mask(mask, &name)?)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<GroundTruthMask> {
    decode_mask(&read_bytes(path.as_ref())?)
}

/// Per-pixel scores of a run as a one-band cube, in stream order.
pub fn heatmap_cube(lines: &[ScoredLine], kind: ScoreKind, name: &str) -> Result<DataCube> {
    let pixels = lines.first().map_or(0, |l| l.raw_scores.len());
    let mut data = Vec::with_capacity(lines.len() * pixels);
    for line in lines {
        let values = match kind {
            ScoreKind::Raw => &line.raw_scores,
            ScoreKind::Normalized => &line.norm_scores,
        };
        if values.len() != pixels {
            return Err(Error::dim("scored lines differ in width"));
        }
        data.extend(values.iter().map(|&v| v as f32));
    }
    DataCube::new(lines.len(), pixels, 1, data, name)
}

/// Warmup flags of a run as a one-pixel-wide mask, in stream order.
pub fn warmup_mask(lines: &[ScoredLine]) -> Result<GroundTruthMask> {
    GroundTruthMask::new(lines.len(), 1, lines.iter().map(|l| u8::from(l.warmup)).collect())
}

pub const RESULTS_HEADER: [&str; 10] = [
    "detector",
    "dataset",
    "direction",
    "seed",
    "auc",
    "auc_td",
    "auc_bs",
    "lps",
    "warmup_lines",
    "config",
];

fn pm((mean, sd): (f64, f64)) -> String {
    format!("{mean:.6}±{sd:.6}")
}

/// Writes one row per run followed by one `mean±sd` row per group.
pub fn write_results_csv(
    path: impl AsRef<Path>,
    records: &[RunRecord],
    aggregates: &[Aggregate],
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record([
            r.detector.clone(),
            r.dataset.clone(),
            r.direction.clone(),
            r.seed.to_string(),
            format!("{:.6}", r.auc),
            format!("{:.6}", r.auc_td),
            format!("{:.6}", r.auc_bs),
            format!("{:.3}", r.lps),
            r.warmup_lines.to_string(),
            r.config.clone(),
        ])?;
    }
    for a in aggregates {
        w.write_record([
            a.detector.clone(),
            a.dataset.clone(),
            a.direction.clone(),
            "mean±sd".to_owned(),
            pm(a.auc),
            pm(a.auc_td),
            pm(a.auc_bs),
            pm(a.lps),
            a.warmup_lines.to_string(),
            format!("runs={}", a.runs),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per ROC point, sentinels included.
pub fn write_roc_csv(path: impl AsRef<Path>, roc: &RocSummary) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for ((t, f), p) in roc.thresholds.iter().zip(&roc.fpr).zip(&roc.tpr) {
        w.write_record([t.to_string(), f.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> DataCube {
        DataCube::new(2, 3, 2, (0..12).map(|v| v as f32 * 0.5 - 1.0).collect(), "tiny").unwrap()
    }

    #[test]
    fn cube_round_trip_is_bit_identical() {
        let c = cube();
        let back = decode_cube(&encode_cube(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let mut bytes = encode_cube(&cube()).unwrap();
        bytes.pop();
        match decode_cube(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 28),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_lines_rejected() {
        let mut bytes = encode_cube(&cube()).unwrap();
        bytes[6..10].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_cube(&bytes), Err(Error::Format { offset: 6, .. })));
    }

    #[test]
    fn bad_magic_and_dtype() {
        let mut bytes = encode_cube(&cube()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_cube(&bytes), Err(Error::Format { offset: 0, .. })));
        let mut bytes = encode_cube(&cube()).unwrap();
        bytes[18] = 9;
        assert!(matches!(decode_cube(&bytes), Err(Error::Format { offset: 18, .. })));
    }

    #[test]
    fn mask_round_trip_and_bad_value() {
        let m = GroundTruthMask::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        let mut bytes = encode_mask(&m, "m").unwrap();
        assert_eq!(decode_mask(&bytes).unwrap(), m);
        *bytes.last_mut().unwrap() = 2;
        assert!(matches!(decode_mask(&bytes), Err(Error::Format { .. })));
    }
}
