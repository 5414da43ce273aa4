//! On-disk formats.
//!
//! Grids are stored as a 4-byte magic, `rows` and `cols` as little-endian
//! `u32`, then row-major little-endian `f32` samples: `FPD1` for intensities
//! and other real grids, `FPC1` for complex grids with interleaved `(re, im)`.
//! Values are narrowed to `f32` on write, so a round trip is exact for data
//! that is already `f32`-representable (anything previously read from disk).
//!
//! A dataset directory holds `manifest.json` plus one `FPD1` file per
//! illumination.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FpError, Result};
use crate::field::{wrap_phase, ComplexGrid, Grid, RealGrid};
use crate::optics::{Illumination, OpticalConfig};

pub const REAL_MAGIC: &[u8; 4] = b"FPD1";
pub const COMPLEX_MAGIC: &[u8; 4] = b"FPC1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

const HEADER_LEN: usize = 12;

fn format_error(path: &Path, message: impl Into<String>) -> FpError {
    FpError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn encode(magic: &[u8; 4], rows: usize, cols: usize, samples: impl Iterator<Item = f64>, path: &Path) -> Result<Vec<u8>> {
    let dim = |n: usize| u32::try_from(n).map_err(|_| format_error(path, format!("dimension {n} exceeds u32")));
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * rows * cols);
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&dim(rows)?.to_le_bytes());
    buf.extend_from_slice(&dim(cols)?.to_le_bytes());
    for v in samples {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(buf)
}

/// Parses the header and returns `(rows, cols, samples)`.
fn decode(bytes: &[u8], magic: &[u8; 4], per_cell: usize, path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < HEADER_LEN {
        return Err(format_error(path, format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != magic {
        return Err(format_error(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..4]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
    let (rows, cols) = (word(4), word(8));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4 * per_cell))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format_error(path, format!("dimensions {rows}x{cols} overflow")))?;
    if bytes.len() != expected {
        let what = if bytes.len() < expected { "truncated" } else { "trailing bytes" };
        return Err(format_error(
            path,
            format!("{what}: {rows}x{cols} needs {expected} bytes, found {}", bytes.len()),
        ));
    }
    let samples = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((rows, cols, samples))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| FpError::io(path, e))?;
    file.write_all(bytes).map_err(|e| FpError::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FpError::io(path, e))
}

pub fn encode_real(grid: &RealGrid, path: &Path) -> Result<Vec<u8>> {
    encode(REAL_MAGIC, grid.rows(), grid.cols(), grid.iter().copied(), path)
}

pub fn encode_complex(grid: &ComplexGrid, path: &Path) -> Result<Vec<u8>> {
    let samples = grid.iter().flat_map(|z| [z.re, z.im]);
    encode(COMPLEX_MAGIC, grid.rows(), grid.cols(), samples, path)
}

pub fn decode_real(bytes: &[u8], path: &Path) -> Result<RealGrid> {
    let (rows, cols, samples) = decode(bytes, REAL_MAGIC, 1, path)?;
    Grid::from_vec(rows, cols, samples)
}

pub fn decode_complex(bytes: &[u8], path: &Path) -> Result<ComplexGrid> {
    let (rows, cols, samples) = decode(bytes, COMPLEX_MAGIC, 2, path)?;
    let data = samples.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    Grid::from_vec(rows, cols, data)
}

pub fn write_real(grid: &RealGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &encode_real(grid, path)?)
}

pub fn read_real(path: impl AsRef<Path>) -> Result<RealGrid> {
    let path = path.as_ref();
    decode_real(&read_bytes(path)?, path)
}

pub fn write_complex(grid: &ComplexGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &encode_complex(grid, path)?)
}

pub fn read_complex(path: impl AsRef<Path>) -> Result<ComplexGrid> {
    let path = path.as_ref();
    decode_complex(&read_bytes(path)?, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestIllumination {
    pub sx: f64,
    pub sy: f64,
    /// Image file relative to the manifest; absent in configuration-only manifests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub wavelength_um: f64,
    pub na: f64,
    pub magnification: f64,
    pub camera_pixel_um: f64,
    pub upsample: usize,
    pub low_rows: usize,
    pub low_cols: usize,
    #[serde(default)]
    pub saturation: Option<f64>,
    pub illuminations: Vec<ManifestIllumination>,
}

/// Image file name used for illumination `n`.
pub fn image_file_name(n: usize) -> String {
    format!("img_{n:04}.fpd")
}

impl Manifest {
    /// Manifest for `cfg` with the standard image file names.
    pub fn for_config(cfg: &OpticalConfig, saturation: Option<f64>) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            wavelength_um: cfg.wavelength_um,
            na: cfg.na,
            magnification: cfg.magnification,
            camera_pixel_um: cfg.camera_pixel_um,
            upsample: cfg.upsample,
            low_rows: cfg.low_rows,
            low_cols: cfg.low_cols,
            saturation,
            illuminations: cfg
                .illuminations
                .iter()
                .enumerate()
                .map(|(n, ill)| ManifestIllumination {
                    sx: ill.sx,
                    sy: ill.sy,
                    file: Some(image_file_name(n)),
                })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(text).map_err(|e| FpError::Manifest(e.to_string()))?;
        manifest.check()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| FpError::Manifest(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    fn check(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(FpError::Manifest(format!(
                "unsupported version {}, expected {MANIFEST_VERSION}",
                self.version
            )));
        }
        for (i, ill) in self.illuminations.iter().enumerate() {
            let s2 = ill.sx * ill.sx + ill.sy * ill.sy;
            if !(s2 < 1.0) {
                return Err(FpError::Manifest(format!(
                    "illumination {i}: sx^2 + sy^2 = {s2} must be below 1"
                )));
            }
        }
        if let Some(s) = self.saturation {
            if !(s > 0.0) {
                return Err(FpError::Manifest(format!("saturation must be positive, got {s}")));
            }
        }
        self.config().validate().map_err(|e| FpError::Manifest(e.to_string()))
    }

    pub fn config(&self) -> OpticalConfig {
        OpticalConfig {
            wavelength_um: self.wavelength_um,
            na: self.na,
            magnification: self.magnification,
            camera_pixel_um: self.camera_pixel_um,
            upsample: self.upsample,
            low_rows: self.low_rows,
            low_cols: self.low_cols,
            illuminations: self
                .illuminations
                .iter()
                .map(|i| Illumination { sx: i.sx, sy: i.sy })
                .collect(),
        }
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FpError::io(path, e))?;
    Manifest::parse(&text).map_err(|e| match e {
        FpError::Manifest(msg) => FpError::Manifest(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| FpError::io(dir, e))?;
    let manifest = Manifest::for_config(&dataset.config, dataset.saturation);
    for (img, ill) in dataset.images.iter().zip(&manifest.illuminations) {
        if let Some(file) = &ill.file {
            write_real(img, dir.join(file))?;
        }
    }
    let path = dir.join(MANIFEST_FILE);
    write_bytes(&path, manifest.to_json()?.as_bytes())
}

fn image_path(dir: &Path, n: usize, ill: &ManifestIllumination) -> Result<PathBuf> {
    let file = ill
        .file
        .as_ref()
        .ok_or_else(|| FpError::Manifest(format!("illumination {n} has no image file")))?;
    Ok(dir.join(file))
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir.join(MANIFEST_FILE))?;
    let cfg = manifest.config();
    let mut images = Vec::with_capacity(manifest.illuminations.len());
    for (n, ill) in manifest.illuminations.iter().enumerate() {
        let path = image_path(dir, n, ill)?;
        let img = read_real(&path)?;
        if img.dims() != cfg.low_dims() {
            return Err(format_error(
                &path,
                format!("image is {:?}, manifest says {:?}", img.dims(), cfg.low_dims()),
            ));
        }
        if !img.is_finite() {
            return Err(FpError::NonFinite(path.display().to_string()));
        }
        if img.iter().any(|&v| v < 0.0) {
            return Err(format_error(&path, "negative intensity"));
        }
        images.push(img);
    }
    Dataset::new(cfg, images, manifest.saturation)
}

/// Component of a complex grid written by [`export_image`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportMode {
    Amp,
    /// Wrapped to `(-pi, pi]` before scaling.
    Phase,
    Real,
    Imag,
}

impl ExportMode {
    pub fn component(self, g: &ComplexGrid) -> RealGrid {
        match self {
            ExportMode::Amp => g.map(|z| z.norm()),
            ExportMode::Phase => g.map(|z| wrap_phase(z.arg())),
            ExportMode::Real => g.real_part(),
            ExportMode::Imag => g.imag_part(),
        }
    }
}

/// Binary 16-bit graymap (`P5`, maxval 65535, big-endian samples). The
/// minimum maps to 0 and the maximum to 65535; a constant image is 32768.
pub fn encode_pgm(img: &RealGrid) -> Vec<u8> {
    let (lo, hi) = img.min_max();
    let mut buf = format!("P5\n{} {}\n65535\n", img.cols(), img.rows()).into_bytes();
    buf.reserve(2 * img.len());
    for &v in img.iter() {
        let level: u16 = if hi > lo {
            (((v - lo) / (hi - lo)) * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            32768
        };
        buf.extend_from_slice(&level.to_be_bytes());
    }
    buf
}

pub fn export_real(img: &RealGrid, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(img))
}

pub fn export_image(g: &ComplexGrid, path: impl AsRef<Path>, mode: ExportMode) -> Result<()> {
    export_real(&mode.component(g), path)
}
