//! Imaging geometry: coherent transfer function, Zernike pupil phase basis and
//! the mapping from LED direction sines to spectrum window offsets.
//!
//! Spatial frequencies are handled in cycles per micrometre. A bin at centered
//! index `(r, c)` of an `rows x cols` low-resolution spectrum sits at
//! `f = ((c - cols/2) / (cols * p), (r - rows/2) / (rows * p))` where `p` is
//! the object-plane pixel size. The pupil radius is `NA / lambda`, which is the
//! same disk as `|k| < NA * k0` with `k = 2 pi f`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{FpError, Result};
use crate::field::{check_window, ComplexGrid, Grid, RealGrid};

/// Direction sines `(sin theta_x, sin theta_y)` of one LED's plane wave.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Illumination {
    pub sx: f64,
    pub sy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpticalConfig {
    pub wavelength_um: f64,
    pub na: f64,
    pub magnification: f64,
    pub camera_pixel_um: f64,
    /// High-resolution grid is `upsample` times the capture grid on each axis.
    pub upsample: usize,
    pub low_rows: usize,
    pub low_cols: usize,
    pub illuminations: Vec<Illumination>,
}

impl OpticalConfig {
    /// 0.1 NA, 2x objective, 3.45 um camera pixels, 532 nm light, 32x32
    /// captures upsampled 4x, and a 15x15 LED grid with a direction-sine step
    /// of 0.05.
    pub fn reference_setup() -> Self {
        OpticalConfig {
            wavelength_um: 0.532,
            na: 0.1,
            magnification: 2.0,
            camera_pixel_um: 3.45,
            upsample: 4,
            low_rows: 32,
            low_cols: 32,
            illuminations: led_grid(15, 0.05),
        }
    }

    pub fn object_pixel_um(&self) -> f64 {
        self.camera_pixel_um / self.magnification
    }

    pub fn high_pixel_um(&self) -> f64 {
        self.object_pixel_um() / self.upsample as f64
    }

    pub fn low_dims(&self) -> (usize, usize) {
        (self.low_rows, self.low_cols)
    }

    pub fn high_dims(&self) -> (usize, usize) {
        (self.low_rows * self.upsample, self.low_cols * self.upsample)
    }

    /// Pupil cutoff `NA / lambda` in cycles per micrometre.
    pub fn cutoff_frequency(&self) -> f64 {
        self.na / self.wavelength_um
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength_um
    }

    /// Center of the high-resolution spectrum in the DC-centered layout.
    pub fn high_center(&self) -> (i64, i64) {
        let (r, c) = self.high_dims();
        ((r / 2) as i64, (c / 2) as i64)
    }

    /// Scalar checks only; window placement is covered by [`Self::validate`].
    fn validate_scalars(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(FpError::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("wavelength_um", self.wavelength_um)?;
        positive("magnification", self.magnification)?;
        positive("camera_pixel_um", self.camera_pixel_um)?;
        if !(self.na > 0.0 && self.na < 1.0) {
            return Err(FpError::InvalidConfig(format!("na must lie in (0, 1), got {}", self.na)));
        }
        if self.upsample < 1 {
            return Err(FpError::InvalidConfig("upsample must be at least 1".into()));
        }
        if self.low_rows == 0 || self.low_cols == 0 {
            return Err(FpError::InvalidConfig("capture dimensions must be positive".into()));
        }
        if self.illuminations.is_empty() {
            return Err(FpError::InvalidConfig("at least one illumination is required".into()));
        }
        for (i, ill) in self.illuminations.iter().enumerate() {
            let s2 = ill.sx * ill.sx + ill.sy * ill.sy;
            if !(s2 < 1.0) {
                return Err(FpError::InvalidConfig(format!(
                    "illumination {i}: sx^2 + sy^2 = {s2} must be below 1"
                )));
            }
        }
        Ok(())
    }

    /// Full validation, including that every shifted pupil window fits the
    /// high-resolution spectrum.
    pub fn validate(&self) -> Result<()> {
        self.validate_scalars()?;
        illumination_offsets(self).map(|_| ())
    }
}

/// Square `n x n` LED grid with uniform direction-sine spacing, row-major,
/// rows varying `sy` and columns varying `sx`.
pub fn led_grid(n: usize, step: f64) -> Vec<Illumination> {
    let half = (n as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            out.push(Illumination {
                sx: (c as f64 - half) * step,
                sy: (r as f64 - half) * step,
            });
        }
    }
    out
}

/// Normalized radial coordinate squared of a centered low-res bin, in units of
/// the cutoff: `(f / (NA / lambda))^2` evaluated without forming `f` directly
/// so that bins exactly on the cutoff compare equal.
fn normalized_coords(cfg: &OpticalConfig, r: usize, c: usize) -> (f64, f64, f64) {
    let u = (c as f64 - (cfg.low_cols / 2) as f64) / cfg.low_cols as f64;
    let v = (r as f64 - (cfg.low_rows / 2) as f64) / cfg.low_rows as f64;
    // cutoff expressed in cycles per sample of the low-res grid
    let cut = cfg.na * cfg.object_pixel_um() / cfg.wavelength_um;
    (u, v, cut)
}

/// Binary coherent transfer function on the DC-centered capture grid:
/// `1` strictly inside the NA disk, `0` elsewhere.
pub fn make_ctf(cfg: &OpticalConfig) -> ComplexGrid {
    Grid::from_fn(cfg.low_rows, cfg.low_cols, |r, c| {
        let (u, v, cut) = normalized_coords(cfg, r, c);
        if u * u + v * v < cut * cut {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Boolean support of [`make_ctf`].
pub fn pupil_support(cfg: &OpticalConfig) -> Grid<bool> {
    make_ctf(cfg).map(|z| z.re != 0.0)
}

/// Noll index `j >= 1` to `(n, m)` with signed azimuthal order: `m > 0` is a
/// cosine term, `m < 0` a sine term.
pub fn noll_to_nm(j: usize) -> (u32, i32) {
    assert!(j >= 1, "Noll indices start at 1");
    let mut n = 0usize;
    let mut rem = j - 1;
    while rem > n {
        n += 1;
        rem -= n;
    }
    let m_abs = (n % 2) + 2 * ((rem + (n + 1) % 2) / 2);
    let m = if j.is_multiple_of(2) { m_abs as i32 } else { -(m_abs as i32) };
    (n as u32, m)
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn radial(n: u32, m: u32, rho: f64) -> f64 {
    (0..=(n - m) / 2)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(n - k)
                / (factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k))
                * rho.powi((n - 2 * k) as i32)
        })
        .sum()
}

/// Noll-normalized Zernike polynomial `Z_j(rho, theta)` on the unit disk.
pub fn zernike(j: usize, rho: f64, theta: f64) -> f64 {
    let (n, m) = noll_to_nm(j);
    let ma = m.unsigned_abs();
    let r = radial(n, ma, rho);
    if m == 0 {
        f64::from(n + 1).sqrt() * r
    } else {
        let norm = (2.0 * f64::from(n + 1)).sqrt();
        if m > 0 {
            norm * r * (f64::from(ma) * theta).cos()
        } else {
            norm * r * (f64::from(ma) * theta).sin()
        }
    }
}

/// The first `L` Noll-ordered Zernike modes sampled on the capture pupil grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ZernikeBasis {
    modes: Vec<RealGrid>,
}

impl ZernikeBasis {
    pub fn count(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, index: usize) -> &RealGrid {
        &self.modes[index]
    }

    pub fn modes(&self) -> &[RealGrid] {
        &self.modes
    }

    pub fn dims(&self) -> (usize, usize) {
        self.modes[0].dims()
    }

    /// `sum_l c_l Z_l` on the grid.
    pub fn phase(&self, coeffs: &[f64]) -> Result<RealGrid> {
        if coeffs.len() != self.count() {
            return Err(FpError::DimensionMismatch {
                expected: (self.count(), 1),
                actual: (coeffs.len(), 1),
            });
        }
        let (rows, cols) = self.dims();
        let mut out = RealGrid::zeros(rows, cols);
        for (mode, &c) in self.modes.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            for (o, z) in out.as_mut_slice().iter_mut().zip(mode.iter()) {
                *o += c * z;
            }
        }
        Ok(out)
    }
}

/// Zernike modes with `rho = |f| / (NA / lambda)`; zero where `rho > 1`.
pub fn zernike_basis(cfg: &OpticalConfig, count: usize) -> Result<ZernikeBasis> {
    if count < 1 {
        return Err(FpError::InvalidModeCount(count));
    }
    let modes = (1..=count)
        .map(|j| {
            Grid::from_fn(cfg.low_rows, cfg.low_cols, |r, c| {
                let (u, v, cut) = normalized_coords(cfg, r, c);
                let rho = (u * u + v * v).sqrt() / cut;
                if rho > 1.0 {
                    0.0
                } else {
                    zernike(j, rho, v.atan2(u))
                }
            })
        })
        .collect();
    Ok(ZernikeBasis { modes })
}

/// `ctf_amp * exp(i * sum_l c_l Z_l)`.
pub fn pupil_from_params(ctf_amp: &RealGrid, coeffs: &[f64], basis: &ZernikeBasis) -> Result<ComplexGrid> {
    let (rows, cols) = basis.dims();
    if ctf_amp.dims() != (rows, cols) {
        return Err(FpError::DimensionMismatch {
            expected: (rows, cols),
            actual: ctf_amp.dims(),
        });
    }
    let phase = basis.phase(coeffs)?;
    ComplexGrid::from_polar(ctf_amp, &phase)
}

/// Round half away from zero.
fn round_away(x: f64) -> i64 {
    x.round() as i64
}

/// Integer `(row, col)` offset of each illumination in the high-resolution
/// spectrum. The window for illumination `n` is centered at
/// `high_center + offset[n]`.
pub fn illumination_offsets(cfg: &OpticalConfig) -> Result<Vec<(i64, i64)>> {
    cfg.validate_scalars()?;
    let (hr, hc) = cfg.high_dims();
    let pix = cfg.high_pixel_um();
    let df_row = 1.0 / (hr as f64 * pix);
    let df_col = 1.0 / (hc as f64 * pix);
    let (cr, cc) = cfg.high_center();
    cfg.illuminations
        .iter()
        .map(|ill| {
            let off = (
                round_away(ill.sy / cfg.wavelength_um / df_row),
                round_away(ill.sx / cfg.wavelength_um / df_col),
            );
            check_window((hr, hc), cr + off.0, cc + off.1, cfg.low_rows, cfg.low_cols)?;
            Ok(off)
        })
        .collect()
}

/// Angular-spectrum defocus phase `z * sqrt(k0^2 - |k|^2)` inside the pupil
/// with the DC value removed; zero outside.
pub fn defocus_phase(cfg: &OpticalConfig, z_um: f64) -> RealGrid {
    let k0 = cfg.wavenumber();
    let pix = cfg.object_pixel_um();
    let support = pupil_support(cfg);
    Grid::from_fn(cfg.low_rows, cfg.low_cols, |r, c| {
        if !support[(r, c)] || z_um == 0.0 {
            return 0.0;
        }
        let kx = 2.0 * PI * (c as f64 - (cfg.low_cols / 2) as f64) / (cfg.low_cols as f64 * pix);
        let ky = 2.0 * PI * (r as f64 - (cfg.low_rows / 2) as f64) / (cfg.low_rows as f64 * pix);
        z_um * ((k0 * k0 - kx * kx - ky * ky).sqrt() - k0)
    })
}
