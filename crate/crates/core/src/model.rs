//! Discrete forward model shared by the simulator and both solvers.
//!
//! Object spectra are kept DC-centered on the high-resolution grid and in
//! *capture units*: the raw DFT of the high-resolution object multiplied by
//! `(N_low / N_high)^2`. In those units a window cropped from the spectrum,
//! multiplied by the pupil and inverse-transformed on the capture grid is
//! directly the low-resolution exit wave, so a uniform unit object produces
//! unit-intensity captures at any upsampling factor.

use num_complex::Complex64;

use crate::dataset::{central_index, Dataset};
use crate::error::{FpError, Result};
use crate::field::{
    center_shift, crop_window, dft2, embed_window, idft2, inverse_center_shift, unit_phasor, ComplexGrid,
    EmbedMode, Grid, RealGrid,
};
use crate::optics::{illumination_offsets, make_ctf, pupil_support, OpticalConfig};

/// Order in which captures are visited within one pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Traversal {
    ManifestOrder,
    /// Increasing spectral offset magnitude, manifest order on ties.
    #[default]
    CenterOut,
}

/// Precomputed geometry for one optical configuration.
#[derive(Clone, Debug)]
pub struct ImagingModel {
    config: OpticalConfig,
    offsets: Vec<(i64, i64)>,
    ctf: ComplexGrid,
    support: Grid<bool>,
}

impl ImagingModel {
    pub fn new(config: &OpticalConfig) -> Result<Self> {
        config.validate()?;
        Ok(ImagingModel {
            offsets: illumination_offsets(config)?,
            ctf: make_ctf(config),
            support: pupil_support(config),
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &OpticalConfig {
        &self.config
    }

    pub fn offsets(&self) -> &[(i64, i64)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn ctf(&self) -> &ComplexGrid {
        &self.ctf
    }

    pub fn support(&self) -> &Grid<bool> {
        &self.support
    }

    pub fn low_dims(&self) -> (usize, usize) {
        self.config.low_dims()
    }

    pub fn high_dims(&self) -> (usize, usize) {
        self.config.high_dims()
    }

    /// Window center of capture `n` in the centered high-resolution spectrum.
    pub fn window_center(&self, n: usize) -> (i64, i64) {
        let (cr, cc) = self.config.high_center();
        let (dr, dc) = self.offsets[n];
        (cr + dr, cc + dc)
    }

    /// `(N_low / N_high)^2`, the amplitude factor between raw and capture-unit spectra.
    pub fn field_scale(&self) -> f64 {
        field_scale(self.low_dims(), self.high_dims())
    }

    pub fn object_to_spectrum(&self, object: &ComplexGrid) -> ComplexGrid {
        object_to_spectrum(object, self.low_dims())
    }

    pub fn spectrum_to_object(&self, spectrum: &ComplexGrid) -> ComplexGrid {
        spectrum_to_object(spectrum, self.low_dims())
    }

    pub fn traversal_order(&self, traversal: Traversal) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if traversal == Traversal::CenterOut {
            order.sort_by_key(|&n| {
                let (r, c) = self.offsets[n];
                r * r + c * c
            });
        }
        order
    }

    /// `phi_l = O(window_n) * C` in the centered capture-grid layout.
    pub fn exit_spectrum(&self, spectrum: &ComplexGrid, pupil: &ComplexGrid, n: usize) -> Result<ComplexGrid> {
        let (cr, cc) = self.window_center(n);
        let (lr, lc) = self.low_dims();
        let mut window = crop_window(spectrum, cr, cc, lr, lc)?;
        window.ensure_same_dims(pupil)?;
        for (w, p) in window.as_mut_slice().iter_mut().zip(pupil.iter()) {
            *w *= p;
        }
        Ok(window)
    }

    /// Sum over all captures of `||ap_project(phi_l) - phi_l||^2`.
    pub fn dataset_loss(&self, spectrum: &ComplexGrid, pupil: &ComplexGrid, dataset: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for n in 0..self.len() {
            let phi_l = self.exit_spectrum(spectrum, pupil, n)?;
            let phi_h = ap_project(&phi_l, &dataset.images[n])?;
            total += residual_energy(&phi_h, &phi_l);
        }
        Ok(total)
    }

    /// Up-sampled square root of the central capture with zero phase, and the
    /// binary CTF. Both solvers start here.
    pub fn initial_estimate(&self, dataset: &Dataset) -> Result<(ComplexGrid, ComplexGrid)> {
        let central = &dataset.images[central_index(&self.config)];
        central.ensure_same_dims(&self.ctf)?;
        let amp = central.map(|&v| Complex64::new(v.max(0.0).sqrt(), 0.0));
        let low_spectrum = center_shift(&dft2(&amp));
        let (hr, hc) = self.high_dims();
        let (cr, cc) = self.config.high_center();
        let mut spectrum = ComplexGrid::zeros(hr, hc);
        embed_window(&mut spectrum, &low_spectrum, cr, cc, EmbedMode::Replace)?;
        Ok((spectrum, self.ctf.clone()))
    }
}

pub fn field_scale(low: (usize, usize), high: (usize, usize)) -> f64 {
    (low.0 * low.1) as f64 / (high.0 * high.1) as f64
}

/// High-resolution object to its centered capture-unit spectrum.
pub fn object_to_spectrum(object: &ComplexGrid, low_dims: (usize, usize)) -> ComplexGrid {
    let mut s = center_shift(&dft2(object));
    s.scale(field_scale(low_dims, object.dims()));
    s
}

/// Inverse of [`object_to_spectrum`].
pub fn spectrum_to_object(spectrum: &ComplexGrid, low_dims: (usize, usize)) -> ComplexGrid {
    let mut o = idft2(&inverse_center_shift(spectrum));
    o.scale(1.0 / field_scale(low_dims, spectrum.dims()));
    o
}

/// Centered spectrum to spatial field on the same grid.
pub fn spectrum_to_field(spectrum: &ComplexGrid) -> ComplexGrid {
    idft2(&inverse_center_shift(spectrum))
}

pub fn field_to_spectrum(field: &ComplexGrid) -> ComplexGrid {
    center_shift(&dft2(field))
}

/// Amplitude-replacement projection on a centered spectrum: keeps the phase
/// of the spatial field and imposes `sqrt(measured)` as its modulus. Zero
/// samples take phase `0`.
pub fn ap_project(phi_l: &ComplexGrid, measured: &RealGrid) -> Result<ComplexGrid> {
    phi_l.ensure_same_dims(measured)?;
    let field = spectrum_to_field(phi_l);
    let projected = Grid::from_vec(
        field.rows(),
        field.cols(),
        field
            .iter()
            .zip(measured.iter())
            .map(|(&z, &i)| unit_phasor(z) * i.max(0.0).sqrt())
            .collect(),
    )?;
    Ok(field_to_spectrum(&projected))
}

/// Intensity-preserving freedom shared by object and pupil: a real scale and
/// a linear phase ramp (radians per spectral bin) that moves between the
/// pupil and the object spectrum without changing any capture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gauge {
    pub scale: f64,
    pub ramp_row: f64,
    pub ramp_col: f64,
}

impl Gauge {
    pub const IDENTITY: Gauge = Gauge {
        scale: 1.0,
        ramp_row: 0.0,
        ramp_col: 0.0,
    };
}

/// Mean pupil modulus over `support` and the mean phase step between
/// neighbouring in-support bins along each axis.
pub fn estimate_gauge(pupil: &ComplexGrid, support: &Grid<bool>) -> Result<Gauge> {
    pupil.ensure_same_dims(support)?;
    let (rows, cols) = pupil.dims();
    let mut modulus = 0.0;
    let mut count = 0usize;
    let mut along_row = Complex64::new(0.0, 0.0);
    let mut along_col = Complex64::new(0.0, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            if !support[(r, c)] {
                continue;
            }
            let z = pupil[(r, c)];
            modulus += z.norm();
            count += 1;
            if r + 1 < rows && support[(r + 1, c)] {
                along_row += pupil[(r + 1, c)] * z.conj();
            }
            if c + 1 < cols && support[(r, c + 1)] {
                along_col += pupil[(r, c + 1)] * z.conj();
            }
        }
    }
    if count == 0 || modulus == 0.0 {
        return Err(FpError::DegeneratePupil);
    }
    let angle = |z: Complex64| if z.norm() == 0.0 { 0.0 } else { z.arg() };
    Ok(Gauge {
        scale: modulus / count as f64,
        ramp_row: angle(along_row),
        ramp_col: angle(along_col),
    })
}

/// Divides the pupil by `gauge` and multiplies the object spectrum by it, so
/// every capture keeps its intensity.
pub fn remove_gauge(spectrum: &mut ComplexGrid, pupil: &mut ComplexGrid, gauge: &Gauge) {
    if *gauge == Gauge::IDENTITY {
        return;
    }
    let ramp = |g: &mut ComplexGrid, sign: f64, factor: f64| {
        let (rows, cols) = g.dims();
        let (r0, c0) = ((rows / 2) as f64, (cols / 2) as f64);
        for r in 0..rows {
            for c in 0..cols {
                let theta = gauge.ramp_row * (r as f64 - r0) + gauge.ramp_col * (c as f64 - c0);
                let z = &mut g.as_mut_slice()[r * cols + c];
                *z *= Complex64::from_polar(factor, sign * theta);
            }
        }
    };
    ramp(pupil, -1.0, 1.0 / gauge.scale);
    ramp(spectrum, 1.0, gauge.scale);
}

/// Brings a reconstruction to unit mean pupil modulus and zero mean pupil
/// phase slope. Returns the gauge that was removed.
pub fn normalize_gauge(spectrum: &mut ComplexGrid, pupil: &mut ComplexGrid, support: &Grid<bool>) -> Result<Gauge> {
    let gauge = estimate_gauge(pupil, support)?;
    remove_gauge(spectrum, pupil, &gauge);
    Ok(gauge)
}

pub fn residual_energy(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum()
}

pub fn ensure_finite(g: &ComplexGrid, what: &str) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(FpError::NonFinite(what.to_string()))
    }
}
