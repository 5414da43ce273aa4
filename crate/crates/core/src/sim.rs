//! Synthetic capture generation.
//!
//! Noise uses ChaCha8 seeded per image with `seed ^ image_index`, so results
//! are bit-reproducible and independent of the order images are produced in.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::error::{FpError, Result};
use crate::field::{ComplexGrid, Grid, RealGrid};
use crate::model::{object_to_spectrum, spectrum_to_field, ImagingModel};
use crate::optics::{defocus_phase, make_ctf, OpticalConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// High-resolution transmission `o(r)`.
    pub object_spatial: ComplexGrid,
    /// DC-centered pupil on the capture grid.
    pub pupil: ComplexGrid,
}

impl GroundTruth {
    /// Object from amplitude/phase images with an aberration-free or
    /// defocused pupil.
    pub fn new(cfg: &OpticalConfig, amplitude: &RealGrid, phase: &RealGrid, defocus_um: f64) -> Result<Self> {
        if amplitude.dims() != cfg.high_dims() {
            return Err(FpError::DimensionMismatch {
                expected: cfg.high_dims(),
                actual: amplitude.dims(),
            });
        }
        let object_spatial = ComplexGrid::from_polar(amplitude, phase)?;
        let ctf = make_ctf(cfg);
        let theta = defocus_phase(cfg, defocus_um);
        let pupil = Grid::from_vec(
            ctf.rows(),
            ctf.cols(),
            ctf.iter()
                .zip(theta.iter())
                .map(|(c, &t)| c * Complex64::from_polar(1.0, t))
                .collect(),
        )?;
        Ok(GroundTruth { object_spatial, pupil })
    }

    pub fn spectrum(&self) -> ComplexGrid {
        object_to_spectrum(&self.object_spatial, self.pupil.dims())
    }

    fn check_dims(&self) -> Result<()> {
        let (hr, hc) = self.object_spatial.dims();
        let (lr, lc) = self.pupil.dims();
        if lr == 0 || lc == 0 || hr % lr != 0 || hc % lc != 0 || hr / lr != hc / lc {
            return Err(FpError::DimensionMismatch {
                expected: (lr, lc),
                actual: (hr, hc),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimOptions {
    pub saturation: Option<f64>,
    /// Standard deviation of additive Gaussian intensity noise; 0 disables it.
    pub gaussian_noise_sigma: f64,
    pub seed: u64,
}

fn capture(spectrum: &ComplexGrid, pupil: &ComplexGrid, center: (i64, i64)) -> Result<RealGrid> {
    let (lr, lc) = pupil.dims();
    let mut window = crate::field::crop_window(spectrum, center.0, center.1, lr, lc)?;
    for (w, p) in window.as_mut_slice().iter_mut().zip(pupil.iter()) {
        *w *= p;
    }
    Ok(spectrum_to_field(&window).map(|z| z.norm_sqr()))
}

/// Noise-free intensity `|F^-1{O(k + k_n) C(k)}|^2` for one spectral offset.
pub fn forward_capture(gt: &GroundTruth, offset: (i64, i64)) -> Result<RealGrid> {
    gt.check_dims()?;
    let (hr, hc) = gt.object_spatial.dims();
    let spectrum = gt.spectrum();
    capture(&spectrum, &gt.pupil, ((hr / 2) as i64 + offset.0, (hc / 2) as i64 + offset.1))
}

/// One capture per illumination in manifest order: noise, clamp at zero, then
/// saturation clipping.
pub fn simulate_dataset(gt: &GroundTruth, cfg: &OpticalConfig, opts: &SimOptions) -> Result<Dataset> {
    gt.check_dims()?;
    if gt.object_spatial.dims() != cfg.high_dims() || gt.pupil.dims() != cfg.low_dims() {
        return Err(FpError::DimensionMismatch {
            expected: cfg.high_dims(),
            actual: gt.object_spatial.dims(),
        });
    }
    if !(opts.gaussian_noise_sigma >= 0.0) {
        return Err(FpError::InvalidConfig("noise sigma must be non-negative".into()));
    }
    let model = ImagingModel::new(cfg)?;
    let spectrum = gt.spectrum();
    let mut images = Vec::with_capacity(model.len());
    for n in 0..model.len() {
        let mut img = capture(&spectrum, &gt.pupil, model.window_center(n))?;
        if opts.gaussian_noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ n as u64);
            for v in img.as_mut_slice() {
                let e: f64 = rng.sample(StandardNormal);
                *v = (*v + opts.gaussian_noise_sigma * e).max(0.0);
            }
        }
        if let Some(level) = opts.saturation {
            for v in img.as_mut_slice() {
                *v = v.min(level);
            }
        }
        images.push(img);
    }
    Dataset::new(cfg.clone(), images, opts.saturation)
}

/// Clips the `fraction` of captures with the highest peak intensity at
/// `level_ratio` times their own peak. Returns the clipped indices.
pub fn overexpose_brightest(dataset: &mut Dataset, fraction: f64, level_ratio: f64) -> Vec<usize> {
    let count = ((dataset.len() as f64) * fraction).round() as usize;
    let peaks: Vec<f64> = dataset.images.iter().map(|img| img.min_max().1).collect();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| peaks[b].total_cmp(&peaks[a]).then(a.cmp(&b)));
    let chosen: Vec<usize> = order.into_iter().take(count).collect();
    for &n in &chosen {
        let level = peaks[n] * level_ratio;
        for v in dataset.images[n].as_mut_slice() {
            *v = v.min(level);
        }
    }
    chosen
}

fn smoothstep(edge: f64, x: f64) -> f64 {
    let t = (0.5 - x / edge).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Deterministic test object: soft-edged disks over a smooth random
/// background. Amplitude lies in `[0.2, 1]`, phase in `[-1.2, 1.2]` rad.
pub fn phantom(rows: usize, cols: usize, seed: u64) -> (RealGrid, RealGrid) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = |base: f64, disk_weight: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
        let mut g = RealGrid::filled(rows, cols, base);
        let scale = rows.min(cols) as f64;
        // smooth background from a handful of low-frequency cosines
        for _ in 0..8 {
            let fy: f64 = rng.random_range(-4.0..4.0) / rows as f64;
            let fx: f64 = rng.random_range(-4.0..4.0) / cols as f64;
            let ph: f64 = rng.random_range(0.0..2.0 * PI);
            let a: f64 = rng.random_range(0.02..0.06);
            for r in 0..rows {
                for c in 0..cols {
                    g[(r, c)] += a * (2.0 * PI * (fy * r as f64 + fx * c as f64) + ph).cos();
                }
            }
        }
        for _ in 0..14 {
            let cy = rng.random_range(0.0..rows as f64);
            let cx = rng.random_range(0.0..cols as f64);
            let rad = rng.random_range(0.03..0.14) * scale;
            let h = disk_weight * rng.random_range(-1.0..1.0);
            for r in 0..rows {
                for c in 0..cols {
                    let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt() - rad;
                    g[(r, c)] += h * smoothstep(3.0, d);
                }
            }
        }
        g.map(|&v| v.clamp(lo, hi))
    };
    let amp = layer(0.65, 0.3, 0.2, 1.0, &mut rng);
    let phase = layer(0.0, 0.8, -1.2, 1.2, &mut rng);
    (amp, phase)
}
