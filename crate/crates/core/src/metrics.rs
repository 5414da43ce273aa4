//! Reconstruction quality measures.

use std::fmt;

use num_complex::Complex64;

use crate::error::{FpError, Result};
use crate::field::{ComplexGrid, Grid};
use crate::model::{field_to_spectrum, spectrum_to_field, ImagingModel};

/// Rotates `x` by the global phase that best matches `reference`.
///
/// Returns the aligned field and the applied angle `phi = arg(sum conj(x) * ref)`.
pub fn global_phase_align(x: &ComplexGrid, reference: &ComplexGrid) -> Result<(ComplexGrid, f64)> {
    x.ensure_same_dims(reference)?;
    if reference.energy() == 0.0 {
        return Err(FpError::DegenerateReference);
    }
    let cross: Complex64 = x.iter().zip(reference.iter()).map(|(a, b)| a.conj() * b).sum();
    let phi = if cross.norm() == 0.0 { 0.0 } else { cross.arg() };
    let rot = Complex64::from_polar(1.0, phi);
    Ok((x.map(|z| z * rot), phi))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub rel_err_amp: f64,
    /// Relative error after removing the global phase.
    pub rel_err_complex: f64,
    /// PSNR of amplitudes normalized to the truth's peak; `+inf` for a perfect match.
    pub psnr_amp: f64,
}

impl fmt::Display for Metrics {
    /// `rel_err_complex,rel_err_amp,psnr_amp`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},", self.rel_err_complex, self.rel_err_amp)?;
        if self.psnr_amp.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.psnr_amp)
        }
    }
}

pub fn metrics(recon: &ComplexGrid, truth: &ComplexGrid) -> Result<Metrics> {
    recon.ensure_same_dims(truth)?;
    let truth_energy = truth.energy();
    if truth_energy == 0.0 {
        return Err(FpError::DegenerateReference);
    }
    let (aligned, _) = global_phase_align(recon, truth)?;
    let complex_err: f64 = aligned.iter().zip(truth.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();

    let amp_err: f64 = recon
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a.norm() - b.norm()).powi(2))
        .sum();

    let peak = truth.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mse = amp_err / (peak * peak) / truth.len() as f64;
    let psnr_amp = if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    };

    Ok(Metrics {
        rel_err_amp: (amp_err / truth_energy).sqrt(),
        rel_err_complex: (complex_err / truth_energy).sqrt(),
        psnr_amp,
    })
}

/// Union of all shifted pupil supports on the centered high-resolution spectrum.
pub fn synthetic_aperture(model: &ImagingModel) -> Grid<bool> {
    let (hr, hc) = model.high_dims();
    let (lr, lc) = model.low_dims();
    let support = model.support();
    let mut mask = Grid::filled(hr, hc, false);
    for n in 0..model.len() {
        let (cr, cc) = model.window_center(n);
        let r0 = (cr - (lr / 2) as i64) as usize;
        let c0 = (cc - (lc / 2) as i64) as usize;
        for r in 0..lr {
            for c in 0..lc {
                if support[(r, c)] {
                    mask[(r0 + r, c0 + c)] = true;
                }
            }
        }
    }
    mask
}

/// Zeroes every spectral component outside `mask`.
pub fn lowpass(object: &ComplexGrid, mask: &Grid<bool>) -> Result<ComplexGrid> {
    object.ensure_same_dims(mask)?;
    let mut spectrum = field_to_spectrum(object);
    for (z, &keep) in spectrum.as_mut_slice().iter_mut().zip(mask.iter()) {
        if !keep {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    Ok(spectrum_to_field(&spectrum))
}

/// Metrics after low-pass filtering both objects to the synthetic aperture.
pub fn passband_metrics(recon: &ComplexGrid, truth: &ComplexGrid, model: &ImagingModel) -> Result<Metrics> {
    let mask = synthetic_aperture(model);
    metrics(&lowpass(recon, &mask)?, &lowpass(truth, &mask)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(n: usize, seed: u64) -> ComplexGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn residual(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn align_identity_and_known_rotation() {
        let x = random_grid(8, 1);
        let (a, phi) = global_phase_align(&x, &x).unwrap();
        assert_eq!(phi, 0.0);
        assert_eq!(a, x);

        let rotated = x.map(|z| z * Complex64::from_polar(1.0, 1.3));
        let (a, phi) = global_phase_align(&rotated, &x).unwrap();
        assert!((phi + 1.3).abs() < 1e-12);
        assert!(residual(&a, &x) <= 1e-12);

        assert!(matches!(
            global_phase_align(&x, &ComplexGrid::zeros(8, 8)),
            Err(FpError::DegenerateReference)
        ));
    }

    #[test]
    fn closed_form_beats_grid_search() {
        for seed in 0..5 {
            let x = random_grid(8, seed);
            let r = random_grid(8, seed + 100);
            let (a, _) = global_phase_align(&x, &r).unwrap();
            let best = residual(&a, &r);
            let grid_best = (0..3600)
                .map(|k| {
                    let rot = Complex64::from_polar(1.0, k as f64 * std::f64::consts::TAU / 3600.0);
                    residual(&x.map(|z| z * rot), &r)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best <= grid_best + 1e-12);
        }
    }

    #[test]
    fn metric_cases() {
        let t = random_grid(16, 7);
        let m = metrics(&t, &t).unwrap();
        assert_eq!(m.rel_err_amp, 0.0);
        assert_eq!(m.rel_err_complex, 0.0);
        assert!(m.psnr_amp.is_infinite());
        assert!(m.to_string().ends_with(",inf"));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let phi: f64 = rng.random_range(-10.0..10.0);
            let rotated = t.map(|z| z * Complex64::from_polar(1.0, phi));
            assert!(metrics(&rotated, &t).unwrap().rel_err_complex <= 1e-12);
        }

        let scaled = t.map(|z| z * 1.1);
        let m = metrics(&scaled, &t).unwrap();
        assert!((m.rel_err_complex - 0.1).abs() <= 1e-12);
        assert!((m.rel_err_amp - 0.1).abs() <= 1e-12);
    }

    #[test]
    fn aligning_never_increases_error() {
        for seed in 0..20 {
            let x = random_grid(8, seed);
            let t = random_grid(8, seed + 50);
            let raw = residual(&x, &t) / t.energy().sqrt();
            assert!(metrics(&x, &t).unwrap().rel_err_complex <= raw + 1e-15);
        }
    }
}
