#![allow(dead_code)]

use fpm::field::Grid;
use fpm::optics::{led_grid, OpticalConfig};
use fpm::pgnn::{Gradients, Problem, PupilGradient, PupilParams, ReconState};
use fpm::sim::{overexpose_brightest, phantom, simulate_dataset, GroundTruth, SimOptions};
use fpm::{Dataset, ImagingModel};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PHANTOM_SEED: u64 = 1;

pub struct Scene {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    pub model: ImagingModel,
}

/// 128x128 object, 32x32 captures, 15x15 LEDs.
pub fn reference_scene(defocus_um: f64, overexpose: bool) -> Scene {
    let cfg = OpticalConfig::reference_setup();
    let (amp, phase) = phantom(128, 128, PHANTOM_SEED);
    let truth = GroundTruth::new(&cfg, &amp, &phase, defocus_um).unwrap();
    let mut dataset = simulate_dataset(&truth, &cfg, &SimOptions::default()).unwrap();
    if overexpose {
        overexpose_brightest(&mut dataset, 0.1, 0.5);
    }
    Scene {
        model: ImagingModel::new(&cfg).unwrap(),
        dataset,
        truth,
    }
}

pub fn small_scene(defocus_um: f64) -> Scene {
    let cfg = OpticalConfig {
        low_rows: 16,
        low_cols: 16,
        upsample: 2,
        illuminations: led_grid(5, 0.05),
        ..OpticalConfig::reference_setup()
    };
    let (amp, phase) = phantom(32, 32, PHANTOM_SEED);
    let truth = GroundTruth::new(&cfg, &amp, &phase, defocus_um).unwrap();
    let dataset = simulate_dataset(&truth, &cfg, &SimOptions::default()).unwrap();
    Scene {
        model: ImagingModel::new(&cfg).unwrap(),
        dataset,
        truth,
    }
}

/// 8x8 captures on a 16x16 object with random intensities.
pub fn random_tiny_dataset(seed: u64) -> Dataset {
    let cfg = OpticalConfig {
        na: 0.15,
        low_rows: 8,
        low_cols: 8,
        upsample: 2,
        illuminations: led_grid(3, 0.05),
        ..OpticalConfig::reference_setup()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..cfg.illuminations.len())
        .map(|_| Grid::from_fn(8, 8, |_, _| rng.random_range(0.1..2.0)))
        .collect();
    Dataset::new(cfg, images, None).unwrap()
}

/// Initial state of `problem` with every parameter group randomized.
pub fn random_state(problem: &Problem, seed: u64) -> ReconState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919) + 3);
    let mut state = problem.initial_state().unwrap();
    for z in state.object_spectrum.as_mut_slice() {
        *z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let support = problem.model().support().clone();
    match &mut state.pupil {
        PupilParams::Free(p) => {
            for (z, &inside) in p.as_mut_slice().iter_mut().zip(support.iter()) {
                if inside {
                    *z = Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(-3.0..3.0));
                }
            }
        }
        PupilParams::Zernike { amp, coeffs } => {
            for a in amp.as_mut_slice() {
                *a *= rng.random_range(0.5..1.5);
            }
            for c in coeffs.iter_mut() {
                *c = rng.random_range(-0.5..0.5);
            }
        }
    }
    state
}

pub const FD_STEP: f64 = 1e-6;

/// Worst excess of `|analytic - fd|` over `rel_tol * max(|analytic|, |fd|)`,
/// allowing for the rounding error of the central difference itself.
#[derive(Debug, Default)]
pub struct FdReport {
    pub components: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

impl FdReport {
    fn compare(&mut self, analytic: f64, fd: f64, loss: f64, rel_tol: f64, what: impl FnOnce() -> String) {
        self.components += 1;
        let rounding = 64.0 * f64::EPSILON * loss.abs() / FD_STEP;
        let err = (analytic - fd).abs();
        let scale = analytic.abs().max(fd.abs());
        if scale > rounding / rel_tol {
            self.worst_rel = self.worst_rel.max(err / scale);
        }
        if err > rel_tol * scale + rounding {
            self.failures.push(format!("{}: analytic {analytic} vs fd {fd}", what()));
        }
    }
}

fn central_difference(problem: &Problem, state: &ReconState, n: usize, bump: impl Fn(&mut ReconState, f64)) -> f64 {
    let mut plus = state.clone();
    bump(&mut plus, FD_STEP);
    let mut minus = state.clone();
    bump(&mut minus, -FD_STEP);
    (problem.total_loss(&plus, n).unwrap() - problem.total_loss(&minus, n).unwrap()) / (2.0 * FD_STEP)
}

/// Checks every gradient component of capture `n` against central differences.
pub fn check_all_gradients(problem: &Problem, state: &ReconState, n: usize, rel_tol: f64, report: &mut FdReport) {
    let (loss, grads): (f64, Gradients) = problem.gradients(state, n).unwrap();
    let g_obj = grads.object(state.object_spectrum.dims()).unwrap();
    for (i, g) in g_obj.iter().enumerate() {
        let re = central_difference(problem, state, n, |s, h| s.object_spectrum.as_mut_slice()[i].re += h);
        let im = central_difference(problem, state, n, |s, h| s.object_spectrum.as_mut_slice()[i].im += h);
        report.compare(g.re, re, loss, rel_tol, || format!("object re {i}"));
        report.compare(g.im, im, loss, rel_tol, || format!("object im {i}"));
    }
    let support = problem.model().support();
    match &grads.pupil {
        PupilGradient::Free(g) => {
            for (i, (g, &inside)) in g.iter().zip(support.iter()).enumerate() {
                if !inside {
                    continue;
                }
                let bump = |imag: bool| {
                    move |s: &mut ReconState, h: f64| {
                        if let PupilParams::Free(p) = &mut s.pupil {
                            let z = &mut p.as_mut_slice()[i];
                            if imag {
                                z.im += h
                            } else {
                                z.re += h
                            }
                        }
                    }
                };
                let re = central_difference(problem, state, n, bump(false));
                let im = central_difference(problem, state, n, bump(true));
                report.compare(g.re, re, loss, rel_tol, || format!("pupil re {i}"));
                report.compare(g.im, im, loss, rel_tol, || format!("pupil im {i}"));
            }
        }
        PupilGradient::Zernike { amp, coeffs } => {
            for (i, (&g, &inside)) in amp.iter().zip(support.iter()).enumerate() {
                if !inside {
                    continue;
                }
                let d = central_difference(problem, state, n, |s, h| {
                    if let PupilParams::Zernike { amp, .. } = &mut s.pupil {
                        amp.as_mut_slice()[i] += h;
                    }
                });
                report.compare(g, d, loss, rel_tol, || format!("pupil amp {i}"));
            }
            for (l, &g) in coeffs.iter().enumerate() {
                let d = central_difference(problem, state, n, |s, h| {
                    if let PupilParams::Zernike { coeffs, .. } = &mut s.pupil {
                        coeffs[l] += h;
                    }
                });
                report.compare(g, d, loss, rel_tol, || format!("zernike {l}"));
            }
        }
    }
}
