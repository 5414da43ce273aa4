//! Classical alternating-projection reconstruction with embedded pupil
//! recovery (ePIE).
//!
//! Each step extracts the sub-aperture `phi_l = O(window) * C`, projects it
//! onto the measured modulus to get `phi_h`, then corrects
//!
//! ```text
//! O(window) += alpha * conj(C) / max|C|^2 * (phi_h - phi_l)
//! C         += beta  * conj(W) / max|W|^2 * (phi_h - phi_l)
//! ```
//!
//! where `W` is `phi_h` for [`PupilRule::ExitWave`] (the default) or the
//! pre-update object window for [`PupilRule::ObjectWindow`]. Maxima are taken
//! over the whole grid. The pupil is kept inside the NA support.

use crate::dataset::Dataset;
use crate::error::{FpError, Result};
use crate::field::{crop_window, embed_window, ComplexGrid, EmbedMode};
use crate::model::{ensure_finite, normalize_gauge, spectrum_to_field, ImagingModel, Traversal};

pub use crate::model::ap_project;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PupilRule {
    /// Conjugate of the projected exit wave `phi_h`.
    #[default]
    ExitWave,
    /// Conjugate of the object window before the object update.
    ObjectWindow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpieConfig {
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub update_pupil: bool,
    pub pupil_rule: PupilRule,
    pub traversal: Traversal,
}

impl Default for EpieConfig {
    fn default() -> Self {
        EpieConfig {
            iterations: 20,
            alpha: 1.0,
            beta: 1.0,
            update_pupil: true,
            pupil_rule: PupilRule::ExitWave,
            traversal: Traversal::CenterOut,
        }
    }
}

impl EpieConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(FpError::InvalidConfig("ePIE step sizes must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpieState {
    /// Centered high-resolution spectrum in capture units.
    pub object_spectrum: ComplexGrid,
    /// Centered complex pupil on the capture grid.
    pub pupil: ComplexGrid,
}

impl EpieState {
    pub fn initial(model: &ImagingModel, dataset: &Dataset) -> Result<Self> {
        let (object_spectrum, pupil) = model.initial_estimate(dataset)?;
        Ok(EpieState {
            object_spectrum,
            pupil,
        })
    }
}

/// One ePIE correction using capture `n`.
pub fn epie_step(
    state: &mut EpieState,
    model: &ImagingModel,
    dataset: &Dataset,
    cfg: &EpieConfig,
    n: usize,
) -> Result<()> {
    let (cr, cc) = model.window_center(n);
    let (lr, lc) = model.low_dims();
    let window = crop_window(&state.object_spectrum, cr, cc, lr, lc)?;
    let phi_l = crate::field::hadamard(&window, &state.pupil)?;
    let phi_h = ap_project(&phi_l, &dataset.images[n])?;

    let pupil_max = state.pupil.max_norm_sqr();
    if pupil_max == 0.0 {
        return Err(FpError::DegeneratePupil);
    }

    let diff: Vec<_> = phi_h.iter().zip(phi_l.iter()).map(|(h, l)| h - l).collect();

    let pupil_weight = if cfg.update_pupil && cfg.beta != 0.0 {
        let weight = match cfg.pupil_rule {
            PupilRule::ExitWave => phi_h,
            PupilRule::ObjectWindow => window,
        };
        let weight_max = weight.max_norm_sqr();
        if weight_max == 0.0 {
            return Err(FpError::DegenerateField);
        }
        Some((weight, weight_max))
    } else {
        None
    };

    if cfg.alpha != 0.0 {
        let mut correction = ComplexGrid::zeros(lr, lc);
        let step = cfg.alpha / pupil_max;
        for ((out, d), p) in correction.as_mut_slice().iter_mut().zip(&diff).zip(state.pupil.iter()) {
            *out = p.conj() * d * step;
        }
        embed_window(&mut state.object_spectrum, &correction, cr, cc, EmbedMode::Add)?;
    }

    if let Some((weight, weight_max)) = pupil_weight {
        let step = cfg.beta / weight_max;
        let support = model.support();
        for (((p, d), w), &inside) in state
            .pupil
            .as_mut_slice()
            .iter_mut()
            .zip(&diff)
            .zip(weight.iter())
            .zip(support.iter())
        {
            if inside {
                *p += w.conj() * d * step;
            }
        }
    }
    Ok(())
}

/// `sum_n || sqrt(I_n) - |F^-1{phi_l,n}| ||^2` over the capture grid.
pub fn amplitude_residual(model: &ImagingModel, state: &EpieState, dataset: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..model.len() {
        let phi_l = model.exit_spectrum(&state.object_spectrum, &state.pupil, n)?;
        let field = spectrum_to_field(&phi_l);
        total += field
            .iter()
            .zip(dataset.images[n].iter())
            .map(|(z, &i)| (i.max(0.0).sqrt() - z.norm()).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct EpieOutput {
    pub state: EpieState,
    /// High-resolution spatial object.
    pub object: ComplexGrid,
    pub pupil: ComplexGrid,
    /// Amplitude residual at initialization followed by one entry per iteration.
    pub residual_history: Vec<f64>,
}

/// Runs `cfg.iterations` passes and reports the result with unit mean pupil
/// modulus and zero mean pupil phase slope.
pub fn run_epie(dataset: &Dataset, cfg: &EpieConfig) -> Result<EpieOutput> {
    cfg.validate()?;
    dataset.validate()?;
    let model = ImagingModel::new(&dataset.config)?;
    let mut state = EpieState::initial(&model, dataset)?;
    let order = model.traversal_order(cfg.traversal);
    let mut history = vec![amplitude_residual(&model, &state, dataset)?];
    for _ in 0..cfg.iterations {
        for &n in &order {
            epie_step(&mut state, &model, dataset, cfg, n)?;
        }
        ensure_finite(&state.object_spectrum, "ePIE object spectrum")?;
        ensure_finite(&state.pupil, "ePIE pupil")?;
        history.push(amplitude_residual(&model, &state, dataset)?);
    }
    normalize_gauge(&mut state.object_spectrum, &mut state.pupil, model.support())?;
    Ok(EpieOutput {
        object: model.spectrum_to_object(&state.object_spectrum),
        pupil: state.pupil.clone(),
        state,
        residual_history: history,
    })
}
