//! Gradient-descent reconstruction over a fixed forward graph.
//!
//! For capture `n` the graph computes `phi_l = O(window_n) * C`, projects it
//! onto the measured modulus to get the target `phi_h` (no gradient flows
//! through the target) and scores `sum |phi_h - phi_l|^2`. Optional total
//! variation terms act on the amplitude and wrapped phase of the current
//! high-resolution object. The pupil is either a free complex grid or a real
//! amplitude times `exp(i sum c_l Z_l)`.
//!
//! Training runs in stages: odd stages move the object spectrum, even stages
//! the pupil. Each epoch takes one Adam step per capture.
//!
//! Gradients use the real convention `dL/d(re) + i dL/d(im)`.

pub mod adam;
pub mod tv;

use num_complex::Complex64;

use crate::dataset::Dataset;
use crate::error::{FpError, Result};
use crate::field::{
    center_shift, crop_window, dft2, embed_window, wrap_phase, ComplexGrid, EmbedMode, Grid, RealGrid,
};
use crate::model::{
    ap_project, ensure_finite, estimate_gauge, remove_gauge, residual_energy, Gauge, ImagingModel, Traversal,
};
use crate::optics::{pupil_from_params, zernike_basis, ZernikeBasis};

use adam::{adam_step, adam_step_complex, AdamMoments, AdamParams};
use tv::{tv_grad, tv_value};

/// Guard on the object modulus when differentiating amplitude and phase.
const MODULUS_FLOOR: f64 = 1e-12;

/// Which groups move in even-numbered stages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Schedule {
    /// Odd stages object, even stages pupil.
    #[default]
    Alternate,
    /// Every stage updates only the object; the pupil stays at its initial value.
    ObjectOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgnnConfig {
    pub stages: usize,
    pub epochs_per_stage: usize,
    pub lr_object: f64,
    pub lr_pupil_amp: f64,
    pub lr_zern: f64,
    /// Learning rates are multiplied by `lr_decay^e` in epoch `e` (0-based, counted across stages).
    pub lr_decay: f64,
    pub tv_alpha1: f64,
    pub tv_alpha2: f64,
    pub tv_eta: f64,
    pub zernike_modes: usize,
    pub use_zernike: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub traversal: Traversal,
    pub schedule: Schedule,
    /// Recorded for reproducibility; the solver itself draws no random numbers.
    pub seed: u64,
}

impl Default for PgnnConfig {
    fn default() -> Self {
        PgnnConfig {
            stages: 10,
            epochs_per_stage: 5,
            lr_object: 1.0,
            lr_pupil_amp: 1e-6,
            lr_zern: 3e-2,
            lr_decay: 0.9,
            tv_alpha1: 0.0,
            tv_alpha2: 0.0,
            tv_eta: 1.0,
            zernike_modes: 15,
            use_zernike: true,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-2,
            traversal: Traversal::CenterOut,
            schedule: Schedule::Alternate,
            seed: 0,
        }
    }
}

impl PgnnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(FpError::InvalidConfig(msg.to_string()));
        if self.epochs_per_stage < 1 {
            return bad("epochs_per_stage must be at least 1");
        }
        if !(self.lr_object > 0.0 && self.lr_pupil_amp > 0.0 && self.lr_zern > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.tv_alpha1 >= 0.0 && self.tv_alpha2 >= 0.0) {
            return bad("TV weights must be non-negative");
        }
        if !(self.tv_eta > 0.0) {
            return bad("tv_eta must be positive");
        }
        if self.use_zernike && self.zernike_modes < 1 {
            return Err(FpError::InvalidModeCount(self.zernike_modes));
        }
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(unit(self.adam_beta1) && unit(self.adam_beta2)) {
            return bad("Adam betas must lie in (0, 1)");
        }
        if !(self.adam_eps >= 0.0) {
            return bad("adam_eps must be non-negative");
        }
        Ok(())
    }

    fn uses_tv(&self) -> bool {
        self.tv_alpha1 > 0.0 || self.tv_alpha2 > 0.0
    }

    fn adam(&self, lr: f64) -> AdamParams {
        AdamParams {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PupilParams {
    /// Unconstrained complex pupil on the capture grid.
    Free(ComplexGrid),
    /// `amp * exp(i sum c_l Z_l)`.
    Zernike { amp: RealGrid, coeffs: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconState {
    /// Centered high-resolution spectrum in capture units.
    pub object_spectrum: ComplexGrid,
    pub pupil: PupilParams,
    pub object_moments: AdamMoments,
    /// Moments of the free pupil or of the Zernike amplitude.
    pub pupil_moments: AdamMoments,
    pub zern_moments: AdamMoments,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PupilGradient {
    Free(ComplexGrid),
    Zernike { amp: RealGrid, coeffs: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// Data-term gradient on the capture window.
    pub window: ComplexGrid,
    pub window_center: (i64, i64),
    /// TV gradient on the whole spectrum, when TV is active.
    pub object_tv: Option<ComplexGrid>,
    pub pupil: PupilGradient,
}

impl Gradients {
    /// Full-grid object spectrum gradient.
    pub fn object(&self, dims: (usize, usize)) -> Result<ComplexGrid> {
        let mut g = match &self.object_tv {
            Some(tv) => tv.clone(),
            None => ComplexGrid::zeros(dims.0, dims.1),
        };
        let (cr, cc) = self.window_center;
        embed_window(&mut g, &self.window, cr, cc, EmbedMode::Add)?;
        Ok(g)
    }
}

/// Result of one forward evaluation for one capture.
#[derive(Clone, Debug)]
pub struct Vaiu {
    pub phi_l: ComplexGrid,
    pub phi_h: ComplexGrid,
    pub data_loss: f64,
}

/// Amplitude and phase TV of the current spatial object with their gradients.
struct TvTerms {
    value: f64,
    spectrum_grad: ComplexGrid,
}

/// Bundles the dataset, geometry and config a reconstruction runs against.
pub struct Problem<'a> {
    model: ImagingModel,
    dataset: &'a Dataset,
    basis: Option<ZernikeBasis>,
    config: PgnnConfig,
}

impl<'a> Problem<'a> {
    pub fn new(dataset: &'a Dataset, config: &PgnnConfig) -> Result<Self> {
        config.validate()?;
        dataset.validate()?;
        let model = ImagingModel::new(&dataset.config)?;
        let basis = if config.use_zernike {
            Some(zernike_basis(&dataset.config, config.zernike_modes)?)
        } else {
            None
        };
        Ok(Problem {
            model,
            dataset,
            basis,
            config: config.clone(),
        })
    }

    pub fn model(&self) -> &ImagingModel {
        &self.model
    }

    pub fn config(&self) -> &PgnnConfig {
        &self.config
    }

    pub fn basis(&self) -> Option<&ZernikeBasis> {
        self.basis.as_ref()
    }

    /// Same starting point as ePIE; the Zernike pupil starts flat with the CTF amplitude.
    pub fn initial_state(&self) -> Result<ReconState> {
        let (object_spectrum, ctf) = self.model.initial_estimate(self.dataset)?;
        let (lr, lc) = self.model.low_dims();
        let (hr, hc) = self.model.high_dims();
        let (pupil, pupil_len) = match &self.basis {
            Some(basis) => (
                PupilParams::Zernike {
                    amp: ctf.map(|z| z.re),
                    coeffs: vec![0.0; basis.count()],
                },
                lr * lc,
            ),
            None => (PupilParams::Free(ctf), 2 * lr * lc),
        };
        let zern_len = self.basis.as_ref().map_or(0, ZernikeBasis::count);
        Ok(ReconState {
            object_spectrum,
            pupil,
            object_moments: AdamMoments::new(2 * hr * hc),
            pupil_moments: AdamMoments::new(pupil_len),
            zern_moments: AdamMoments::new(zern_len),
        })
    }

    /// Complex pupil described by the state.
    pub fn pupil(&self, state: &ReconState) -> Result<ComplexGrid> {
        match (&state.pupil, &self.basis) {
            (PupilParams::Free(p), _) => Ok(p.clone()),
            (PupilParams::Zernike { amp, coeffs }, Some(basis)) => pupil_from_params(amp, coeffs, basis),
            (PupilParams::Zernike { .. }, None) => Err(FpError::InvalidConfig(
                "Zernike pupil parameters without a Zernike basis".into(),
            )),
        }
    }

    fn window_center(&self, n: usize) -> Result<(i64, i64)> {
        if n >= self.model.len() {
            return Err(FpError::InvalidConfig(format!(
                "capture index {n} out of range for {} captures",
                self.model.len()
            )));
        }
        Ok(self.model.window_center(n))
    }

    fn forward_with(&self, state: &ReconState, pupil: &ComplexGrid, n: usize) -> Result<(ComplexGrid, Vaiu)> {
        let (cr, cc) = self.window_center(n)?;
        let (lr, lc) = self.model.low_dims();
        let window = crop_window(&state.object_spectrum, cr, cc, lr, lc)?;
        let phi_l = crate::field::hadamard(&window, pupil)?;
        let phi_h = ap_project(&phi_l, &self.dataset.images[n])?;
        let data_loss = residual_energy(&phi_h, &phi_l);
        Ok((
            window,
            Vaiu {
                phi_l,
                phi_h,
                data_loss,
            },
        ))
    }

    pub fn vaiu_forward(&self, state: &ReconState, n: usize) -> Result<Vaiu> {
        let pupil = self.pupil(state)?;
        Ok(self.forward_with(state, &pupil, n)?.1)
    }

    /// Weighted TV of the object amplitude and phase.
    pub fn tv_loss(&self, state: &ReconState) -> f64 {
        if !self.config.uses_tv() {
            return 0.0;
        }
        let o = self.model.spectrum_to_object(&state.object_spectrum);
        let eta = self.config.tv_eta;
        let mut total = 0.0;
        if self.config.tv_alpha1 > 0.0 {
            total += self.config.tv_alpha1 * tv_value(&o.map(|z| z.norm()), eta);
        }
        if self.config.tv_alpha2 > 0.0 {
            total += self.config.tv_alpha2 * tv_value(&o.map(|z| wrap_phase(z.arg())), eta);
        }
        total
    }

    fn tv_terms(&self, state: &ReconState) -> TvTerms {
        let cfg = &self.config;
        let o = self.model.spectrum_to_object(&state.object_spectrum);
        let amp = o.map(|z| z.norm());
        let phase = o.map(|z| wrap_phase(z.arg()));
        let mut value = 0.0;
        let mut g_spatial = ComplexGrid::zeros(o.rows(), o.cols());
        if cfg.tv_alpha1 > 0.0 {
            value += cfg.tv_alpha1 * tv_value(&amp, cfg.tv_eta);
            let g = tv_grad(&amp, cfg.tv_eta);
            for ((out, z), &ga) in g_spatial.as_mut_slice().iter_mut().zip(o.iter()).zip(g.iter()) {
                *out += z * (cfg.tv_alpha1 * ga / z.norm().max(MODULUS_FLOOR));
            }
        }
        if cfg.tv_alpha2 > 0.0 {
            value += cfg.tv_alpha2 * tv_value(&phase, cfg.tv_eta);
            let g = tv_grad(&phase, cfg.tv_eta);
            for ((out, z), &gp) in g_spatial.as_mut_slice().iter_mut().zip(o.iter()).zip(g.iter()) {
                let m = z.norm().max(MODULUS_FLOOR);
                *out += Complex64::i() * z * (cfg.tv_alpha2 * gp / (m * m));
            }
        }
        // adjoint of spectrum -> object
        let mut spectrum_grad = center_shift(&dft2(&g_spatial));
        spectrum_grad.scale(1.0 / (self.model.field_scale() * o.len() as f64));
        TvTerms { value, spectrum_grad }
    }

    /// Data term of capture `n` plus the TV terms.
    pub fn total_loss(&self, state: &ReconState, n: usize) -> Result<f64> {
        Ok(self.vaiu_forward(state, n)?.data_loss + self.tv_loss(state))
    }

    /// Sum of [`Problem::total_loss`] over all captures at fixed parameters.
    pub fn dataset_loss(&self, state: &ReconState) -> Result<f64> {
        let pupil = self.pupil(state)?;
        let mut total = 0.0;
        for n in 0..self.model.len() {
            total += self.forward_with(state, &pupil, n)?.1.data_loss;
        }
        Ok(total + self.model.len() as f64 * self.tv_loss(state))
    }

    /// Data term only, summed over all captures.
    pub fn data_loss(&self, state: &ReconState) -> Result<f64> {
        let pupil = self.pupil(state)?;
        self.model.dataset_loss(&state.object_spectrum, &pupil, self.dataset)
    }

    /// Loss of capture `n` and its gradients.
    pub fn gradients(&self, state: &ReconState, n: usize) -> Result<(f64, Gradients)> {
        self.gradients_for(state, n, true)
    }

    fn gradients_for(&self, state: &ReconState, n: usize, with_tv_grad: bool) -> Result<(f64, Gradients)> {
        let pupil = self.pupil(state)?;
        let (window, vaiu) = self.forward_with(state, &pupil, n)?;
        let g_phi: Vec<Complex64> = vaiu
            .phi_l
            .iter()
            .zip(vaiu.phi_h.iter())
            .map(|(l, h)| 2.0 * (l - h))
            .collect();

        let (lr, lc) = self.model.low_dims();
        let g_window = Grid::from_vec(
            lr,
            lc,
            g_phi.iter().zip(pupil.iter()).map(|(g, c)| c.conj() * g).collect(),
        )?;

        let tv = if self.config.uses_tv() && with_tv_grad {
            Some(self.tv_terms(state))
        } else {
            None
        };
        let tv_value = match &tv {
            Some(t) => t.value,
            None => self.tv_loss(state),
        };

        let g_pupil: Vec<Complex64> = g_phi.iter().zip(window.iter()).map(|(g, w)| w.conj() * g).collect();
        let support = self.model.support();
        let pupil_grad = match &state.pupil {
            PupilParams::Free(_) => PupilGradient::Free(Grid::from_vec(
                lr,
                lc,
                g_pupil
                    .iter()
                    .zip(support.iter())
                    .map(|(&g, &inside)| if inside { g } else { Complex64::new(0.0, 0.0) })
                    .collect(),
            )?),
            PupilParams::Zernike { coeffs, .. } => {
                let basis = self.basis.as_ref().ok_or_else(|| {
                    FpError::InvalidConfig("Zernike pupil parameters without a Zernike basis".into())
                })?;
                let phase = basis.phase(coeffs)?;
                let g_amp = Grid::from_vec(
                    lr,
                    lc,
                    g_pupil
                        .iter()
                        .zip(phase.iter())
                        .zip(support.iter())
                        .map(|((g, &psi), &inside)| {
                            if inside {
                                (g.conj() * Complex64::from_polar(1.0, psi)).re
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                )?;
                // dC/dc_l = i Z_l C
                let weights: Vec<f64> = g_pupil.iter().zip(pupil.iter()).map(|(g, c)| -(g.conj() * c).im).collect();
                let g_coeffs = basis
                    .modes()
                    .iter()
                    .map(|z| z.iter().zip(&weights).map(|(zl, w)| zl * w).sum())
                    .collect();
                PupilGradient::Zernike {
                    amp: g_amp,
                    coeffs: g_coeffs,
                }
            }
        };

        Ok((
            vaiu.data_loss + tv_value,
            Gradients {
                window: g_window,
                window_center: self.model.window_center(n),
                object_tv: tv.map(|t| t.spectrum_grad),
                pupil: pupil_grad,
            },
        ))
    }

    fn step_object(&self, state: &mut ReconState, grads: &Gradients, lr_scale: f64) -> Result<()> {
        let hp = self.config.adam(self.config.lr_object * lr_scale);
        let g = grads.object(state.object_spectrum.dims())?;
        adam_step_complex(
            state.object_spectrum.as_mut_slice(),
            g.as_slice(),
            &mut state.object_moments,
            &hp,
        );
        Ok(())
    }

    fn step_pupil(&self, state: &mut ReconState, grads: &Gradients, lr_scale: f64) -> Result<()> {
        let support = self.model.support();
        let hp_amp = self.config.adam(self.config.lr_pupil_amp * lr_scale);
        match (&mut state.pupil, &grads.pupil) {
            (PupilParams::Free(p), PupilGradient::Free(g)) => {
                adam_step_complex(p.as_mut_slice(), g.as_slice(), &mut state.pupil_moments, &hp_amp);
                for (z, &inside) in p.as_mut_slice().iter_mut().zip(support.iter()) {
                    if !inside {
                        *z = Complex64::new(0.0, 0.0);
                    }
                }
            }
            (
                PupilParams::Zernike { amp, coeffs },
                PupilGradient::Zernike {
                    amp: g_amp,
                    coeffs: g_coeffs,
                },
            ) => {
                adam_step(amp.as_mut_slice(), g_amp.as_slice(), &mut state.pupil_moments, &hp_amp);
                for (a, &inside) in amp.as_mut_slice().iter_mut().zip(support.iter()) {
                    if !inside {
                        *a = 0.0;
                    }
                }
                let hp_zern = self.config.adam(self.config.lr_zern * lr_scale);
                adam_step(coeffs, g_coeffs, &mut state.zern_moments, &hp_zern);
            }
            _ => {
                return Err(FpError::InvalidConfig(
                    "pupil gradient does not match the pupil parameterization".into(),
                ))
            }
        }
        Ok(())
    }

    fn ensure_state_finite(&self, state: &ReconState) -> Result<()> {
        ensure_finite(&state.object_spectrum, "object spectrum")?;
        match &state.pupil {
            PupilParams::Free(p) => ensure_finite(p, "pupil"),
            PupilParams::Zernike { amp, coeffs } => {
                if amp.is_finite() && coeffs.iter().all(|c| c.is_finite()) {
                    Ok(())
                } else {
                    Err(FpError::NonFinite("pupil parameters".into()))
                }
            }
        }
    }

    /// Moves the pupil's mean modulus and mean phase slope into the object.
    /// A Zernike pupil absorbs the slope change in its tilt coefficients;
    /// with fewer than three modes only the scale is moved.
    pub fn normalize_gauge(&self, state: &mut ReconState) -> Result<Gauge> {
        let pupil = self.pupil(state)?;
        let mut gauge = estimate_gauge(&pupil, self.model.support())?;
        match &mut state.pupil {
            PupilParams::Free(p) => remove_gauge(&mut state.object_spectrum, p, &gauge),
            PupilParams::Zernike { amp, coeffs } => {
                if coeffs.len() < 3 {
                    gauge.ramp_row = 0.0;
                    gauge.ramp_col = 0.0;
                }
                let mut scratch = pupil;
                remove_gauge(&mut state.object_spectrum, &mut scratch, &gauge);
                for a in amp.as_mut_slice() {
                    *a /= gauge.scale;
                }
                if coeffs.len() >= 3 {
                    let cfg = self.model.config();
                    let cut = cfg.cutoff_frequency() * cfg.object_pixel_um();
                    // Z2 = 2 rho cos(theta) rises by 2 / (cut * cols) per column bin
                    coeffs[1] -= gauge.ramp_col * cut * cfg.low_cols as f64 / 2.0;
                    coeffs[2] -= gauge.ramp_row * cut * cfg.low_rows as f64 / 2.0;
                }
            }
        }
        Ok(gauge)
    }

    /// Whether stage `stage_index` (1-based) trains the object.
    pub fn is_object_stage(&self, stage_index: usize) -> bool {
        self.config.schedule == Schedule::ObjectOnly || stage_index % 2 == 1
    }

    /// Runs one stage and returns the summed per-step loss of each epoch.
    pub fn run_stage(&self, state: &mut ReconState, stage_index: usize) -> Result<Vec<f64>> {
        let object_stage = self.is_object_stage(stage_index);
        let order = self.model.traversal_order(self.config.traversal);
        let mut epoch_losses = Vec::with_capacity(self.config.epochs_per_stage);
        for e in 0..self.config.epochs_per_stage {
            let epoch = stage_index.saturating_sub(1) * self.config.epochs_per_stage + e;
            let lr_scale = self.config.lr_decay.powi(i32::try_from(epoch).unwrap_or(i32::MAX));
            let mut epoch_loss = 0.0;
            for &n in &order {
                let (loss, grads) = self.gradients_for(state, n, object_stage)?;
                epoch_loss += loss;
                if object_stage {
                    self.step_object(state, &grads, lr_scale)?;
                } else {
                    self.step_pupil(state, &grads, lr_scale)?;
                }
            }
            self.ensure_state_finite(state)?;
            epoch_losses.push(epoch_loss);
        }
        Ok(epoch_losses)
    }
}

#[derive(Clone, Debug)]
pub struct PgnnOutput {
    pub state: ReconState,
    /// High-resolution spatial object.
    pub object: ComplexGrid,
    pub pupil: ComplexGrid,
    /// Recovered Zernike coefficients, empty for a free pupil.
    pub zernike_coeffs: Vec<f64>,
    /// Sum of the per-step losses within each epoch.
    pub loss_history: Vec<f64>,
    /// Total loss over all captures before the first and after the last step.
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Initializes like ePIE, runs every stage and reports the result in the same
/// gauge as [`crate::epie::run_epie`].
pub fn run_pgnn(dataset: &Dataset, config: &PgnnConfig) -> Result<PgnnOutput> {
    let problem = Problem::new(dataset, config)?;
    let mut state = problem.initial_state()?;
    let initial_loss = problem.dataset_loss(&state)?;
    let mut history = Vec::with_capacity(config.stages * config.epochs_per_stage);
    for stage in 1..=config.stages {
        history.extend(problem.run_stage(&mut state, stage)?);
    }
    if config.stages > 0 {
        problem.normalize_gauge(&mut state)?;
    }
    let final_loss = problem.dataset_loss(&state)?;
    let pupil = problem.pupil(&state)?;
    let zernike_coeffs = match &state.pupil {
        PupilParams::Zernike { coeffs, .. } => coeffs.clone(),
        PupilParams::Free(_) => Vec::new(),
    };
    Ok(PgnnOutput {
        object: problem.model().spectrum_to_object(&state.object_spectrum),
        pupil,
        zernike_coeffs,
        state,
        loss_history: history,
        initial_loss,
        final_loss,
    })
}
