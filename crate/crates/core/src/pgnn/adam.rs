//! Bias-corrected Adam on flat real parameter buffers.

use num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments for one parameter group plus its step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamMoments {
    pub fn new(len: usize) -> Self {
        AdamMoments {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

struct Corrections {
    bc1: f64,
    bc2: f64,
}

impl Corrections {
    fn advance(moments: &mut AdamMoments, hp: &AdamParams) -> Self {
        moments.t += 1;
        let t = i32::try_from(moments.t).unwrap_or(i32::MAX);
        Corrections {
            bc1: 1.0 - hp.beta1.powi(t),
            bc2: 1.0 - hp.beta2.powi(t),
        }
    }

    fn apply(&self, p: &mut f64, g: f64, m: &mut f64, v: &mut f64, hp: &AdamParams) {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        *p -= hp.lr * (*m / self.bc1) / ((*v / self.bc2).sqrt() + hp.eps);
    }
}

/// Advances the step counter and applies one update to every scalar.
pub fn adam_step(params: &mut [f64], grads: &[f64], moments: &mut AdamMoments, hp: &AdamParams) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), moments.m.len());
    let k = Corrections::advance(moments, hp);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        k.apply(p, g, m, v, hp);
    }
}

/// [`adam_step`] on complex parameters, real and imaginary parts as separate
/// scalars. `moments` holds `2 * params.len()` entries.
pub fn adam_step_complex(
    params: &mut [Complex64],
    grads: &[Complex64],
    moments: &mut AdamMoments,
    hp: &AdamParams,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(2 * params.len(), moments.m.len());
    let k = Corrections::advance(moments, hp);
    for (((z, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.chunks_exact_mut(2))
        .zip(moments.v.chunks_exact_mut(2))
    {
        k.apply(&mut z.re, g.re, &mut m[0], &mut v[0], hp);
        k.apply(&mut z.im, g.im, &mut m[1], &mut v[1], hp);
    }
}
