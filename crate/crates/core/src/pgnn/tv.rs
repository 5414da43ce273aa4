//! Isotropic total variation with replicate boundary.

use crate::field::RealGrid;

/// Smoothing added under the root when `eta <= 1`.
pub const TV_SMOOTHING: f64 = 1e-8;

fn smoothing(eta: f64) -> f64 {
    if eta <= 1.0 {
        TV_SMOOTHING
    } else {
        0.0
    }
}

/// Forward differences `(d_row, d_col)` at `(r, c)`; zero on the last row / column.
fn differences(img: &RealGrid, r: usize, c: usize) -> (f64, f64) {
    let (rows, cols) = img.dims();
    let here = img[(r, c)];
    let dr = if r + 1 < rows { img[(r + 1, c)] - here } else { 0.0 };
    let dc = if c + 1 < cols { img[(r, c + 1)] - here } else { 0.0 };
    (dr, dc)
}

/// `sum ((d_row^2 + d_col^2 + eps)^(eta/2) - eps^(eta/2))`.
///
/// The constant offset keeps flat regions at exactly zero.
pub fn tv_value(img: &RealGrid, eta: f64) -> f64 {
    let eps = smoothing(eta);
    let floor = eps.powf(eta / 2.0);
    let mut total = 0.0;
    for r in 0..img.rows() {
        for c in 0..img.cols() {
            let (dr, dc) = differences(img, r, c);
            total += (dr * dr + dc * dc + eps).powf(eta / 2.0) - floor;
        }
    }
    total
}

/// Exact gradient of [`tv_value`].
pub fn tv_grad(img: &RealGrid, eta: f64) -> RealGrid {
    let eps = smoothing(eta);
    let (rows, cols) = img.dims();
    let mut grad = RealGrid::zeros(rows, cols);
    let g = grad.as_mut_slice();
    for r in 0..rows {
        for c in 0..cols {
            let (dr, dc) = differences(img, r, c);
            let q = dr * dr + dc * dc + eps;
            if q == 0.0 {
                continue;
            }
            let w = eta * q.powf(eta / 2.0 - 1.0);
            let i = r * cols + c;
            if r + 1 < rows {
                g[i + cols] += w * dr;
                g[i] -= w * dr;
            }
            if c + 1 < cols {
                g[i + 1] += w * dc;
                g[i] -= w * dc;
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_is_flat() {
        let img = RealGrid::filled(5, 7, 0.3);
        for eta in [0.5, 1.0, 2.0] {
            assert_eq!(tv_value(&img, eta), 0.0);
            assert!(tv_grad(&img, eta).iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn two_unit_steps() {
        let img = Grid::from_vec(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let v = tv_value(&img, 1.0);
        let smoothed = 2.0 * ((1.0 + TV_SMOOTHING).sqrt() - TV_SMOOTHING.sqrt());
        assert!((v - smoothed).abs() < 1e-15);
        assert!((v - 2.0).abs() < 1e-3);
        // unsmoothed branch is exact
        assert_eq!(tv_value(&img, 2.0), 2.0);
    }

    fn check_fd(seed: u64, eta: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Grid::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let grad = tv_grad(&img, eta);
        let value = tv_value(&img, eta);
        let h = 1e-6;
        for i in 0..img.len() {
            let mut plus = img.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = img.clone();
            minus.as_mut_slice()[i] -= h;
            let fd = (tv_value(&plus, eta) - tv_value(&minus, eta)) / (2.0 * h);
            let a = grad.as_slice()[i];
            // rounding error of the central difference
            let slack = 64.0 * f64::EPSILON * value / h;
            assert!(
                (a - fd).abs() <= 1e-5 * a.abs().max(fd.abs()) + slack,
                "seed {seed} eta {eta} idx {i}: {a} vs {fd}"
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            check_fd(seed, 1.0);
            check_fd(seed, 1.5);
            check_fd(seed, 2.0);
        }
    }

    proptest! {
        #[test]
        fn non_negative_and_shift_invariant(
            vals in proptest::collection::vec(-5.0f64..5.0, 36),
            shift in -3.0f64..3.0,
        ) {
            let img = Grid::from_vec(6, 6, vals).unwrap();
            let v = tv_value(&img, 1.0);
            prop_assert!(v >= 0.0);
            let shifted = img.map(|x| x + shift);
            prop_assert!((tv_value(&shifted, 1.0) - v).abs() <= 1e-9 * (1.0 + v));
        }
    }
}
