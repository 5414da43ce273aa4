//! Dense 2-D grids and the spectral primitives shared by every solver.
//!
//! Spectra are stored either in the raw DFT layout (DC at `(0, 0)`) or in the
//! DC-centered layout produced by [`center_shift`], where DC sits at
//! `(rows / 2, cols / 2)`. Every window center in this crate is expressed in
//! the centered layout.
//!
//! Transform convention: [`dft2`] is unnormalized, [`idft2`] carries the
//! `1 / (rows * cols)` factor.

use std::cell::RefCell;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{FpError, Result};

/// Row-major 2-D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type ComplexGrid = Grid<Complex64>;
pub type RealGrid = Grid<f64>;

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(FpError::DimensionMismatch {
                expected: (rows, cols),
                actual: (data.len(), 1),
            });
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Grid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn ensure_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(FpError::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl ComplexGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid::filled(rows, cols, Complex64::new(0.0, 0.0))
    }

    /// Builds `amp * exp(i * phase)` element-wise.
    pub fn from_polar(amp: &RealGrid, phase: &RealGrid) -> Result<Self> {
        amp.ensure_same_dims(phase)?;
        let data = amp
            .iter()
            .zip(phase.iter())
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();
        Ok(Grid {
            rows: amp.rows,
            cols: amp.cols,
            data,
        })
    }

    pub fn real_part(&self) -> RealGrid {
        self.map(|z| z.re)
    }

    pub fn imag_part(&self) -> RealGrid {
        self.map(|z| z.im)
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.data {
            *z *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl RealGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid::filled(rows, cols, 0.0)
    }

    pub fn to_complex(&self) -> ComplexGrid {
        self.map(|&v| Complex64::new(v, 0.0))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform(g: &ComplexGrid, direction: FftDirection) -> ComplexGrid {
    let (rows, cols) = g.dims();
    let mut data = g.data.clone();
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft(cols, direction), p.plan_fft(rows, direction))
    });

    let mut scratch =
        vec![Complex64::default(); row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len())];
    for row in data.chunks_exact_mut(cols) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    // Columns go through a transposed copy so each transform sees contiguous memory.
    let mut transposed = vec![Complex64::default(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            transposed[c * rows + r] = data[r * cols + c];
        }
    }
    for col in transposed.chunks_exact_mut(rows) {
        col_fft.process_with_scratch(col, &mut scratch);
    }
    for r in 0..rows {
        for c in 0..cols {
            data[r * cols + c] = transposed[c * rows + r];
        }
    }
    Grid { rows, cols, data }
}

/// Forward 2-D DFT, unnormalized.
pub fn dft2(g: &ComplexGrid) -> ComplexGrid {
    transform(g, FftDirection::Forward)
}

/// Inverse 2-D DFT with `1 / (rows * cols)` normalization.
pub fn idft2(g: &ComplexGrid) -> ComplexGrid {
    let mut out = transform(g, FftDirection::Inverse);
    out.scale(1.0 / (g.rows * g.cols) as f64);
    out
}

fn roll<T: Clone>(g: &Grid<T>, shift_r: usize, shift_c: usize) -> Grid<T> {
    let (rows, cols) = g.dims();
    let mut data = Vec::with_capacity(g.data.len());
    for r in 0..rows {
        let src_r = (r + rows - shift_r % rows) % rows;
        for c in 0..cols {
            let src_c = (c + cols - shift_c % cols) % cols;
            data.push(g.data[src_r * cols + src_c].clone());
        }
    }
    Grid { rows, cols, data }
}

/// Moves DC from `(0, 0)` to `(rows / 2, cols / 2)`.
pub fn center_shift<T: Clone>(g: &Grid<T>) -> Grid<T> {
    roll(g, g.rows / 2, g.cols / 2)
}

/// Exact inverse of [`center_shift`], odd dimensions included.
pub fn inverse_center_shift<T: Clone>(g: &Grid<T>) -> Grid<T> {
    roll(g, g.rows - g.rows / 2, g.cols - g.cols / 2)
}

/// Top-left corner of a window of the given size centered at `center`.
fn window_origin(
    grid: (usize, usize),
    center_row: i64,
    center_col: i64,
    rows: usize,
    cols: usize,
) -> Result<(usize, usize)> {
    let r0 = center_row - (rows / 2) as i64;
    let c0 = center_col - (cols / 2) as i64;
    if r0 < 0 || c0 < 0 || r0 + rows as i64 > grid.0 as i64 || c0 + cols as i64 > grid.1 as i64 {
        return Err(FpError::WindowOutOfBounds {
            center_row,
            center_col,
            rows,
            cols,
            grid_rows: grid.0,
            grid_cols: grid.1,
        });
    }
    Ok((r0 as usize, c0 as usize))
}

/// Checks that a window fits without touching any data.
pub fn check_window(
    grid: (usize, usize),
    center_row: i64,
    center_col: i64,
    rows: usize,
    cols: usize,
) -> Result<()> {
    window_origin(grid, center_row, center_col, rows, cols).map(|_| ())
}

/// Extracts the `out_rows x out_cols` block centered at `(center_row, center_col)`.
///
/// The window spans `[center - size / 2, center - size / 2 + size)` on each axis
/// and never wraps.
pub fn crop_window<T: Clone>(
    g: &Grid<T>,
    center_row: i64,
    center_col: i64,
    out_rows: usize,
    out_cols: usize,
) -> Result<Grid<T>> {
    let (r0, c0) = window_origin(g.dims(), center_row, center_col, out_rows, out_cols)?;
    let mut data = Vec::with_capacity(out_rows * out_cols);
    for r in 0..out_rows {
        let start = (r0 + r) * g.cols + c0;
        data.extend_from_slice(&g.data[start..start + out_cols]);
    }
    Ok(Grid {
        rows: out_rows,
        cols: out_cols,
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbedMode {
    Replace,
    Add,
}

/// Writes `patch` into `dst` at the location [`crop_window`] would read from.
pub fn embed_window(
    dst: &mut ComplexGrid,
    patch: &ComplexGrid,
    center_row: i64,
    center_col: i64,
    mode: EmbedMode,
) -> Result<()> {
    let (r0, c0) = window_origin(dst.dims(), center_row, center_col, patch.rows, patch.cols)?;
    let cols = dst.cols;
    for r in 0..patch.rows {
        let dst_row = &mut dst.data[(r0 + r) * cols + c0..(r0 + r) * cols + c0 + patch.cols];
        let src_row = &patch.data[r * patch.cols..(r + 1) * patch.cols];
        match mode {
            EmbedMode::Replace => dst_row.copy_from_slice(src_row),
            EmbedMode::Add => {
                for (d, s) in dst_row.iter_mut().zip(src_row) {
                    *d += s;
                }
            }
        }
    }
    Ok(())
}

pub fn hadamard(a: &ComplexGrid, b: &ComplexGrid) -> Result<ComplexGrid> {
    a.ensure_same_dims(b)?;
    Ok(Grid {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

pub fn amplitude(g: &ComplexGrid) -> RealGrid {
    g.map(|z| z.norm())
}

/// Wrapped phase angle in `(-pi, pi]`.
pub fn phase_angle(g: &ComplexGrid) -> RealGrid {
    g.map(|z| wrap_phase(z.arg()))
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_phase(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Unit phasor `z / |z|` of a single sample, with `0 -> 1`.
#[inline]
pub fn unit_phasor(z: Complex64) -> Complex64 {
    let n = z.norm();
    if n == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z / n
    }
}

/// Element-wise `g / |g|`; zero samples map to `1 + 0i`.
pub fn phase_unit(g: &ComplexGrid) -> ComplexGrid {
    g.map(|&z| unit_phasor(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_grid(rows: usize, cols: usize, seed: u64) -> ComplexGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn rel_err(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
        let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
        (num / b.energy()).sqrt()
    }

    /// Direct O(N^2) evaluation of the forward DFT.
    fn naive_dft2(g: &ComplexGrid) -> ComplexGrid {
        let (rows, cols) = g.dims();
        Grid::from_fn(rows, cols, |u, v| {
            let mut acc = c(0.0, 0.0);
            for r in 0..rows {
                for cc in 0..cols {
                    let ang = -2.0
                        * std::f64::consts::PI
                        * ((u * r) as f64 / rows as f64 + (v * cc) as f64 / cols as f64);
                    acc += g[(r, cc)] * Complex64::from_polar(1.0, ang);
                }
            }
            acc
        })
    }

    #[test]
    fn single_point_dft_is_identity() {
        let g = Grid::from_vec(1, 1, vec![c(2.5, -1.0)]).unwrap();
        assert_eq!(dft2(&g), g);
        assert_eq!(idft2(&g), g);
    }

    #[test]
    fn dft_of_ones_accumulates_at_dc() {
        let g = ComplexGrid::filled(2, 2, c(1.0, 0.0));
        let f = dft2(&g);
        let expected = Grid::from_vec(2, 2, vec![c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(rel_err(&f, &expected) < 1e-15);
        let back = idft2(&expected);
        assert!(rel_err(&back, &g) < 1e-15);
    }

    #[test]
    fn dft_matches_direct_summation_on_rectangular_grid() {
        let g = random_grid(6, 10, 3);
        assert!(rel_err(&dft2(&g), &naive_dft2(&g)) < 1e-12);
    }

    #[test]
    fn round_trip_and_parseval() {
        for &(n, seed) in &[(8usize, 1u64), (16, 2), (128, 3)] {
            let g = random_grid(n, n, seed);
            let f = dft2(&g);
            assert!(rel_err(&idft2(&f), &g) <= 1e-12);
            let lhs = g.energy();
            let rhs = f.energy() / (n * n) as f64;
            assert!(((lhs - rhs) / lhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn center_shift_swaps_quadrants() {
        let g = Grid::from_vec(2, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(center_shift(&g).into_vec(), vec![4, 3, 2, 1]);
    }

    #[test]
    fn center_shift_moves_delta_to_center() {
        let mut g = ComplexGrid::zeros(8, 8);
        g[(0, 0)] = c(1.0, 0.0);
        let s = center_shift(&g);
        assert_eq!(s[(4, 4)], c(1.0, 0.0));
        assert_eq!(s.energy(), 1.0);
    }

    #[test]
    fn center_shift_round_trip_odd_dims() {
        let g = random_grid(7, 5, 9);
        assert_eq!(inverse_center_shift(&center_shift(&g)), g);
        assert_eq!(center_shift(&inverse_center_shift(&g)), g);
        let mut d = ComplexGrid::zeros(7, 5);
        d[(0, 0)] = c(1.0, 0.0);
        assert_eq!(center_shift(&d)[(3, 2)], c(1.0, 0.0));
    }

    #[test]
    fn full_size_crop_at_center_is_identity() {
        let g = random_grid(8, 8, 4);
        assert_eq!(crop_window(&g, 4, 4, 8, 8).unwrap(), g);
        let odd = random_grid(7, 7, 5);
        assert_eq!(crop_window(&odd, 3, 3, 7, 7).unwrap(), odd);
    }

    #[test]
    fn crop_follows_centering_rule() {
        let g = Grid::from_fn(8, 8, |r, c| (r * 8 + c) as i32);
        // size 2 around 4 spans [3, 5)
        let w = crop_window(&g, 4, 4, 2, 2).unwrap();
        assert_eq!(w.into_vec(), vec![27, 28, 35, 36]);
        // size 3 around (2, 5) spans rows [1, 4), cols [4, 7)
        let w = crop_window(&g, 2, 5, 3, 3).unwrap();
        assert_eq!(w.into_vec(), vec![12, 13, 14, 20, 21, 22, 28, 29, 30]);
    }

    #[test]
    fn crop_out_of_bounds_is_an_error() {
        let g = random_grid(8, 8, 6);
        assert!(matches!(
            crop_window(&g, 0, 0, 4, 4),
            Err(FpError::WindowOutOfBounds { .. })
        ));
        assert!(crop_window(&g, 6, 4, 4, 4).is_ok());
        assert!(crop_window(&g, 7, 4, 4, 4).is_err());
    }

    #[test]
    fn embed_modes() {
        let patch = random_grid(3, 2, 7);
        let mut dst = ComplexGrid::zeros(8, 8);
        embed_window(&mut dst, &patch, 5, 3, EmbedMode::Replace).unwrap();
        assert_eq!(crop_window(&dst, 5, 3, 3, 2).unwrap(), patch);
        assert_eq!(dst.energy(), patch.energy());

        let mut acc = ComplexGrid::zeros(8, 8);
        embed_window(&mut acc, &patch, 5, 3, EmbedMode::Add).unwrap();
        embed_window(&mut acc, &patch, 5, 3, EmbedMode::Add).unwrap();
        let doubled = crop_window(&acc, 5, 3, 3, 2).unwrap();
        for (d, p) in doubled.iter().zip(patch.iter()) {
            assert_eq!(*d, p * 2.0);
        }

        assert!(matches!(
            embed_window(&mut dst, &patch, 0, 0, EmbedMode::Replace),
            Err(FpError::WindowOutOfBounds { .. })
        ));
    }

    #[test]
    fn elementwise_helpers() {
        let a = ComplexGrid::filled(2, 3, c(1.0, 1.0));
        let b = ComplexGrid::filled(2, 3, c(1.0, -1.0));
        assert!(hadamard(&a, &b).unwrap().iter().all(|&z| z == c(2.0, 0.0)));
        assert!(matches!(
            hadamard(&a, &ComplexGrid::zeros(3, 2)),
            Err(FpError::DimensionMismatch { .. })
        ));

        let g = Grid::from_vec(1, 3, vec![c(3.0, 4.0), c(0.0, 0.0), c(0.0, -2.0)]).unwrap();
        assert_eq!(amplitude(&g).into_vec(), vec![5.0, 0.0, 2.0]);
        let u = phase_unit(&g);
        assert_eq!(u[(0, 1)], c(1.0, 0.0));
        assert!((u[(0, 0)] - c(0.6, 0.8)).norm() < 1e-15);
        assert!((u[(0, 2)] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn wrap_phase_interval() {
        use std::f64::consts::PI;
        assert_eq!(wrap_phase(-PI), PI);
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!(wrap_phase(0.0) == 0.0);
    }

    proptest! {
        #[test]
        fn crop_embed_round_trip_is_exact(
            rows in 1usize..=64, cols in 1usize..=64,
            fr in 0.0f64..1.0, fc in 0.0f64..1.0,
            fh in 0.0f64..1.0, fw in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let h = 1 + (fh * (rows - 1) as f64) as usize;
            let w = 1 + (fw * (cols - 1) as f64) as usize;
            // valid centers satisfy c - size/2 >= 0 and c - size/2 + size <= n
            let lo_r = h / 2;
            let hi_r = rows - h + h / 2;
            let lo_c = w / 2;
            let hi_c = cols - w + w / 2;
            let cr = lo_r + (fr * (hi_r - lo_r) as f64) as usize;
            let cc = lo_c + (fc * (hi_c - lo_c) as f64) as usize;
            let patch = random_grid(h, w, seed);
            let mut dst = ComplexGrid::zeros(rows, cols);
            embed_window(&mut dst, &patch, cr as i64, cc as i64, EmbedMode::Replace).unwrap();
            let back = crop_window(&dst, cr as i64, cc as i64, h, w).unwrap();
            prop_assert_eq!(back, patch);
        }

        #[test]
        fn hadamard_matches_scalar_product(seed in any::<u64>(), rows in 1usize..9, cols in 1usize..9) {
            let a = random_grid(rows, cols, seed);
            let b = random_grid(rows, cols, seed.wrapping_add(1));
            let h = hadamard(&a, &b).unwrap();
            for r in 0..rows {
                for cc in 0..cols {
                    let (x, y) = (a[(r, cc)], b[(r, cc)]);
                    let re = x.re * y.re - x.im * y.im;
                    let im = x.re * y.im + x.im * y.re;
                    prop_assert_eq!(h[(r, cc)], c(re, im));
                }
            }
        }
    }
}
