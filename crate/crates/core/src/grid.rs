//! Uniform periodic grid, sampled fields, and the spectral / finite-difference
//! calculus everything else is built on.
//!
//! All quadrature is the rectangle rule on the periodic grid, which is
//! spectrally accurate for smooth periodic integrands. Derivatives are taken
//! by FFT: forward transform, multiply by `(ik)^n`, inverse transform.

use std::cell::RefCell;
use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Unnormalized forward DFT, in place.
pub fn fft_in_place(values: &mut [Complex64]) {
    plan(values.len(), false).process(values);
}

/// Inverse DFT including the `1/n` factor, in place.
pub fn ifft_in_place(values: &mut [Complex64]) {
    let n = values.len();
    plan(n, true).process(values);
    let s = 1.0 / n as f64;
    values.iter_mut().for_each(|v| *v *= s);
}

/// Uniform periodic grid on `[x_min, x_max)` with a power-of-two number of
/// points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n_points: usize,
    x_min: f64,
    x_max: f64,
}

impl Grid1D {
    pub fn new(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points must be a power of two >= 2, got {n_points}"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "need finite x_max > x_min, got [{x_min}, {x_max})"
            )));
        }
        Ok(Self { n_points, x_min, x_max })
    }

    /// Symmetric grid `[-half_width, half_width)`.
    pub fn symmetric(n_points: usize, half_width: f64) -> Result<Self> {
        Self::new(n_points, -half_width, half_width)
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Angular wave number of FFT bin `j` (standard FFT ordering, the
    /// Nyquist bin carries `-n/2`).
    pub fn k(&self, j: usize) -> f64 {
        let n = self.n_points;
        let dk = TAU / self.length();
        if j < n / 2 {
            j as f64 * dk
        } else {
            (j as f64 - n as f64) * dk
        }
    }

    pub fn wave_numbers(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.k(j)).collect()
    }

    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI / self.dx()
    }

    /// Index of the grid point closest to `x` (periodic).
    pub fn nearest_index(&self, x: f64) -> usize {
        let u = ((x - self.x_min) / self.dx()).round() as i64;
        u.rem_euclid(self.n_points as i64) as usize
    }

    /// Periodic offset `x' - x` mapped into `[-L/2, L/2)`.
    pub fn wrapped_offset(&self, x_to: f64, x_from: f64) -> f64 {
        let l = self.length();
        let d = x_to - x_from;
        d - l * ((d + 0.5 * l) / l).floor()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n_points).map(|j| f(self.x(j))).collect()
    }

    pub fn sample_complex<F: Fn(f64) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        (0..self.n_points).map(|j| f(self.x(j))).collect()
    }

    /// Spectral multiplier `(ik)^order`; the Nyquist bin is zeroed for odd
    /// orders so real fields stay real.
    pub fn derivative_multiplier(&self, j: usize, order: u32) -> Complex64 {
        if order % 2 == 1 && j == self.n_points / 2 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, self.k(j)).powu(order)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_points {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }
}

/// Complex samples on a grid at a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
    pub time: f64,
}

/// Real samples on a grid at a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub time: f64,
}

impl ComplexField {
    pub fn new(grid: Grid1D, values: Vec<Complex64>, time: f64) -> Result<Self> {
        grid.check_len(values.len())?;
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("field contains non-finite values".into()));
        }
        Ok(Self { grid, values, time })
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(grid: Grid1D, time: f64, f: F) -> Result<Self> {
        Self::new(grid, grid.sample_complex(f), time)
    }

    pub fn zeros(grid: Grid1D, time: f64) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()], time }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), time: self.time }
    }

    pub fn zip_with<F: Fn(Complex64, Complex64) -> Complex64>(&self, other: &Self, f: F) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            time: self.time,
        })
    }

    pub fn norm_sqr(&self) -> RealField {
        RealField { grid: self.grid, values: self.values.iter().map(|v| v.norm_sqr()).collect(), time: self.time }
    }

    pub fn re(&self) -> RealField {
        RealField { grid: self.grid, values: self.values.iter().map(|v| v.re).collect(), time: self.time }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map(|v| v * s)
    }

    /// Forward transform (unnormalized).
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.values.clone();
        fft_in_place(&mut buf);
        buf
    }

    /// Multiply the spectrum by `mult(j)` and transform back.
    pub fn apply_spectral<F: Fn(usize) -> Complex64>(&self, mult: F) -> Self {
        let mut buf = self.spectrum();
        buf.iter_mut().enumerate().for_each(|(j, v)| *v *= mult(j));
        ifft_in_place(&mut buf);
        Self { grid: self.grid, values: buf, time: self.time }
    }

    /// Band-limited translation: returns `f(x - shift)`.
    pub fn shifted(&self, shift: f64) -> Self {
        let g = self.grid;
        self.apply_spectral(|j| {
            if j == g.len() / 2 {
                // the Nyquist mode cannot be shifted unambiguously
                Complex64::new((g.k(j) * shift).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, -g.k(j) * shift)
            }
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl RealField {
    pub fn new(grid: Grid1D, values: Vec<f64>, time: f64) -> Result<Self> {
        grid.check_len(values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field contains non-finite values".into()));
        }
        Ok(Self { grid, values, time })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Grid1D, time: f64, f: F) -> Result<Self> {
        Self::new(grid, grid.sample(f), time)
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            time: self.time,
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

pub fn ensure_same_grid(a: &Grid1D, b: &Grid1D) -> Result<()> {
    if a != b {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// Rectangle-rule quadrature on the periodic grid.
pub fn integrate(f: &ComplexField) -> Complex64 {
    f.values.iter().sum::<Complex64>() * f.grid.dx()
}

pub fn integrate_real(f: &RealField) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.dx()
}

/// `∫ a* b dx`.
pub fn inner(a: &ComplexField, b: &ComplexField) -> Result<Complex64> {
    ensure_same_grid(&a.grid, &b.grid)?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x.conj() * y).sum::<Complex64>() * a.grid.dx())
}

/// `∫|f|² dx` evaluated from the spectrum (Parseval).
pub fn spectral_power(f: &ComplexField) -> f64 {
    let n = f.len() as f64;
    f.spectrum().iter().map(|c| c.norm_sqr()).sum::<f64>() * f.grid.dx() / n
}

/// `∂ₓⁿ f` by FFT.
pub fn spectral_derivative(f: &ComplexField, order: u32) -> ComplexField {
    if order == 0 {
        return f.clone();
    }
    let g = f.grid;
    f.apply_spectral(|j| g.derivative_multiplier(j, order))
}

/// Real-valued variant of [`spectral_derivative`].
pub fn spectral_derivative_real(f: &RealField, order: u32) -> RealField {
    spectral_derivative(&f.to_complex(), order).re()
}

/// Finite-difference weights for the `order`-th derivative at `z` using
/// samples at `nodes` (Fornberg's recursion).
pub fn fd_weights(z: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Number of equally spaced samples a central stencil of the given derivative
/// order needs for second-order accuracy.
pub fn central_stencil_len(order: usize) -> usize {
    let n = order + 1;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Central weights for `order` on `len` equally spaced samples with spacing
/// `dt`, evaluated at the middle sample.
pub fn central_weights(order: usize, len: usize, dt: f64) -> Result<Vec<f64>> {
    let needed = central_stencil_len(order);
    if len < needed || len % 2 == 0 {
        return Err(Error::StencilTooShort { order, needed: needed.max(len + 1), got: len });
    }
    let half = (len / 2) as f64;
    let nodes: Vec<f64> = (0..len).map(|i| (i as f64 - half) * dt).collect();
    Ok(fd_weights(0.0, &nodes, order))
}

/// `∂ₜⁿ` of a scalar time series sampled at equal spacing, at the middle
/// sample.
pub fn finite_difference_time_scalar(samples: &[f64], dt: f64, order: usize) -> Result<f64> {
    if order == 0 {
        return Ok(samples[samples.len() / 2]);
    }
    let w = central_weights(order, samples.len(), dt)?;
    Ok(w.iter().zip(samples).map(|(w, s)| w * s).sum())
}

/// `∂ₜⁿ` of a field series sampled at `t₀ + (i - len/2)·dt`, at the middle
/// slice.
pub fn finite_difference_time(series: &[RealField], dt: f64, order: usize) -> Result<RealField> {
    if series.is_empty() {
        return Err(Error::StencilTooShort { order, needed: central_stencil_len(order), got: 0 });
    }
    let grid = series[0].grid;
    for f in series {
        ensure_same_grid(&grid, &f.grid)?;
    }
    let mid = &series[series.len() / 2];
    if order == 0 {
        return Ok(mid.clone());
    }
    let w = central_weights(order, series.len(), dt)?;
    let mut out = vec![0.0; grid.len()];
    for (wi, f) in w.iter().zip(series) {
        out.iter_mut().zip(&f.values).for_each(|(o, v)| *o += wi * v);
    }
    Ok(RealField { grid, values: out, time: mid.time })
}

/// L¹ and L∞ norms of a field restricted to a mask.
pub fn masked_norms(values: &[f64], mask: &[bool], dx: f64) -> (f64, f64) {
    values.iter().zip(mask).filter(|(_, &m)| m).fold((0.0, 0.0), |(l1, linf), (v, _)| {
        (l1 + v.abs() * dx, f64::max(linf, v.abs()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(x: f64, x0: f64, sigma: f64) -> f64 {
        (2.0 * PI * sigma * sigma).powf(-0.25) * (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(Grid1D::new(100, 0.0, 1.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(Grid1D::new(128, 1.0, 1.0), Err(Error::InvalidGrid(_))));
        assert!(Grid1D::new(128, 0.0, 1.0).is_ok());
    }

    #[test]
    fn constant_integrates_to_length() {
        for n in [16, 256, 1024] {
            let g = Grid1D::new(n, 0.0, 10.0).unwrap();
            let f = RealField::from_fn(g, 0.0, |_| 1.0).unwrap();
            assert!((integrate_real(&f) - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_period_sine_integrates_to_zero() {
        let l = 7.3;
        let g = Grid1D::new(256, 0.0, l).unwrap();
        let f = RealField::from_fn(g, 0.0, |x| (TAU * x / l).sin()).unwrap();
        assert!(integrate_real(&f).abs() < 1e-12);
    }

    #[test]
    fn normalized_gaussian_has_unit_mass() {
        let g = Grid1D::symmetric(1024, 20.0).unwrap();
        let f = RealField::from_fn(g, 0.0, |x| gaussian(x, 0.3, 1.2).powi(2)).unwrap();
        assert!((integrate_real(&f) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = ComplexField::zeros(Grid1D::symmetric(64, 1.0).unwrap(), 0.0);
        let b = ComplexField::zeros(Grid1D::symmetric(64, 2.0).unwrap(), 0.0);
        assert!(matches!(inner(&a, &b), Err(Error::GridMismatch)));
        assert!(matches!(ComplexField::new(a.grid, vec![Complex64::new(0.0, 0.0); 3], 0.0), Err(Error::GridMismatch)));
    }

    #[test]
    fn plane_wave_is_a_derivative_eigenfunction() {
        let g = Grid1D::new(256, 0.0, 10.0).unwrap();
        let k = g.k(7);
        let f = ComplexField::from_fn(g, 0.0, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        for order in 1..=4u32 {
            let d = spectral_derivative(&f, order);
            let ik = Complex64::new(0.0, k).powu(order);
            let err = d.values.iter().zip(&f.values).map(|(d, f)| (d - ik * f).norm()).fold(0.0, f64::max);
            // rounding in every mode is amplified by k_max^order
            assert!(err < 1e-14 * g.k_max().powi(order as i32), "order {order}: {err}");
        }
    }

    #[test]
    fn second_derivative_of_band_limited_sine() {
        let l = 5.0;
        let g = Grid1D::new(64, 0.0, l).unwrap();
        let q = 3.0 * TAU / l;
        let f = RealField::from_fn(g, 0.0, |x| (q * x).sin()).unwrap();
        let d = spectral_derivative_real(&f, 2);
        for (j, v) in d.values.iter().enumerate() {
            let exact = -q * q * (q * g.x(j)).sin();
            assert!((v - exact).abs() < 1e-12 * q * q);
        }
    }

    #[test]
    fn gaussian_derivative_matches_closed_form() {
        let (x0, s) = (0.5, 1.0);
        let g = Grid1D::symmetric(512, 20.0).unwrap();
        let f = RealField::from_fn(g, 0.0, |x| gaussian(x, x0, s)).unwrap();
        let d = spectral_derivative_real(&f, 1);
        for (j, v) in d.values.iter().enumerate() {
            let x = g.x(j);
            let exact = -(x - x0) / (2.0 * s * s) * gaussian(x, x0, s);
            if (x - x0).abs() < 6.0 {
                assert!((v - exact).abs() <= 1e-8 * exact.abs().max(1e-6), "x={x}");
            }
        }
    }

    #[test]
    fn time_stencils() {
        let dt = 0.1;
        let quad: Vec<f64> = (-1..=1).map(|i| (i as f64 * dt).powi(2)).collect();
        assert!((finite_difference_time_scalar(&quad, dt, 2).unwrap() - 2.0).abs() < 1e-10);
        let c = vec![3.0; 5];
        for order in 1..=4 {
            assert!(finite_difference_time_scalar(&c, dt, order).unwrap().abs() < 1e-9);
        }
        let h = 1e-3;
        let e: Vec<f64> = (-1..=1).map(|i| (i as f64 * h).exp()).collect();
        // Taylor remainder h²/6·e^ξ ≈ 1.7e-7
        assert!((finite_difference_time_scalar(&e, h, 1).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn short_stencils_are_rejected() {
        assert!(matches!(
            finite_difference_time_scalar(&[1.0, 2.0], 0.1, 1),
            Err(Error::StencilTooShort { .. })
        ));
        assert!(matches!(
            finite_difference_time_scalar(&[1.0, 2.0, 3.0], 0.1, 3),
            Err(Error::StencilTooShort { .. })
        ));
    }

    #[test]
    fn shift_is_band_limited_translation() {
        let g = Grid1D::symmetric(256, 16.0).unwrap();
        let f = RealField::from_fn(g, 0.0, |x| gaussian(x, 0.0, 1.0)).unwrap().to_complex();
        let s = f.shifted(0.37);
        for (j, v) in s.values.iter().enumerate() {
            assert!((v.re - gaussian(g.x(j), 0.37, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn wrapped_offsets_are_centered() {
        let g = Grid1D::new(64, 0.0, 10.0).unwrap();
        assert!((g.wrapped_offset(9.0, 1.0) + 2.0).abs() < 1e-12);
        assert!((g.wrapped_offset(1.0, 9.0) - 2.0).abs() < 1e-12);
    }
}
