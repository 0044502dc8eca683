//! Periodic complex fields on a rectangular torus and their spectral calculus
//! in the complex coordinates `z = x + iy`, `z̄ = x - iy`.
//!
//! The derivative convention is `∂_z = ½(∂_x - i∂_y)` and `∂_z̄ = ½(∂_x + i∂_y)`.
//! Wavenumbers follow the usual FFT ordering with the Nyquist wavenumber set to
//! zero, so every derivative symbol (and every composition of them) annihilates
//! the Nyquist lines. Inverse operators fix the zero mode (and the other null
//! modes of the symbol) of their result to zero.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::FieldError;

pub type C64 = Complex64;

/// Relative tolerance on the mean of an input to an inverse operator.
pub const TOL_MEAN: f64 = 1e-10;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Discretization of the torus `[0, lx) × [0, ly)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, FieldError> {
        if nx < 4 || ny < 4 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(FieldError::InvalidGrid(format!(
                "nx and ny must be even and >= 4, got {nx}x{ny}"
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(FieldError::InvalidGrid(format!(
                "periods must be positive, got lx={lx}, ly={ly}"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Square `n × n` grid on `[0, 2π)²`.
    pub fn square_2pi(n: usize) -> Result<Self, FieldError> {
        Self::new(n, n, 2.0 * PI, 2.0 * PI)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        iy as f64 * self.dy()
    }

    /// Row-major index: rows run along x, one row per y sample.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Signed integer mode number of FFT bin `m` of an `n`-point transform;
    /// `None` for the Nyquist bin.
    pub fn mode_number(m: usize, n: usize) -> Option<i64> {
        let half = n / 2;
        if m == half {
            None
        } else if m < half {
            Some(m as i64)
        } else {
            Some(m as i64 - n as i64)
        }
    }

    pub fn kx(&self, m: usize) -> f64 {
        Self::mode_number(m, self.nx).map_or(0.0, |j| 2.0 * PI * j as f64 / self.lx)
    }

    pub fn ky(&self, m: usize) -> f64 {
        Self::mode_number(m, self.ny).map_or(0.0, |j| 2.0 * PI * j as f64 / self.ly)
    }
}

/// One Fourier mode as seen by a spectral multiplier.
#[derive(Clone, Copy, Debug)]
pub struct Mode {
    pub kx: f64,
    pub ky: f64,
    /// Symbol of `∂_z`.
    pub sz: C64,
    /// Symbol of `∂_z̄`.
    pub szbar: C64,
    /// The zero mode.
    pub is_mean: bool,
    /// Lies on a Nyquist line in x or y.
    pub is_nyquist: bool,
    /// Bin offsets in the original (signed) mode numbering, `None` on Nyquist.
    pub jx: Option<i64>,
    pub jy: Option<i64>,
}

impl Mode {
    /// Modes where the first-derivative symbols vanish.
    pub fn is_null(&self) -> bool {
        self.sz == C64::new(0.0, 0.0)
    }
}

/// Periodic complex scalar field sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field2D {
    spec: GridSpec,
    values: Vec<C64>,
}

impl Field2D {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![C64::new(0.0, 0.0); spec.len()] }
    }

    pub fn constant(spec: GridSpec, c: C64) -> Self {
        Self { spec, values: vec![c; spec.len()] }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> C64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            let y = spec.y(iy);
            for ix in 0..spec.nx {
                values.push(f(spec.x(ix), y));
            }
        }
        Self { spec, values }
    }

    pub fn from_real_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        Self::from_fn(spec, |x, y| C64::new(f(x, y), 0.0))
    }

    pub fn from_values(spec: GridSpec, values: Vec<C64>) -> Result<Self, FieldError> {
        if values.len() != spec.len() {
            return Err(FieldError::LengthMismatch { expected: spec.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(FieldError::NonFinite);
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn at(&self, ix: usize, iy: usize) -> C64 {
        self.values[self.spec.index(ix, iy)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn check_same_grid(&self, other: &Field2D) -> Result<(), FieldError> {
        if self.spec != other.spec {
            return Err(FieldError::GridMismatch);
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Field2D {
        Field2D { spec: self.spec, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination. Panics on grid mismatch; callers that accept
    /// user-provided fields check with [`Field2D::check_same_grid`] first.
    pub fn zip_with(&self, other: &Field2D, f: impl Fn(C64, C64) -> C64) -> Field2D {
        assert_eq!(self.spec, other.spec, "grid mismatch");
        Field2D {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Field2D) -> Field2D {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field2D) -> Field2D {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field2D) -> Field2D {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: C64) -> Field2D {
        self.map(|v| v * c)
    }

    pub fn scale_re(&self, c: f64) -> Field2D {
        self.map(|v| v * c)
    }

    pub fn add_const(&self, c: C64) -> Field2D {
        self.map(|v| v + c)
    }

    pub fn conj(&self) -> Field2D {
        self.map(|v| v.conj())
    }

    pub fn abs_sq(&self) -> Field2D {
        self.map(|v| C64::new(v.norm_sqr(), 0.0))
    }

    pub fn re(&self) -> Field2D {
        self.map(|v| C64::new(v.re, 0.0))
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    /// Root-mean-square norm.
    pub fn norm_rms(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn mean(&self) -> C64 {
        self.values.iter().sum::<C64>() / self.values.len() as f64
    }

    /// `∫ f dx dy` over the torus.
    pub fn integrate(&self) -> C64 {
        self.values.iter().sum::<C64>() * (self.spec.area() / self.spec.len() as f64)
    }

    pub fn dist_inf(&self, other: &Field2D) -> f64 {
        self.sub(other).norm_inf()
    }

    /// Forward 2D DFT (unnormalized), same layout as the physical samples.
    pub fn to_spectral(&self) -> Vec<C64> {
        let mut buf = self.values.clone();
        fft2(&self.spec, &mut buf, true);
        buf
    }

    pub fn from_spectral(spec: GridSpec, mut coeffs: Vec<C64>) -> Field2D {
        fft2(&spec, &mut coeffs, false);
        let norm = 1.0 / spec.len() as f64;
        for v in coeffs.iter_mut() {
            *v *= norm;
        }
        Field2D { spec, values: coeffs }
    }

    /// Applies a Fourier multiplier.
    pub fn spectral_map(&self, symbol: impl Fn(&Mode) -> C64) -> Field2D {
        let spec = self.spec;
        let mut coeffs = self.to_spectral();
        for my in 0..spec.ny {
            for mx in 0..spec.nx {
                let mode = mode_of(&spec, mx, my);
                coeffs[spec.index(mx, my)] *= symbol(&mode);
            }
        }
        Field2D::from_spectral(spec, coeffs)
    }

    pub fn d_x(&self) -> Field2D {
        self.spectral_map(|m| C64::new(0.0, m.kx))
    }

    pub fn d_y(&self) -> Field2D {
        self.spectral_map(|m| C64::new(0.0, m.ky))
    }

    pub fn d_z(&self) -> Field2D {
        self.spectral_map(|m| m.sz)
    }

    pub fn d_zbar(&self) -> Field2D {
        self.spectral_map(|m| m.szbar)
    }

    pub fn d_zz(&self) -> Field2D {
        self.spectral_map(|m| m.sz * m.sz)
    }

    pub fn d_zbarzbar(&self) -> Field2D {
        self.spectral_map(|m| m.szbar * m.szbar)
    }

    pub fn d_zzz(&self) -> Field2D {
        self.spectral_map(|m| m.sz * m.sz * m.sz)
    }

    pub fn d_zbarzbarzbar(&self) -> Field2D {
        self.spectral_map(|m| m.szbar * m.szbar * m.szbar)
    }

    /// `∂_z ∂_z̄ = ¼Δ`.
    pub fn d_zzbar(&self) -> Field2D {
        self.spectral_map(|m| m.sz * m.szbar)
    }

    /// `∂_x² + ∂_y²`, built from the same (Nyquist-free) first-derivative symbols.
    pub fn laplacian(&self) -> Field2D {
        self.spectral_map(|m| C64::new(-(m.kx * m.kx + m.ky * m.ky), 0.0))
    }

    fn check_mean(&self) -> Result<(), FieldError> {
        let mean = self.mean();
        let tol = TOL_MEAN * self.norm_inf();
        if mean.norm() > tol {
            return Err(FieldError::NonzeroMean { mean: mean.norm(), tol });
        }
        Ok(())
    }

    fn inverse_of(&self, symbol: impl Fn(&Mode) -> C64) -> Result<Field2D, FieldError> {
        self.check_mean()?;
        Ok(self.spectral_map(|m| {
            let s = symbol(m);
            if m.is_mean || s == C64::new(0.0, 0.0) {
                C64::new(0.0, 0.0)
            } else {
                s.inv()
            }
        }))
    }

    /// Zero-mean antiderivative `∂_z⁻¹`.
    pub fn inv_d_z(&self) -> Result<Field2D, FieldError> {
        self.inverse_of(|m| m.sz)
    }

    /// Zero-mean antiderivative `∂_z̄⁻¹`.
    pub fn inv_d_zbar(&self) -> Result<Field2D, FieldError> {
        self.inverse_of(|m| m.szbar)
    }

    /// Zero-mean solution `u` of `∂_z∂_z̄ u = rhs`.
    pub fn solve_poisson_zzbar(&self) -> Result<Field2D, FieldError> {
        self.inverse_of(|m| m.sz * m.szbar)
    }

    /// Keeps only modes inside the ellipse `(jx/(nx/2))² + (jy/(ny/2))² ≤ (2/3)²`.
    pub fn dealias(&self) -> Field2D {
        let spec = self.spec;
        self.spectral_map(|m| {
            if dealias_keep(&spec, m) {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Largest spectral amplitude outside the dealiasing band, relative to the
    /// largest amplitude overall. Zero for fields resolved within the band.
    pub fn tail_fraction(&self) -> f64 {
        let spec = self.spec;
        let coeffs = self.to_spectral();
        let mut all = 0.0f64;
        let mut tail = 0.0f64;
        for my in 0..spec.ny {
            for mx in 0..spec.nx {
                let a = coeffs[spec.index(mx, my)].norm();
                all = all.max(a);
                if !dealias_keep(&spec, &mode_of(&spec, mx, my)) {
                    tail = tail.max(a);
                }
            }
        }
        if all == 0.0 {
            0.0
        } else {
            tail / all
        }
    }
}

pub(crate) fn dealias_keep(spec: &GridSpec, m: &Mode) -> bool {
    match (m.jx, m.jy) {
        (Some(jx), Some(jy)) => {
            let rx = jx as f64 / (spec.nx / 2) as f64;
            let ry = jy as f64 / (spec.ny / 2) as f64;
            rx * rx + ry * ry <= 4.0 / 9.0 + 1e-12
        }
        _ => false,
    }
}

pub(crate) fn mode_of(spec: &GridSpec, mx: usize, my: usize) -> Mode {
    let kx = spec.kx(mx);
    let ky = spec.ky(my);
    let jx = GridSpec::mode_number(mx, spec.nx);
    let jy = GridSpec::mode_number(my, spec.ny);
    Mode {
        kx,
        ky,
        sz: C64::new(0.5 * ky, 0.5 * kx),
        szbar: C64::new(-0.5 * ky, 0.5 * kx),
        is_mean: mx == 0 && my == 0,
        is_nyquist: jx.is_none() || jy.is_none(),
        jx,
        jy,
    }
}

fn fft2(spec: &GridSpec, buf: &mut [C64], forward: bool) {
    let (fx, ix) = plans(spec.nx);
    let (fy, iy) = plans(spec.ny);
    let row = if forward { fx } else { ix };
    let col = if forward { fy } else { iy };
    for r in buf.chunks_exact_mut(spec.nx) {
        row.process(r);
    }
    let mut column = vec![C64::new(0.0, 0.0); spec.ny];
    for x in 0..spec.nx {
        for (y, c) in column.iter_mut().enumerate() {
            *c = buf[spec.index(x, y)];
        }
        col.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            buf[spec.index(x, y)] = *c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::square_2pi(32).unwrap()
    }

    fn eix(spec: GridSpec) -> Field2D {
        Field2D::from_fn(spec, |x, _| C64::new(0.0, x).exp())
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(3, 8, 1.0, 1.0).is_err());
        assert!(GridSpec::new(6, 7, 1.0, 1.0).is_err());
        assert!(GridSpec::new(8, 8, 0.0, 1.0).is_err());
        assert!(GridSpec::new(8, 8, 1.0, f64::NAN).is_err());
        assert!(GridSpec::new(4, 4, 1.0, 1.0).is_ok());
    }

    #[test]
    fn from_values_rejects_bad_input() {
        let g = GridSpec::new(4, 4, 1.0, 1.0).unwrap();
        assert!(matches!(
            Field2D::from_values(g, vec![C64::new(0.0, 0.0); 3]),
            Err(FieldError::LengthMismatch { .. })
        ));
        let mut v = vec![C64::new(0.0, 0.0); 16];
        v[3].re = f64::INFINITY;
        assert!(matches!(Field2D::from_values(g, v), Err(FieldError::NonFinite)));
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let f = Field2D::constant(grid(), C64::new(2.5, -1.0));
        assert!(f.d_z().norm_inf() < 1e-14);
        assert!(f.d_zbar().norm_inf() < 1e-14);
    }

    #[test]
    fn derivative_of_plane_wave() {
        let f = eix(grid());
        let expect = f.scale(C64::new(0.0, 0.5));
        assert!(f.d_z().dist_inf(&expect) < 1e-13);
        assert!(f.d_zbar().dist_inf(&expect) < 1e-13);
        // y-waves pick up opposite signs in the two operators
        let g = Field2D::from_fn(grid(), |_, y| C64::new(0.0, y).exp());
        assert!(g.d_z().dist_inf(&g.scale_re(0.5)) < 1e-13);
        assert!(g.d_zbar().dist_inf(&g.scale_re(-0.5)) < 1e-13);
    }

    #[test]
    fn inverse_derivatives() {
        let f = eix(grid()).scale(C64::new(0.0, 0.5));
        assert!(f.inv_d_z().unwrap().dist_inf(&eix(grid())) < 1e-13);
        let zero = Field2D::zeros(grid());
        assert_eq!(zero.inv_d_z().unwrap().norm_inf(), 0.0);
        assert_eq!(zero.inv_d_zbar().unwrap().norm_inf(), 0.0);
        let biased = eix(grid()).add_const(C64::new(0.1, 0.0));
        assert!(matches!(biased.inv_d_z(), Err(FieldError::NonzeroMean { .. })));
        assert!(matches!(biased.inv_d_zbar(), Err(FieldError::NonzeroMean { .. })));
        assert!(matches!(biased.solve_poisson_zzbar(), Err(FieldError::NonzeroMean { .. })));

        let emix = Field2D::from_fn(grid(), |x, _| C64::new(0.0, -x).exp());
        let g = emix.scale(C64::new(0.0, -0.5));
        assert!(g.inv_d_zbar().unwrap().dist_inf(&emix) < 1e-13);
    }

    #[test]
    fn poisson_eigenmode() {
        let rhs = eix(grid()).scale_re(-0.25);
        let u = rhs.solve_poisson_zzbar().unwrap();
        assert!(u.dist_inf(&eix(grid())) < 1e-13);
        assert_eq!(Field2D::zeros(grid()).solve_poisson_zzbar().unwrap().norm_inf(), 0.0);
    }

    #[test]
    fn integrate_examples() {
        let g = grid();
        let one = Field2D::constant(g, C64::new(1.0, 0.0));
        assert!((one.integrate() - C64::new(4.0 * PI * PI, 0.0)).norm() < 1e-12);
        assert!(eix(g).integrate().norm() < 1e-12);
        let p = eix(g).scale_re(0.2);
        let w = p.abs_sq().integrate();
        assert!((w.re - 0.04 * 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn dealias_removes_high_modes_only() {
        let g = grid();
        let low = Field2D::from_fn(g, |x, y| C64::new((3.0 * x).cos(), (2.0 * y).sin()));
        assert!(low.dealias().dist_inf(&low) < 1e-13);
        assert_eq!(low.tail_fraction(), low.tail_fraction().min(1e-12));
        let high = Field2D::from_fn(g, |x, _| C64::new((14.0 * x).cos(), 0.0));
        assert!(high.dealias().norm_inf() < 1e-13);
        assert!(high.tail_fraction() > 0.5);
    }
}
