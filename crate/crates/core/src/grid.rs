//! Periodic spatial grids and their discrete Fourier transforms.
//!
//! Fields live on the box `[-L, L)^d` sampled at `x_j = -L + j h`, `h = 2L/n`.
//! The transforms approximate the continuous pair
//! `Fu(ξ) = ∫ e^{-i(ξ,x)} u(x) dx` and `F⁻¹v(x) = (2π)^{-d} ∫ e^{i(ξ,x)} v(ξ) dξ`
//! on the lattice `ξ_k = k π / L`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Dimension, points per axis and half-width of a periodic grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridShape {
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
}

impl GridShape {
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// A periodic grid together with its FFT plans.
#[derive(Clone)]
pub struct FrequencyGrid {
    shape: GridShape,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl fmt::Debug for FrequencyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrequencyGrid").field("shape", &self.shape).finish()
    }
}

impl FrequencyGrid {
    /// `n` must be a power of two, at least 8; `dim` is 1 or 2.
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not supported (1 or 2)")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} must be a power of two >= 8")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half-width L = {half_width} must be positive")));
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let step = PI / half_width;
        let wavenumbers = (0..n)
            .map(|i| {
                let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                k * step
            })
            .collect();
        Ok(Self {
            shape: GridShape { dim, n, half_width },
            fft,
            ifft,
            wavenumbers,
        })
    }

    /// Like [`FrequencyGrid::new`] but also requires the Nyquist frequency to
    /// exceed `floor`.
    pub fn with_resolution_floor(dim: usize, n: usize, half_width: f64, floor: f64) -> Result<Self> {
        let grid = Self::new(dim, n, half_width)?;
        if grid.nyquist() <= floor {
            return Err(Error::Resolution {
                reason: format!("Nyquist frequency {:.3} below floor {floor}", grid.nyquist()),
                n: (2.0 * floor * half_width / PI).ceil().max(8.0) as usize * 2,
                half_width,
            });
        }
        Ok(grid)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn n(&self) -> usize {
        self.shape.n
    }

    pub fn half_width(&self) -> f64 {
        self.shape.half_width
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.shape.half_width / self.shape.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.shape.dim as i32)
    }

    pub fn nyquist(&self) -> f64 {
        PI * self.shape.n as f64 / (2.0 * self.shape.half_width)
    }

    /// Per-axis indices of a flat row-major index.
    pub fn axis_indices(&self, idx: usize) -> [usize; 2] {
        let n = self.shape.n;
        if self.shape.dim == 1 {
            [idx, 0]
        } else {
            [idx / n, idx % n]
        }
    }

    pub fn flat_index(&self, axes: [usize; 2]) -> usize {
        if self.shape.dim == 1 {
            axes[0]
        } else {
            axes[0] * self.shape.n + axes[1]
        }
    }

    /// Spatial node of a flat index (unused trailing coordinates are zero).
    pub fn x(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        let l = self.shape.half_width;
        let a = self.axis_indices(idx);
        if self.shape.dim == 1 {
            [-l + a[0] as f64 * h, 0.0]
        } else {
            [-l + a[0] as f64 * h, -l + a[1] as f64 * h]
        }
    }

    /// Frequency node of a flat index.
    pub fn xi(&self, idx: usize) -> [f64; 2] {
        let a = self.axis_indices(idx);
        if self.shape.dim == 1 {
            [self.wavenumbers[a[0]], 0.0]
        } else {
            [self.wavenumbers[a[0]], self.wavenumbers[a[1]]]
        }
    }

    pub fn xi_norm(&self, idx: usize) -> f64 {
        let xi = self.xi(idx);
        (xi[0] * xi[0] + xi[1] * xi[1]).sqrt()
    }

    pub fn check(&self, field: &SpectralField) -> Result<()> {
        if field.shape == self.shape {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn parity(&self, idx: usize) -> f64 {
        let a = self.axis_indices(idx);
        if (a[0] + a[1]) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn transform_axes(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.shape.n;
        plan.process(data);
        if self.shape.dim == 2 {
            transpose_square(data, n);
            plan.process(data);
            transpose_square(data, n);
        }
    }

    /// Physical samples to spectrum, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len(), "buffer length does not match grid");
        self.transform_axes(data, &self.fft);
        let vol = self.cell_volume();
        for (idx, v) in data.iter_mut().enumerate() {
            *v *= vol * self.parity(idx);
        }
    }

    /// Spectrum to physical samples, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len(), "buffer length does not match grid");
        for (idx, v) in data.iter_mut().enumerate() {
            *v *= self.parity(idx);
        }
        self.transform_axes(data, &self.ifft);
        let scale = (2.0 * self.shape.half_width).powi(-(self.shape.dim as i32));
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Representation of a [`SpectralField`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    Physical,
    Frequency,
}

/// A field on a periodic grid, stored either as physical samples or as its
/// spectrum.
#[derive(Clone, Debug)]
pub struct SpectralField {
    shape: GridShape,
    form: Form,
    values: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &FrequencyGrid, form: Form) -> Self {
        Self {
            shape: grid.shape(),
            form,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: &FrequencyGrid, f: F) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|i| Complex64::new(f(&grid.x(i)[..d]), 0.0))
            .collect();
        Self {
            shape: grid.shape(),
            form: Form::Physical,
            values,
        }
    }

    pub fn from_real(grid: &FrequencyGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            shape: grid.shape(),
            form: Form::Physical,
            values: values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        })
    }

    pub fn from_values(grid: &FrequencyGrid, form: Form, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            shape: grid.shape(),
            form,
            values,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn to_frequency(&self, grid: &FrequencyGrid) -> Result<Self> {
        grid.check(self)?;
        let mut out = self.clone();
        if self.form == Form::Physical {
            grid.forward(&mut out.values);
            out.form = Form::Frequency;
        }
        Ok(out)
    }

    pub fn to_physical(&self, grid: &FrequencyGrid) -> Result<Self> {
        grid.check(self)?;
        let mut out = self.clone();
        if self.form == Form::Frequency {
            grid.inverse(&mut out.values);
            out.form = Form::Physical;
        }
        Ok(out)
    }

    /// Real parts of the stored values.
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    /// Multiplies the spectrum by `multiplier(ξ)`; the result is in frequency form.
    pub fn apply_multiplier<M: Fn([f64; 2]) -> Complex64>(&self, grid: &FrequencyGrid, multiplier: M) -> Result<Self> {
        let mut out = self.to_frequency(grid)?;
        for (i, v) in out.values.iter_mut().enumerate() {
            *v *= multiplier(grid.xi(i));
        }
        Ok(out)
    }

    /// `self + a * other`, both in the same form.
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        if self.shape != other.shape || self.form != other.form {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + y * a).collect();
        Ok(Self {
            shape: self.shape,
            form: self.form,
            values,
        })
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            shape: self.shape,
            form: self.form,
            values: self.values.iter().map(|v| v * a).collect(),
        }
    }

    /// Riemann sum of the real part over the box (physical form required).
    pub fn integral(&self, grid: &FrequencyGrid) -> Result<f64> {
        let phys = self.to_physical(grid)?;
        Ok(phys.values.iter().map(|v| v.re).sum::<f64>() * grid.cell_volume())
    }

    pub fn l1_norm(&self, grid: &FrequencyGrid) -> Result<f64> {
        let phys = self.to_physical(grid)?;
        Ok(phys.values.iter().map(|v| v.re.abs()).sum::<f64>() * grid.cell_volume())
    }

    pub fn l2_norm(&self, grid: &FrequencyGrid) -> Result<f64> {
        let phys = self.to_physical(grid)?;
        Ok((phys.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume()).sqrt())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}
