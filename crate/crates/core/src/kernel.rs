//! Heat kernels of the generator: `K^λ_{s,t}(ξ) = exp(∫_s^t ψ(r, ξ) dr - λ(t - s))`,
//! transition densities and Littlewood–Paley localized kernels.
//!
//! On a grid, frequencies with an axis index at the Nyquist node have no
//! conjugate partner; the symbol is replaced by its real part there so that
//! real fields stay real.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::{Form, FrequencyGrid, SpectralField};
use crate::lp_norms::LPFamily;
use crate::symbol::{Coefficients, StableModel, TimeProfile};

/// The symbol of a model sampled on a grid, with per-piece tables cached for
/// piecewise-constant coefficients.
#[derive(Clone, Debug)]
pub struct SymbolGrid {
    model: StableModel,
    grid: FrequencyGrid,
    tables: Vec<Vec<Complex64>>,
    exec: Execution,
}

fn is_nyquist(grid: &FrequencyGrid, idx: usize) -> bool {
    let a = grid.axis_indices(idx);
    let half = grid.n() / 2;
    a[0] == half || (grid.dim() == 2 && a[1] == half)
}

fn table_for(model: &StableModel, grid: &FrequencyGrid, c: &Coefficients, exec: Execution) -> Vec<Complex64> {
    map_indexed(exec, grid.len(), |i| {
        let v = c.symbol(model.alpha(), model.constant(), grid.xi(i));
        if is_nyquist(grid, i) {
            Complex64::new(v.re, 0.0)
        } else {
            v
        }
    })
}

impl SymbolGrid {
    pub fn new(model: &StableModel, grid: &FrequencyGrid, exec: Execution) -> Result<Self> {
        if model.dim() != grid.dim() {
            return Err(Error::GridMismatch);
        }
        let tables = match model.profile() {
            TimeProfile::Piecewise { pieces, .. } => pieces.iter().map(|c| table_for(model, grid, c, exec)).collect(),
            TimeProfile::Function { .. } => Vec::new(),
        };
        Ok(Self {
            model: model.clone(),
            grid: grid.clone(),
            tables,
            exec,
        })
    }

    pub fn model(&self) -> &StableModel {
        &self.model
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    /// Symbol table of the piece active at time `t`.
    pub fn at(&self, t: f64) -> Vec<Complex64> {
        match self.model.profile() {
            TimeProfile::Piecewise { starts, .. } => {
                let i = starts.partition_point(|&s| s <= t).saturating_sub(1);
                self.tables[i].clone()
            }
            TimeProfile::Function { f, .. } => table_for(&self.model, &self.grid, &f(t), self.exec),
        }
    }

    /// `∫_s^t ψ(r, ξ) dr` on the grid.
    pub fn integrated(&self, s: f64, t: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        match self.model.profile() {
            TimeProfile::Piecewise { starts, .. } => {
                for (i, table) in self.tables.iter().enumerate() {
                    let lo = starts[i].max(s);
                    let hi = starts.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t);
                    if hi > lo {
                        out.iter_mut().zip(table).for_each(|(o, v)| *o += v * (hi - lo));
                    }
                }
            }
            TimeProfile::Function { .. } => {
                for (len, c) in self.model.time_segments(s, t) {
                    let table = table_for(&self.model, &self.grid, &c, self.exec);
                    out.iter_mut().zip(&table).for_each(|(o, v)| *o += v * len);
                }
            }
        }
        out
    }

    /// `K^λ_{s,t}` on the grid.
    pub fn kernel_values(&self, s: f64, t: f64, lambda: f64) -> Vec<Complex64> {
        let damp = lambda * (t - s);
        self.integrated(s, t).into_iter().map(|v| (v - damp).exp()).collect()
    }
}

/// Diagnostics of a physical-form transition density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityDiagnostics {
    /// Riemann sum over the grid.
    pub mass: f64,
    pub min_value: f64,
    /// Largest imaginary residue after inversion.
    pub max_imag: f64,
    /// Largest `|K|` on Nyquist nodes.
    pub nyquist_modulus: f64,
    /// Mass in the outer quarter of the box along any axis.
    pub edge_mass: f64,
}

/// A kernel on a grid for the time pair `(s, t)` and damping `λ`.
#[derive(Clone, Debug)]
pub struct KernelField {
    pub s: f64,
    pub t: f64,
    pub lambda: f64,
    pub field: SpectralField,
    pub diagnostics: Option<DensityDiagnostics>,
}

fn check_times(model: &StableModel, s: f64, t: f64) -> Result<()> {
    if !(s >= 0.0 && s <= t && t <= model.horizon() * (1.0 + 1e-12)) {
        return Err(Error::TimeOrder(format!("need 0 <= s <= t <= T, got s = {s}, t = {t}, T = {}", model.horizon())));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("damping λ = {lambda} must be nonnegative")));
    }
    Ok(())
}

/// `K^λ_{s,t}(ξ)` in frequency form.
pub fn kernel_k(model: &StableModel, s: f64, t: f64, lambda: f64, grid: &FrequencyGrid) -> Result<KernelField> {
    check_times(model, s, t)?;
    check_lambda(lambda)?;
    let symbols = SymbolGrid::new(model, grid, Execution::default())?;
    kernel_k_with(&symbols, s, t, lambda)
}

/// [`kernel_k`] reusing cached symbol tables.
pub fn kernel_k_with(symbols: &SymbolGrid, s: f64, t: f64, lambda: f64) -> Result<KernelField> {
    check_times(&symbols.model, s, t)?;
    check_lambda(lambda)?;
    let values = symbols.kernel_values(s, t, lambda);
    if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite("kernel exponential"));
    }
    Ok(KernelField {
        s,
        t,
        lambda,
        field: SpectralField::from_values(&symbols.grid, Form::Frequency, values)?,
        diagnostics: None,
    })
}

fn reflect_index(grid: &FrequencyGrid, idx: usize) -> usize {
    let n = grid.n();
    let a = grid.axis_indices(idx);
    grid.flat_index([(n - a[0]) % n, (n - a[1]) % n])
}

/// Tolerances of [`density_g`].
pub const MASS_TOLERANCE: f64 = 1e-6;
pub const NEGATIVITY_TOLERANCE: f64 = 1e-6;
pub const NYQUIST_TOLERANCE: f64 = 1e-8;

/// Probability density of the increment `Z_t - Z_s` of the process with
/// generator symbol `ψ`, wrapped onto the periodic box.
pub fn density_g(model: &StableModel, s: f64, t: f64, grid: &FrequencyGrid) -> Result<KernelField> {
    if !(s < t) {
        return Err(Error::TimeOrder(format!("density needs s < t, got s = {s}, t = {t}")));
    }
    let k = kernel_k(model, s, t, 0.0, grid)?;
    let spectrum = k.field.values();
    let nyquist_modulus = (0..grid.len())
        .filter(|&i| is_nyquist(grid, i))
        .map(|i| spectrum[i].norm())
        .fold(0.0, f64::max);
    let mut values: Vec<Complex64> = (0..grid.len()).map(|i| spectrum[reflect_index(grid, i)]).collect();
    grid.inverse(&mut values);
    let max_imag = values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let real: Vec<f64> = values.iter().map(|v| v.re).collect();
    let vol = grid.cell_volume();
    let mass = real.iter().sum::<f64>() * vol;
    let min_value = real.iter().copied().fold(f64::INFINITY, f64::min);
    let edge = 0.75 * grid.half_width();
    let edge_mass = (0..grid.len())
        .filter(|&i| {
            let x = grid.x(i);
            x[0].abs() >= edge || (grid.dim() == 2 && x[1].abs() >= edge)
        })
        .map(|i| real[i].abs())
        .sum::<f64>()
        * vol;
    let diagnostics = DensityDiagnostics {
        mass,
        min_value,
        max_imag,
        nyquist_modulus,
        edge_mass,
    };
    let suggest = |reason: String| Error::Resolution {
        reason,
        n: grid.n() * 2,
        half_width: grid.half_width(),
    };
    if nyquist_modulus > NYQUIST_TOLERANCE {
        return Err(suggest(format!("|K| = {nyquist_modulus:.2e} at the Nyquist frequency")));
    }
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(suggest(format!("mass {mass} deviates from 1")));
    }
    if min_value < -NEGATIVITY_TOLERANCE {
        return Err(suggest(format!("negative density lobe {min_value:.2e}")));
    }
    Ok(KernelField {
        s,
        t,
        lambda: 0.0,
        field: SpectralField::from_real(grid, real)?,
        diagnostics: Some(diagnostics),
    })
}

/// A localized kernel `h^{λ,j}_{s,t} = F⁻¹[K^λ_{s,t} φ̃_j]` (a convolution
/// kernel) together with its L¹ norm.
#[derive(Clone, Debug)]
pub struct LocalizedKernel {
    pub kernel: KernelField,
    pub l1_norm: f64,
}

fn localized_values(symbols: &SymbolGrid, s: f64, t: f64, lambda: f64, tilde: &[f64]) -> Result<SpectralField> {
    let k = kernel_k_with(symbols, s, t, lambda)?;
    let mut values = k.field.into_values();
    values.iter_mut().zip(tilde).for_each(|(v, m)| *v *= *m);
    symbols.grid.inverse(&mut values);
    SpectralField::from_real(&symbols.grid, values.iter().map(|v| v.re).collect())
}

/// The `j`-th localized kernel and its L¹ norm.
pub fn localized_kernel(model: &StableModel, s: f64, t: f64, lambda: f64, j: usize, family: &LPFamily) -> Result<LocalizedKernel> {
    let symbols = SymbolGrid::new(model, family.grid(), Execution::default())?;
    localized_kernel_with(&symbols, s, t, lambda, j, family)
}

/// [`localized_kernel`] reusing cached symbol tables.
pub fn localized_kernel_with(symbols: &SymbolGrid, s: f64, t: f64, lambda: f64, j: usize, family: &LPFamily) -> Result<LocalizedKernel> {
    family.grid().check(&SpectralField::zeros(&symbols.grid, Form::Physical))?;
    let tilde = family.tilde_table(j)?;
    let field = localized_values(symbols, s, t, lambda, &tilde)?;
    let l1_norm = field.l1_norm(&symbols.grid)?;
    Ok(LocalizedKernel {
        kernel: KernelField {
            s,
            t,
            lambda,
            field,
            diagnostics: None,
        },
        l1_norm,
    })
}

/// `∫ |h^{λ,j}_{s,t'} - h^{λ,j}_{s,t}| dx`.
pub fn kernel_time_increment(model: &StableModel, s: f64, t: f64, t2: f64, lambda: f64, j: usize, family: &LPFamily) -> Result<f64> {
    let symbols = SymbolGrid::new(model, family.grid(), Execution::default())?;
    kernel_time_increment_with(&symbols, s, t, t2, lambda, j, family)
}

/// [`kernel_time_increment`] reusing cached symbol tables.
pub fn kernel_time_increment_with(
    symbols: &SymbolGrid,
    s: f64,
    t: f64,
    t2: f64,
    lambda: f64,
    j: usize,
    family: &LPFamily,
) -> Result<f64> {
    if !(s <= t && t <= t2) {
        return Err(Error::TimeOrder(format!("need s <= t <= t', got {s}, {t}, {t2}")));
    }
    if t == t2 {
        check_times(&symbols.model, s, t)?;
        family.tilde_table(j)?;
        return Ok(0.0);
    }
    let tilde = family.tilde_table(j)?;
    let a = localized_values(symbols, s, t, lambda, &tilde)?;
    let b = localized_values(symbols, s, t2, lambda, &tilde)?;
    b.axpy(-1.0, &a)?.l1_norm(&symbols.grid)
}

const MAGIC: &[u8; 4] = b"KFLD";

/// Header of the binary snapshot format.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub dim: u32,
    pub n: u32,
    pub half_width: f64,
    pub s: f64,
    pub t: f64,
    pub lambda: f64,
    /// 0: physical, real `f64` values; 1: frequency, complex `(re, im)` pairs.
    pub form: u32,
}

/// Writes a kernel field: magic `KFLD`, `d: u32`, `n: u32`, `L, s, t, λ: f64`,
/// `form: u32`, then the row-major array, all little-endian.
pub fn write_snapshot<W: Write>(mut w: W, grid: &FrequencyGrid, kernel: &KernelField) -> Result<()> {
    grid.check(&kernel.field)?;
    let form = match kernel.field.form() {
        Form::Physical => 0u32,
        Form::Frequency => 1u32,
    };
    w.write_all(MAGIC)?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    for v in [grid.half_width(), kernel.s, kernel.t, kernel.lambda] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&form.to_le_bytes())?;
    for v in kernel.field.values() {
        w.write_all(&v.re.to_le_bytes())?;
        if form == 1 {
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(SnapshotHeader, FrequencyGrid, KernelField)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let dim = read_u32(&mut r)?;
    let n = read_u32(&mut r)?;
    let half_width = read_f64(&mut r)?;
    let s = read_f64(&mut r)?;
    let t = read_f64(&mut r)?;
    let lambda = read_f64(&mut r)?;
    let form = read_u32(&mut r)?;
    if form > 1 {
        return Err(Error::Format(format!("unknown form flag {form}")));
    }
    let grid = FrequencyGrid::new(dim as usize, n as usize, half_width)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = read_f64(&mut r)?;
        let im = if form == 1 { read_f64(&mut r)? } else { 0.0 };
        values.push(Complex64::new(re, im));
    }
    let field = SpectralField::from_values(&grid, if form == 1 { Form::Frequency } else { Form::Physical }, values)?;
    let header = SnapshotHeader {
        dim,
        n,
        half_width,
        s,
        t,
        lambda,
        form,
    };
    Ok((
        header,
        grid,
        KernelField {
            s,
            t,
            lambda,
            field,
            diagnostics: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp_norms::{build_family, max_level};
    use crate::symbol::{AngularMeasure, Coefficients};
    use std::f64::consts::PI;

    #[test]
    fn trivial_kernels() {
        let model = StableModel::isotropic(1.3, 2, 1.0, 1.0).unwrap();
        let grid = FrequencyGrid::new(2, 32, 4.0).unwrap();
        let k = kernel_k(&model, 0.4, 0.4, 2.0, &grid).unwrap();
        assert!(k.field.values().iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        let k0 = kernel_k(&model, 0.1, 0.6, 0.0, &grid).unwrap();
        let kl = kernel_k(&model, 0.1, 0.6, 3.0, &grid).unwrap();
        for (a, b) in k0.field.values().iter().zip(kl.field.values()) {
            assert!((a * (-1.5f64).exp() - b).norm() <= 1e-15);
        }
        assert!(kernel_k(&model, 0.6, 0.1, 0.0, &grid).is_err());
    }

    #[test]
    fn gaussian_kernel_and_density() {
        let model = StableModel::gaussian(1, [[1.0, 0.0], [0.0, 0.0]], 1.0).unwrap();
        let grid = FrequencyGrid::new(1, 1024, 20.0).unwrap();
        let k = kernel_k(&model, 0.0, 1.0, 0.0, &grid).unwrap();
        for (i, v) in k.field.values().iter().enumerate() {
            let xi = grid.xi(i)[0];
            assert!((v - Complex64::new((-0.5 * xi * xi).exp(), 0.0)).norm() < 1e-15);
        }
        let g = density_g(&model, 0.0, 1.0, &grid).unwrap();
        let values = g.field.real_values();
        let err = (0..grid.len())
            .map(|i| {
                let x = grid.x(i)[0];
                (values[i] - (-0.5 * x * x).exp() / (2.0 * PI).sqrt()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1e-8, "err {err}");
    }

    #[test]
    fn semigroup_property() {
        let m = AngularMeasure::from_density(2, 64, |w| 1.0 + 0.4 * w[0]).unwrap();
        let model = StableModel::builder(0.8, 2)
            .coefficients(Coefficients::new(m))
            .build()
            .unwrap();
        let grid = FrequencyGrid::new(2, 32, 6.0).unwrap();
        let a = kernel_k(&model, 0.1, 0.3, 0.0, &grid).unwrap();
        let b = kernel_k(&model, 0.3, 0.9, 0.0, &grid).unwrap();
        let c = kernel_k(&model, 0.1, 0.9, 0.0, &grid).unwrap();
        for ((x, y), z) in a.field.values().iter().zip(b.field.values()).zip(c.field.values()) {
            assert!((x * y - z).norm() <= 1e-12);
        }
    }

    #[test]
    fn skewed_density_is_real_and_normalized() {
        let m = AngularMeasure::tabulated(1, &[0.3, 1.0]).unwrap();
        let model = StableModel::builder(1.5, 1).coefficients(Coefficients::new(m)).build().unwrap();
        let grid = FrequencyGrid::new(1, 1024, 40.0).unwrap();
        let g = density_g(&model, 0.0, 1.0, &grid).unwrap();
        let d = g.diagnostics.unwrap();
        assert!(d.max_imag <= 1e-10);
        assert!((d.mass - 1.0).abs() <= 1e-12);
        assert!(d.min_value >= -1e-6);
        // Skewed to the right: the mean is zero and the median is negative.
        let vals = g.field.real_values();
        let left: f64 = vals[..grid.n() / 2].iter().sum::<f64>() * grid.spacing();
        assert!(left > 0.5);
    }

    #[test]
    fn coarse_grid_is_reported() {
        let model = StableModel::gaussian(1, [[1.0, 0.0], [0.0, 0.0]], 1.0).unwrap();
        let grid = FrequencyGrid::new(1, 8, 20.0).unwrap();
        assert!(matches!(density_g(&model, 0.0, 0.01, &grid), Err(Error::Resolution { n: 16, .. })));
    }

    #[test]
    fn localized_kernel_at_equal_times_is_tilde() {
        let model = StableModel::isotropic(1.5, 1, 1.0, 1.0).unwrap();
        let grid = FrequencyGrid::new(1, 256, PI).unwrap();
        let fam = build_family(&grid, max_level(&grid)).unwrap();
        for j in 0..=fam.j_max() {
            let h = localized_kernel(&model, 0.5, 0.5, 1.0, j, &fam).unwrap();
            let mut tilde: Vec<Complex64> = fam.tilde_table(j).unwrap().into_iter().map(Complex64::from).collect();
            grid.inverse(&mut tilde);
            let l1 = tilde.iter().map(|v| v.re.abs()).sum::<f64>() * grid.spacing();
            assert!((h.l1_norm - l1).abs() <= 1e-12 * l1);
        }
        assert!(localized_kernel(&model, 0.0, 0.5, 1.0, fam.j_max() + 1, &fam).is_err());
        assert_eq!(kernel_time_increment(&model, 0.0, 0.5, 0.5, 0.0, 2, &fam).unwrap(), 0.0);
        assert!(kernel_time_increment(&model, 0.0, 0.5, 0.4, 0.0, 2, &fam).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let model = StableModel::isotropic(1.2, 2, 1.0, 1.0).unwrap();
        let grid = FrequencyGrid::new(2, 16, 3.0).unwrap();
        let k = kernel_k(&model, 0.0, 0.5, 0.25, &grid).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &grid, &k).unwrap();
        assert_eq!(buf.len(), 4 + 8 + 32 + 4 + 16 * grid.len());
        let (header, grid2, k2) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(header.form, 1);
        assert_eq!(grid2.shape(), grid.shape());
        assert_eq!(k2.field.values(), k.field.values());
        assert_eq!((k2.s, k2.t, k2.lambda), (0.0, 0.5, 0.25));
        buf[0] = b'X';
        assert!(matches!(read_snapshot(buf.as_slice()), Err(Error::Format(_))));
    }
}
