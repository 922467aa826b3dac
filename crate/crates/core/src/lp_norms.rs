//! Littlewood–Paley blocks, fractional derivatives and stochastic Hölder norms.
//!
//! The dyadic family is `φ̂_j(ξ) = φ̂(2^{-j}ξ)` for `j ≥ 1` with the low
//! frequency completion `ψ̂ = 1 - Σ_{k≥1} φ̂_k`; block `0` is `ψ̂`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{fold_chunked, Execution};
use crate::grid::{Form, FrequencyGrid, SpectralField};

/// Smooth bump supported on `(1/2, 2)`.
pub fn bump(s: f64) -> f64 {
    if s <= 0.5 || s >= 2.0 {
        0.0
    } else {
        (-1.0 / ((s - 0.5) * (2.0 - s))).exp()
    }
}

/// Radial profile of `φ̂`, normalized so that `Σ_j φ̂(2^{-j} r) = 1` for `r > 0`.
pub fn phi_hat(r: f64) -> f64 {
    let b = bump(r);
    if b == 0.0 {
        return 0.0;
    }
    let total: f64 = (-3..=3).map(|j| bump(r * 2f64.powi(-j))).sum();
    b / total
}

/// `ψ̂(r) = 1 - Σ_{k≥1} φ̂(2^{-k} r)`.
pub fn psi_hat(r: f64) -> f64 {
    let mut sum = 0.0;
    let mut k = 1;
    while r * 2f64.powi(-k) > 0.5 {
        sum += phi_hat(r * 2f64.powi(-k));
        k += 1;
    }
    1.0 - sum
}

/// The Littlewood–Paley family on a grid, blocks `0..=j_max`.
#[derive(Clone, Debug)]
pub struct LPFamily {
    grid: FrequencyGrid,
    j_max: usize,
}

/// Largest level satisfying `2^j ≤ Nyquist / 2` on `grid`.
pub fn max_level(grid: &FrequencyGrid) -> usize {
    (grid.nyquist() / 2.0).log2().floor().max(0.0) as usize
}

/// Builds the family with levels up to `j_max`.
pub fn build_family(grid: &FrequencyGrid, j_max: usize) -> Result<LPFamily> {
    if j_max == 0 || 2f64.powi(j_max as i32) > grid.nyquist() / 2.0 {
        return Err(Error::Resolution {
            reason: format!("levels up to {j_max} need 2^j_max <= Nyquist/2 = {:.3}", grid.nyquist() / 2.0),
            n: ((2f64.powi(j_max as i32 + 2) * grid.half_width() / PI).ceil() as usize).next_power_of_two().max(8),
            half_width: grid.half_width(),
        });
    }
    Ok(LPFamily {
        grid: grid.clone(),
        j_max,
    })
}

impl LPFamily {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    /// Multiplier of block `j` at frequency norm `r` (no range check).
    pub fn block_symbol(&self, j: usize, r: f64) -> f64 {
        if j == 0 {
            psi_hat(r)
        } else {
            phi_hat(r * 2f64.powi(-(j as i32)))
        }
    }

    /// Multiplier of `φ̃_j`: `ψ̂ + φ̂_1` for `j = 0`, `φ̂_{j-1} + φ̂_j + φ̂_{j+1}` otherwise.
    pub fn tilde_symbol(&self, j: usize, r: f64) -> f64 {
        if j == 0 {
            psi_hat(r) + phi_hat(r / 2.0)
        } else {
            (j as i32 - 1..=j as i32 + 1).map(|k| phi_hat(r * 2f64.powi(-k))).sum()
        }
    }

    fn check_level(&self, j: usize) -> Result<()> {
        if j > self.j_max {
            Err(Error::LevelOutOfRange { level: j, max: self.j_max })
        } else {
            Ok(())
        }
    }

    /// Block multiplier sampled on the grid's frequency nodes.
    pub fn block_table(&self, j: usize) -> Result<Vec<f64>> {
        self.check_level(j)?;
        Ok((0..self.grid.len()).map(|i| self.block_symbol(j, self.grid.xi_norm(i))).collect())
    }

    /// `φ̃_j` sampled on the grid's frequency nodes.
    pub fn tilde_table(&self, j: usize) -> Result<Vec<f64>> {
        self.check_level(j)?;
        Ok((0..self.grid.len()).map(|i| self.tilde_symbol(j, self.grid.xi_norm(i))).collect())
    }

    /// Maximum over grid nodes with `2^{-1} ≤ |ξ| ≤ 2^{j_max}` of `|Σ_j φ̂(2^{-j}ξ) - 1|`,
    /// with the sum over all integer `j`.
    pub fn partition_defect(&self) -> f64 {
        let lo = 0.5;
        let hi = 2f64.powi(self.j_max as i32);
        (0..self.grid.len())
            .map(|i| self.grid.xi_norm(i))
            .filter(|&r| r >= lo && r <= hi)
            .map(|r| {
                let total: f64 = (-8..=(self.j_max as i32 + 2)).map(|j| phi_hat(r * 2f64.powi(-j))).sum();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn spectrum(grid: &FrequencyGrid, u: &SpectralField) -> Result<SpectralField> {
    grid.check(u)?;
    u.to_frequency(grid)
}

fn multiply_return(grid: &FrequencyGrid, u: &SpectralField, table: &[f64]) -> Result<SpectralField> {
    let form = u.form();
    let mut spec = spectrum(grid, u)?;
    spec.values_mut().iter_mut().zip(table).for_each(|(v, m)| *v *= *m);
    match form {
        Form::Physical => spec.to_physical(grid),
        Form::Frequency => Ok(spec),
    }
}

/// Block `j` of `u` (`ψ ∗ u` for `j = 0`), returned in the form of `u`.
pub fn block(u: &SpectralField, family: &LPFamily, j: usize) -> Result<SpectralField> {
    let table = family.block_table(j)?;
    multiply_return(&family.grid, u, &table)
}

/// `∂^α u = F⁻¹[|ξ|^α Fu]`, returned in the form of `u`.
pub fn fractional_derivative(grid: &FrequencyGrid, u: &SpectralField, alpha: f64) -> Result<SpectralField> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let table: Vec<f64> = (0..grid.len()).map(|i| derivative_multiplier(grid.xi_norm(i), alpha)).collect();
    multiply_return(grid, u, &table)
}

fn derivative_multiplier(r: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else {
        r.powf(alpha)
    }
}

/// `u_n = ψ ∗ u + Σ_{1≤j≤n} φ_j ∗ u`.
pub fn mollify_sequence(u: &SpectralField, family: &LPFamily, n: usize) -> Result<SpectralField> {
    family.check_level(n)?;
    let grid = &family.grid;
    let table: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r = grid.xi_norm(i);
            (0..=n).map(|j| family.block_symbol(j, r)).sum()
        })
        .collect();
    multiply_return(grid, u, &table)
}

/// Parameters of a Hölder-norm estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderSpec {
    /// Derivative order `α ≥ 0`.
    pub alpha: f64,
    /// Hölder exponent `β ∈ (0, 1)`.
    pub beta: f64,
    /// Moment order.
    pub p: f64,
    /// Mark-space integrability order, if the fields carry marks.
    pub r: Option<f64>,
}

/// Estimated norms with Monte Carlo error bars.
#[derive(Clone, Debug, PartialEq)]
pub struct NormReport {
    pub p: f64,
    pub r: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// `‖u‖_p + ‖∂^α u‖_p + [∂^α u]_{β;p}`.
    pub classic: f64,
    /// `‖ψ ∗ u‖_p + sup_{j≥1} 2^{(α+β)j} ‖φ_j ∗ u‖_p`.
    pub lp_equiv: f64,
    pub classic_stderr: f64,
    pub lp_equiv_stderr: f64,
    /// Components of `classic`: value, derivative and seminorm terms.
    pub parts: [f64; 3],
    /// Ensemble size.
    pub m: usize,
}

impl NormReport {
    pub fn ratio(&self) -> f64 {
        self.classic / self.lp_equiv
    }

    pub const CSV_HEADER: &'static str = "experiment,alpha,beta,p,r,classic,lp_equiv,stderr,M,n,L";

    pub fn csv_row(&self, experiment: &str, grid: &FrequencyGrid) -> String {
        format!(
            "{experiment},{},{},{},{},{:.12e},{:.12e},{:.6e},{},{},{}",
            self.alpha,
            self.beta,
            self.p,
            self.r.map(|r| r.to_string()).unwrap_or_default(),
            self.classic,
            self.lp_equiv,
            self.classic_stderr,
            self.m,
            grid.n(),
            grid.half_width()
        )
    }
}

/// Streaming estimator of [`NormReport`]s: paths are added one at a time
/// and only per-point moment sums are stored.
#[derive(Clone, Debug)]
pub struct HolderAccumulator {
    spec: HolderSpec,
    snapshots: usize,
    points: usize,
    shifts: Vec<(usize, usize, f64)>,
    levels: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
    m: usize,
}

/// Axis shifts `h 2^k ≤ L/2`: (axis, index offset, displacement).
fn dyadic_shifts(grid: &FrequencyGrid) -> Vec<(usize, usize, f64)> {
    let h = grid.spacing();
    let mut out = Vec::new();
    for axis in 0..grid.dim() {
        let mut k = 1;
        while k <= grid.n() / 4 {
            out.push((axis, k, k as f64 * h));
            k *= 2;
        }
    }
    out
}

impl HolderAccumulator {
    pub fn new(family: &LPFamily, spec: HolderSpec, snapshots: usize) -> Result<Self> {
        if !(spec.p >= 1.0 && spec.p.is_finite()) {
            return Err(Error::InvalidMoment(spec.p));
        }
        if let Some(r) = spec.r {
            if !(r >= 1.0 && r.is_finite()) {
                return Err(Error::InvalidMoment(r));
            }
        }
        if !(spec.alpha >= 0.0 && spec.alpha.is_finite()) {
            return Err(Error::InvalidAlpha(spec.alpha));
        }
        if !(spec.beta > 0.0 && spec.beta < 1.0) {
            return Err(Error::InvalidInput(format!("Hölder exponent {} outside (0, 1)", spec.beta)));
        }
        let grid = family.grid();
        let shifts = dyadic_shifts(grid);
        let levels = family.j_max() + 1;
        let points = grid.len();
        let slots = snapshots * points * (2 + shifts.len() + levels);
        Ok(Self {
            spec,
            snapshots,
            points,
            shifts,
            levels,
            s1: vec![0.0; slots],
            s2: vec![0.0; slots],
            m: 0,
        })
    }

    fn slots_per_snapshot(&self) -> usize {
        self.points * (2 + self.shifts.len() + self.levels)
    }

    /// Adds one path given by its snapshots.
    pub fn add_path(&mut self, family: &LPFamily, snapshots: &[SpectralField]) -> Result<()> {
        let marks: Vec<Vec<(f64, &SpectralField)>> = snapshots.iter().map(|u| vec![(1.0, u)]).collect();
        self.add_marked_path(family, &marks)
    }

    /// Adds one path whose snapshots are families of mark-indexed fields with
    /// weights `Π({v})`; pointwise magnitudes are `(Σ_v w_v |·|^r)^{1/r}`.
    pub fn add_marked_path(&mut self, family: &LPFamily, snapshots: &[Vec<(f64, &SpectralField)>]) -> Result<()> {
        if snapshots.len() != self.snapshots {
            return Err(Error::InvalidInput(format!(
                "expected {} snapshots per path, got {}",
                self.snapshots,
                snapshots.len()
            )));
        }
        let grid = family.grid();
        let per = self.slots_per_snapshot();
        let deriv_table: Vec<f64> = (0..grid.len()).map(|i| derivative_multiplier(grid.xi_norm(i), self.spec.alpha)).collect();
        let block_tables: Vec<Vec<f64>> = (0..self.levels).map(|j| family.block_table(j)).collect::<Result<_>>()?;
        let mut magnitudes = vec![0.0; per];
        for (s, marks) in snapshots.iter().enumerate() {
            if marks.is_empty() {
                return Err(Error::InvalidInput("snapshot without fields".into()));
            }
            magnitudes.iter_mut().for_each(|v| *v = 0.0);
            for &(weight, u) in marks {
                let raw = self.raw_statistics(grid, u, &deriv_table, &block_tables)?;
                match self.spec.r {
                    Some(r) => magnitudes.iter_mut().zip(&raw).for_each(|(m, v)| *m += weight * v.abs().powf(r)),
                    None => magnitudes.iter_mut().zip(&raw).for_each(|(m, v)| *m += v.abs()),
                }
            }
            if let Some(r) = self.spec.r {
                magnitudes.iter_mut().for_each(|m| *m = m.powf(1.0 / r));
            }
            let p = self.spec.p;
            let base = s * per;
            for (k, &mag) in magnitudes.iter().enumerate() {
                let v = mag.powf(p);
                self.s1[base + k] += v;
                self.s2[base + k] += v * v;
            }
        }
        self.m += 1;
        Ok(())
    }

    fn raw_statistics(&self, grid: &FrequencyGrid, u: &SpectralField, deriv: &[f64], blocks: &[Vec<f64>]) -> Result<Vec<f64>> {
        let spec = spectrum(grid, u)?;
        let n_pts = self.points;
        let mut out = Vec::with_capacity(self.slots_per_snapshot());
        let physical = |table: &[f64]| -> Result<Vec<f64>> {
            let mut f = spec.clone();
            f.values_mut().iter_mut().zip(table).for_each(|(v, m)| *v *= *m);
            Ok(f.to_physical(grid)?.real_values())
        };
        let mut values = spec.clone();
        values = values.to_physical(grid)?;
        out.extend(values.real_values());
        let d = physical(deriv)?;
        out.extend_from_slice(&d);
        for &(axis, offset, _) in &self.shifts {
            for idx in 0..n_pts {
                let mut a = grid.axis_indices(idx);
                a[axis] = (a[axis] + offset) % grid.n();
                out.push(d[grid.flat_index(a)] - d[idx]);
            }
        }
        for table in blocks {
            out.extend(physical(table)?);
        }
        Ok(out)
    }

    /// Combines two accumulators built with the same parameters.
    pub fn merge(&mut self, other: &Self) {
        self.s1.iter_mut().zip(&other.s1).for_each(|(a, b)| *a += b);
        self.s2.iter_mut().zip(&other.s2).for_each(|(a, b)| *a += b);
        self.m += other.m;
    }

    pub fn paths(&self) -> usize {
        self.m
    }

    /// `(estimate, stderr)` of `(E X^p)^{1/p}` from the sums of slot `k`.
    fn moment(&self, k: usize) -> (f64, f64) {
        let m = self.m as f64;
        let mean = self.s1[k] / m;
        let p = self.spec.p;
        if mean <= 0.0 {
            return (0.0, 0.0);
        }
        let var = if self.m > 1 { ((self.s2[k] / m - mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
        let value = mean.powf(1.0 / p);
        (value, value / (p * mean) * var.sqrt())
    }

    fn sup_over(&self, offset: usize, len: usize, scale: f64) -> (f64, f64) {
        let per = self.slots_per_snapshot();
        let mut best = (0.0, 0.0);
        for s in 0..self.snapshots {
            for k in 0..len {
                let (v, e) = self.moment(s * per + offset + k);
                if v * scale > best.0 {
                    best = (v * scale, e * scale);
                }
            }
        }
        best
    }

    pub fn report(&self) -> Result<NormReport> {
        if self.m == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let n = self.points;
        let HolderSpec { alpha, beta, p, r } = self.spec;
        let value = self.sup_over(0, n, 1.0);
        let deriv = if alpha == 0.0 { (0.0, 0.0) } else { self.sup_over(n, n, 1.0) };
        let mut semi = (0.0, 0.0);
        for (k, &(_, _, delta)) in self.shifts.iter().enumerate() {
            let cand = self.sup_over(2 * n + k * n, n, delta.powf(-beta));
            if cand.0 > semi.0 {
                semi = cand;
            }
        }
        let blocks_at = (2 + self.shifts.len()) * n;
        let low = self.sup_over(blocks_at, n, 1.0);
        let mut high = (0.0, 0.0);
        for j in 1..self.levels {
            let cand = self.sup_over(blocks_at + j * n, n, 2f64.powf((alpha + beta) * j as f64));
            if cand.0 > high.0 {
                high = cand;
            }
        }
        let classic = value.0 + deriv.0 + semi.0;
        let lp_equiv = low.0 + high.0;
        Ok(NormReport {
            p,
            r,
            alpha,
            beta,
            classic,
            lp_equiv,
            classic_stderr: (value.1.powi(2) + deriv.1.powi(2) + semi.1.powi(2)).sqrt(),
            lp_equiv_stderr: (low.1.powi(2) + high.1.powi(2)).sqrt(),
            parts: [value.0, deriv.0, semi.0],
            m: self.m,
        })
    }
}

/// Estimates both Hölder norms from an ensemble of paths, each a list of
/// snapshots; paths are reduced in index order.
pub fn holder_norm(ensemble: &[Vec<SpectralField>], family: &LPFamily, spec: HolderSpec, exec: Execution) -> Result<NormReport> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let snapshots = ensemble[0].len();
    let template = HolderAccumulator::new(family, spec, snapshots)?;
    let acc = fold_chunked(
        exec,
        ensemble.len(),
        16,
        || Ok(template.clone()),
        |acc: &mut Result<HolderAccumulator>, i| {
            if let Ok(a) = acc {
                if let Err(e) = a.add_path(family, &ensemble[i]) {
                    *acc = Err(e);
                }
            }
        },
        |total: &mut Result<HolderAccumulator>, part| match (total.as_mut(), part) {
            (Ok(t), Ok(p)) => t.merge(&p),
            (Ok(_), Err(e)) => *total = Err(e),
            (Err(_), _) => {}
        },
    )?;
    acc.report()
}

/// Hölder norms of a deterministic mark-indexed field `g(·, v)` with
/// weights `Π({v})`.
pub fn mark_holder_norm(snapshots: &[Vec<(f64, SpectralField)>], family: &LPFamily, spec: HolderSpec) -> Result<NormReport> {
    if spec.r.is_none() {
        return Err(Error::InvalidMoment(f64::NAN));
    }
    let mut acc = HolderAccumulator::new(family, spec, snapshots.len())?;
    let refs: Vec<Vec<(f64, &SpectralField)>> = snapshots.iter().map(|s| s.iter().map(|(w, f)| (*w, f)).collect()).collect();
    acc.add_marked_path(family, &refs)?;
    acc.report()
}

/// `2 |sin(δ/2)| / δ^β` maximized over the dyadic shifts of `grid`: the
/// Hölder quotient of a unit-frequency sine along one axis.
pub fn unit_sine_seminorm(grid: &FrequencyGrid, beta: f64) -> f64 {
    dyadic_shifts(grid)
        .iter()
        .filter(|s| s.0 == 0)
        .map(|&(_, _, delta)| 2.0 * (delta / 2.0).sin().abs() / delta.powf(beta))
        .fold(0.0, f64::max)
}

/// Modulus of a single Fourier mode `e^{i(k, x)}` with `k` on the lattice.
pub fn mode(grid: &FrequencyGrid, k: [f64; 2]) -> SpectralField {
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.x(i);
            Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1])
        })
        .collect();
    SpectralField::from_values(grid, Form::Physical, values).expect("length matches grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn partition_of_unity_and_completion() {
        let grid = FrequencyGrid::new(2, 64, PI).unwrap();
        let fam = build_family(&grid, max_level(&grid)).unwrap();
        assert!(fam.partition_defect() <= 1e-10);
        assert_eq!(psi_hat(0.0), 1.0);
        for j in 1..=fam.j_max() {
            assert_eq!(fam.block_symbol(j, 0.0), 0.0);
        }
        assert!(build_family(&grid, 6).is_err());
    }

    #[test]
    fn tilde_identity() {
        let grid = FrequencyGrid::new(1, 256, PI).unwrap();
        let fam = build_family(&grid, max_level(&grid)).unwrap();
        for j in 0..=fam.j_max() {
            for r in (0..400).map(|k| k as f64 * 0.17) {
                let b = fam.block_symbol(j, r);
                assert!((b * fam.tilde_symbol(j, r) - b).abs() <= 1e-14, "j = {j}, r = {r}");
            }
        }
    }

    #[test]
    fn single_mode_blocks() {
        let grid = FrequencyGrid::new(1, 256, PI).unwrap();
        let fam = build_family(&grid, max_level(&grid)).unwrap();
        let u = mode(&grid, [8.0, 0.0]);
        for j in 0..=fam.j_max() {
            let b = block(&u, &fam, j).unwrap();
            let expected = fam.block_symbol(j, 8.0);
            let err = b.axpy(-expected, &u).unwrap().sup_norm();
            assert!(err < 1e-12, "j = {j}");
            if !(2..=4).contains(&j) {
                assert!(b.sup_norm() < 1e-14);
            }
        }
    }

    #[test]
    fn fractional_derivative_of_sine() {
        let grid = FrequencyGrid::new(1, 128, PI).unwrap();
        let u = SpectralField::from_fn(&grid, |x| (3.0 * x[0]).sin());
        for alpha in [0.5, 1.0, 1.7] {
            let d = fractional_derivative(&grid, &u, alpha).unwrap();
            let expected = u.scaled(3f64.powf(alpha));
            assert!(d.axpy(-1.0, &expected).unwrap().sup_norm() < 1e-10);
        }
        let c = SpectralField::from_fn(&grid, |_| 2.5);
        assert!(fractional_derivative(&grid, &c, 0.7).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        // α = 2 is -Δ; second differences converge at rate h².
        let mut errors = Vec::new();
        for n in [64, 128] {
            let grid = FrequencyGrid::new(1, n, PI).unwrap();
            let f = |x: f64| (x.sin()).exp();
            let u = SpectralField::from_fn(&grid, |x| f(x[0]));
            let d = fractional_derivative(&grid, &u, 2.0).unwrap().real_values();
            let h = grid.spacing();
            let err = (0..n)
                .map(|i| {
                    let x = grid.x(i)[0];
                    let fd = -(f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
                    (fd - d[i]).abs()
                })
                .fold(0.0, f64::max);
            errors.push(err);
        }
        let order = (errors[0] / errors[1]).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let grid = FrequencyGrid::new(1, 64, PI).unwrap();
        let fam = build_family(&grid, max_level(&grid)).unwrap();
        let zero = SpectralField::zeros(&grid, Form::Physical);
        let spec = HolderSpec { alpha: 1.0, beta: 0.5, p: 2.0, r: None };
        let rep = holder_norm(&[vec![zero.clone()], vec![zero]], &fam, spec, Execution::Sequential).unwrap();
        assert_eq!(rep.classic, 0.0);
        assert_eq!(rep.lp_equiv, 0.0);
        assert!(holder_norm(&[], &fam, spec, Execution::Sequential).is_err());
        let bad = HolderSpec { p: 0.5, ..spec };
        assert!(matches!(HolderAccumulator::new(&fam, bad, 1), Err(Error::InvalidMoment(_))));
    }

    #[test]
    fn sine_classic_norm_closed_form() {
        let grid = FrequencyGrid::new(1, 256, PI).unwrap();
        let fam = build_family(&grid, max_level(&grid)).unwrap();
        let u = SpectralField::from_fn(&grid, |x| x[0].sin());
        let spec = HolderSpec { alpha: 1.0, beta: 0.5, p: 2.0, r: None };
        let rep = holder_norm(&[vec![u]], &fam, spec, Execution::Sequential).unwrap();
        let expected = 1.0 + 1.0 + unit_sine_seminorm(&grid, 0.5);
        assert_relative_eq!(rep.classic, expected, max_relative = 1e-10);
        // Block 0 of sin is ψ̂(1) sin, block 1 is φ̂(1/2) sin; both are 1 and 0 here.
        assert_relative_eq!(rep.lp_equiv, psi_hat(1.0) + 2f64.powf(1.5) * phi_hat(0.5), max_relative = 1e-10);
    }

    #[test]
    fn mark_norm_reduces_for_constant_marks() {
        let grid = FrequencyGrid::new(1, 64, PI).unwrap();
        let fam = build_family(&grid, max_level(&grid)).unwrap();
        let u = SpectralField::from_fn(&grid, |x| (2.0 * x[0]).cos() + 0.5 * x[0].sin());
        let weights = [0.3, 1.2, 0.5];
        let total: f64 = weights.iter().sum();
        let r = 3.0;
        let spec = HolderSpec { alpha: 0.5, beta: 0.4, p: 2.0, r: Some(r) };
        let marked = mark_holder_norm(&[weights.iter().map(|&w| (w, u.clone())).collect()], &fam, spec).unwrap();
        let plain = holder_norm(&[vec![u]], &fam, HolderSpec { r: None, ..spec }, Execution::Sequential).unwrap();
        assert_relative_eq!(marked.classic, plain.classic * total.powf(1.0 / r), max_relative = 1e-12);
        assert_relative_eq!(marked.lp_equiv, plain.lp_equiv * total.powf(1.0 / r), max_relative = 1e-12);
    }

    #[test]
    fn mollification_is_exact_on_band_limited_fields() {
        let grid = FrequencyGrid::new(1, 128, PI).unwrap();
        let fam = build_family(&grid, max_level(&grid)).unwrap();
        let u = SpectralField::from_fn(&grid, |x| x[0].cos() + (5.0 * x[0]).sin());
        let un = mollify_sequence(&u, &fam, 3).unwrap();
        assert!(un.axpy(-1.0, &u).unwrap().sup_norm() < 1e-12);
        assert!(mollify_sequence(&u, &fam, fam.j_max() + 1).is_err());
    }

    proptest! {
        #[test]
        fn blocks_reconstruct_band_limited(coeffs in prop::collection::vec(-1.0f64..1.0, 16)) {
            let grid = FrequencyGrid::new(1, 128, PI).unwrap();
            let fam = build_family(&grid, max_level(&grid)).unwrap();
            let u = SpectralField::from_fn(&grid, |x| {
                coeffs.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * x[0] + k as f64).sin()).sum()
            });
            let mut sum = SpectralField::zeros(&grid, Form::Physical);
            for j in 0..=fam.j_max() {
                sum = sum.axpy(1.0, &block(&u, &fam, j).unwrap()).unwrap();
            }
            let err = sum.axpy(-1.0, &u).unwrap().l2_norm(&grid).unwrap();
            let norm = u.l2_norm(&grid).unwrap();
            prop_assert!(err <= 1e-9 * norm.max(1e-300));
            prop_assert!(phi_hat(coeffs[0].abs() * 3.0) >= 0.0);
        }
    }
}
