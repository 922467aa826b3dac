//! Solution of the model Cauchy problem
//!
//! ```text
//! du = [(A - λ) u + f] dt + ∫_U g(t, x, v) q(dt, dv),   u(0, ·) = 0,
//! ```
//!
//! on a periodic grid, as `u = R_λ f + R̃_λ g`.
//!
//! The solution splits into a deterministic part `D = R_λ(f - ḡ)` with
//! `ḡ = ∫ g Π(dv)`, shared by all paths, and a per-path jump part
//! `J(t) = Σ_{t_i ≤ t} K^λ_{t_i,t} ĝ(t_i, v_i)`. Both are advanced in
//! frequency space; between events the evolution is the exact semigroup.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::{Form, FrequencyGrid, SpectralField};
use crate::kernel::SymbolGrid;
use crate::quadrature::GaussLegendre;
use crate::random_measure::{sample_prm, Mark, MarkSpace, PRMPath};
use crate::rng::{path_seed, stream};
use crate::symbol::{check_assumptions, StableModel};

pub mod estimates;

type FieldFn = Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>;
type MarkFieldFn = Arc<dyn Fn(f64, [f64; 2], &Mark) -> f64 + Send + Sync>;

/// Deterministic forcing `f(t, x)`.
#[derive(Clone)]
pub struct Source {
    f: FieldFn,
    time_independent: bool,
}

impl Source {
    pub fn new<F: Fn(f64, [f64; 2]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self {
            f: Arc::new(f),
            time_independent: false,
        }
    }

    pub fn stationary<F: Fn([f64; 2]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self {
            f: Arc::new(move |_, x| f(x)),
            time_independent: true,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::stationary(move |_| c)
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        (self.f)(t, x)
    }

    /// `a f + b other`.
    pub fn combine(a: f64, f: &Source, b: f64, other: &Source) -> Source {
        let (f1, f2) = (f.f.clone(), other.f.clone());
        Source {
            f: Arc::new(move |t, x| a * f1(t, x) + b * f2(t, x)),
            time_independent: f.time_independent && other.time_independent,
        }
    }

    /// Spectrum of `f(t, ·)` on `grid`.
    pub fn spectrum(&self, grid: &FrequencyGrid, t: f64) -> Result<Vec<Complex64>> {
        let mut values: Vec<Complex64> = (0..grid.len()).map(|i| Complex64::new((self.f)(t, grid.x(i)), 0.0)).collect();
        if values.iter().any(|v| !v.re.is_finite()) {
            return Err(Error::NonFinite("forcing f"));
        }
        grid.forward(&mut values);
        Ok(values)
    }
}

/// Jump amplitude `g(t, x, v)`.
#[derive(Clone)]
pub struct MarkSource {
    g: MarkFieldFn,
    time_independent: bool,
}

impl MarkSource {
    pub fn new<F: Fn(f64, [f64; 2], &Mark) -> f64 + Send + Sync + 'static>(g: F) -> Self {
        Self {
            g: Arc::new(g),
            time_independent: false,
        }
    }

    pub fn stationary<F: Fn([f64; 2], &Mark) -> f64 + Send + Sync + 'static>(g: F) -> Self {
        Self {
            g: Arc::new(move |_, x, m| g(x, m)),
            time_independent: true,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn eval(&self, t: f64, x: [f64; 2], m: &Mark) -> f64 {
        (self.g)(t, x, m)
    }

    /// `a g + b other`.
    pub fn combine(a: f64, g: &MarkSource, b: f64, other: &MarkSource) -> MarkSource {
        let (g1, g2) = (g.g.clone(), other.g.clone());
        MarkSource {
            g: Arc::new(move |t, x, m| a * g1(t, x, m) + b * g2(t, x, m)),
            time_independent: g.time_independent && other.time_independent,
        }
    }

    /// Spectrum of `g(t, ·, v)`.
    pub fn spectrum(&self, grid: &FrequencyGrid, t: f64, mark: &Mark) -> Result<Vec<Complex64>> {
        let mut values: Vec<Complex64> = (0..grid.len()).map(|i| Complex64::new((self.g)(t, grid.x(i), mark), 0.0)).collect();
        if values.iter().any(|v| !v.re.is_finite()) {
            return Err(Error::NonFinite("jump amplitude g"));
        }
        grid.forward(&mut values);
        Ok(values)
    }

    /// Spectrum of `ḡ(t) = ∫ g(t, ·, v) Π(dv)`.
    pub fn mean_spectrum(&self, grid: &FrequencyGrid, space: &MarkSpace, t: f64) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (i, &(value, weight)) in space.atom_list().iter().enumerate() {
            if weight != 0.0 {
                let s = self.spectrum(grid, t, &Mark { atom: Some(i), value })?;
                out.iter_mut().zip(&s).for_each(|(o, v)| *o += weight * v);
            }
        }
        if let Some((lo, hi, intensity)) = space.continuous() {
            let gl = GaussLegendre::new(16);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, w) in gl.nodes().iter().zip(gl.weights()) {
                let mark = Mark {
                    atom: None,
                    value: mid + half * x,
                };
                let s = self.spectrum(grid, t, &mark)?;
                let c = intensity / (hi - lo) * half * w;
                out.iter_mut().zip(&s).for_each(|(o, v)| *o += c * v);
            }
        }
        Ok(out)
    }
}

/// Inputs of the Cauchy problem and of its Monte Carlo ensemble.
#[derive(Clone)]
pub struct InputData {
    pub model: StableModel,
    pub grid: FrequencyGrid,
    pub space: MarkSpace,
    pub lambda: f64,
    pub f: Option<Source>,
    pub g: Option<MarkSource>,
    /// Snapshot times in `[0, T]`.
    pub snapshots: Vec<f64>,
    /// Ensemble size.
    pub paths: usize,
    pub seed: u64,
    /// Largest substep for time-dependent parts.
    pub max_step: f64,
    pub exec: Execution,
}

impl InputData {
    /// Zero forcing, `λ = 0`, one path, a snapshot at `T`.
    pub fn new(model: StableModel, grid: FrequencyGrid, space: MarkSpace) -> Self {
        let horizon = model.horizon();
        Self {
            model,
            grid,
            space,
            lambda: 0.0,
            f: None,
            g: None,
            snapshots: vec![horizon],
            paths: 1,
            seed: 0,
            max_step: horizon / 64.0,
            exec: Execution::default(),
        }
    }
}

fn phi1(z: Complex64, dt: f64) -> Complex64 {
    let w = z * dt;
    if w.norm() < 1e-4 {
        dt * (1.0 + w / 2.0 + w * w / 6.0 + w * w * w / 24.0)
    } else {
        (w.exp() - 1.0) / z
    }
}

/// Per-path solution at the snapshot times.
#[derive(Clone, Debug)]
pub struct PathSolution {
    pub path: PRMPath,
    /// Frequency-form fields at `InputData::snapshots`.
    pub snapshots: Vec<SpectralField>,
}

/// Solutions of all paths.
#[derive(Clone, Debug)]
pub struct SolutionEnsemble {
    pub times: Vec<f64>,
    pub paths: Vec<PathSolution>,
    pub seed: u64,
}

/// Left and right limits of the solution at one time.
#[derive(Clone, Debug)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub left: Vec<Complex64>,
    pub right: Vec<Complex64>,
}

/// A solution path on a refined time grid that contains all event times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub events: Vec<(f64, Mark)>,
}

/// Prepared solver: symbol tables, source spectra and the deterministic part.
pub struct Solver {
    input: InputData,
    symbols: SymbolGrid,
    det_source: Option<Vec<Complex64>>,
    atom_spectra: Vec<Option<Vec<Complex64>>>,
    deterministic: Vec<Vec<Complex64>>,
}

impl Solver {
    pub fn new(input: InputData) -> Result<Self> {
        let model = &input.model;
        if input.grid.dim() != model.dim() {
            return Err(Error::GridMismatch);
        }
        if !(input.lambda >= 0.0 && input.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("λ = {} must be nonnegative", input.lambda)));
        }
        if !(input.max_step > 0.0) {
            return Err(Error::InvalidInput("max_step must be positive".into()));
        }
        let report = check_assumptions(model, 64);
        if !(report.pass_a1 && report.pass_a2) {
            return Err(Error::Assumption(format!(
                "A1 {} (mu_hat = {:.3e}), A2 {}",
                if report.pass_a1 { "holds" } else { "fails" },
                report.mu_hat,
                if report.pass_a2 { "holds" } else { "fails" }
            )));
        }
        let horizon = model.horizon();
        if input.snapshots.iter().any(|&t| !(t >= 0.0 && t <= horizon)) {
            return Err(Error::TimeOrder(format!("snapshot times must lie in [0, {horizon}]")));
        }
        let mut input = input;
        input.snapshots.sort_by(f64::total_cmp);
        let symbols = SymbolGrid::new(&input.model, &input.grid, input.exec)?;
        let mut solver = Self {
            symbols,
            det_source: None,
            atom_spectra: Vec::new(),
            deterministic: Vec::new(),
            input,
        };
        if solver.sources_time_independent() {
            solver.det_source = Some(solver.source_at(0.0)?);
        }
        if let Some(g) = &solver.input.g {
            if g.time_independent {
                solver.atom_spectra = solver
                    .input
                    .space
                    .atom_list()
                    .iter()
                    .enumerate()
                    .map(|(i, &(value, weight))| {
                        (weight > 0.0)
                            .then(|| g.spectrum(&solver.input.grid, 0.0, &Mark { atom: Some(i), value }))
                            .transpose()
                    })
                    .collect::<Result<_>>()?;
            }
        }
        let times = solver.input.snapshots.clone();
        solver.deterministic = solver.deterministic_at(&times)?;
        Ok(solver)
    }

    pub fn input(&self) -> &InputData {
        &self.input
    }

    pub fn symbols(&self) -> &SymbolGrid {
        &self.symbols
    }

    fn sources_time_independent(&self) -> bool {
        self.input.f.as_ref().is_none_or(|f| f.time_independent) && self.input.g.as_ref().is_none_or(|g| g.time_independent)
    }

    /// Spectrum of `f(t) - ḡ(t)`.
    pub fn source_at(&self, t: f64) -> Result<Vec<Complex64>> {
        if let Some(s) = &self.det_source {
            return Ok(s.clone());
        }
        let grid = &self.input.grid;
        let mut out = match &self.input.f {
            Some(f) => f.spectrum(grid, t)?,
            None => vec![Complex64::new(0.0, 0.0); grid.len()],
        };
        if let Some(g) = &self.input.g {
            let gbar = g.mean_spectrum(grid, &self.input.space, t)?;
            out.iter_mut().zip(&gbar).for_each(|(o, v)| *o -= v);
        }
        Ok(out)
    }

    fn has_source(&self) -> bool {
        self.input.f.is_some() || self.input.g.is_some()
    }

    /// Jump spectrum `ĝ(t, v)`.
    pub fn jump_spectrum(&self, t: f64, mark: &Mark) -> Result<Vec<Complex64>> {
        let g = match &self.input.g {
            Some(g) => g,
            None => return Ok(vec![Complex64::new(0.0, 0.0); self.input.grid.len()]),
        };
        if let Some(Some(s)) = mark.atom.and_then(|a| self.atom_spectra.get(a)) {
            return Ok(s.clone());
        }
        g.spectrum(&self.input.grid, t, mark)
    }

    /// Splits `[a, b]` at model breakpoints.
    fn homogeneous_pieces(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut cuts = vec![a];
        cuts.extend(self.input.model.breakpoints().iter().copied().filter(|&c| c > a && c < b));
        cuts.push(b);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Advances a deterministic state `d` over `[a, b]`.
    fn step_deterministic(&self, d: &mut [Complex64], a: f64, b: f64) -> Result<()> {
        let lambda = self.input.lambda;
        let exact = !self.input.model.breakpoints().is_empty() && self.sources_time_independent();
        for (c, e) in self.homogeneous_pieces(a, b) {
            if exact {
                let psi = self.symbols.at(0.5 * (c + e));
                let dt = e - c;
                let source = self.source_at(c)?;
                for ((v, z), s) in d.iter_mut().zip(&psi).zip(&source) {
                    let z = z - lambda;
                    *v = (z * dt).exp() * *v + phi1(z, dt) * s;
                }
            } else {
                let steps = ((e - c) / self.input.max_step).ceil().max(1.0) as usize;
                let h = (e - c) / steps as f64;
                for k in 0..steps {
                    let mid = c + (k as f64 + 0.5) * h;
                    let psi = self.symbols.at(mid);
                    let source = if self.has_source() { Some(self.source_at(mid)?) } else { None };
                    for (i, (v, z)) in d.iter_mut().zip(&psi).enumerate() {
                        let z = z - lambda;
                        *v *= (z * h).exp();
                        if let Some(s) = &source {
                            *v += h * (z * 0.5 * h).exp() * s[i];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `R_λ(f - ḡ)` at increasing `times`.
    pub fn deterministic_at(&self, times: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let mut d = vec![Complex64::new(0.0, 0.0); self.input.grid.len()];
        let mut out = Vec::with_capacity(times.len());
        let mut now = 0.0;
        for &t in times {
            if t < now {
                return Err(Error::TimeOrder("times must be increasing".into()));
            }
            if self.has_source() && t > now {
                self.step_deterministic(&mut d, now, t)?;
            }
            now = t;
            out.push(d.clone());
        }
        Ok(out)
    }

    /// PRM path of ensemble member `index`.
    pub fn prm_path(&self, index: usize) -> Result<PRMPath> {
        sample_prm(
            &self.input.space,
            self.input.model.horizon(),
            path_seed(self.input.seed, stream::PRM, index as u64),
        )
    }

    /// Left and right limits of the jump part at increasing `times`.
    fn jump_part(&self, path: &PRMPath, times: &[f64]) -> Result<Vec<(Vec<Complex64>, Vec<Complex64>)>> {
        let n = self.input.grid.len();
        let lambda = self.input.lambda;
        let mut state = vec![Complex64::new(0.0, 0.0); n];
        let mut now = 0.0;
        let mut next_event = 0;
        let mut out = Vec::with_capacity(times.len());
        let active = self.input.g.is_some();
        let propagate = |state: &mut Vec<Complex64>, from: f64, to: f64| {
            if to > from {
                let k = self.symbols.kernel_values(from, to, lambda);
                state.iter_mut().zip(&k).for_each(|(v, k)| *v *= k);
            }
        };
        for &t in times {
            while active && next_event < path.events.len() && path.events[next_event].0 < t {
                let (te, mark) = path.events[next_event];
                propagate(&mut state, now, te);
                now = te;
                let jump = self.jump_spectrum(te, &mark)?;
                state.iter_mut().zip(&jump).for_each(|(v, j)| *v += j);
                next_event += 1;
            }
            propagate(&mut state, now, t);
            now = t;
            let left = state.clone();
            while active && next_event < path.events.len() && path.events[next_event].0 == t {
                let jump = self.jump_spectrum(t, &path.events[next_event].1)?;
                state.iter_mut().zip(&jump).for_each(|(v, j)| *v += j);
                next_event += 1;
            }
            out.push((left, state.clone()));
        }
        Ok(out)
    }

    /// Solution of one path at the snapshot times.
    pub fn solve_path(&self, index: usize) -> Result<PathSolution> {
        let path = self.prm_path(index)?;
        let jumps = self.jump_part(&path, &self.input.snapshots)?;
        let grid = &self.input.grid;
        let snapshots = jumps
            .into_iter()
            .zip(&self.deterministic)
            .map(|((_, right), det)| {
                let values = right.iter().zip(det).map(|(a, b)| a + b).collect();
                SpectralField::from_values(grid, Form::Frequency, values)
            })
            .collect::<Result<_>>()?;
        Ok(PathSolution { path, snapshots })
    }

    /// Solution of path `index` (or the deterministic part alone) on `times`
    /// refined by the event times and the model breakpoints.
    pub fn trajectory(&self, index: Option<usize>, times: &[f64]) -> Result<Trajectory> {
        let horizon = self.input.model.horizon();
        let path = match index {
            Some(i) if self.input.g.is_some() => Some(self.prm_path(i)?),
            _ => None,
        };
        let mut all: Vec<f64> = times.to_vec();
        all.push(0.0);
        all.extend(self.input.model.breakpoints().iter().copied().filter(|&b| b <= horizon));
        if let Some(p) = &path {
            all.extend(p.events.iter().map(|e| e.0));
        }
        if all.iter().any(|&t| !(t >= 0.0 && t <= horizon)) {
            return Err(Error::TimeOrder(format!("trajectory times must lie in [0, {horizon}]")));
        }
        all.sort_by(f64::total_cmp);
        all.dedup();
        let det = self.deterministic_at(&all)?;
        let jumps = match &path {
            Some(p) => self.jump_part(p, &all)?,
            None => vec![(vec![Complex64::new(0.0, 0.0); self.input.grid.len()], vec![Complex64::new(0.0, 0.0); self.input.grid.len()]); all.len()],
        };
        let points = all
            .iter()
            .zip(det)
            .zip(jumps)
            .map(|((&t, d), (l, r))| TrajectoryPoint {
                t,
                left: l.iter().zip(&d).map(|(a, b)| a + b).collect(),
                right: r.iter().zip(&d).map(|(a, b)| a + b).collect(),
            })
            .collect();
        Ok(Trajectory {
            points,
            events: path.map(|p| p.events).unwrap_or_default(),
        })
    }
}

/// Solves all `input.paths` paths.
pub fn solve_cauchy(input: InputData) -> Result<SolutionEnsemble> {
    let exec = input.exec;
    let solver = Solver::new(input)?;
    let paths: Vec<PathSolution> = map_indexed(exec, solver.input.paths, |i| solver.solve_path(i))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(SolutionEnsemble {
        times: solver.input.snapshots.clone(),
        paths,
        seed: solver.input.seed,
    })
}

/// Relative tolerance of the step-halving test in the direct formulas.
pub const QUADRATURE_TOLERANCE: f64 = 1e-8;
const MAX_SUBSTEPS: usize = 1 << 16;

fn midpoint_convolution<S>(symbols: &SymbolGrid, lambda: f64, t: f64, source: S) -> Result<Vec<Complex64>>
where
    S: Fn(f64) -> Result<Vec<Complex64>>,
{
    let n = symbols.grid().len();
    let rule = |steps: usize| -> Result<Vec<Complex64>> {
        let h = t / steps as f64;
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..steps {
            let s = (k as f64 + 0.5) * h;
            let kern = symbols.kernel_values(s, t, lambda);
            let f = source(s)?;
            acc.iter_mut().zip(kern.iter().zip(&f)).for_each(|(a, (k, f))| *a += h * k * f);
        }
        Ok(acc)
    };
    if t == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }
    let mut steps = 64;
    let mut coarse = rule(steps)?;
    loop {
        steps *= 2;
        let fine = rule(steps)?;
        let scale = fine.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let diff = fine.iter().zip(&coarse).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if diff <= QUADRATURE_TOLERANCE * scale.max(f64::MIN_POSITIVE) || scale == 0.0 {
            return Ok(fine);
        }
        if steps >= MAX_SUBSTEPS {
            return Err(Error::Quadrature(format!("relative change {:.2e} after {steps} substeps", diff / scale)));
        }
        coarse = fine;
    }
}

/// `R_λ f(t) = ∫_0^t G^λ_{s,t} ∗ f(s) ds` by composite midpoint quadrature
/// with step halving until converged.
pub fn apply_r_lambda(f: &Source, model: &StableModel, lambda: f64, t: f64, grid: &FrequencyGrid) -> Result<SpectralField> {
    if !(t >= 0.0 && t <= model.horizon()) {
        return Err(Error::TimeOrder(format!("t = {t} outside [0, {}]", model.horizon())));
    }
    let symbols = SymbolGrid::new(model, grid, Execution::default())?;
    let cached = if f.time_independent { Some(f.spectrum(grid, 0.0)?) } else { None };
    let values = midpoint_convolution(&symbols, lambda, t, |s| match &cached {
        Some(c) => Ok(c.clone()),
        None => f.spectrum(grid, s),
    })?;
    SpectralField::from_values(grid, Form::Frequency, values)?.to_physical(grid)
}

/// `R̃_λ g(t) = Σ_{t_i ≤ t} G^λ_{t_i,t} ∗ g(t_i, v_i) - ∫_0^t G^λ_{s,t} ∗ ḡ(s) ds`
/// along one PRM path.
pub fn apply_rtilde_lambda(
    g: &MarkSource,
    model: &StableModel,
    lambda: f64,
    path: &PRMPath,
    t: f64,
    grid: &FrequencyGrid,
) -> Result<SpectralField> {
    if !(t >= 0.0 && t <= model.horizon()) {
        return Err(Error::TimeOrder(format!("t = {t} outside [0, {}]", model.horizon())));
    }
    if path.events.iter().any(|e| !(e.0 >= 0.0 && e.0 <= model.horizon())) {
        return Err(Error::TimeOrder("event outside [0, T]".into()));
    }
    let symbols = SymbolGrid::new(model, grid, Execution::default())?;
    let cached = if g.time_independent { Some(g.mean_spectrum(grid, &path.space, 0.0)?) } else { None };
    let mut values = midpoint_convolution(&symbols, lambda, t, |s| match &cached {
        Some(c) => Ok(c.clone()),
        None => g.mean_spectrum(grid, &path.space, s),
    })?;
    values.iter_mut().for_each(|v| *v = -*v);
    for (te, mark) in path.events.iter().filter(|e| e.0 <= t) {
        let k = symbols.kernel_values(*te, t, lambda);
        let s = g.spectrum(grid, *te, mark)?;
        values.iter_mut().zip(k.iter().zip(&s)).for_each(|(v, (k, s))| *v += k * s);
    }
    SpectralField::from_values(grid, Form::Frequency, values)?.to_physical(grid)
}

/// Time quadrature used for `∫ (A - λ) u ds` in [`residual_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualMode {
    /// Trapezoid rule on the trajectory nodes (second order).
    Trapezoid,
    /// Exact integral of the exponential evolution between nodes; valid for
    /// time-homogeneous pieces and time-independent sources.
    ExactExponential,
}

/// Residuals of the integral identity
/// `u(t) = ∫_0^t [(A - λ)u + f] ds + ∫_0^t ∫ g q(ds, dv)` at the trajectory nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    /// Largest pointwise residual over nodes and grid points.
    pub max_abs: f64,
    /// Root mean square over nodes of the L² residual.
    pub l2: f64,
    /// Largest pointwise residual at each node.
    pub per_node: Vec<f64>,
}

/// Evaluates the integral identity along `traj`.
pub fn residual_check(solver: &Solver, traj: &Trajectory, mode: ResidualMode) -> Result<ResidualReport> {
    let input = solver.input();
    let grid = &input.grid;
    let n = grid.len();
    let lambda = input.lambda;
    let gl = GaussLegendre::new(8);
    let mut operator_integral = vec![Complex64::new(0.0, 0.0); n];
    let mut source_integral = vec![Complex64::new(0.0, 0.0); n];
    let mut jumps = vec![Complex64::new(0.0, 0.0); n];
    let mut next_event = 0;
    let mut per_node = Vec::with_capacity(traj.points.len());
    let mut sum_sq = 0.0;
    for (k, point) in traj.points.iter().enumerate() {
        if k > 0 {
            let prev = &traj.points[k - 1];
            let (a, b) = (prev.t, point.t);
            let dt = b - a;
            let mid = 0.5 * (a + b);
            let psi = solver.symbols().at(mid);
            match mode {
                ResidualMode::Trapezoid => {
                    let psi_a = solver.symbols().at(a);
                    let psi_b = solver.symbols().at(b);
                    for i in 0..n {
                        operator_integral[i] += 0.5 * dt * ((psi_a[i] - lambda) * prev.right[i] + (psi_b[i] - lambda) * point.left[i]);
                    }
                }
                ResidualMode::ExactExponential => {
                    let s = solver.source_at(a)?;
                    for i in 0..n {
                        let z = psi[i] - lambda;
                        operator_integral[i] += ((z * dt).exp() - 1.0) * prev.right[i] + (phi1(z, dt) - dt) * s[i];
                    }
                }
            }
            if input.f.is_some() || input.g.is_some() {
                if solver.sources_time_independent() {
                    let s = solver.source_at(a)?;
                    source_integral.iter_mut().zip(&s).for_each(|(o, v)| *o += dt * v);
                } else {
                    let half = 0.5 * dt;
                    for (x, w) in gl.nodes().iter().zip(gl.weights()) {
                        let s = solver.source_at(mid + half * x)?;
                        source_integral.iter_mut().zip(&s).for_each(|(o, v)| *o += half * w * v);
                    }
                }
            }
        }
        while next_event < traj.events.len() && traj.events[next_event].0 <= point.t {
            let (te, mark) = traj.events[next_event];
            let s = solver.jump_spectrum(te, &mark)?;
            jumps.iter_mut().zip(&s).for_each(|(o, v)| *o += v);
            next_event += 1;
        }
        let mut r: Vec<Complex64> = (0..n)
            .map(|i| point.right[i] - operator_integral[i] - source_integral[i] - jumps[i])
            .collect();
        grid.inverse(&mut r);
        let max = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        sum_sq += r.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.cell_volume();
        per_node.push(max);
    }
    Ok(ResidualReport {
        max_abs: per_node.iter().copied().fold(0.0, f64::max),
        l2: (sum_sq / traj.points.len().max(1) as f64).sqrt(),
        per_node,
    })
}

/// `sin(x_1)` on the grid, in frequency form (a unit perturbation).
pub fn sine_mode(grid: &FrequencyGrid) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..grid.len()).map(|i| Complex64::new((grid.x(i)[0] * PI / grid.half_width()).sin(), 0.0)).collect();
    grid.forward(&mut v);
    v
}
