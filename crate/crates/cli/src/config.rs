//! Experiment configuration: a TOML document with one nested block per
//! concern. [`Plan::build`] checks that every block the chosen kind needs is
//! present and turns the blocks into validated core objects.

use std::f64::consts::PI;
use std::fmt;

use serde::Deserialize;
use zakai_core::filtering::ObservationModel;
use zakai_core::random_measure::{Mark, MarkSpace};
use zakai_core::solver::{MarkSource, Source};
use zakai_core::{check_assumptions, AngularMeasure, Coefficients, FrequencyGrid, StableModel};

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SymbolCheck,
    Kernel,
    Moments,
    Solve,
    Estimates,
    Filter,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::SymbolCheck => "symbol-check",
            Kind::Kernel => "kernel",
            Kind::Moments => "moments",
            Kind::Solve => "solve",
            Kind::Estimates => "estimates",
            Kind::Filter => "filter",
        }
    }

    fn needs(self) -> &'static [&'static str] {
        match self {
            Kind::SymbolCheck => &["model", "ensemble"],
            Kind::Kernel => &["model", "grid"],
            Kind::Moments => &["marks", "ensemble"],
            Kind::Solve => &["model", "grid", "marks", "ensemble"],
            Kind::Estimates => &["grid", "ensemble", "norm"],
            Kind::Filter => &["model", "grid", "ensemble", "filter"],
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub model: Option<ModelBlock>,
    pub grid: Option<GridBlock>,
    pub ensemble: Option<EnsembleBlock>,
    pub norm: Option<NormBlock>,
    pub marks: Option<MarksBlock>,
    pub source: Option<SourceBlock>,
    pub filter: Option<FilterBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Operator coefficients. Exactly one of `density` (constant spherical
/// density) or `masses` (tabulated density) for α < 2; `diffusion` for α = 2.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub alpha: f64,
    pub dim: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    pub density: Option<f64>,
    pub masses: Option<Vec<f64>>,
    pub drift: Option<[f64; 2]>,
    pub diffusion: Option<[[f64; 2]; 2]>,
    #[serde(default)]
    pub project_centering: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    pub half_width: f64,
    pub dt: Option<f64>,
    pub snapshots: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleBlock {
    #[serde(default = "one_usize")]
    pub paths: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormBlock {
    #[serde(default = "two")]
    pub p: f64,
    pub r: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(default = "half")]
    pub beta: f64,
    #[serde(default)]
    pub lambda: f64,
    pub lambdas: Option<Vec<f64>>,
    pub moments: Option<Vec<f64>>,
}

/// Mark space: atoms `[value, weight]` plus an optional uniform part
/// `[lo, hi, intensity]`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarksBlock {
    pub atoms: Vec<[f64; 2]>,
    pub continuous: Option<[f64; 3]>,
    #[serde(default = "one")]
    pub horizon: f64,
}

/// Forcing terms as Fourier modes `[k, a, b]` meaning `a cos(k s) + b sin(k s)`,
/// where `s` is the first coordinate (sum of coordinates in d = 2), or time
/// for the `moments` integrand. The jump forcing is `mark * (offset + modes)`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBlock {
    #[serde(default)]
    pub f_modes: Vec<[f64; 3]>,
    #[serde(default)]
    pub g_modes: Vec<[f64; 3]>,
    #[serde(default)]
    pub g_offset: f64,
}

/// Observation atoms `[y, weight]` with ratio `1 + amplitude cos((x - y) π / L)`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterBlock {
    pub observations: Vec<[f64; 2]>,
    pub amplitude: f64,
    #[serde(default)]
    pub initial_center: f64,
    pub initial_width: f64,
    pub particles: usize,
    #[serde(default = "ten")]
    pub replicates: usize,
    pub particle_dt: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_root")]
    pub root: String,
    pub name: Option<String>,
    #[serde(default)]
    pub snapshots: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            root: default_root(),
            name: None,
            snapshots: false,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn one_usize() -> usize {
    1
}
fn ten() -> usize {
    10
}
fn default_root() -> String {
    "output".into()
}

/// A field-level validation message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn diag(field: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        field: field.into(),
        message: message.into(),
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    toml::from_str(text).map_err(|e| vec![diag("config", e.message().to_string() + &span_hint(text, e.span()))])
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => format!(" (line {})", text[..r.start.min(text.len())].lines().count().max(1)),
        None => String::new(),
    }
}

/// Everything a run needs, validated.
pub struct Plan {
    pub config: ExperimentConfig,
    pub model: Option<StableModel>,
    pub grid: Option<FrequencyGrid>,
    pub marks: Option<MarkSpace>,
    pub observation: Option<ObservationModel>,
}

impl Plan {
    pub fn build(config: ExperimentConfig) -> Result<Self, Vec<Diagnostic>> {
        let mut errors = Vec::new();
        let kind = config.kind;
        for block in kind.needs() {
            let present = match *block {
                "model" => config.model.is_some(),
                "grid" => config.grid.is_some(),
                "ensemble" => config.ensemble.is_some(),
                "norm" => config.norm.is_some(),
                "marks" => config.marks.is_some(),
                _ => config.filter.is_some(),
            };
            if !present {
                errors.push(diag(block, format!("missing block [{block}] required for kind {}", kind.name())));
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }

        let model = config.model.as_ref().and_then(|m| collect(&mut errors, build_model(m)));
        let grid = config.grid.as_ref().and_then(|g| {
            let dim = model.as_ref().map_or(1, |m| m.dim());
            collect(&mut errors, build_grid(g, dim))
        });
        let marks = config.marks.as_ref().and_then(|m| collect(&mut errors, build_marks(m)));
        if let Some(e) = &config.ensemble {
            if e.paths == 0 {
                errors.push(diag("ensemble.paths", "must be at least 1"));
            }
        }
        if let (Some(g), Some(m)) = (&config.grid, &model) {
            check_times(&mut errors, g, m.horizon());
        }
        if let Some(n) = &config.norm {
            check_norm(&mut errors, n, kind);
        }
        if let Some(src) = &config.source {
            for (k, mode) in src.f_modes.iter().chain(&src.g_modes).enumerate() {
                if mode.iter().any(|v| !v.is_finite()) {
                    errors.push(diag(&format!("source.modes[{k}]"), "entries must be finite"));
                }
            }
        }
        if let Some(m) = &model {
            if matches!(kind, Kind::Solve | Kind::Filter) {
                let report = check_assumptions(m, 64);
                if !report.pass_a1 {
                    errors.push(diag("model", format!("nondegeneracy fails: min Re M = {:e}", report.mu_hat)));
                }
                if !report.pass_a2 {
                    errors.push(diag("model", format!("coefficient regularity fails: bound {:e}", report.c_alpha_hat)));
                }
            }
        }
        let observation = match (kind, &config.filter, &grid, &model) {
            (Kind::Filter, Some(f), Some(g), Some(m)) => {
                if m.dim() != 1 {
                    errors.push(diag("model.dim", "filter experiments are one-dimensional"));
                    None
                } else {
                    collect(&mut errors, build_observation(f, g))
                }
            }
            _ => None,
        };
        if errors.is_empty() {
            Ok(Self {
                config,
                model,
                grid,
                marks,
                observation,
            })
        } else {
            Err(errors)
        }
    }

    pub fn seed(&self) -> Option<u64> {
        self.config.ensemble.as_ref().map(|e| e.seed)
    }

    pub fn paths(&self) -> usize {
        self.config.ensemble.as_ref().map_or(1, |e| e.paths)
    }

    /// Snapshot times, defaulting to the horizon.
    pub fn snapshots(&self) -> Vec<f64> {
        let horizon = self.model.as_ref().map_or(1.0, |m| m.horizon());
        let mut s = self
            .config
            .grid
            .as_ref()
            .and_then(|g| g.snapshots.clone())
            .unwrap_or_else(|| vec![horizon]);
        s.sort_by(f64::total_cmp);
        s
    }

    pub fn source(&self) -> SourceBlock {
        self.config.source.clone().unwrap_or_default()
    }
}

fn collect<T>(errors: &mut Vec<Diagnostic>, r: Result<T, Diagnostic>) -> Option<T> {
    r.map_err(|e| errors.push(e)).ok()
}

fn build_model(m: &ModelBlock) -> Result<StableModel, Diagnostic> {
    if !(m.alpha > 0.0 && m.alpha <= 2.0) {
        return Err(diag("model.alpha", format!("{} outside the range (0, 2]", m.alpha)));
    }
    if !(m.dim == 1 || m.dim == 2) {
        return Err(diag("model.dim", format!("{} not supported (1 or 2)", m.dim)));
    }
    let angular = match (m.density, &m.masses, m.alpha == 2.0) {
        (Some(_), Some(_), _) => return Err(diag("model", "give either density or masses, not both")),
        (None, None, true) => AngularMeasure::zero(m.dim),
        (Some(_), _, true) | (_, Some(_), true) => return Err(diag("model", "alpha = 2 takes diffusion, not a jump density")),
        (Some(v), None, false) => AngularMeasure::isotropic(m.dim, v, 256).map_err(|e| diag("model.density", e.to_string()))?,
        (None, Some(v), false) => AngularMeasure::tabulated(m.dim, v).map_err(|e| diag("model.masses", e.to_string()))?,
        (None, None, false) => return Err(diag("model", "alpha < 2 needs density or masses")),
    };
    let mut c = Coefficients::new(angular);
    if let Some(b) = m.drift {
        if m.alpha != 1.0 {
            return Err(diag("model.drift", "drift is only part of the alpha = 1 operator"));
        }
        c = c.with_drift(b);
    }
    match (m.diffusion, m.alpha == 2.0) {
        (Some(b), true) => c = c.with_diffusion(b),
        (None, true) => return Err(diag("model.diffusion", "required for alpha = 2")),
        (Some(_), false) => return Err(diag("model.diffusion", "only allowed for alpha = 2")),
        (None, false) => {}
    }
    let field = if m.alpha == 1.0 { "model.masses" } else { "model" };
    StableModel::builder(m.alpha, m.dim)
        .horizon(m.horizon)
        .coefficients(c)
        .project_centering(m.project_centering)
        .build()
        .map_err(|e| diag(field, e.to_string()))
}

fn build_grid(g: &GridBlock, dim: usize) -> Result<FrequencyGrid, Diagnostic> {
    if let Some(dt) = g.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(diag("grid.dt", "must be positive"));
        }
    }
    FrequencyGrid::new(dim, g.n, g.half_width).map_err(|e| diag("grid", e.to_string()))
}

fn check_times(errors: &mut Vec<Diagnostic>, g: &GridBlock, horizon: f64) {
    if let Some(s) = &g.snapshots {
        if s.is_empty() {
            errors.push(diag("grid.snapshots", "must not be empty"));
        }
        if let Some(t) = s.iter().find(|t| !(**t >= 0.0 && **t <= horizon)) {
            errors.push(diag("grid.snapshots", format!("time {t} outside [0, {horizon}]")));
        }
    }
}

fn check_norm(errors: &mut Vec<Diagnostic>, n: &NormBlock, kind: Kind) {
    if !(n.p >= 1.0 && n.p.is_finite()) {
        errors.push(diag("norm.p", "must be at least 1"));
    }
    if n.r.is_some_and(|r| r < 2.0) {
        errors.push(diag("norm.r", "must be at least 2"));
    }
    if !(n.beta > 0.0 && n.beta < 1.0) {
        errors.push(diag("norm.beta", "must lie in (0, 1)"));
    }
    if n.lambda < 0.0 {
        errors.push(diag("norm.lambda", "must be nonnegative"));
    }
    if let Some(l) = &n.lambdas {
        if l.len() < 2 || l.iter().any(|v| *v <= 0.0) {
            errors.push(diag("norm.lambdas", "need at least two positive values"));
        }
    }
    if let Some(m) = &n.moments {
        if m.is_empty() || m.iter().any(|p| *p < 2.0) {
            errors.push(diag("norm.moments", "orders must be at least 2"));
        }
    }
    if kind == Kind::Estimates {
        match n.alpha {
            None => errors.push(diag("norm.alpha", "required for kind estimates")),
            Some(a) if !(a > 0.0 && a <= 2.0) => errors.push(diag("norm.alpha", format!("{a} outside the range (0, 2]"))),
            _ => {}
        }
    }
}

fn build_marks(m: &MarksBlock) -> Result<MarkSpace, Diagnostic> {
    let atoms: Vec<(f64, f64)> = m.atoms.iter().map(|a| (a[0], a[1])).collect();
    let mut space = MarkSpace::atoms(&atoms).map_err(|e| diag("marks.atoms", e.to_string()))?;
    if let Some([lo, hi, rate]) = m.continuous {
        space = space.with_continuous(lo, hi, rate).map_err(|e| diag("marks.continuous", e.to_string()))?;
    }
    if !(m.horizon > 0.0 && m.horizon.is_finite()) {
        return Err(diag("marks.horizon", "must be positive"));
    }
    Ok(space)
}

fn build_observation(f: &FilterBlock, grid: &FrequencyGrid) -> Result<ObservationModel, Diagnostic> {
    if !(f.amplitude >= 0.0 && f.amplitude < 1.0) {
        return Err(diag("filter.amplitude", "must lie in [0, 1) so that the ratio stays positive"));
    }
    if !(f.initial_width > 0.0) {
        return Err(diag("filter.initial_width", "must be positive"));
    }
    if !(f.particle_dt > 0.0) {
        return Err(diag("filter.particle_dt", "must be positive"));
    }
    if f.replicates < 2 {
        return Err(diag("filter.replicates", "need at least two replicates"));
    }
    let l = grid.half_width();
    let amp = f.amplitude;
    let marks: Vec<(f64, f64)> = f.observations.iter().map(|o| (o[0], o[1])).collect();
    let u0 = ObservationModel::gaussian_initial(grid, [f.initial_center, 0.0], f.initial_width);
    ObservationModel::new(grid, &marks, move |x, y| 1.0 + amp * ((x[0] - y) * PI / l).cos(), u0)
        .map_err(|e| diag("filter", e.to_string()))
}

fn mode_sum(modes: &[[f64; 3]], s: f64) -> f64 {
    modes.iter().map(|[k, a, b]| a * (k * s).cos() + b * (k * s).sin()).sum()
}

fn coordinate(x: [f64; 2]) -> f64 {
    x[0] + x[1]
}

impl SourceBlock {
    pub fn forcing(&self) -> Option<Source> {
        if self.f_modes.is_empty() {
            return None;
        }
        let modes = self.f_modes.clone();
        Some(Source::stationary(move |x| mode_sum(&modes, coordinate(x))))
    }

    pub fn jump_forcing(&self) -> MarkSource {
        let modes = self.g_modes.clone();
        let offset = if modes.is_empty() && self.g_offset == 0.0 { 1.0 } else { self.g_offset };
        MarkSource::stationary(move |x, m: &Mark| m.value * (offset + mode_sum(&modes, coordinate(x))))
    }

    /// Integrand `g(t, v) = v (offset + modes(t))` of the moment experiments.
    pub fn integrand(&self) -> impl Fn(f64, &Mark) -> f64 + Sync + '_ {
        let offset = if self.g_modes.is_empty() && self.g_offset == 0.0 { 1.0 } else { self.g_offset };
        move |t, m: &Mark| m.value * (offset + mode_sum(&self.g_modes, t))
    }
}
