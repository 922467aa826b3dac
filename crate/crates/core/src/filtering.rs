//! Nonlinear filtering of a stable signal observed through a marked point
//! process whose intensity `ρ(X_{t-}, y) π(dy)` depends on the signal.
//!
//! The signal lives on the periodic box of the grid. The unnormalized
//! conditional density `v` solves the Zakai equation, integrated here by
//! Strang splitting (semigroup half step, reaction `exp(-λ_ρ Δt)`, semigroup
//! half step) with multiplicative updates `v ← v ρ(·, y_i)` at observation
//! events. A bootstrap particle filter under the reference measure serves as
//! an independent oracle.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Poisson;

use crate::error::{Error, Result};
use crate::exec::{for_each_mut, map_indexed, Execution};
use crate::grid::FrequencyGrid;
use crate::kernel::SymbolGrid;
use crate::random_measure::IncrementPlan;
use crate::rng::{path_rng, stream, PathRng};
use crate::stats::{mean_stderr, wrap, Estimate};
use crate::symbol::{check_assumptions, StableModel};

type RhoFn = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Observation intensity ratio `ρ`, mark measure `π` and initial density.
#[derive(Clone)]
pub struct ObservationModel {
    rho: RhoFn,
    marks: Vec<(f64, f64)>,
    grid: FrequencyGrid,
    u0: Vec<f64>,
    initial: WeightedIndex<f64>,
    rho_table: Vec<Vec<f64>>,
    reaction: Vec<f64>,
    bounds: (f64, f64),
}

impl std::fmt::Debug for ObservationModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObservationModel")
            .field("marks", &self.marks)
            .field("bounds", &self.bounds)
            .finish()
    }
}

/// Tolerance on the mass of the initial density.
pub const INITIAL_MASS_TOLERANCE: f64 = 1e-6;

impl ObservationModel {
    /// `marks` are `(y, π({y}))`; `u0` is a density sampled on `grid`.
    pub fn new<F>(grid: &FrequencyGrid, marks: &[(f64, f64)], rho: F, u0: Vec<f64>) -> Result<Self>
    where
        F: Fn([f64; 2], f64) -> f64 + Send + Sync + 'static,
    {
        if marks.is_empty() || marks.iter().any(|&(y, w)| !(y.is_finite() && w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidObservation("marks need finite values and positive weights".into()));
        }
        if u0.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if u0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidObservation("initial density must be finite and nonnegative".into()));
        }
        let mass: f64 = u0.iter().sum::<f64>() * grid.cell_volume();
        if (mass - 1.0).abs() > INITIAL_MASS_TOLERANCE {
            return Err(Error::InvalidObservation(format!("initial density has mass {mass}")));
        }
        let rho_table: Vec<Vec<f64>> = marks.iter().map(|&(y, _)| (0..grid.len()).map(|i| rho(grid.x(i), y)).collect()).collect();
        let (lo, hi) = rho_table
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::InvalidObservation(format!("ρ must satisfy 0 < c₁ ≤ ρ ≤ C₁, found range [{lo}, {hi}]")));
        }
        let reaction = (0..grid.len())
            .map(|i| marks.iter().zip(&rho_table).map(|(&(_, w), t)| (t[i] - 1.0) * w).sum())
            .collect();
        let initial = WeightedIndex::new(&u0).map_err(|e| Error::InvalidObservation(e.to_string()))?;
        Ok(Self {
            rho: Arc::new(rho),
            marks: marks.to_vec(),
            grid: grid.clone(),
            u0,
            initial,
            rho_table,
            reaction,
            bounds: (lo, hi),
        })
    }

    /// Normalized periodic Gaussian bump `∝ exp(-|x - center|²/(2 width²))`
    /// with the displacement wrapped into the box.
    pub fn gaussian_initial(grid: &FrequencyGrid, center: [f64; 2], width: f64) -> Vec<f64> {
        let l = grid.half_width();
        let mut u: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.x(i);
                let r2: f64 = (0..grid.dim()).map(|a| wrap(x[a] - center[a], l).powi(2)).sum();
                (-0.5 * r2 / (width * width)).exp()
            })
            .collect();
        let mass: f64 = u.iter().sum::<f64>() * grid.cell_volume();
        u.iter_mut().for_each(|v| *v /= mass);
        u
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn marks(&self) -> &[(f64, f64)] {
        &self.marks
    }

    pub fn initial_density(&self) -> &[f64] {
        &self.u0
    }

    /// `(c₁, C₁)` over the grid and marks.
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// `π(U)`.
    pub fn total_rate(&self) -> f64 {
        self.marks.iter().map(|m| m.1).sum()
    }

    pub fn rho(&self, x: [f64; 2], mark: usize) -> f64 {
        (self.rho)(x, self.marks[mark].0)
    }

    /// `λ_ρ(x) = ∫ (ρ(x, y) - 1) π(dy)`.
    pub fn reaction_at(&self, x: [f64; 2]) -> f64 {
        self.marks.iter().map(|&(y, w)| ((self.rho)(x, y) - 1.0) * w).sum()
    }

    /// `λ_ρ` on the grid.
    pub fn reaction_table(&self) -> &[f64] {
        &self.reaction
    }

    /// Draws `X_0 ~ u0`, uniform within the selected cell.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let i = self.initial.sample(rng);
        let x = self.grid.x(i);
        let h = self.grid.spacing();
        let mut out = [0.0; 2];
        for a in 0..self.grid.dim() {
            out[a] = wrap(x[a] + h * (rng.gen::<f64>() - 0.5), self.grid.half_width());
        }
        out
    }

    fn wrap_point(&self, x: [f64; 2]) -> [f64; 2] {
        let l = self.grid.half_width();
        let mut out = [0.0; 2];
        for a in 0..self.grid.dim() {
            out[a] = wrap(x[a], l);
        }
        out
    }
}

/// Signal states at increasing times; `X_t` is the state at the last node
/// `≤ t` (the path has no fixed-time jumps, so `X_{t-} = X_t` at nodes).
#[derive(Clone, Debug, PartialEq)]
pub struct SignalPath {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
}

impl SignalPath {
    pub fn at(&self, t: f64) -> [f64; 2] {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.states[i]
    }
}

/// One observation `(t_i, y_i)`; `mark` indexes the atoms of `π`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationEvent {
    pub t: f64,
    pub mark: usize,
}

fn time_nodes(horizon: f64, dt_max: f64, extra: &[f64]) -> Vec<f64> {
    let steps = (horizon / dt_max).ceil().max(1.0) as usize;
    let mut nodes: Vec<f64> = (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect();
    nodes.extend(extra.iter().copied().filter(|&t| t > 0.0 && t < horizon));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
}

/// Simulates the signal on a grid of step `≤ dt_max` refined by `refine`.
pub fn simulate_signal(model: &StableModel, obs: &ObservationModel, dt_max: f64, refine: &[f64], seed: u64) -> Result<SignalPath> {
    if model.dim() != obs.grid.dim() {
        return Err(Error::GridMismatch);
    }
    if !check_assumptions(model, 64).pass_a1 {
        return Err(Error::Assumption("signal generator is degenerate".into()));
    }
    if !(dt_max > 0.0) {
        return Err(Error::InvalidInput("dt_max must be positive".into()));
    }
    let times = time_nodes(model.horizon(), dt_max, refine);
    let mut rng = path_rng(seed, stream::SIGNAL, 0);
    let mut x = obs.sample_initial(&mut path_rng(seed, stream::INITIAL, 0));
    let mut states = Vec::with_capacity(times.len());
    states.push(x);
    for w in times.windows(2) {
        let z = IncrementPlan::new(model, w[0], w[1], None)?.sample(&mut rng);
        x = obs.wrap_point([x[0] + z[0], x[1] + z[1]]);
        states.push(x);
    }
    Ok(SignalPath { times, states })
}

/// Candidate events of the dominating Poisson measure with rate `C₁ π(U)`,
/// marks drawn `∝ π`.
pub fn observation_candidates(obs: &ObservationModel, horizon: f64, seed: u64) -> Result<Vec<ObservationEvent>> {
    poisson_events(obs, obs.bounds.1 * obs.total_rate(), horizon, &mut path_rng(seed, stream::OBSERVATION, 0))
}

fn poisson_events<R: Rng>(obs: &ObservationModel, rate: f64, horizon: f64, rng: &mut R) -> Result<Vec<ObservationEvent>> {
    let mean = rate * horizon;
    let count = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| Error::InvalidObservation(e.to_string()))?.sample(rng) as usize
    } else {
        0
    };
    let mut times: Vec<f64> = (0..count).map(|_| horizon * rng.gen::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    let weights = WeightedIndex::new(obs.marks.iter().map(|m| m.1)).map_err(|e| Error::InvalidObservation(e.to_string()))?;
    Ok(times
        .into_iter()
        .map(|t| ObservationEvent {
            t,
            mark: weights.sample(rng),
        })
        .collect())
}

/// Thins the candidates of `seed` along `signal`: a candidate `(t, y)` is
/// kept with probability `ρ(X_{t-}, y)/C₁`. The signal should be refined at
/// the candidate times.
pub fn simulate_observation(signal: &SignalPath, obs: &ObservationModel, seed: u64) -> Result<Vec<ObservationEvent>> {
    let horizon = *signal.times.last().ok_or(Error::EmptyEnsemble)?;
    let candidates = observation_candidates(obs, horizon, seed)?;
    let mut rng = path_rng(seed, stream::OBSERVATION, 1);
    let c1 = obs.bounds.1;
    Ok(candidates
        .into_iter()
        .filter(|e| rng.gen::<f64>() * c1 < obs.rho(signal.at(e.t), e.mark))
        .collect())
}

/// Observations under the reference measure: a Poisson measure with
/// intensity `π`, independent of the signal.
pub fn reference_observations(obs: &ObservationModel, horizon: f64, seed: u64) -> Result<Vec<ObservationEvent>> {
    poisson_events(obs, obs.total_rate(), horizon, &mut path_rng(seed, stream::OBSERVATION, 2))
}

/// A signal path with its observations.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub signal: SignalPath,
    pub events: Vec<ObservationEvent>,
}

/// Signal refined at the candidate times, then thinned observations.
pub fn simulate_scenario(model: &StableModel, obs: &ObservationModel, dt_max: f64, seed: u64) -> Result<Scenario> {
    let candidates: Vec<f64> = observation_candidates(obs, model.horizon(), seed)?.iter().map(|e| e.t).collect();
    let signal = simulate_signal(model, obs, dt_max, &candidates, seed)?;
    let events = simulate_observation(&signal, obs, seed)?;
    Ok(Scenario { signal, events })
}

/// Filter summary at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSnapshot {
    pub t: f64,
    pub mean: [f64; 2],
    pub variance: [f64; 2],
    /// `∫ v dx` (Zakai) or the mean unnormalized weight (particles).
    pub mass: f64,
    /// Smallest density value before clamping (Zakai).
    pub min_value: f64,
    /// Effective sample size (particles).
    pub ess: f64,
}

/// Zakai densities and summaries at the snapshot times.
#[derive(Clone, Debug)]
pub struct ZakaiRun {
    pub snapshots: Vec<FilterSnapshot>,
    /// Normalized densities, clamped at zero.
    pub densities: Vec<Vec<f64>>,
    /// Accumulated log normalizer; `∫ v = exp(log_normalizer)` at `T`.
    pub log_normalizer: f64,
}

fn moments(grid: &FrequencyGrid, weights: impl Iterator<Item = (usize, f64)> + Clone) -> ([f64; 2], [f64; 2]) {
    let total: f64 = weights.clone().map(|(_, w)| w).sum();
    let mut mean = [0.0; 2];
    for (i, w) in weights.clone() {
        let x = grid.x(i);
        mean[0] += w * x[0];
        mean[1] += w * x[1];
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = [0.0; 2];
    for (i, w) in weights {
        let x = grid.x(i);
        var[0] += w * (x[0] - mean[0]).powi(2);
        var[1] += w * (x[1] - mean[1]).powi(2);
    }
    var.iter_mut().for_each(|v| *v /= total);
    (mean, var)
}

fn check_filter_times(horizon: f64, events: &[ObservationEvent], snapshots: &[f64], marks: usize) -> Result<()> {
    if snapshots.iter().any(|&t| !(t >= 0.0 && t <= horizon)) {
        return Err(Error::TimeOrder(format!("snapshots must lie in [0, {horizon}]")));
    }
    if events.windows(2).any(|w| w[1].t < w[0].t) || events.iter().any(|e| !(e.t > 0.0 && e.t <= horizon) || e.mark >= marks) {
        return Err(Error::InvalidObservation("events must be sorted in (0, T] with valid marks".into()));
    }
    Ok(())
}

/// Solves the Zakai equation for `v` with `v(0) = u0`.
pub fn zakai_solve(
    events: &[ObservationEvent],
    obs: &ObservationModel,
    model: &StableModel,
    dt_max: f64,
    snapshots: &[f64],
) -> Result<ZakaiRun> {
    let grid = &obs.grid;
    if model.dim() != grid.dim() {
        return Err(Error::GridMismatch);
    }
    if !(dt_max > 0.0) {
        return Err(Error::InvalidInput("dt_max must be positive".into()));
    }
    let horizon = model.horizon();
    check_filter_times(horizon, events, snapshots, obs.marks.len())?;
    let symbols = SymbolGrid::new(model, grid, Execution::Sequential)?;
    let mut extra: Vec<f64> = events.iter().map(|e| e.t).collect();
    extra.extend_from_slice(snapshots);
    let nodes = time_nodes(horizon, dt_max, &extra);
    let cell = grid.cell_volume();

    let mut v: Vec<f64> = obs.u0.clone();
    let mut log_norm = 0.0;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
    let semigroup = |v: &mut [f64], buf: &mut [Complex64], s: f64, t: f64| {
        let integrated = symbols.integrated(s, t);
        buf.iter_mut().zip(v.iter()).for_each(|(b, x)| *b = Complex64::new(*x, 0.0));
        grid.forward(buf);
        buf.iter_mut().zip(&integrated).for_each(|(b, p)| *b *= p.conj().exp());
        grid.inverse(buf);
        v.iter_mut().zip(buf.iter()).for_each(|(x, b)| *x = b.re);
    };
    let summarize = |v: &[f64], t: f64, log_norm: f64| -> (FilterSnapshot, Vec<f64>) {
        let min_value = v.iter().copied().fold(f64::INFINITY, f64::min);
        let clamped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
        let mass: f64 = clamped.iter().sum::<f64>() * cell;
        let (mean, variance) = moments(grid, clamped.iter().copied().enumerate());
        let snapshot = FilterSnapshot {
            t,
            mean,
            variance,
            mass: mass * log_norm.exp(),
            min_value: min_value * log_norm.exp(),
            ess: f64::NAN,
        };
        (snapshot, clamped.iter().map(|x| x / mass).collect())
    };
    let mut order: Vec<usize> = (0..snapshots.len()).collect();
    order.sort_by(|&a, &b| snapshots[a].total_cmp(&snapshots[b]));
    let mut recorded: Vec<Option<(FilterSnapshot, Vec<f64>)>> = vec![None; snapshots.len()];
    let mut next_snap = 0;
    let emit = |v: &[f64], t: f64, log_norm: f64, next_snap: &mut usize, recorded: &mut [Option<(FilterSnapshot, Vec<f64>)>]| {
        while *next_snap < order.len() && snapshots[order[*next_snap]] <= t {
            let k = order[*next_snap];
            recorded[k] = Some(summarize(v, snapshots[k], log_norm));
            *next_snap += 1;
        }
    };
    let mut next_event = 0;
    emit(&v, 0.0, log_norm, &mut next_snap, &mut recorded);
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        semigroup(&mut v, &mut buf, a, mid);
        let h = b - a;
        v.iter_mut().zip(&obs.reaction).for_each(|(x, r)| *x *= (-r * h).exp());
        semigroup(&mut v, &mut buf, mid, b);
        while next_event < events.len() && events[next_event].t <= b {
            let table = &obs.rho_table[events[next_event].mark];
            v.iter_mut().zip(table).for_each(|(x, r)| *x *= r);
            next_event += 1;
        }
        let mass: f64 = v.iter().sum::<f64>() * cell;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Degenerate(mass));
        }
        log_norm += mass.ln();
        v.iter_mut().for_each(|x| *x /= mass);
        emit(&v, b, log_norm, &mut next_snap, &mut recorded);
    }
    let mut out = ZakaiRun {
        snapshots: Vec::with_capacity(snapshots.len()),
        densities: Vec::with_capacity(snapshots.len()),
        log_normalizer: log_norm,
    };
    for r in recorded {
        let (s, d) = r.ok_or_else(|| Error::TimeOrder("snapshot not reached".into()))?;
        out.snapshots.push(s);
        out.densities.push(d);
    }
    Ok(out)
}

/// Parameters of [`particle_filter`].
#[derive(Clone, Debug)]
pub struct ParticleConfig {
    pub particles: usize,
    pub dt_max: f64,
    pub snapshots: Vec<f64>,
    pub seed: u64,
    pub exec: Execution,
}

/// Resample when the effective sample size drops below this fraction of `N`.
pub const RESAMPLE_FRACTION: f64 = 0.5;
/// Effective sample size below which a run is flagged as degenerate.
pub const DEGENERACY_ESS: f64 = 10.0;
/// Smallest admissible particle count.
pub const MIN_PARTICLES: usize = 100;

#[derive(Clone, Debug)]
pub struct ParticleRun {
    pub snapshots: Vec<FilterSnapshot>,
    pub resamples: usize,
    pub min_ess: f64,
    pub degenerate: bool,
}

struct Particle {
    x: [f64; 2],
    log_w: f64,
    rng: PathRng,
}

fn normalized_weights(particles: &[Particle]) -> (Vec<f64>, f64) {
    let max = particles.iter().map(|p| p.log_w).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = particles.iter().map(|p| (p.log_w - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let log_mean = max + (total / particles.len() as f64).ln();
    (w.into_iter().map(|v| v / total).collect(), log_mean)
}

/// Bootstrap particle filter: particles move as independent signals and
/// carry the likelihood weights `exp(-∫ λ_ρ(X_s) ds) Π ρ(X_{t_i-}, y_i)`,
/// the time integral by the trapezoid rule on each step.
pub fn particle_filter(events: &[ObservationEvent], obs: &ObservationModel, model: &StableModel, cfg: &ParticleConfig) -> Result<ParticleRun> {
    if cfg.particles < MIN_PARTICLES {
        return Err(Error::InvalidInput(format!("need at least {MIN_PARTICLES} particles")));
    }
    if model.dim() != obs.grid.dim() {
        return Err(Error::GridMismatch);
    }
    if !(cfg.dt_max > 0.0) {
        return Err(Error::InvalidInput("dt_max must be positive".into()));
    }
    let horizon = model.horizon();
    check_filter_times(horizon, events, &cfg.snapshots, obs.marks.len())?;
    let n = cfg.particles;
    let mut particles: Vec<Particle> = map_indexed(cfg.exec, n, |i| {
        let mut rng = path_rng(cfg.seed, stream::PARTICLES, i as u64);
        let x = obs.sample_initial(&mut rng);
        Particle { x, log_w: 0.0, rng }
    });
    let mut extra: Vec<f64> = events.iter().map(|e| e.t).collect();
    extra.extend_from_slice(&cfg.snapshots);
    let nodes = time_nodes(horizon, cfg.dt_max, &extra);

    let mut order: Vec<usize> = (0..cfg.snapshots.len()).collect();
    order.sort_by(|&a, &b| cfg.snapshots[a].total_cmp(&cfg.snapshots[b]));
    let mut recorded: Vec<Option<FilterSnapshot>> = vec![None; cfg.snapshots.len()];
    let mut next_snap = 0;
    let mut next_event = 0;
    let mut resamples = 0;
    let mut min_ess = n as f64;
    let dim = obs.grid.dim();

    let summarize = |particles: &[Particle], t: f64| -> FilterSnapshot {
        let (w, log_mean) = normalized_weights(particles);
        let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
        let mut mean = [0.0; 2];
        for (p, wi) in particles.iter().zip(&w) {
            for a in 0..dim {
                mean[a] += wi * p.x[a];
            }
        }
        let mut variance = [0.0; 2];
        for (p, wi) in particles.iter().zip(&w) {
            for a in 0..dim {
                variance[a] += wi * (p.x[a] - mean[a]).powi(2);
            }
        }
        FilterSnapshot {
            t,
            mean,
            variance,
            mass: log_mean.exp(),
            min_value: 0.0,
            ess,
        }
    };
    let emit = |particles: &[Particle], t: f64, next_snap: &mut usize, recorded: &mut Vec<Option<FilterSnapshot>>| {
        while *next_snap < order.len() && cfg.snapshots[order[*next_snap]] <= t {
            let mut s = summarize(particles, t);
            s.t = cfg.snapshots[order[*next_snap]];
            recorded[order[*next_snap]] = Some(s);
            *next_snap += 1;
        }
    };
    emit(&particles, 0.0, &mut next_snap, &mut recorded);
    for (step, w) in nodes.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let plan = IncrementPlan::new(model, a, b, None)?;
        let h = b - a;
        for_each_mut(cfg.exec, &mut particles, |_, p| {
            let before = obs.reaction_at(p.x);
            let z = plan.sample(&mut p.rng);
            p.x = obs.wrap_point([p.x[0] + z[0], p.x[1] + z[1]]);
            p.log_w -= 0.5 * h * (before + obs.reaction_at(p.x));
        });
        while next_event < events.len() && events[next_event].t <= b {
            let mark = events[next_event].mark;
            for_each_mut(cfg.exec, &mut particles, |_, p| p.log_w += obs.rho(p.x, mark).ln());
            next_event += 1;
        }
        emit(&particles, b, &mut next_snap, &mut recorded);
        let (weights, log_mean) = normalized_weights(&particles);
        let ess = 1.0 / weights.iter().map(|v| v * v).sum::<f64>();
        min_ess = min_ess.min(ess);
        if ess < RESAMPLE_FRACTION * n as f64 {
            let mut rng = path_rng(cfg.seed, stream::RESAMPLE, step as u64);
            let u0: f64 = rng.gen::<f64>() / n as f64;
            let mut cumulative = 0.0;
            let mut j = 0;
            let positions: Vec<[f64; 2]> = particles.iter().map(|p| p.x).collect();
            let mut chosen = Vec::with_capacity(n);
            for (i, w) in weights.iter().enumerate() {
                cumulative += w;
                while j < n && u0 + j as f64 / n as f64 <= cumulative {
                    chosen.push(i);
                    j += 1;
                }
            }
            while chosen.len() < n {
                chosen.push(n - 1);
            }
            for (p, &c) in particles.iter_mut().zip(&chosen) {
                p.x = positions[c];
                p.log_w = log_mean;
            }
            resamples += 1;
        }
    }
    let snapshots = recorded
        .into_iter()
        .map(|s| s.ok_or_else(|| Error::TimeOrder("snapshot not reached".into())))
        .collect::<Result<_>>()?;
    Ok(ParticleRun {
        snapshots,
        resamples,
        min_ess,
        degenerate: min_ess < DEGENERACY_ESS,
    })
}

/// Ensemble mean of the Zakai mass `∫ v(t) dx` at the snapshot times over
/// `runs` observation paths drawn under the reference measure.
pub fn mass_martingale(
    obs: &ObservationModel,
    model: &StableModel,
    dt_max: f64,
    snapshots: &[f64],
    runs: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Estimate>> {
    let masses: Vec<Vec<f64>> = map_indexed(exec, runs, |r| {
        let events = reference_observations(obs, model.horizon(), crate::rng::path_seed(seed, stream::OBSERVATION, r as u64))?;
        let run = zakai_solve(&events, obs, model, dt_max, snapshots)?;
        Ok(run.snapshots.iter().map(|s| s.mass).collect())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok((0..snapshots.len())
        .map(|k| mean_stderr(&masses.iter().map(|m| m[k]).collect::<Vec<_>>()))
        .collect())
}

/// Parameters of a Zakai / particle filter comparison.
#[derive(Clone, Debug)]
pub struct FilterExperiment {
    pub snapshots: Vec<f64>,
    pub zakai_dt: f64,
    pub particle_dt: f64,
    pub particles: usize,
    /// Independent particle-filter runs used for the Monte Carlo error.
    pub replicates: usize,
    pub seed: u64,
    pub exec: Execution,
}

/// Posterior moments from both filters at one snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonRow {
    pub t: f64,
    pub zakai_mean: f64,
    pub zakai_variance: f64,
    /// Step-halving error estimates of the Zakai moments.
    pub zakai_mean_err: f64,
    pub zakai_variance_err: f64,
    pub mass: f64,
    pub min_value: f64,
    pub pf_mean: f64,
    pub pf_variance: f64,
    /// Replicate standard deviations of single-run particle moments.
    pub pf_mean_sd: f64,
    pub pf_variance_sd: f64,
    pub ess: f64,
}

impl ComparisonRow {
    /// Discrepancies in units of the joint standard deviation.
    pub fn z_scores(&self) -> [f64; 2] {
        [
            (self.zakai_mean - self.pf_mean).abs() / self.pf_mean_sd.hypot(self.zakai_mean_err),
            (self.zakai_variance - self.pf_variance).abs() / self.pf_variance_sd.hypot(self.zakai_variance_err),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct FilterReport {
    pub scenario: Scenario,
    pub rows: Vec<ComparisonRow>,
    pub degenerate: bool,
}

impl FilterReport {
    pub const CSV_HEADER: &'static str =
        "t,zakai_mean,zakai_var,zakai_mean_err,zakai_var_err,mass,min_value,pf_mean,pf_var,pf_mean_sd,pf_var_sd,ess,z_mean,z_var";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let z = r.z_scores();
            let _ = writeln!(
                out,
                "{},{:.12e},{:.12e},{:.6e},{:.6e},{:.12e},{:.6e},{:.12e},{:.12e},{:.6e},{:.6e},{:.3},{:.4},{:.4}",
                r.t,
                r.zakai_mean,
                r.zakai_variance,
                r.zakai_mean_err,
                r.zakai_variance_err,
                r.mass,
                r.min_value,
                r.pf_mean,
                r.pf_variance,
                r.pf_mean_sd,
                r.pf_variance_sd,
                r.ess,
                z[0],
                z[1]
            );
        }
        out
    }
}

fn sample_sd(xs: &[f64]) -> f64 {
    let est = mean_stderr(xs);
    est.stderr * (xs.len() as f64).sqrt()
}

/// Simulates one scenario and compares the Zakai posterior (first axis)
/// with replicated particle filters; row `k` reports the filter of
/// replicate 0 against the Zakai solution.
pub fn compare_filters(model: &StableModel, obs: &ObservationModel, exp: &FilterExperiment) -> Result<FilterReport> {
    if exp.replicates < 2 {
        return Err(Error::InvalidInput("need at least two particle-filter replicates".into()));
    }
    let scenario = simulate_scenario(model, obs, exp.particle_dt, exp.seed)?;
    let fine = zakai_solve(&scenario.events, obs, model, exp.zakai_dt, &exp.snapshots)?;
    let coarse = zakai_solve(&scenario.events, obs, model, 2.0 * exp.zakai_dt, &exp.snapshots)?;
    let runs: Vec<ParticleRun> = (0..exp.replicates)
        .map(|r| {
            let cfg = ParticleConfig {
                particles: exp.particles,
                dt_max: exp.particle_dt,
                snapshots: exp.snapshots.clone(),
                seed: crate::rng::path_seed(exp.seed, stream::PARTICLES, r as u64),
                exec: exp.exec,
            };
            particle_filter(&scenario.events, obs, model, &cfg)
        })
        .collect::<Result<_>>()?;
    let rows = (0..exp.snapshots.len())
        .map(|k| {
            let (z, zc) = (&fine.snapshots[k], &coarse.snapshots[k]);
            let means: Vec<f64> = runs.iter().map(|r| r.snapshots[k].mean[0]).collect();
            let vars: Vec<f64> = runs.iter().map(|r| r.snapshots[k].variance[0]).collect();
            let p = &runs[0].snapshots[k];
            ComparisonRow {
                t: z.t,
                zakai_mean: z.mean[0],
                zakai_variance: z.variance[0],
                zakai_mean_err: (z.mean[0] - zc.mean[0]).abs(),
                zakai_variance_err: (z.variance[0] - zc.variance[0]).abs(),
                mass: z.mass,
                min_value: z.min_value,
                pf_mean: p.mean[0],
                pf_variance: p.variance[0],
                pf_mean_sd: sample_sd(&means),
                pf_variance_sd: sample_sd(&vars),
                ess: p.ess,
            }
        })
        .collect();
    Ok(FilterReport {
        scenario,
        rows,
        degenerate: runs.iter().any(|r| r.degenerate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::density_g;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn setup(rho: fn([f64; 2], f64) -> f64) -> (StableModel, ObservationModel) {
        let model = StableModel::isotropic(1.5, 1, 0.5, 1.0).unwrap();
        let grid = FrequencyGrid::new(1, 256, 8.0).unwrap();
        let u0 = ObservationModel::gaussian_initial(&grid, [0.0, 0.0], 0.5);
        let obs = ObservationModel::new(&grid, &[(-4.0, 2.0), (0.0, 2.0), (4.0, 2.0)], rho, u0).unwrap();
        (model, obs)
    }

    fn informative(x: [f64; 2], y: f64) -> f64 {
        1.0 + 0.8 * ((x[0] - y) * PI / 8.0).cos()
    }

    #[test]
    fn uninformative_observations_give_forward_density() {
        let (model, obs) = setup(|_, _| 1.0);
        let events = vec![ObservationEvent { t: 0.3, mark: 1 }];
        let run = zakai_solve(&events, &obs, &model, 1e-2, &[0.5, 1.0]).unwrap();
        let grid = obs.grid();
        let g = density_g(&model, 0.0, 1.0, grid).unwrap();
        let mut a: Vec<Complex64> = obs.initial_density().iter().map(|v| Complex64::new(*v, 0.0)).collect();
        let mut b: Vec<Complex64> = g.field.real_values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
        grid.forward(&mut a);
        grid.forward(&mut b);
        let mut c: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        grid.inverse(&mut c);
        let err = run.densities[1].iter().zip(&c).map(|(x, y)| (x - y.re).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert_relative_eq!(run.snapshots[1].mass, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_ratio_gives_exact_decay() {
        let (model, obs) = setup(|_, _| 1.5);
        let run = zakai_solve(&[], &obs, &model, 1e-2, &[0.4]).unwrap();
        assert_relative_eq!(run.snapshots[0].mass, (-0.5 * 6.0 * 0.4f64).exp(), max_relative = 1e-10);
    }

    #[test]
    fn thinning_rates() {
        let (model, obs) = setup(|_, _| 1.0);
        let counts: Vec<f64> = (0..400)
            .map(|s| simulate_scenario(&model, &obs, 0.05, s).unwrap().events.len() as f64)
            .collect();
        let e = mean_stderr(&counts);
        assert!((e.value - 6.0).abs() < 3.0 * e.stderr, "{e:?}");
        let (_, obs2) = setup(|_, _| 2.0);
        let counts: Vec<f64> = (0..400)
            .map(|s| simulate_scenario(&model, &obs2, 0.05, s).unwrap().events.len() as f64)
            .collect();
        let e = mean_stderr(&counts);
        assert!((e.value - 12.0).abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn gaussian_signal_marginal() {
        let model = StableModel::gaussian(1, [[1.0, 0.0], [0.0, 0.0]], 1.0).unwrap();
        let grid = FrequencyGrid::new(1, 1024, 20.0).unwrap();
        let u0 = ObservationModel::gaussian_initial(&grid, [0.0, 0.0], 0.05);
        let obs = ObservationModel::new(&grid, &[(0.0, 1.0)], |_, _| 1.0, u0).unwrap();
        let ends: Vec<f64> = (0..4000)
            .map(|s| simulate_signal(&model, &obs, 0.1, &[], s).unwrap().at(1.0)[0])
            .collect();
        let sd = (1.0f64 + 0.05 * 0.05).sqrt();
        let ks = crate::stats::ks_distance(&ends, |x| 0.5 * (1.0 + libm_erf(x / (sd * 2f64.sqrt()))));
        assert!(ks < 3.0 * crate::stats::ks_mc_bound(ends.len()), "{ks}");
    }

    fn libm_erf(x: f64) -> f64 {
        use statrs::function::erf::erf;
        erf(x)
    }

    #[test]
    fn particle_filter_tracks_zakai() {
        let (model, obs) = setup(informative);
        let scenario = simulate_scenario(&model, &obs, 0.01, 5).unwrap();
        let snaps = [0.5, 1.0];
        let z = zakai_solve(&scenario.events, &obs, &model, 1e-2, &snaps).unwrap();
        let cfg = ParticleConfig {
            particles: 4000,
            dt_max: 0.01,
            snapshots: snaps.to_vec(),
            seed: 9,
            exec: Execution::Parallel,
        };
        let pf = particle_filter(&scenario.events, &obs, &model, &cfg).unwrap();
        assert!(!pf.degenerate);
        for (a, b) in z.snapshots.iter().zip(&pf.snapshots) {
            let sd = (b.variance[0] / b.ess).sqrt();
            assert!((a.mean[0] - b.mean[0]).abs() < 5.0 * sd + 0.02, "{a:?} {b:?}");
        }
    }

    #[test]
    fn uninformative_weights_stay_uniform() {
        let (model, obs) = setup(|_, _| 1.0);
        let cfg = ParticleConfig {
            particles: 200,
            dt_max: 0.1,
            snapshots: vec![1.0],
            seed: 1,
            exec: Execution::Sequential,
        };
        let run = particle_filter(&[ObservationEvent { t: 0.5, mark: 0 }], &obs, &model, &cfg).unwrap();
        assert_relative_eq!(run.snapshots[0].ess, 200.0, epsilon = 1e-9);
        assert_eq!(run.resamples, 0);
    }

    #[test]
    fn rejects_bad_ratio() {
        let grid = FrequencyGrid::new(1, 64, 4.0).unwrap();
        let u0 = ObservationModel::gaussian_initial(&grid, [0.0, 0.0], 0.5);
        assert!(ObservationModel::new(&grid, &[(0.0, 1.0)], |x, _| x[0], u0).is_err());
    }
}
