//! Poisson random measures on `[0, T] × U`, compensated integrals against
//! them, and samplers for increments of the driving stable process.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::quadrature::GaussLegendre;
use crate::rng::{path_rng, path_seed, stream};
use crate::stats::{mean_stderr, Estimate};
use crate::symbol::{check_assumptions, StableModel};

/// A mark: an atom of the mark space or a point of its continuous part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mark {
    /// Index of the atom, `None` for continuous marks.
    pub atom: Option<usize>,
    pub value: f64,
}

/// Finite-intensity mark space `(U, Π)`: weighted atoms plus an optional
/// uniform continuous part on an interval.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkSpace {
    atoms: Vec<(f64, f64)>,
    continuous: Option<(f64, f64, f64)>,
}

impl MarkSpace {
    /// Atoms given as `(value, weight)`.
    pub fn atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        for &(value, weight) in atoms {
            if !value.is_finite() {
                return Err(Error::InvalidMarkSpace(format!("mark value {value} is not finite")));
            }
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(Error::InvalidMarkSpace(format!("atom weight {weight} must be finite and nonnegative")));
            }
        }
        Ok(Self {
            atoms: atoms.to_vec(),
            continuous: None,
        })
    }

    /// Single atom with mark value `1`.
    pub fn single(weight: f64) -> Result<Self> {
        Self::atoms(&[(1.0, weight)])
    }

    /// Adds marks uniformly distributed on `[lo, hi]` with total intensity `intensity`.
    pub fn with_continuous(mut self, lo: f64, hi: f64, intensity: f64) -> Result<Self> {
        if !intensity.is_finite() {
            return Err(Error::InvalidMarkSpace("continuous part has infinite intensity; truncate it first".into()));
        }
        if !(intensity >= 0.0 && lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidMarkSpace(format!("invalid continuous part [{lo}, {hi}] with intensity {intensity}")));
        }
        self.continuous = Some((lo, hi, intensity));
        Ok(self)
    }

    pub fn atom_list(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn continuous(&self) -> Option<(f64, f64, f64)> {
        self.continuous
    }

    /// Total intensity `Λ = Π(U)`.
    pub fn intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.continuous.map_or(0.0, |c| c.2)
    }

    /// Intensities `Π(U_1) ≤ Π(U_2) ≤ …` of the exhaustion in which `U_k`
    /// holds the first `k` atoms and the last level adds the continuous part.
    pub fn exhaustion(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| {
                acc += a.1;
                acc
            })
            .collect();
        if let Some(c) = self.continuous {
            out.push(acc + c.2);
        }
        out
    }

    /// The truncation `U_level` (1-based).
    pub fn truncate(&self, level: usize) -> Result<Self> {
        let levels = self.exhaustion().len();
        if level == 0 || level > levels {
            return Err(Error::InvalidMarkSpace(format!("truncation level {level} outside 1..={levels}")));
        }
        Ok(Self {
            atoms: self.atoms[..level.min(self.atoms.len())].to_vec(),
            continuous: if level > self.atoms.len() { self.continuous } else { None },
        })
    }

    /// Draws a mark with probability proportional to `Π`.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> Mark {
        let total = self.intensity();
        let mut u = rng.gen::<f64>() * total;
        for (i, &(value, weight)) in self.atoms.iter().enumerate() {
            if u < weight {
                return Mark { atom: Some(i), value };
            }
            u -= weight;
        }
        match self.continuous {
            Some((lo, hi, _)) => Mark {
                atom: None,
                value: lo + (hi - lo) * rng.gen::<f64>(),
            },
            None => {
                let i = self.atoms.iter().rposition(|a| a.1 > 0.0).unwrap_or(0);
                Mark {
                    atom: Some(i),
                    value: self.atoms[i].0,
                }
            }
        }
    }

    /// `∫_U f dΠ`: exact over atoms, 32-point Gauss–Legendre over the continuous part.
    pub fn integrate<F: Fn(&Mark) -> f64>(&self, f: F) -> f64 {
        let mut sum: f64 = self
            .atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| a.1 != 0.0)
            .map(|(i, &(value, weight))| weight * f(&Mark { atom: Some(i), value }))
            .sum();
        if let Some((lo, hi, intensity)) = self.continuous {
            let gl = GaussLegendre::new(32);
            sum += intensity / (hi - lo) * gl.integrate(lo, hi, |v| f(&Mark { atom: None, value: v }));
        }
        sum
    }
}

/// A realization of the Poisson random measure on `[0, T] × U`.
#[derive(Clone, Debug, PartialEq)]
pub struct PRMPath {
    pub events: Vec<(f64, Mark)>,
    pub horizon: f64,
    pub seed: u64,
    pub space: MarkSpace,
}

impl PRMPath {
    /// Number of events in `[0, t]`.
    pub fn count(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.0 <= t)
    }

    /// One event per line: `t,atom,value` (`atom` is `-1` for continuous marks).
    pub fn write_events<W: Write>(&self, mut w: W) -> Result<()> {
        for (t, m) in &self.events {
            let atom = m.atom.map_or(-1, |a| a as i64);
            writeln!(w, "{t:.17e},{atom},{:.17e}", m.value)?;
        }
        Ok(())
    }
}

/// Samples a path with arrivals at rate `Λ` and i.i.d. marks `∝ Π`.
pub fn sample_prm(space: &MarkSpace, horizon: f64, seed: u64) -> Result<PRMPath> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::TimeOrder(format!("horizon {horizon} must be finite and nonnegative")));
    }
    let lambda = space.intensity();
    if !lambda.is_finite() {
        return Err(Error::InvalidMarkSpace("infinite intensity".into()));
    }
    let mut rng = path_rng(seed, stream::PRM, 0);
    let mean = lambda * horizon;
    let count = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| Error::InvalidMarkSpace(e.to_string()))?.sample(&mut rng) as usize
    } else {
        0
    };
    let mut times: Vec<f64> = (0..count).map(|_| horizon * rng.gen::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    let events = times.into_iter().map(|t| (t, space.sample_mark(&mut rng))).collect();
    Ok(PRMPath {
        events,
        horizon,
        seed,
        space: space.clone(),
    })
}

/// `m` independent paths; path `i` uses the seed `hash(master, i)`.
pub fn sample_prm_ensemble(space: &MarkSpace, horizon: f64, master: u64, m: usize, exec: Execution) -> Result<Vec<PRMPath>> {
    map_indexed(exec, m, |i| sample_prm(space, horizon, path_seed(master, stream::PRM, i as u64)))
        .into_iter()
        .collect()
}

/// How the compensator `∫_0^t ∫ g(s, v) Π(dv) ds` is integrated in time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Compensator {
    /// `g` does not depend on time: the compensator is exactly linear.
    TimeIndependent,
    /// Tabulated on `nodes` uniform intervals with 8-point Gauss–Legendre each.
    Nodes(usize),
}

/// A càdlàg path `Q_t = Σ_{t_i ≤ t} g(t_i, v_i) - ∫_0^t ∫ g Π(dv) ds`,
/// stored as jumps plus a piecewise-linear compensator.
#[derive(Clone, Debug, PartialEq)]
pub struct QPath {
    horizon: f64,
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
    comp_times: Vec<f64>,
    comp_cum: Vec<f64>,
}

impl QPath {
    /// Builds a path from jumps and compensator values at increasing times
    /// starting at `0` (with value `0`) and ending at `horizon`.
    pub fn from_parts(horizon: f64, jumps: Vec<(f64, f64)>, comp_times: Vec<f64>, comp_cum: Vec<f64>) -> Result<Self> {
        if comp_times.len() != comp_cum.len() || comp_times.len() < 2 || comp_times[0] != 0.0 {
            return Err(Error::InvalidInput("compensator table must start at t = 0 and have matching lengths".into()));
        }
        if comp_times.windows(2).any(|w| w[1] <= w[0]) || jumps.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::TimeOrder("times must be increasing".into()));
        }
        if jumps.iter().any(|j| !(j.0 >= 0.0 && j.0 <= horizon)) {
            return Err(Error::TimeOrder("event outside [0, T]".into()));
        }
        if jumps.iter().any(|j| !j.1.is_finite()) || comp_cum.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("compensated integral"));
        }
        let (jump_times, jump_sizes) = jumps.into_iter().unzip();
        Ok(Self {
            horizon,
            jump_times,
            jump_sizes,
            comp_times,
            comp_cum,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn compensator(&self, t: f64) -> f64 {
        let k = self.comp_times.partition_point(|&s| s <= t);
        if k == 0 {
            return 0.0;
        }
        if k >= self.comp_times.len() {
            let n = self.comp_times.len();
            let slope = (self.comp_cum[n - 1] - self.comp_cum[n - 2]) / (self.comp_times[n - 1] - self.comp_times[n - 2]);
            return self.comp_cum[n - 1] + slope * (t - self.comp_times[n - 1]);
        }
        let (t0, t1) = (self.comp_times[k - 1], self.comp_times[k]);
        let (c0, c1) = (self.comp_cum[k - 1], self.comp_cum[k]);
        c0 + (c1 - c0) * (t - t0) / (t1 - t0)
    }

    fn jumps_until(&self, t: f64, inclusive: bool) -> f64 {
        let k = if inclusive {
            self.jump_times.partition_point(|&s| s <= t)
        } else {
            self.jump_times.partition_point(|&s| s < t)
        };
        self.jump_sizes[..k].iter().sum()
    }

    /// `Q_t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.jumps_until(t, true) - self.compensator(t)
    }

    /// `Q_{t-}`.
    pub fn left_limit(&self, t: f64) -> f64 {
        self.jumps_until(t, false) - self.compensator(t)
    }

    pub fn terminal(&self) -> f64 {
        self.value_at(self.horizon)
    }

    /// `sup_{t ≤ T} |Q_t|`, exact for the stored path (linear between
    /// checkpoints, so extrema sit at jump times or compensator nodes).
    pub fn sup_abs(&self) -> f64 {
        let mut best: f64 = 0.0;
        let mut jumps = 0.0;
        let mut j = 0;
        let mut check = |t: f64, jumps_before: f64, jumps_after: f64| {
            let c = self.compensator(t);
            best = best.max((jumps_before - c).abs()).max((jumps_after - c).abs());
        };
        let mut k = 0;
        while j < self.jump_times.len() || k < self.comp_times.len() {
            let next_jump = self.jump_times.get(j).copied().unwrap_or(f64::INFINITY);
            let next_node = self.comp_times.get(k).copied().unwrap_or(f64::INFINITY);
            if next_jump <= next_node {
                let before = jumps;
                while j < self.jump_times.len() && self.jump_times[j] == next_jump {
                    jumps += self.jump_sizes[j];
                    j += 1;
                }
                check(next_jump, before, jumps);
                if next_node == next_jump {
                    k += 1;
                }
            } else {
                check(next_node, jumps, jumps);
                k += 1;
            }
        }
        best
    }
}

/// `Q_t = ∫_0^t ∫_U g(s, v) q(ds, dv)` along `path`.
pub fn compensated_integral<G: Fn(f64, &Mark) -> f64>(path: &PRMPath, g: G, rule: Compensator) -> Result<QPath> {
    let horizon = path.horizon;
    let jumps: Vec<(f64, f64)> = path.events.iter().map(|(t, m)| (*t, g(*t, m))).collect();
    let rate = |s: f64| path.space.integrate(|m| g(s, m));
    let (comp_times, comp_cum) = match rule {
        Compensator::TimeIndependent => (vec![0.0, horizon.max(f64::MIN_POSITIVE)], vec![0.0, rate(0.0) * horizon]),
        Compensator::Nodes(nodes) => {
            let nodes = nodes.max(1);
            let gl = GaussLegendre::new(8);
            let h = horizon / nodes as f64;
            let mut times = vec![0.0];
            let mut cum = vec![0.0];
            let mut acc = 0.0;
            for k in 0..nodes {
                let a = k as f64 * h;
                acc += gl.integrate(a, a + h, &rate);
                times.push(a + h);
                cum.push(acc);
            }
            (times, cum)
        }
    };
    QPath::from_parts(horizon.max(f64::MIN_POSITIVE), jumps, comp_times, comp_cum)
}

/// Estimate of `E sup_{t ≤ T} |Q_t|^p` with its standard error.
pub fn moment_sup(paths: &[QPath], p: f64) -> Result<Estimate> {
    if paths.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidMoment(p));
    }
    let values: Vec<f64> = paths.iter().map(|q| q.sup_abs().powf(p)).collect();
    Ok(mean_stderr(&values))
}

/// Right-hand side of the moment bound without its constant:
/// `∫_0^T ∫ |g|^p Π(dv) ds + (∫_0^T ∫ g² Π(dv) ds)^{p/2}` for deterministic `g`,
/// integrated in time on `nodes` intervals.
pub fn moment_bound_rhs<G: Fn(f64, &Mark) -> f64>(space: &MarkSpace, g: G, horizon: f64, p: f64, nodes: usize) -> f64 {
    let gl = GaussLegendre::new(8);
    let h = horizon / nodes.max(1) as f64;
    let mut lp = 0.0;
    let mut l2 = 0.0;
    for k in 0..nodes.max(1) {
        let a = k as f64 * h;
        lp += gl.integrate(a, a + h, |s| space.integrate(|m| g(s, m).abs().powf(p)));
        l2 += gl.integrate(a, a + h, |s| space.integrate(|m| g(s, m).powi(2)));
    }
    lp + l2.powf(p / 2.0)
}

/// Outcome of [`hl1_bound_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hl1Report {
    /// `(E sup_t |∫∫∫ g μ q|^p)^{1/p}`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `Σ_{l ∈ {2, p}} sup_{t,a} |g(t, a, ·)|_{l} (∫_0^T |μ_t|(A)^l dt)^{1/l}`.
    pub rhs: f64,
    pub ratio: f64,
}

/// Inputs of [`hl1_bound_check`].
pub struct Hl1Input<'a> {
    pub space: &'a MarkSpace,
    pub horizon: f64,
    /// Signed weights `μ_t({a})` of the atoms of `A`.
    pub mu: &'a (dyn Fn(f64) -> Vec<f64> + Sync),
    /// `g(t, a, v)`.
    pub g: &'a (dyn Fn(f64, usize, &Mark) -> f64 + Sync),
    pub p: f64,
    pub paths: usize,
    pub seed: u64,
    pub nodes: usize,
}

/// Monte Carlo comparison of both sides of the estimate for stochastic
/// integrals against a family of measures on a finite set `A`.
pub fn hl1_bound_check(input: &Hl1Input<'_>, exec: Execution) -> Result<Hl1Report> {
    let Hl1Input {
        space,
        horizon,
        mu,
        g,
        p,
        paths,
        seed,
        nodes,
    } = *input;
    if !(p >= 2.0) {
        return Err(Error::InvalidMoment(p));
    }
    let nodes = nodes.max(1);
    let combined = |t: f64, m: &Mark| -> f64 { mu(t).iter().enumerate().map(|(a, w)| w * g(t, a, m)).sum() };
    let sups: Vec<Result<f64>> = map_indexed(exec, paths, |i| {
        let path = sample_prm(space, horizon, path_seed(seed, stream::PRM, i as u64))?;
        Ok(compensated_integral(&path, combined, Compensator::Nodes(nodes))?.sup_abs().powf(p))
    });
    let sups: Vec<f64> = sups.into_iter().collect::<Result<_>>()?;
    let est = mean_stderr(&sups);
    let lhs = est.value.max(0.0).powf(1.0 / p);
    let lhs_stderr = if est.value > 0.0 { lhs / (p * est.value) * est.stderr } else { 0.0 };

    let h = horizon / nodes as f64;
    let times: Vec<f64> = (0..=nodes).map(|k| k as f64 * h).collect();
    let gl = GaussLegendre::new(8);
    let mut orders = vec![2.0];
    if p != 2.0 {
        orders.push(p);
    }
    let mut rhs = 0.0;
    for l in orders {
        let mut sup_g: f64 = 0.0;
        for &t in &times {
            for a in 0..mu(t).len() {
                sup_g = sup_g.max(space.integrate(|m| g(t, a, m).abs().powf(l)).powf(1.0 / l));
            }
        }
        let mass: f64 = (0..nodes)
            .map(|k| {
                let a = k as f64 * h;
                gl.integrate(a, a + h, |t| mu(t).iter().map(|w| w.abs()).sum::<f64>().powf(l))
            })
            .sum();
        rhs += sup_g * mass.powf(1.0 / l);
    }
    Ok(Hl1Report {
        lhs,
        lhs_stderr,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
    })
}

/// Replaced small-jump variance relative to the squared stable scale used
/// for the default cutoff when α ≤ 1.
pub const SMALL_JUMP_VARIANCE_RATIO: f64 = 1e-3;

/// Default cutoff factor for α ∈ (1, 2), where the small jumps are replaced
/// by a Gaussian of matched covariance.
pub const GAUSSIAN_REPLACEMENT_FACTOR: f64 = 0.05;

/// Largest admissible multiple of the default cutoff.
pub const MAX_CUTOFF_MULTIPLE: f64 = 4.0;

/// Sampling scheme for one increment `Z_t - Z_s`.
#[derive(Clone, Debug)]
pub struct IncrementPlan {
    dim: usize,
    alpha: f64,
    cutoff: f64,
    drift: [f64; 2],
    chol: [[f64; 2]; 2],
    jump_mean: f64,
    directions: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

fn cholesky(c: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let l00 = c[0][0].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { c[1][0] / l00 } else { 0.0 };
    let l11 = (c[1][1] - l10 * l10).max(0.0).sqrt();
    [[l00, 0.0], [l10, l11]]
}

impl IncrementPlan {
    pub fn new(model: &StableModel, s: f64, t: f64, cutoff: Option<f64>) -> Result<Self> {
        if !(0.0 <= s && s <= t && t <= model.horizon() * (1.0 + 1e-12)) {
            return Err(Error::TimeOrder(format!("need 0 <= s <= t <= T, got {s}, {t}")));
        }
        let dt = t - s;
        let alpha = model.alpha();
        let dim = model.dim();
        let c = model.mean_coefficients(s, t);
        let mut plan = Self {
            dim,
            alpha,
            cutoff: 0.0,
            drift: [0.0; 2],
            chol: [[0.0; 2]; 2],
            jump_mean: 0.0,
            directions: Vec::new(),
            cumulative: Vec::new(),
        };
        if dt == 0.0 {
            return Ok(plan);
        }
        if alpha == 2.0 {
            let b = c.diffusion;
            plan.chol = cholesky([[dt * b[0][0], dt * b[0][1]], [dt * b[1][0], dt * b[1][1]]]);
            return Ok(plan);
        }
        let masses = c.angular.masses();
        let total: f64 = masses.iter().sum();
        if total == 0.0 {
            plan.drift = if alpha == 1.0 { [dt * c.drift[0], dt * c.drift[1]] } else { [0.0; 2] };
            return Ok(plan);
        }
        let constant = model.constant();
        let scale = (dt * constant * total).powf(1.0 / alpha);
        let factor = if alpha > 1.0 {
            GAUSSIAN_REPLACEMENT_FACTOR
        } else {
            (SMALL_JUMP_VARIANCE_RATIO * constant * (2.0 - alpha)).powf(1.0 / (2.0 - alpha))
        };
        let default = factor * scale;
        let eps = match cutoff {
            Some(e) if !(e > 0.0 && e.is_finite()) => return Err(Error::Cutoff(format!("cutoff {e} must be positive"))),
            Some(e) if e > MAX_CUTOFF_MULTIPLE * default => {
                return Err(Error::Cutoff(format!(
                    "cutoff {e:.3e} exceeds {MAX_CUTOFF_MULTIPLE} x the bias-controlled default {default:.3e}"
                )))
            }
            Some(e) => e,
            None => default,
        };
        let odd = c.angular.odd_moment();
        let dirs = c.angular.directions();
        plan.cutoff = eps;
        plan.jump_mean = dt * total * eps.powf(-alpha) / alpha;
        plan.directions = dirs.to_vec();
        let mut acc = 0.0;
        plan.cumulative = masses
            .iter()
            .map(|m| {
                acc += m / total;
                acc
            })
            .collect();
        if alpha > 1.0 {
            let k = dt * eps.powf(1.0 - alpha) / (alpha - 1.0);
            plan.drift = [-k * odd[0], -k * odd[1]];
            let v = dt * eps.powf(2.0 - alpha) / (2.0 - alpha);
            let mut cov = [[0.0; 2]; 2];
            for (w, m) in dirs.iter().zip(masses) {
                for i in 0..2 {
                    for j in 0..2 {
                        cov[i][j] += v * m * w[i] * w[j];
                    }
                }
            }
            plan.chol = cholesky(cov);
        } else if alpha < 1.0 {
            let k = dt * eps.powf(1.0 - alpha) / (1.0 - alpha);
            plan.drift = [k * odd[0], k * odd[1]];
        } else {
            let k = dt * eps.ln();
            plan.drift = [dt * c.drift[0] + k * odd[0], dt * c.drift[1] + k * odd[1]];
        }
        Ok(plan)
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Expected number of jumps above the cutoff.
    pub fn expected_jumps(&self) -> f64 {
        self.jump_mean
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let mut z = self.drift;
        let n0: f64 = rng.sample(StandardNormal);
        let n1: f64 = if self.dim == 2 { rng.sample(StandardNormal) } else { 0.0 };
        z[0] += self.chol[0][0] * n0;
        z[1] += self.chol[1][0] * n0 + self.chol[1][1] * n1;
        if self.jump_mean > 0.0 {
            let count = Poisson::new(self.jump_mean).expect("positive mean").sample(rng) as usize;
            for _ in 0..count {
                let u: f64 = rng.gen();
                let q = self.cumulative.partition_point(|&c| c < u).min(self.directions.len() - 1);
                let r = self.cutoff * (1.0 - rng.gen::<f64>()).powf(-1.0 / self.alpha);
                z[0] += r * self.directions[q][0];
                z[1] += r * self.directions[q][1];
            }
        }
        if self.dim == 1 {
            z[1] = 0.0;
        }
        z
    }
}

/// Independent samples of `Z_t - Z_s`.
#[derive(Clone, Debug)]
pub struct StableSamples {
    pub samples: Vec<[f64; 2]>,
    pub cutoff: f64,
    pub expected_jumps: f64,
}

/// Draws `n` samples of the increment `Z_t - Z_s`; sample `i` uses the
/// stream `hash(seed, i)`.
pub fn sample_stable_increment(
    model: &StableModel,
    s: f64,
    t: f64,
    n: usize,
    seed: u64,
    cutoff: Option<f64>,
    exec: Execution,
) -> Result<StableSamples> {
    let report = check_assumptions(model, 64);
    if !report.pass_a1 {
        return Err(Error::Assumption(format!("nondegeneracy fails (mu_hat = {:.3e})", report.mu_hat)));
    }
    let plan = IncrementPlan::new(model, s, t, cutoff)?;
    let samples = map_indexed(exec, n, |i| plan.sample(&mut path_rng(seed, stream::STABLE, i as u64)));
    Ok(StableSamples {
        samples,
        cutoff: plan.cutoff,
        expected_jumps: plan.jump_mean,
    })
}

/// Scale `σ` of the symmetric Cauchy law for α = 1, d = 1 and `m ≡ density`
/// over a time span `dt`: `Re ψ(ξ) = -σ|ξ|` with `σ = 2 C(1) density dt`.
pub fn cauchy_scale(model: &StableModel, dt: f64) -> f64 {
    -model.symbol(0.0, [1.0, 0.0]).re * dt
}

/// Cauchy distribution function with scale `sigma`.
pub fn cauchy_cdf(x: f64, sigma: f64) -> f64 {
    0.5 + (x / sigma).atan() / PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_distance;
    use approx::assert_relative_eq;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn prm_counts_and_marks() {
        let space = MarkSpace::atoms(&[(1.0, 1.0), (2.0, 3.0)]).unwrap();
        let paths = sample_prm_ensemble(&space, 1.0, 7, 20_000, Execution::default()).unwrap();
        let counts: Vec<f64> = paths.iter().map(|p| p.events.len() as f64).collect();
        let est = mean_stderr(&counts);
        assert!((est.value - 4.0).abs() <= 3.0 * est.stderr);
        let total: usize = paths.iter().map(|p| p.events.len()).sum();
        let first: usize = paths.iter().map(|p| p.events.iter().filter(|e| e.1.atom == Some(0)).count()).sum();
        let frac = first as f64 / total as f64;
        let sd = (0.25 * 0.75 / total as f64).sqrt();
        assert!((frac - 0.25).abs() <= 3.0 * sd);
        assert!(paths.iter().all(|p| p.events.windows(2).all(|w| w[0].0 <= w[1].0)));
    }

    #[test]
    fn prm_edge_cases() {
        let space = MarkSpace::single(2.0).unwrap();
        assert!(sample_prm(&space, 0.0, 1).unwrap().events.is_empty());
        assert_eq!(sample_prm(&space, 1.0, 9).unwrap(), sample_prm(&space, 1.0, 9).unwrap());
        let empty = MarkSpace::atoms(&[]).unwrap();
        assert!(sample_prm(&empty, 1.0, 1).unwrap().events.is_empty());
        assert!(MarkSpace::atoms(&[]).unwrap().with_continuous(0.0, 1.0, f64::INFINITY).is_err());
        let mixed = MarkSpace::atoms(&[(0.0, 1.0), (1.0, 2.0)]).unwrap().with_continuous(0.0, 1.0, 0.5).unwrap();
        assert_eq!(mixed.exhaustion(), vec![1.0, 3.0, 3.5]);
        assert_eq!(mixed.truncate(2).unwrap().intensity(), 3.0);
        let mut buf = Vec::new();
        sample_prm(&mixed, 2.0, 3).unwrap().write_events(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), sample_prm(&mixed, 2.0, 3).unwrap().events.len());
    }

    #[test]
    fn compensated_integral_isometry() {
        let theta = 2.0;
        let c = 1.5;
        let space = MarkSpace::single(theta).unwrap();
        let paths = sample_prm_ensemble(&space, 1.0, 11, 40_000, Execution::default()).unwrap();
        let qs: Vec<QPath> = paths
            .iter()
            .map(|p| compensated_integral(p, |_, _| c, Compensator::TimeIndependent).unwrap())
            .collect();
        for (p, q) in paths.iter().zip(&qs) {
            assert_relative_eq!(q.terminal(), c * (p.events.len() as f64 - theta), epsilon = 1e-12);
        }
        let t = 0.6;
        let values: Vec<f64> = qs.iter().map(|q| q.value_at(t)).collect();
        let mean = mean_stderr(&values);
        assert!(mean.value.abs() <= 3.0 * mean.stderr);
        let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
        let second = mean_stderr(&sq);
        assert!((second.value - c * c * theta * t).abs() <= 3.0 * second.stderr);
        let sup = moment_sup(&qs, 2.0).unwrap();
        let term = moment_sup(&qs.iter().map(|q| QPath::from_parts(1.0, vec![], vec![0.0, 1.0], vec![0.0, -q.terminal()]).unwrap()).collect::<Vec<_>>(), 2.0).unwrap();
        assert!(sup.value <= 4.0 * term.value);
    }

    #[test]
    fn deterministic_and_zero_paths() {
        let q = QPath::from_parts(1.0, vec![], vec![0.0, 1.0], vec![0.0, -1.0]).unwrap();
        assert_eq!(moment_sup(&[q], 2.0).unwrap().value, 1.0);
        assert!(moment_sup(&[], 2.0).is_err());
        let space = MarkSpace::single(3.0).unwrap();
        let path = sample_prm(&space, 1.0, 5).unwrap();
        let zero = compensated_integral(&path, |_, _| 0.0, Compensator::Nodes(8)).unwrap();
        assert_eq!(zero.sup_abs(), 0.0);
        let g = |t: f64, _: &Mark| 1.0 + t;
        let q1 = compensated_integral(&path, g, Compensator::Nodes(16)).unwrap();
        let q2 = compensated_integral(&path, |t, m| 2.0 * g(t, m), Compensator::Nodes(16)).unwrap();
        assert_relative_eq!(q2.sup_abs().powi(3), 8.0 * q1.sup_abs().powi(3), max_relative = 1e-12);
        // Compensator of 1 + t over [0, 1] at rate 3 is 4.5.
        assert_relative_eq!(q1.terminal(), path.events.iter().map(|e| 1.0 + e.0).sum::<f64>() - 4.5, epsilon = 1e-12);
        assert!(QPath::from_parts(1.0, vec![(2.0, 1.0)], vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn hl1_reduces_and_scales() {
        let space = MarkSpace::atoms(&[(1.0, 1.0), (2.0, 0.5)]).unwrap();
        let g = |t: f64, a: usize, m: &Mark| (1.0 + t) * m.value * (a + 1) as f64;
        let mu = |_: f64| vec![0.5, -0.25];
        let base = Hl1Input {
            space: &space,
            horizon: 1.0,
            mu: &mu,
            g: &g,
            p: 4.0,
            paths: 4000,
            seed: 3,
            nodes: 16,
        };
        let r1 = hl1_bound_check(&base, Execution::default()).unwrap();
        let mu10 = |_: f64| vec![5.0, -2.5];
        let r10 = hl1_bound_check(&Hl1Input { mu: &mu10, ..base }, Execution::default()).unwrap();
        assert_relative_eq!(r1.ratio, r10.ratio, max_relative = 1e-9);
        let zero = |_: f64, _: usize, _: &Mark| 0.0;
        let r0 = hl1_bound_check(&Hl1Input { g: &zero, ..base }, Execution::default()).unwrap();
        assert_eq!(r0.lhs, 0.0);
    }

    #[test]
    fn gaussian_and_cauchy_increments() {
        let gauss = StableModel::gaussian(1, [[1.0, 0.0], [0.0, 0.0]], 1.0).unwrap();
        let s = sample_stable_increment(&gauss, 0.0, 1.0, 20_000, 1, None, Execution::default()).unwrap();
        let xs: Vec<f64> = s.samples.iter().map(|z| z[0]).collect();
        let normal = Normal::new(0.0, 1.0).unwrap();
        assert!(ks_distance(&xs, |x| normal.cdf(x)) <= 1.63 / (xs.len() as f64).sqrt());

        let cauchy = StableModel::isotropic(1.0, 1, 1.0, 1.0).unwrap();
        let sigma = cauchy_scale(&cauchy, 1.0);
        assert_relative_eq!(sigma, PI, max_relative = 1e-9);
        let s = sample_stable_increment(&cauchy, 0.0, 1.0, 20_000, 2, None, Execution::default()).unwrap();
        let xs: Vec<f64> = s.samples.iter().map(|z| z[0]).collect();
        assert!(ks_distance(&xs, |x| cauchy_cdf(x, sigma)) <= 1.63 / (xs.len() as f64).sqrt());
    }

    #[test]
    fn cutoff_validation() {
        let model = StableModel::isotropic(1.5, 1, 1.0, 1.0).unwrap();
        let plan = IncrementPlan::new(&model, 0.0, 1.0, None).unwrap();
        assert!(plan.expected_jumps() > 1.0);
        assert!(matches!(IncrementPlan::new(&model, 0.0, 1.0, Some(10.0 * plan.cutoff())), Err(Error::Cutoff(_))));
        assert!(IncrementPlan::new(&model, 0.0, 1.0, Some(0.5 * plan.cutoff())).is_ok());
        assert!(IncrementPlan::new(&model, 0.5, 0.2, None).is_err());
    }
}
