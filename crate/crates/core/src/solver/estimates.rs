//! Scaling experiments for the a priori estimates of the Cauchy problem:
//! boundedness of the solution norm by the data norms, decay in `λ`, and
//! Hölder continuity in time.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::{fold_chunked, Execution};
use crate::grid::{Form, FrequencyGrid, SpectralField};
use crate::lp_norms::{build_family, max_level, mark_holder_norm, HolderAccumulator, HolderSpec, LPFamily, NormReport};
use crate::random_measure::{Mark, MarkSpace};
use crate::stats::{log_log_slope, LinearFit};
use crate::symbol::StableModel;

use super::{InputData, MarkSource, Solver, Source};

/// Parameters of [`theorem_estimate_suite`].
#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub alpha: f64,
    pub p: f64,
    pub beta: f64,
    pub lambdas: Vec<f64>,
    /// Gaps `t′ - t` of the time-increment experiment, taken at `t = T/2`.
    pub gaps: Vec<f64>,
    /// `λ` of the increment and boundedness experiments.
    pub lambda: f64,
    pub n: usize,
    pub half_width: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl SuiteConfig {
    pub fn new(alpha: f64, p: f64) -> Self {
        Self {
            alpha,
            p,
            beta: 0.5,
            lambdas: vec![1.0, 4.0, 16.0, 64.0, 256.0],
            gaps: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0],
            lambda: 1.0,
            n: 512,
            half_width: std::f64::consts::PI,
            horizon: 1.0,
            paths: 2000,
            seed: 2024,
            exec: Execution::default(),
        }
    }

    /// `α′ = α(1 - 1/p)`.
    pub fn alpha_prime(&self) -> f64 {
        self.alpha * (1.0 - 1.0 / self.p)
    }
}

/// A fitted power law `norm ≈ c x^exponent`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentFit {
    pub name: String,
    pub target: f64,
    pub fit: LinearFit,
    /// `(x, norm, stderr)`.
    pub points: Vec<(f64, f64, f64)>,
}

impl ExponentFit {
    fn new(name: &str, target: f64, points: Vec<(f64, f64, f64)>) -> Self {
        let x: Vec<f64> = points.iter().map(|p| p.0).collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        Self {
            name: name.to_string(),
            target,
            fit: log_log_slope(&x, &y),
            points,
        }
    }

    pub fn exponent(&self) -> f64 {
        self.fit.slope
    }
}

/// Solution norm over data norm for one member of the input family.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundednessEntry {
    pub label: String,
    pub solution_norm: f64,
    pub data_norm: f64,
}

impl BoundednessEntry {
    pub fn ratio(&self) -> f64 {
        self.solution_norm / self.data_norm
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub alpha: f64,
    pub p: f64,
    pub beta: f64,
    /// `‖R_λ f‖_{0,β;p}` against `λ ≥ DECAY_REGIME / T`, deterministic
    /// forcing only.
    pub deterministic_decay: ExponentFit,
    /// `‖u‖_{0,β;p}` against `λ` for a jump-only input.
    pub lambda_decay: ExponentFit,
    /// `‖u(t′) - u(t)‖_{α′,β;p}` against `t′ - t`.
    pub increment: ExponentFit,
    /// The same for deterministic forcing only.
    pub deterministic_increment: ExponentFit,
    pub boundedness: Vec<BoundednessEntry>,
}

impl SuiteReport {
    /// Largest deviation of a boundedness ratio from the family median,
    /// relative to the median.
    pub fn boundedness_spread(&self) -> f64 {
        let mut r: Vec<f64> = self.boundedness.iter().map(|b| b.ratio()).collect();
        r.sort_by(f64::total_cmp);
        let median = r[r.len() / 2];
        r.iter().map(|v| (v / median - 1.0).abs()).fold(0.0, f64::max)
    }

    pub const CSV_HEADER: &'static str = "experiment,alpha,p,beta,x,norm,stderr,exponent,exponent_stderr,target";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for fit in [&self.deterministic_decay, &self.lambda_decay, &self.increment, &self.deterministic_increment] {
            for (x, norm, err) in &fit.points {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{x},{norm:.12e},{err:.6e},{:.6},{:.6},{}",
                    fit.name,
                    self.alpha,
                    self.p,
                    self.beta,
                    fit.fit.slope,
                    fit.fit.slope_stderr,
                    fit.target
                );
            }
        }
        for b in &self.boundedness {
            let _ = writeln!(
                out,
                "boundedness:{},{},{},{},,{:.12e},,{:.6},,",
                b.label,
                self.alpha,
                self.p,
                self.beta,
                b.ratio(),
                b.ratio()
            );
        }
        out
    }
}

fn suite_model(alpha: f64, horizon: f64) -> Result<StableModel> {
    if alpha == 2.0 {
        StableModel::gaussian(1, [[1.0, 0.0], [0.0, 0.0]], horizon)
    } else {
        StableModel::isotropic(alpha, 1, 0.5, horizon)
    }
}

fn suite_marks() -> Result<MarkSpace> {
    MarkSpace::atoms(&[(1.0, 2.0), (-0.5, 2.0)])
}

fn jump_profile(x: [f64; 2]) -> f64 {
    x[0].cos() + 0.5 * (2.0 * x[0]).sin() + 0.25 * (3.0 * x[0]).cos()
}

fn low_profile(x: [f64; 2]) -> f64 {
    x[0].cos() + 0.5 * x[0].sin()
}

/// Streams all paths of `solver` through one accumulator per entry of
/// `specs`; `observe` turns a path's snapshots into the fields fed to each.
fn stream_norms<O>(solver: &Solver, family: &LPFamily, specs: &[(HolderSpec, usize)], observe: O) -> Result<Vec<NormReport>>
where
    O: Fn(&[SpectralField]) -> Result<Vec<Vec<SpectralField>>> + Sync,
{
    let input = solver.input();
    let templates: Vec<HolderAccumulator> = specs
        .iter()
        .map(|&(spec, snaps)| HolderAccumulator::new(family, spec, snaps))
        .collect::<Result<_>>()?;
    let accs = fold_chunked(
        input.exec,
        input.paths,
        16,
        || Ok(templates.clone()),
        |acc: &mut Result<Vec<HolderAccumulator>>, i| {
            let Ok(list) = acc else { return };
            let mut step = || -> Result<()> {
                let sol = solver.solve_path(i)?;
                let fields = observe(&sol.snapshots)?;
                for (a, f) in list.iter_mut().zip(&fields) {
                    a.add_path(family, f)?;
                }
                Ok(())
            };
            if let Err(e) = step() {
                *acc = Err(e);
            }
        },
        |total: &mut Result<Vec<HolderAccumulator>>, part| match (total.as_mut(), part) {
            (Ok(t), Ok(p)) => t.iter_mut().zip(&p).for_each(|(a, b)| a.merge(b)),
            (Ok(_), Err(e)) => *total = Err(e),
            (Err(_), _) => {}
        },
    )?;
    accs.iter().map(|a| a.report()).collect()
}

fn base_input(cfg: &SuiteConfig) -> Result<InputData> {
    let model = suite_model(cfg.alpha, cfg.horizon)?;
    let grid = FrequencyGrid::new(1, cfg.n, cfg.half_width)?;
    let mut input = InputData::new(model, grid, suite_marks()?);
    input.paths = cfg.paths;
    input.seed = cfg.seed;
    input.exec = cfg.exec;
    input.max_step = cfg.horizon / 256.0;
    Ok(input)
}

fn increment_fit(cfg: &SuiteConfig, family: &LPFamily, input: InputData, name: &str, target: f64) -> Result<ExponentFit> {
    let t0 = 0.5 * cfg.horizon;
    if cfg.gaps.iter().any(|&g| !(g > 0.0 && t0 + g <= cfg.horizon)) {
        return Err(Error::InvalidInput("increment gaps must fit in [T/2, T]".into()));
    }
    let mut input = input;
    input.snapshots = std::iter::once(t0).chain(cfg.gaps.iter().map(|g| t0 + g)).collect();
    let order: Vec<usize> = {
        let mut idx: Vec<usize> = (0..cfg.gaps.len()).collect();
        idx.sort_by(|&a, &b| cfg.gaps[a].total_cmp(&cfg.gaps[b]));
        idx
    };
    let solver = Solver::new(input)?;
    let spec = HolderSpec {
        alpha: cfg.alpha_prime(),
        beta: cfg.beta,
        p: cfg.p,
        r: None,
    };
    let specs = vec![(spec, 1); cfg.gaps.len()];
    let grid = solver.input().grid.clone();
    let reports = stream_norms(&solver, family, &specs, |snaps| {
        let base = &snaps[0];
        (0..cfg.gaps.len())
            .map(|k| {
                // snapshots are sorted, so gap k sits at its rank + 1
                let rank = order.iter().position(|&o| o == k).expect("gap index");
                let diff = snaps[rank + 1].axpy(-1.0, base)?;
                Ok(vec![SpectralField::from_values(&grid, Form::Frequency, diff.into_values())?])
            })
            .collect()
    })?;
    let points = cfg
        .gaps
        .iter()
        .zip(&reports)
        .map(|(&g, r)| (g, r.classic, r.classic_stderr))
        .collect();
    Ok(ExponentFit::new(name, target, points))
}

/// `λT` above which the deterministic decay is fitted.
pub const DECAY_REGIME: f64 = 16.0;

/// Runs the scaling experiments on a one-dimensional periodic grid.
pub fn theorem_estimate_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    if cfg.lambdas.len() < 2 || cfg.gaps.len() < 2 {
        return Err(Error::InvalidInput("need at least two λ values and two gaps".into()));
    }
    let grid = FrequencyGrid::new(1, cfg.n, cfg.half_width)?;
    let family = build_family(&grid, max_level(&grid))?;
    let value_spec = HolderSpec {
        alpha: 0.0,
        beta: cfg.beta,
        p: cfg.p,
        r: None,
    };

    let mut det_points = Vec::new();
    let mut jump_points = Vec::new();
    for &lambda in &cfg.lambdas {
        let mut input = base_input(cfg)?;
        input.lambda = lambda;
        input.snapshots = vec![cfg.horizon];
        input.f = Some(Source::stationary(low_profile));
        input.paths = 1;
        let solver = Solver::new(input)?;
        let r = stream_norms(&solver, &family, &[(value_spec, 1)], |s| Ok(vec![s.to_vec()]))?;
        det_points.push((lambda, r[0].classic, 0.0));

        let mut input = base_input(cfg)?;
        input.lambda = lambda;
        input.snapshots = vec![cfg.horizon];
        input.g = Some(MarkSource::stationary(|x, m| m.value * low_profile(x)));
        let solver = Solver::new(input)?;
        let r = stream_norms(&solver, &family, &[(value_spec, 1)], |s| Ok(vec![s.to_vec()]))?;
        jump_points.push((lambda, r[0].classic, r[0].classic_stderr));
    }

    let mut input = base_input(cfg)?;
    input.lambda = cfg.lambda;
    input.g = Some(MarkSource::stationary(|x, m| m.value * jump_profile(x)));
    let increment = increment_fit(cfg, &family, input, "increment", 1.0 / cfg.p)?;

    let mut input = base_input(cfg)?;
    input.lambda = cfg.lambda;
    input.paths = 1;
    input.f = Some(Source::stationary(jump_profile));
    let deterministic_increment = increment_fit(cfg, &family, input, "deterministic_increment", 1.0 / cfg.p)?;

    let boundedness = boundedness_family(cfg, &family)?;

    Ok(SuiteReport {
        alpha: cfg.alpha,
        p: cfg.p,
        beta: cfg.beta,
        deterministic_decay: ExponentFit::new(
            "deterministic_decay",
            -1.0,
            det_points.into_iter().filter(|p| p.0 * cfg.horizon >= DECAY_REGIME).collect(),
        ),
        lambda_decay: ExponentFit::new("lambda_decay", -1.0 / cfg.p, jump_points),
        increment,
        deterministic_increment,
        boundedness,
    })
}

type Profile = fn([f64; 2]) -> f64;

fn boundedness_family(cfg: &SuiteConfig, family: &LPFamily) -> Result<Vec<BoundednessEntry>> {
    let members: [(&str, Profile, Profile); 5] = [
        ("low", |x| x[0].cos(), |x| 0.5 * x[0].sin()),
        ("mixed", |x| 0.5 * (2.0 * x[0]).sin(), |x| x[0].cos()),
        ("third", |x| x[0].cos() + 0.3 * (3.0 * x[0]).cos(), |x| 0.3 * (2.0 * x[0]).cos()),
        ("offset", |x| 1.0 + 0.2 * x[0].sin(), |x| 0.5 + 0.5 * x[0].cos()),
        ("jumps", |_| 0.0, |x| x[0].sin() + 0.5 * (2.0 * x[0]).cos()),
    ];
    let p = cfg.p;
    let alpha_prime = cfg.alpha_prime();
    let space = suite_marks()?;
    let grid = family.grid().clone();
    let mut out = Vec::with_capacity(members.len());
    for (label, f, g) in members {
        let mut input = base_input(cfg)?;
        input.lambda = cfg.lambda;
        input.snapshots = vec![0.5 * cfg.horizon, cfg.horizon];
        input.f = Some(Source::stationary(f));
        input.g = Some(MarkSource::stationary(move |x, m| m.value * g(x)));
        let solver = Solver::new(input)?;
        let spec = HolderSpec {
            alpha: cfg.alpha,
            beta: cfg.beta,
            p,
            r: None,
        };
        let u = stream_norms(&solver, family, &[(spec, 2)], |s| Ok(vec![s.to_vec()]))?;

        let f_field = SpectralField::from_fn(&grid, |x| f([x[0], 0.0]));
        let f_norm = crate::lp_norms::holder_norm(
            &[vec![f_field]],
            family,
            HolderSpec {
                alpha: 0.0,
                beta: cfg.beta,
                p,
                r: None,
            },
            Execution::Sequential,
        )?;
        let marks: Vec<(f64, SpectralField)> = space
            .atom_list()
            .iter()
            .map(|&(v, w)| {
                let mark = Mark { atom: None, value: v };
                (w, SpectralField::from_fn(&grid, |x| mark.value * g([x[0], 0.0])))
            })
            .collect();
        let mut rs = vec![2.0];
        if p != 2.0 {
            rs.push(p);
        }
        let mut g_norm = 0.0;
        for r in rs {
            let spec = HolderSpec {
                alpha: alpha_prime,
                beta: cfg.beta,
                p,
                r: Some(r),
            };
            g_norm += mark_holder_norm(std::slice::from_ref(&marks), family, spec)?.classic;
        }
        out.push(BoundednessEntry {
            label: label.to_string(),
            solution_norm: u[0].classic,
            data_norm: f_norm.classic + g_norm,
        });
    }
    Ok(out)
}
