//! Experiment dispatch and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde_json::json;
use sha2::{Digest, Sha256};
use zakai_core::filtering::{compare_filters, FilterExperiment};
use zakai_core::kernel::{density_g, write_snapshot};
use zakai_core::random_measure::{compensated_integral, moment_bound_rhs, moment_sup, sample_prm, Compensator, QPath};
use zakai_core::quadrature::GaussLegendre;
use zakai_core::rng::{path_rng, path_seed};
use zakai_core::solver::estimates::{theorem_estimate_suite, SuiteConfig};
use zakai_core::solver::{solve_cauchy, InputData};
use zakai_core::stats::mean_stderr;
use zakai_core::{check_assumptions, direct_symbol, evaluate_symbol, exec, Execution, FrequencyGrid, SpectralField};

use crate::config::{Kind, Plan};
use crate::CliError;

/// Environment variable that replaces `output.root`.
pub const OUTPUT_ROOT_ENV: &str = "ZAKAI_OUTPUT_ROOT";

/// Relative tolerance between the calibrated symbol and direct quadrature.
pub const SYMBOL_TOLERANCE: f64 = 1e-6;

/// A finished run.
#[derive(Debug)]
pub struct RunSummary {
    pub directory: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub lines: Vec<String>,
}

pub fn output_directory(plan: &Plan) -> PathBuf {
    let root = std::env::var(OUTPUT_ROOT_ENV).unwrap_or_else(|_| plan.config.output.root.clone());
    let name = plan.config.output.name.clone().unwrap_or_else(|| plan.config.kind.name().to_string());
    Path::new(&root).join(name)
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<(PathBuf, String)>,
}

impl Artifacts {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        self.written.push((path, sha256_hex(bytes)));
        Ok(())
    }
}

pub fn run(plan: &Plan, config_text: &str, config_path: &Path, execution: Execution) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let dir = output_directory(plan);
    fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let mut out = Artifacts {
        dir: dir.clone(),
        written: Vec::new(),
    };
    let lines = match plan.config.kind {
        Kind::SymbolCheck => symbol_check(plan, &mut out)?,
        Kind::Kernel => kernel(plan, &mut out)?,
        Kind::Moments => moments(plan, &mut out, execution)?,
        Kind::Solve => solve(plan, &mut out, execution)?,
        Kind::Estimates => estimates(plan, &mut out, execution)?,
        Kind::Filter => filter(plan, &mut out, execution)?,
    };
    let manifest = json!({
        "kind": plan.config.kind.name(),
        "config": config_path.display().to_string(),
        "config_sha256": sha256_hex(config_text.as_bytes()),
        "seed": plan.seed(),
        "version": env!("CARGO_PKG_VERSION"),
        "parallel": execution.is_parallel(),
        "runtime_seconds": start.elapsed().as_secs_f64(),
        "artifacts": out.written.iter().map(|(p, h)| json!({
            "file": p.file_name().map(|f| f.to_string_lossy().to_string()),
            "sha256": h,
        })).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)? + "\n";
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, text).map_err(|e| runtime(format!("{}: {e}", manifest_path.display())))?;
    let mut artifacts: Vec<PathBuf> = out.written.into_iter().map(|(p, _)| p).collect();
    artifacts.push(manifest_path);
    Ok(RunSummary {
        directory: dir,
        artifacts,
        lines,
    })
}

fn uniform_frequencies(seed: u64, count: usize, dim: usize, bound: f64) -> Vec<Vec<f64>> {
    let mut rng = path_rng(seed, 0, 0);
    (0..count).map(|_| (0..dim).map(|_| rng.gen_range(-bound..bound)).collect()).collect()
}

fn symbol_check(plan: &Plan, out: &mut Artifacts) -> Result<Vec<String>, CliError> {
    let model = plan.model.as_ref().expect("validated");
    let report = check_assumptions(model, 64);
    let mut worst: f64 = 0.0;
    for xi in uniform_frequencies(plan.seed().expect("validated"), 100, model.dim(), 20.0) {
        let a = evaluate_symbol(model, 0.0, &xi).map_err(runtime)?;
        let b = direct_symbol(model, 0.0, &xi).map_err(runtime)?;
        worst = worst.max((a - b).norm() / b.norm().max(f64::MIN_POSITIVE));
    }
    let pass = report.pass_a1 && report.pass_a2 && worst <= SYMBOL_TOLERANCE;
    let mut csv = String::from("alpha,dim,constant,mu_hat,projected_moment_min,derivative_bound,nondegenerate,regular,max_rel_err,pass\n");
    writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{:e},{}",
        model.alpha(),
        model.dim(),
        model.constant(),
        report.mu_hat,
        report.remark_min.map_or(String::new(), |v| v.to_string()),
        report.c_alpha_hat,
        report.pass_a1,
        report.pass_a2,
        worst,
        pass
    )
    .unwrap();
    out.write("symbol_check.csv", csv.as_bytes())?;
    Ok(vec![format!(
        "symbol-check: mu_hat={} max_rel_err={worst:.2e} {}",
        report.mu_hat,
        if pass { "pass" } else { "fail" }
    )])
}

fn push_coordinates(line: &mut String, grid: &FrequencyGrid, i: usize) {
    let x = grid.x(i);
    if grid.dim() == 1 {
        write!(line, "{}", x[0]).unwrap();
    } else {
        write!(line, "{},{}", x[0], x[1]).unwrap();
    }
}

fn coordinate_header(grid: &FrequencyGrid) -> &'static str {
    if grid.dim() == 1 {
        "x"
    } else {
        "x,y"
    }
}

fn kernel(plan: &Plan, out: &mut Artifacts) -> Result<Vec<String>, CliError> {
    let model = plan.model.as_ref().expect("validated");
    let grid = plan.grid.as_ref().expect("validated");
    let mut summary = String::from("t,mass,min_value,max_imag,nyquist_modulus,edge_mass\n");
    let mut density = format!("t,{},density\n", coordinate_header(grid));
    let mut lines = Vec::new();
    for (k, &t) in plan.snapshots().iter().enumerate() {
        if t <= 0.0 {
            return Err(CliError::Runtime(format!("kernel snapshot {t} must be positive")));
        }
        let g = density_g(model, 0.0, t, grid).map_err(runtime)?;
        let d = g.diagnostics.expect("density diagnostics");
        writeln!(summary, "{t},{},{},{},{},{}", d.mass, d.min_value, d.max_imag, d.nyquist_modulus, d.edge_mass).unwrap();
        for (i, v) in g.field.real_values().iter().enumerate() {
            write!(density, "{t},").unwrap();
            push_coordinates(&mut density, grid, i);
            writeln!(density, ",{v}").unwrap();
        }
        if plan.config.output.snapshots {
            let mut bytes = Vec::new();
            write_snapshot(&mut bytes, grid, &g).map_err(runtime)?;
            out.write(&format!("kernel_{k}.bin"), &bytes)?;
        }
        lines.push(format!("kernel t={t}: mass={} min={:e}", d.mass, d.min_value));
    }
    out.write("kernel_summary.csv", summary.as_bytes())?;
    out.write("kernel_density.csv", density.as_bytes())?;
    Ok(lines)
}

fn moments(plan: &Plan, out: &mut Artifacts, execution: Execution) -> Result<Vec<String>, CliError> {
    let space = plan.marks.as_ref().expect("validated");
    let horizon = plan.config.marks.as_ref().expect("validated").horizon;
    let seed = plan.seed().expect("validated");
    let source = plan.source();
    let g = source.integrand();
    let orders = plan
        .config
        .norm
        .as_ref()
        .and_then(|n| n.moments.clone())
        .unwrap_or_else(|| vec![2.0, 4.0]);
    let paths: Vec<QPath> = exec::map_indexed(execution, plan.paths(), |i| {
        let path = sample_prm(space, horizon, path_seed(seed, 1, i as u64))?;
        compensated_integral(&path, &g, Compensator::Nodes(32))
    })
    .into_iter()
    .collect::<Result<_, _>>()
    .map_err(runtime)?;
    let terminal: Vec<f64> = paths.iter().map(|q| q.terminal().powi(2)).collect();
    let iso = mean_stderr(&terminal);
    let iso_target = GaussLegendre::new(32).integrate(0.0, horizon, |t| space.integrate(|m| g(t, m).powi(2)));
    let mut csv = String::from("quantity,p,value,stderr,bound,ratio\n");
    writeln!(csv, "terminal_second_moment,2,{},{},{},{}", iso.value, iso.stderr, iso_target, iso.value / iso_target).unwrap();
    let mut lines = vec![format!("E|Q_T|^2 = {} ± {} (isometry {})", iso.value, iso.stderr, iso_target)];
    for p in orders {
        let lhs = moment_sup(&paths, p).map_err(runtime)?;
        let rhs = moment_bound_rhs(space, &g, horizon, p, 64);
        writeln!(csv, "sup_moment,{p},{},{},{},{}", lhs.value, lhs.stderr, rhs, lhs.value / rhs).unwrap();
        lines.push(format!("p={p}: E sup|Q|^p / bound = {}", lhs.value / rhs));
    }
    out.write("moments.csv", csv.as_bytes())?;
    Ok(lines)
}

fn solve(plan: &Plan, out: &mut Artifacts, execution: Execution) -> Result<Vec<String>, CliError> {
    let model = plan.model.clone().expect("validated");
    let grid = plan.grid.clone().expect("validated");
    let space = plan.marks.clone().expect("validated");
    let source = plan.source();
    let mut input = InputData::new(model, grid.clone(), space);
    input.lambda = plan.config.norm.as_ref().map_or(0.0, |n| n.lambda);
    input.f = source.forcing();
    input.g = Some(source.jump_forcing());
    input.snapshots = plan.snapshots();
    input.paths = plan.paths();
    input.seed = plan.seed().expect("validated");
    if let Some(dt) = plan.config.grid.as_ref().and_then(|g| g.dt) {
        input.max_step = dt;
    }
    input.exec = execution;
    let ensemble = solve_cauchy(input).map_err(runtime)?;
    let physical: Vec<Vec<Vec<f64>>> = ensemble
        .paths
        .iter()
        .map(|p| {
            p.snapshots
                .iter()
                .map(|u| u.to_physical(&grid).map(|v: SpectralField| v.real_values()))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()
        .map_err(runtime)?;
    let mut csv = format!("t,{},mean,stderr,path0\n", coordinate_header(&grid));
    let mut lines = Vec::new();
    for (k, &t) in ensemble.times.iter().enumerate() {
        let mut sup: f64 = 0.0;
        for i in 0..grid.len() {
            let values: Vec<f64> = physical.iter().map(|p| p[k][i]).collect();
            let est = mean_stderr(&values);
            write!(csv, "{t},").unwrap();
            push_coordinates(&mut csv, &grid, i);
            writeln!(csv, ",{},{},{}", est.value, if values.len() > 1 { est.stderr } else { 0.0 }, values[0]).unwrap();
            sup = sup.max(est.value.abs());
        }
        lines.push(format!("t={t}: sup |E u| = {sup}"));
    }
    let mut events = String::from("path,t,mark\n");
    for (i, p) in ensemble.paths.iter().enumerate() {
        for (t, m) in &p.path.events {
            writeln!(events, "{i},{t},{}", m.value).unwrap();
        }
    }
    out.write("solution.csv", csv.as_bytes())?;
    out.write("events.csv", events.as_bytes())?;
    Ok(lines)
}

fn estimates(plan: &Plan, out: &mut Artifacts, execution: Execution) -> Result<Vec<String>, CliError> {
    let norm = plan.config.norm.as_ref().expect("validated");
    let grid = plan.config.grid.as_ref().expect("validated");
    let mut cfg = SuiteConfig::new(norm.alpha.expect("validated"), norm.p);
    cfg.beta = norm.beta;
    if let Some(l) = &norm.lambdas {
        cfg.lambdas = l.clone();
    }
    if norm.lambda > 0.0 {
        cfg.lambda = norm.lambda;
    }
    cfg.n = grid.n;
    cfg.half_width = grid.half_width;
    cfg.paths = plan.paths();
    cfg.seed = plan.seed().expect("validated");
    cfg.exec = execution;
    let report = theorem_estimate_suite(&cfg).map_err(runtime)?;
    out.write("estimates.csv", report.to_csv().as_bytes())?;
    Ok(vec![
        format!("lambda exponent {:.4} (target {})", report.lambda_decay.exponent(), report.lambda_decay.target),
        format!("increment exponent {:.4} (target {})", report.increment.exponent(), report.increment.target),
        format!("boundedness spread {:.4}", report.boundedness_spread()),
    ])
}

fn filter(plan: &Plan, out: &mut Artifacts, execution: Execution) -> Result<Vec<String>, CliError> {
    let model = plan.model.as_ref().expect("validated");
    let obs = plan.observation.as_ref().expect("validated");
    let f = plan.config.filter.as_ref().expect("validated");
    let exp = FilterExperiment {
        snapshots: plan.snapshots(),
        zakai_dt: plan.config.grid.as_ref().and_then(|g| g.dt).unwrap_or(1e-3),
        particle_dt: f.particle_dt,
        particles: f.particles,
        replicates: f.replicates,
        seed: plan.seed().expect("validated"),
        exec: execution,
    };
    let report = compare_filters(model, obs, &exp).map_err(runtime)?;
    let mut events = String::from("t,y\n");
    for e in &report.scenario.events {
        writeln!(events, "{},{}", e.t, obs.marks()[e.mark].0).unwrap();
    }
    out.write("filter.csv", report.to_csv().as_bytes())?;
    out.write("observations.csv", events.as_bytes())?;
    let worst = report.rows.iter().flat_map(|r| r.z_scores()).fold(0.0, f64::max);
    Ok(vec![format!(
        "{} observations, max |z| = {worst:.3}{}",
        report.scenario.events.len(),
        if report.degenerate { ", particle filter degenerate" } else { "" }
    )])
}
