//! Command-line front end: JSON config ingestion (flags override the file),
//! experiment dispatch, CSV + JSON sidecar emission, optional SVG plots.
//!
//! Exit status: 0 on success, 2 on validation failure, 3 when an --assert
//! acceptance band is violated.

use clap::{Args, Parser, Subcommand};
use pm_lab::cones::{is_in_c1, is_in_c2, ConeParams};
use pm_lab::density::{
    sample_cone_density, C1Observable, ConeDensity, GradedMesh, DEFAULT_CELLS,
};
use pm_lab::experiments::{
    an_asymptotics, correlation_experiment, covering_time_scan, distortion_scan,
    geometric_checkpoints, memory_loss_experiment,
};
use pm_lab::map::{FamilyConfig, MapParam, MapSequence, SequencePolicy};
use pm_lab::report;
use pm_lab::transfer::{build_ulam, kernel_estimate, pf_grid_step};
use pm_lab::{PmError, Result};
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "pm-lab", about = "Sequential intermittent-map laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Memory-loss decay run with a log-log rate fit
    Decay(DecayArgs),
    /// Non-stationary correlations against the memory-loss bound
    Correlation(CorrelationArgs),
    /// Preimage ladder asymptotics a_n ~ n^(-1/alpha)
    AnFit(AnFitArgs),
    /// Covering-time scan over a list of arc half-widths
    Cover(CoverArgs),
    /// Perturbed-operator kernel lower bound on a (z, x) grid
    Kernel(KernelArgs),
    /// Random cone-membership audit of the one-step operator
    ConeCheck(ConeCheckArgs),
    /// Per-step distortion of the composed derivative on an arc
    Distortion(DistortionArgs),
    /// Sparse triplet dump of the Ulam matrix for one map
    UlamDump(UlamDumpArgs),
}

/// Flags shared by every subcommand. A JSON config file supplies defaults
/// with flat keys mirroring the flag names; explicit flags win.
#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file with flat keys mirroring the flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON/SVG artifacts
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sequence policy: "constant" (uses --beta) or "uniform-random" (uses --beta-min)
    #[arg(long)]
    policy: Option<String>,
    /// Beta for the constant policy (defaults to alpha)
    #[arg(long)]
    beta: Option<f64>,
    /// Lower bound of the uniform-random beta range (exclusive)
    #[arg(long)]
    beta_min: Option<f64>,
    /// Mesh cells N
    #[arg(long)]
    cells: Option<usize>,
    /// Mesh grading exponent p (default 2/(1-alpha))
    #[arg(long)]
    grading: Option<f64>,
    /// Render a log-log SVG plot next to the CSV
    #[arg(long)]
    plot: bool,
    /// Exit 3 when the result leaves the acceptance band
    #[arg(long, name = "assert")]
    assert_band: bool,
}

#[derive(Args)]
struct DecayArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n_max: Option<usize>,
    /// Power-law exponent of psi = (1-theta) x^(-theta) (default alpha/2)
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct CorrelationArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    quad_points: Option<usize>,
}

#[derive(Args)]
struct AnFitArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args)]
struct CoverArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dyadic exponents k giving eps = 2^(-k)
    #[arg(long, value_delimiter = ',')]
    eps_exponents: Option<Vec<u32>>,
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    eps: Option<f64>,
    /// Number of composed steps n_eps (default ceil(c_cov * eps^(-alpha)) with c_cov = 6)
    #[arg(long)]
    n_eps: Option<usize>,
    /// Starting index m in the sequence
    #[arg(long)]
    start: Option<usize>,
    #[arg(long)]
    z_points: Option<usize>,
    #[arg(long)]
    x_points: Option<usize>,
}

#[derive(Args)]
struct ConeCheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct DistortionArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    arc_lo: Option<f64>,
    #[arg(long)]
    arc_hi: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Args)]
struct UlamDumpArgs {
    #[command(flatten)]
    common: CommonArgs,
}

/// Resolved settings after merging flags over the config file.
struct Settings {
    file: Map<String, Value>,
    out_dir: PathBuf,
    alpha: f64,
    seed: u64,
    policy_name: String,
    beta: f64,
    beta_min: f64,
    cells: usize,
    grading: Option<f64>,
    plot: bool,
    assert_band: bool,
}

impl Settings {
    fn resolve(common: &CommonArgs) -> Result<Self> {
        let file: Map<String, Value> = match &common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    PmError::Validation(format!("cannot read config {}: {e}", path.display()))
                })?;
                match serde_json::from_str::<Value>(&text)? {
                    Value::Object(map) => map,
                    other => {
                        return Err(PmError::Validation(format!(
                            "config root must be a JSON object, got {other}"
                        )))
                    }
                }
            }
            None => Map::new(),
        };
        let f_f64 = |key: &str| file.get(key).and_then(Value::as_f64);
        let f_u64 = |key: &str| file.get(key).and_then(Value::as_u64);
        let alpha = common.alpha.or_else(|| f_f64("alpha")).unwrap_or(0.5);
        Ok(Settings {
            out_dir: common
                .out_dir
                .clone()
                .or_else(|| file.get("out_dir").and_then(Value::as_str).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out")),
            alpha,
            seed: common.seed.or_else(|| f_u64("seed")).unwrap_or(7),
            policy_name: common
                .policy
                .clone()
                .or_else(|| file.get("policy").and_then(Value::as_str).map(String::from))
                .unwrap_or_else(|| "uniform-random".into()),
            beta: common.beta.or_else(|| f_f64("beta")).unwrap_or(alpha),
            beta_min: common.beta_min.or_else(|| f_f64("beta_min")).unwrap_or(0.0),
            cells: common
                .cells
                .or_else(|| f_u64("cells").map(|v| v as usize))
                .unwrap_or(DEFAULT_CELLS),
            grading: common.grading.or_else(|| f_f64("grading")),
            plot: common.plot || file.get("plot").and_then(Value::as_bool).unwrap_or(false),
            assert_band: common.assert_band,
            file,
        })
    }

    fn get_usize(&self, flag: Option<usize>, key: &str, default: usize) -> usize {
        flag.or_else(|| self.file.get(key).and_then(Value::as_u64).map(|v| v as usize))
            .unwrap_or(default)
    }

    fn get_f64(&self, flag: Option<f64>, key: &str, default: f64) -> f64 {
        flag.or_else(|| self.file.get(key).and_then(Value::as_f64)).unwrap_or(default)
    }

    fn family(&self) -> Result<FamilyConfig> {
        FamilyConfig::new(self.alpha)
    }

    fn mesh(&self) -> Result<std::sync::Arc<GradedMesh>> {
        let family = self.family()?;
        match self.grading {
            Some(p) => GradedMesh::new(family, self.cells, p),
            None => GradedMesh::with_cells(family, self.cells),
        }
    }

    fn policy(&self) -> Result<SequencePolicy> {
        match self.policy_name.as_str() {
            "constant" => Ok(SequencePolicy::Constant { beta: self.beta }),
            "uniform-random" => Ok(SequencePolicy::UniformRandom { beta_min: self.beta_min }),
            other => Err(PmError::Validation(format!(
                "unknown policy {other:?}; expected \"constant\" or \"uniform-random\""
            ))),
        }
    }

    fn sequence(&self, length: usize) -> Result<MapSequence> {
        MapSequence::generate(self.family()?, self.seed, self.policy()?, length)
    }

    /// Fully resolved config for hashing and the sidecar; command-specific
    /// keys are appended by the caller.
    fn base_config(&self, command: &str) -> Value {
        json!({
            "command": command,
            "alpha": self.alpha,
            "seed": self.seed,
            "policy": self.policy_name,
            "beta": self.beta,
            "beta_min": self.beta_min,
            "cells": self.cells,
            "grading": self.grading,
        })
    }
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        for (k, v) in e {
            b.insert(k, v);
        }
    }
    base
}

struct Emitter<'a> {
    out_dir: &'a Path,
    hash: String,
    config: Value,
    started: Instant,
}

impl<'a> Emitter<'a> {
    fn new(out_dir: &'a Path, config: Value) -> Self {
        let hash = report::config_hash(&config);
        Emitter { out_dir, hash, config, started: Instant::now() }
    }

    fn csv(&self, name: &str, body: String) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        report::write_file(&path, &body)?;
        Ok(path)
    }

    fn sidecar(
        &self,
        name: &str,
        fit: Option<&pm_lab::experiments::FitResult>,
        extra: Value,
    ) -> Result<PathBuf> {
        let wall = self.started.elapsed().as_secs_f64();
        let doc = report::sidecar_json(&self.config, &self.hash, fit, extra, wall)?;
        let path = self.out_dir.join(name);
        report::write_file(&path, &doc)?;
        Ok(path)
    }

    fn svg(&self, name: &str, body: String) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        report::write_file(&path, &body)?;
        Ok(path)
    }
}

enum Outcome {
    Ok,
    BandFailure(String),
}

fn run_decay(args: &DecayArgs) -> Result<Outcome> {
    let s = Settings::resolve(&args.common)?;
    let n_max = s.get_usize(args.n_max, "n_max", 1000);
    let theta = s.get_f64(args.theta, "theta", s.alpha / 2.0);
    let mesh = s.mesh()?;
    let cone = ConeParams::with_a_min(s.alpha)?;
    let seq = s.sequence(n_max)?;
    let phi = ConeDensity::constant(mesh.clone(), 1.0);
    // scale away the ~1e-8 representation bias so the masses match exactly
    let psi = ConeDensity::power_law(mesh, theta)?;
    let psi = psi.scaled(1.0 / psi.mass());
    let checkpoints = geometric_checkpoints(n_max);
    let run = memory_loss_experiment(&seq, &phi, &psi, &cone, n_max, &checkpoints, true)?;

    let config = merge(s.base_config("decay"), json!({ "n_max": n_max, "theta": theta }));
    let em = Emitter::new(&s.out_dir, config);
    em.csv("decay.csv", report::decay_csv(&run.series, &em.hash))?;
    em.sidecar(
        "decay.json",
        run.fit.as_ref(),
        json!({ "envelope_c": run.envelope_c }),
    )?;
    let guide = 1.0 - 1.0 / s.alpha;
    if s.plot {
        let pts: Vec<(f64, f64)> = run
            .series
            .ns
            .iter()
            .zip(&run.series.values)
            .map(|(&n, &v)| (n as f64, v))
            .collect();
        em.svg(
            "decay.svg",
            report::loglog_svg(&pts, Some(guide), "n", "D_n", "memory loss"),
        )?;
    }
    println!("decay: wrote {} checkpoints to {}", run.series.ns.len(), s.out_dir.display());
    if let Some(fit) = &run.fit {
        println!(
            "decay: slope {:.4} (target {guide:.4}), envelope C = {:.4}",
            fit.slope, run.envelope_c
        );
        if s.assert_band {
            let (lo, hi) = (guide - 0.25, guide + 0.15);
            if !(fit.slope >= lo && fit.slope <= hi) {
                return Ok(Outcome::BandFailure(format!(
                    "slope {:.4} outside [{lo:.4}, {hi:.4}]",
                    fit.slope
                )));
            }
        }
    } else if s.assert_band {
        return Ok(Outcome::BandFailure("no fit: all distances are zero".into()));
    }
    Ok(Outcome::Ok)
}

fn run_correlation(args: &CorrelationArgs) -> Result<Outcome> {
    let s = Settings::resolve(&args.common)?;
    let n_max = s.get_usize(args.n_max, "n_max", 300);
    let theta = s.get_f64(args.theta, "theta", s.alpha / 2.0);
    let quad = s.get_usize(args.quad_points, "quad_points", 200_000);
    let mesh = s.mesh()?;
    let seq = s.sequence(n_max)?;
    let psi = ConeDensity::power_law(mesh, theta)?;
    let phi = C1Observable::new(|x| (2.0 * std::f64::consts::PI * x).sin(), 1.0, 6.2832)?;
    let checkpoints = geometric_checkpoints(n_max);
    let run = correlation_experiment(&seq, &psi, &phi, n_max, &checkpoints, quad)?;

    let config = merge(
        s.base_config("correlation"),
        json!({ "n_max": n_max, "theta": theta, "quad_points": quad }),
    );
    let em = Emitter::new(&s.out_dir, config);
    em.csv("correlation.csv", report::decay_csv(&run.series, &em.hash))?;
    em.sidecar("correlation.json", None, json!({ "bounds": run.bounds }))?;
    if s.plot {
        let pts: Vec<(f64, f64)> = run
            .series
            .ns
            .iter()
            .zip(&run.series.values)
            .map(|(&n, &v)| (n as f64, v))
            .collect();
        em.svg(
            "correlation.svg",
            report::loglog_svg(&pts, Some(1.0 - 1.0 / s.alpha), "n", "corr", "correlation"),
        )?;
    }
    let worst = run
        .series
        .values
        .iter()
        .zip(&run.bounds)
        .map(|(v, b)| v - b)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("correlation: {} checkpoints, max (value - bound) = {worst:.3e}", run.series.ns.len());
    if s.assert_band && worst > 1e-6 {
        return Ok(Outcome::BandFailure(format!(
            "correlation exceeds the memory-loss bound by {worst:.3e}"
        )));
    }
    Ok(Outcome::Ok)
}

fn run_an_fit(args: &AnFitArgs) -> Result<Outcome> {
    let s = Settings::resolve(&args.common)?;
    let n_max = s.get_usize(args.n_max, "n_max", 10_000);
    let run = an_asymptotics(s.alpha, n_max)?;
    let config = merge(s.base_config("an-fit"), json!({ "n_max": n_max }));
    let em = Emitter::new(&s.out_dir, config);
    em.csv("an_fit.csv", report::ladder_csv(&run.ns, &run.a_n, &em.hash))?;
    em.sidecar("an_fit.json", Some(&run.fit), json!({ "c_alpha": run.c_alpha }))?;
    let target = -1.0 / s.alpha;
    if s.plot {
        let pts: Vec<(f64, f64)> =
            run.ns.iter().zip(&run.a_n).map(|(&n, &a)| (n as f64, a)).collect();
        em.svg("an_fit.svg", report::loglog_svg(&pts, Some(target), "n", "a_n", "preimage ladder"))?;
    }
    println!("an-fit: slope {:.4} (target {target:.4}), c_alpha = {:.4}", run.fit.slope, run.c_alpha);
    if s.assert_band && (run.fit.slope - target).abs() > 0.05 * target.abs() {
        return Ok(Outcome::BandFailure(format!(
            "slope {:.4} outside {target:.4} +/- 5%",
            run.fit.slope
        )));
    }
    Ok(Outcome::Ok)
}

fn run_cover(args: &CoverArgs) -> Result<Outcome> {
    let s = Settings::resolve(&args.common)?;
    let exponents: Vec<u32> = args
        .eps_exponents
        .clone()
        .or_else(|| {
            s.file.get("eps_exponents").and_then(Value::as_array).map(|a| {
                a.iter().filter_map(Value::as_u64).map(|v| v as u32).collect()
            })
        })
        .unwrap_or_else(|| (4..=10).collect());
    let eps_list: Vec<f64> = exponents.iter().map(|&k| 2f64.powi(-(k as i32))).collect();
    let scan = covering_time_scan(s.family()?, s.seed, s.policy()?, &eps_list)?;

    let config = merge(s.base_config("cover"), json!({ "eps_exponents": exponents }));
    let em = Emitter::new(&s.out_dir, config);
    em.csv("cover.csv", report::cover_csv(&scan.worst, &em.hash))?;
    em.csv("cover_control.csv", report::cover_csv(&scan.control, &em.hash))?;
    em.sidecar("cover.json", Some(&scan.fit), json!({ "c_cov": scan.c_cov }))?;
    if s.plot {
        let pts: Vec<(f64, f64)> =
            scan.worst.iter().map(|&(e, t)| (1.0 / e, t as f64)).collect();
        em.svg(
            "cover.svg",
            report::loglog_svg(&pts, Some(s.alpha), "1/eps", "cover time", "covering time"),
        )?;
    }
    println!("cover: exponent {:.4} (target {:.4}), C_cov = {:.4}", scan.fit.slope, s.alpha, scan.c_cov);
    if s.assert_band && (scan.fit.slope - s.alpha).abs() > 0.15 {
        return Ok(Outcome::BandFailure(format!(
            "covering exponent {:.4} outside {:.4} +/- 0.15",
            scan.fit.slope, s.alpha
        )));
    }
    Ok(Outcome::Ok)
}

fn run_kernel(args: &KernelArgs) -> Result<Outcome> {
    let s = Settings::resolve(&args.common)?;
    let eps = s.get_f64(args.eps, "eps", 2f64.powi(-6));
    let n_eps = s.get_usize(args.n_eps, "n_eps", (6.0 * eps.powf(-s.alpha)).ceil() as usize);
    let start = s.get_usize(args.start, "start", 1);
    let nz = s.get_usize(args.z_points, "z_points", 64);
    let nx = s.get_usize(args.x_points, "x_points", 64);
    let mesh = s.mesh()?;
    let seq = s.sequence(start + n_eps)?;
    let est = kernel_estimate(&seq, start, eps, n_eps, mesh, nz, nx)?;

    let config = merge(
        s.base_config("kernel"),
        json!({ "eps": eps, "n_eps": n_eps, "start": start, "z_points": nz, "x_points": nx }),
    );
    let em = Emitter::new(&s.out_dir, config);
    em.csv("kernel.csv", report::kernel_csv(&est, &em.hash))?;
    em.sidecar("kernel.json", None, json!({ "gamma_hat": est.gamma_hat }))?;
    println!("kernel: gamma_hat = {:.6} over a {nz}x{nx} grid, n_eps = {n_eps}", est.gamma_hat);
    if s.assert_band && est.gamma_hat <= 0.0 {
        return Ok(Outcome::BandFailure(format!(
            "gamma_hat = {:.6} is not positive",
            est.gamma_hat
        )));
    }
    Ok(Outcome::Ok)
}

fn run_cone_check(args: &ConeCheckArgs) -> Result<Outcome> {
    let s = Settings::resolve(&args.common)?;
    let samples = s.get_usize(args.samples, "samples", 200);
    let mesh = s.mesh()?;
    let cone = ConeParams::with_a_min(s.alpha)?;
    let mut reports = Vec::with_capacity(samples);
    let mut failures = 0usize;
    for k in 0..samples {
        let f = sample_cone_density(s.seed.wrapping_add(k as u64), &cone, mesh.clone());
        // beta in (0, alpha], deterministic in the sample index
        let beta = s.alpha * ((k % 97 + 1) as f64 / 97.0);
        let pushed = pf_grid_step(MapParam::new(beta)?, &f)?;
        let r1 = is_in_c1(&pushed, 1e-6);
        let r2 = is_in_c2(&pushed, &cone, 1e-6);
        if !(r1.ok && r2.ok) {
            failures += 1;
        }
        reports.push(json!({
            "sample": k,
            "beta": beta,
            "c1": r1,
            "c2": r2,
        }));
    }
    let config = merge(s.base_config("cone-check"), json!({ "samples": samples }));
    let em = Emitter::new(&s.out_dir, config);
    em.sidecar(
        "cone_check.json",
        None,
        json!({ "failures": failures, "reports": reports }),
    )?;
    println!("cone-check: {failures} of {samples} pushed samples violate the cone");
    if s.assert_band && failures > 0 {
        return Ok(Outcome::BandFailure(format!("{failures} cone violations")));
    }
    Ok(Outcome::Ok)
}

fn run_distortion(args: &DistortionArgs) -> Result<Outcome> {
    let s = Settings::resolve(&args.common)?;
    let n_max = s.get_usize(args.n_max, "n_max", 100);
    let lo = s.get_f64(args.arc_lo, "arc_lo", 0.7);
    let hi = s.get_f64(args.arc_hi, "arc_hi", 0.8);
    let grid = s.get_usize(args.grid_points, "grid_points", 64);
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(PmError::Validation(format!("arc ({lo}, {hi}) is not an arc in [0,1]")));
    }
    let seq = s.sequence(n_max)?;
    let values = distortion_scan(&seq, (lo, hi), n_max, grid)?;
    let config = merge(
        s.base_config("distortion"),
        json!({ "n_max": n_max, "arc_lo": lo, "arc_hi": hi, "grid_points": grid }),
    );
    let em = Emitter::new(&s.out_dir, config);
    em.csv("distortion.csv", report::distortion_csv(&values, &em.hash))?;
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    em.sidecar("distortion.json", None, json!({ "max_distortion": max }))?;
    println!("distortion: max over {n_max} steps = {max:.6}");
    Ok(Outcome::Ok)
}

fn run_ulam_dump(args: &UlamDumpArgs) -> Result<Outcome> {
    let s = Settings::resolve(&args.common)?;
    let mesh = s.mesh()?;
    let m = build_ulam(MapParam::new(s.beta)?, &mesh)?;
    let config = s.base_config("ulam-dump");
    let em = Emitter::new(&s.out_dir, config);
    em.csv("ulam.csv", report::ulam_csv(&m, &em.hash))?;
    let entries: usize = m.triplets().count();
    em.sidecar("ulam.json", None, json!({ "entries": entries }))?;
    println!("ulam-dump: {entries} nonzero entries for beta = {}", s.beta);
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decay(a) => run_decay(a),
        Command::Correlation(a) => run_correlation(a),
        Command::AnFit(a) => run_an_fit(a),
        Command::Cover(a) => run_cover(a),
        Command::Kernel(a) => run_kernel(a),
        Command::ConeCheck(a) => run_cone_check(a),
        Command::Distortion(a) => run_distortion(a),
        Command::UlamDump(a) => run_ulam_dump(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::BandFailure(msg)) => {
            eprintln!("acceptance band failure: {msg}");
            ExitCode::from(3)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
