//! The five subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use heatbridge::bridge::{solve_direct_lq, BridgeConfig, BridgeDiagnostics, BridgeSolver, ResidualReport};
use heatbridge::control::{
    cost_j, duality_identity_check, perturbation_table, smooth_directions, validate_assumptions,
    variational_inequality_check, Certificate, ControlCost, Scenario,
};
use heatbridge::forward::{sample_noise, ControlProcess, Forcing, NoiseEnsemble, TimeGrid};
use heatbridge::io::{config_hash, write_ensemble_binary, write_json, write_riccati_csv, write_series_csv};
use heatbridge::riccati::{solve_riccati, weighted_profile_riccati, FbsdeSolution, RiccatiScheme};
use heatbridge::scenarios::build;
use heatbridge::Estimate;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::Emit;
use crate::{CliError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Uncontrolled Monte Carlo ensemble.
    Simulate,
    /// Riccati solve checked against an RK4 oracle.
    Riccati,
    /// Continuation solve of the Hamiltonian system.
    SolveBridge,
    /// Optimality certificate of the computed control.
    Certify,
    /// Empirical check of the structural assumptions.
    Validate,
}

/// What a command produced. `passed` drives the exit status.
#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// RK4 substeps of the Riccati oracle.
const ORACLE_SUBSTEPS: usize = 100;
const RICCATI_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-8;
const PROFILE_RATIO_TOL: f64 = 10.0;

struct Sink<'a> {
    emit: Emit,
    grid: TimeGrid,
    hash: String,
    out: &'a Path,
    files: Vec<PathBuf>,
}

impl Sink<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.files.push(p.clone());
        p
    }

    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), CliError> {
        if self.emit.json {
            let p = self.path(name);
            write_json(&p, &self.hash, body)?;
        }
        Ok(())
    }

    fn series(&mut self, name: &str, columns: &[(&str, &[f64])]) -> Result<(), CliError> {
        if self.emit.csv {
            let p = self.path(name);
            write_series_csv(&p, &self.hash, self.grid, columns)?;
        }
        Ok(())
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    scenario: Scenario,
    grid: TimeGrid,
    sink: Sink<'a>,
}

impl Context<'_> {
    fn noise(&self) -> Result<NoiseEnsemble, CliError> {
        Ok(sample_noise(self.grid, self.cfg.n_modes, self.cfg.n_paths, self.cfg.seed)?)
    }

    fn bridge_config(&self) -> Result<BridgeConfig, CliError> {
        Ok(BridgeConfig {
            delta: self.cfg.delta,
            picard_tol: self.cfg.picard_tol,
            max_picard: self.cfg.max_picard,
            max_halvings: self.cfg.max_halvings,
            features: self.cfg.features()?,
        })
    }
}

/// Runs `cmd`, writing its artefacts into `cfg.out_dir`.
pub fn run_command(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let scenario = build(&cfg.scenario, &cfg.scenario_params())?;
    let grid = TimeGrid::new(cfg.horizon, cfg.n_steps)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Io {
        path: cfg.out_dir.clone(),
        source: e,
    })?;
    let mut ctx = Context {
        cfg,
        scenario,
        grid,
        sink: Sink {
            emit: cfg.emit,
            grid,
            hash: run_hash(cfg)?,
            out: &cfg.out_dir,
            files: Vec::new(),
        },
    };
    let (passed, summary) = match cmd {
        Command::Simulate => simulate(&mut ctx)?,
        Command::Riccati => riccati(&mut ctx)?,
        Command::SolveBridge => solve_bridge(&mut ctx)?,
        Command::Certify => certify(&mut ctx)?,
        Command::Validate => validate(&mut ctx)?,
    };
    Ok(Outcome {
        passed,
        summary,
        files: ctx.sink.files,
    })
}

/// Hash of everything that affects results; the output directory does not.
pub fn run_hash(cfg: &RunConfig) -> Result<String, CliError> {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    Ok(config_hash(&c)?)
}

fn node_estimates(grid: TimeGrid, samples: impl Fn(usize) -> Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    (0..grid.n_nodes())
        .map(|m| {
            let e = Estimate::from_samples(&samples(m));
            (e.mean, e.se)
        })
        .unzip()
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    command: &'static str,
    scenario: &'a str,
    n_paths: usize,
    n_steps: usize,
    n_modes: usize,
    noise_fingerprint: String,
    terminal_mean_sq_norm: Estimate,
    finite: bool,
}

fn simulate(ctx: &mut Context<'_>) -> Result<(bool, String), CliError> {
    let noise = ctx.noise()?;
    let fwd = ctx.scenario.forward_model(ctx.grid)?;
    let ens = fwd.simulate(&ctx.scenario.x0, &ControlProcess::Zero, &Forcing::Zero, Some(&noise), ctx.cfg.n_paths)?;
    let (mean, se) = node_estimates(ctx.grid, |m| ens.sq_norms(m));
    ctx.sink.series("simulate_series.csv", &[("mean_sq_norm", &mean), ("se_sq_norm", &se)])?;
    if ctx.cfg.emit.binary {
        let p = ctx.sink.path("ensemble.bin");
        write_ensemble_binary(&p, &ens)?;
    }
    let last = ctx.grid.n_steps();
    let report = SimulateReport {
        command: "simulate",
        scenario: &ctx.scenario.name,
        n_paths: ens.n_paths,
        n_steps: last,
        n_modes: ens.n_modes,
        noise_fingerprint: noise.fingerprint(),
        terminal_mean_sq_norm: Estimate {
            mean: mean[last],
            se: se[last],
        },
        finite: ens.is_finite(),
    };
    ctx.sink.json("simulate.json", &report)?;
    Ok((
        report.finite,
        format!(
            "simulated {} paths; E|X_T|² = {:.6} ± {:.1e}",
            report.n_paths, mean[last], se[last]
        ),
    ))
}

#[derive(Serialize)]
struct RiccatiReport<'a> {
    command: &'static str,
    scenario: &'a str,
    /// `lq` for the scenario's own problem, `auxiliary` for the continuation base.
    system: &'static str,
    oracle_substeps: usize,
    oracle_max_diff: f64,
    tolerance: f64,
    max_asymmetry: f64,
    min_eigenvalue: f64,
    sup_norm: f64,
    passed: bool,
}

fn riccati(ctx: &mut Context<'_>) -> Result<(bool, String), CliError> {
    let s = &ctx.scenario;
    let n = s.n_modes();
    let (system, gain, q, terminal) = match s.control_cost {
        ControlCost::Quadratic { c } => (
            "lq",
            s.gain() / c,
            DMatrix::identity(n, n) * s.running_weight,
            DMatrix::identity(n, n) * s.terminal_weight,
        ),
        _ => ("auxiliary", s.aux_gain(), DMatrix::identity(n, n), DMatrix::identity(n, n)),
    };
    let mf = solve_riccati(&s.model, &gain, &q, &terminal, ctx.grid, RiccatiScheme::MatrixFraction)?;
    let rk4 = solve_riccati(
        &s.model,
        &gain,
        &q,
        &terminal,
        ctx.grid,
        RiccatiScheme::Rk4 {
            substeps_per_step: ORACLE_SUBSTEPS,
        },
    )?;
    let profile = weighted_profile_riccati(&s.model, &mf, 1.0 - s.model.frac_alpha());
    let trace: Vec<f64> = mf.p.iter().map(|p| p.trace()).collect();
    let diff = mf.max_abs_diff(&rk4);
    let report = RiccatiReport {
        command: "riccati",
        scenario: &s.name,
        system,
        oracle_substeps: ORACLE_SUBSTEPS,
        oracle_max_diff: diff,
        tolerance: RICCATI_TOL,
        max_asymmetry: mf.max_asymmetry(),
        min_eigenvalue: mf.min_eigenvalue(),
        sup_norm: mf.sup_norm(),
        passed: diff <= RICCATI_TOL && mf.max_asymmetry() <= 1e-12 && mf.min_eigenvalue() >= 0.0,
    };
    let passed = report.passed;
    let summary = format!(
        "{system} Riccati: matrix fraction vs RK4 {diff:.2e} (tol {RICCATI_TOL:e}), min eigenvalue {:.3e}",
        report.min_eigenvalue
    );
    ctx.sink.json("riccati.json", &report)?;
    if ctx.cfg.emit.csv {
        let p = ctx.sink.path("riccati.csv");
        write_riccati_csv(&p, &ctx.sink.hash, &mf)?;
    }
    ctx.sink.series("riccati_series.csv", &[("trace", &trace), ("weighted_profile", &profile)])?;
    Ok((passed, summary))
}

/// Bridge output against the direct Riccati solution on the same noise.
#[derive(Debug, Serialize)]
struct LqComparison {
    worst_sq_norm_x_se: f64,
    worst_sq_norm_p_se: f64,
    j_bridge: Estimate,
    j_direct: Estimate,
    j_deviation_se: f64,
    passed: bool,
}

fn compare_lq(s: &Scenario, sol: &FbsdeSolution, direct: &FbsdeSolution) -> LqComparison {
    let grid = sol.x.grid;
    let z = |a: Estimate, b: Estimate| {
        if b.se > 0.0 {
            (a.mean - b.mean).abs() / b.se
        } else if a.mean == b.mean {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let (bx, dx) = (sol.x.sq_norm_estimates(), direct.x.sq_norm_estimates());
    let (bp, dp) = (sol.p.sq_norm_estimates(), direct.p.sq_norm_estimates());
    let mut wx = 0.0f64;
    let mut wp = 0.0f64;
    for m in 0..grid.n_nodes() {
        wx = wx.max(z(bx[m], dx[m]));
        wp = wp.max(z(bp[m], dp[m]));
    }
    let jb = cost_j(s, &sol.x, &s.optimal_controls(&sol.p));
    let jd = cost_j(s, &direct.x, &s.optimal_controls(&direct.p));
    let jz = z(jb, jd);
    LqComparison {
        worst_sq_norm_x_se: wx,
        worst_sq_norm_p_se: wp,
        j_bridge: jb,
        j_direct: jd,
        j_deviation_se: jz,
        passed: wx <= 3.0 && wp <= 3.0 && jz <= 3.0,
    }
}

#[derive(Serialize)]
struct BridgeReport<'a> {
    command: &'static str,
    scenario: &'a str,
    theta: f64,
    j: Estimate,
    diagnostics: BridgeDiagnostics,
    lq_comparison: Option<LqComparison>,
    checks: BridgeChecks,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct BridgeChecks {
    all_stages_accepted: bool,
    forward_residual_ok: bool,
    terminal_residual_ok: bool,
    backward_gap_ok: bool,
    profile_ratio: f64,
    profile_ratio_ok: bool,
}

impl BridgeChecks {
    fn new(diag: &BridgeDiagnostics, res: &ResidualReport) -> Self {
        Self {
            all_stages_accepted: diag.stages.iter().all(|s| s.accepted),
            forward_residual_ok: res.forward_residual <= RESIDUAL_TOL,
            terminal_residual_ok: res.terminal_residual <= RESIDUAL_TOL,
            backward_gap_ok: res.backward_gap <= 3.0 * res.backward_se,
            profile_ratio: res.profile_ratio(),
            profile_ratio_ok: res.profile_ratio() <= PROFILE_RATIO_TOL,
        }
    }

    fn passed(&self) -> bool {
        self.all_stages_accepted
            && self.forward_residual_ok
            && self.terminal_residual_ok
            && self.backward_gap_ok
            && self.profile_ratio_ok
    }
}

/// Wall times moved out of the diagnostics so that the JSON is reproducible.
#[derive(Serialize)]
struct Timing {
    stage_seconds: Vec<f64>,
    total_seconds: f64,
}

fn strip_timing(diag: &mut BridgeDiagnostics, total: f64) -> Timing {
    let stage_seconds = diag.stages.iter_mut().map(|s| std::mem::take(&mut s.wall_seconds)).collect();
    Timing {
        stage_seconds,
        total_seconds: total,
    }
}

fn solve_bridge(ctx: &mut Context<'_>) -> Result<(bool, String), CliError> {
    let noise = ctx.noise()?;
    let config = ctx.bridge_config()?;
    let started = Instant::now();
    let s = &ctx.scenario;
    let solver = BridgeSolver::new(s, ctx.grid, config)?;
    let (sol, mut diag) = solver.solve(&noise)?;
    let res = solver.residual(&sol, 1.0, &noise)?;
    let timing = strip_timing(&mut diag, started.elapsed().as_secs_f64());
    let checks = BridgeChecks::new(&diag, &res);
    let lq_comparison = if s.is_linear_quadratic() {
        let (direct, _) = solve_direct_lq(s, ctx.grid, &noise)?;
        Some(compare_lq(s, &sol, &direct))
    } else {
        None
    };
    let j = cost_j(s, &sol.x, &s.optimal_controls(&sol.p));
    let (x_mean, x_se) = node_estimates(ctx.grid, |m| sol.x.sq_norms(m));
    let (p_mean, p_se) = node_estimates(ctx.grid, |m| sol.p.sq_norms(m));
    let passed = checks.passed() && lq_comparison.as_ref().is_none_or(|c| c.passed);
    let summary = format!(
        "bridge reached theta = {} in {} stages, {} Picard iterations; forward residual {:.1e}, backward gap {:.2e} (3 SE {:.2e}); J = {:.5} ± {:.1e}{}; {:.1} s",
        sol.theta,
        diag.stages.len(),
        diag.total_iterations,
        res.forward_residual,
        res.backward_gap,
        3.0 * res.backward_se,
        j.mean,
        j.se,
        lq_comparison
            .as_ref()
            .map(|c| format!("; direct Riccati J = {:.5} ({:.2} SE)", c.j_direct.mean, c.j_deviation_se))
            .unwrap_or_default(),
        timing.total_seconds
    );
    let profile = res.weighted_profile.clone();
    diag.residual = Some(res);
    let report = BridgeReport {
        command: "solve-bridge",
        scenario: &s.name,
        theta: sol.theta,
        j,
        diagnostics: diag,
        lq_comparison,
        checks,
        passed,
    };
    ctx.sink.json("bridge.json", &report)?;
    ctx.sink.json("bridge_timing.json", &timing)?;
    ctx.sink.series(
        "bridge_series.csv",
        &[
            ("mean_sq_norm_x", &x_mean),
            ("se_sq_norm_x", &x_se),
            ("mean_sq_norm_p", &p_mean),
            ("se_sq_norm_p", &p_se),
            ("weighted_profile", &profile),
        ],
    )?;
    if ctx.cfg.emit.binary {
        let p = ctx.sink.path("bridge_x.bin");
        write_ensemble_binary(&p, &sol.x)?;
        let p = ctx.sink.path("bridge_p.bin");
        write_ensemble_binary(&p, &sol.p)?;
    }
    Ok((passed, summary))
}

fn certify(ctx: &mut Context<'_>) -> Result<(bool, String), CliError> {
    let noise = ctx.noise()?;
    let s = &ctx.scenario;
    let opts = &ctx.cfg.certify;
    let fwd = s.forward_model(ctx.grid)?;
    let sol = if s.is_linear_quadratic() {
        solve_direct_lq(s, ctx.grid, &noise)?.0
    } else {
        let solver = BridgeSolver::new(s, ctx.grid, ctx.bridge_config()?)?;
        solver.solve(&noise)?.0
    };
    let u = s.optimal_controls(&sol.p);
    let vi = variational_inequality_check(s, &sol, &u, opts.vi_samples, ctx.cfg.seed.wrapping_add(1));
    let dirs = smooth_directions(s.control_dim(), ctx.grid, opts.directions, opts.harmonics, ctx.cfg.seed.wrapping_add(2));
    let duality = dirs
        .iter()
        .map(|d| duality_identity_check(s, &fwd, &sol, d))
        .collect::<Result<Vec<_>, _>>()?;
    let (j, perturbations) = perturbation_table(s, &fwd, &sol.x, &u, &dirs, &opts.eps, opts.slope_tol)?;
    let passed = vi.passed && duality.iter().all(|d| d.passed) && perturbations.iter().all(|r| r.passed);
    let worst_ratio = duality
        .iter()
        .map(|d| if d.combined_se > 0.0 { d.gap / d.combined_se } else { 0.0 })
        .fold(0.0, f64::max);
    let summary = format!(
        "J = {:.5} ± {:.1e}; VI max violation {:.1e} (tol {:.1e}); duality worst gap {:.2} SE over {} directions; {} of {} perturbations dominated",
        j.mean,
        j.se,
        vi.max_violation,
        vi.tolerance,
        worst_ratio,
        duality.len(),
        perturbations.iter().filter(|r| r.passed).count(),
        perturbations.len()
    );
    let cert = Certificate {
        scenario: s.name.clone(),
        j,
        variational: vi,
        duality,
        perturbations,
        passed,
    };
    ctx.sink.json("certificate.json", &cert)?;
    Ok((passed, summary))
}

fn validate(ctx: &mut Context<'_>) -> Result<(bool, String), CliError> {
    let report = validate_assumptions(&ctx.scenario, ctx.cfg.validate_samples, ctx.cfg.seed)?;
    let summary = if report.passed {
        format!(
            "assumptions hold on {} samples; boundary HS slope {:.4}{}",
            report.samples,
            report.boundary_hs_slope,
            report.noise_hs_slope.map(|s| format!(", noise HS slope {s:.4}")).unwrap_or_default()
        )
    } else {
        format!("violations: {}", report.violations.join("; "))
    };
    ctx.sink.json("validation.json", &report)?;
    Ok((report.passed, summary))
}
