//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Runtimes are wall-clock on the current machine; a criterion that exceeds its
//! budget fails. Work shared between criteria is charged to the criterion that
//! owns it.

use std::f64::consts::PI;
use std::time::Instant;

use heatbridge::bridge::{solve_direct_lq, BridgeConfig, BridgeDiagnostics, BridgeSolver};
use heatbridge::control::{
    cost_j, duality_identity_check, perturbation_table, smooth_directions, variational_inequality_check, ControlCost,
};
use heatbridge::forward::{sample_noise, ControlProcess, Forcing, ForwardModel, NoiseEnsemble, NoiseSpec, TimeGrid};
use heatbridge::regression::FeatureSpec;
use heatbridge::riccati::{solve_riccati, FbsdeSolution, RiccatiScheme};
use heatbridge::scenarios::{build, ScenarioParams};
use heatbridge::spectral::{
    fit_loglog_slope, hs_bound_profile, hs_noise_profile, log_grid, neumann_lift, LiftCoefficients,
    MultiplicationOperator, Profile, SpectralField, SpectralModel,
};
use heatbridge::stats::Estimate;
use heatbridge::{Result, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const N_STEPS: usize = 200;

struct Check {
    passed: bool,
    detail: String,
    /// Seconds spent in shared work that belongs to another criterion.
    shared_seconds: f64,
}

impl Check {
    fn new(passed: bool, detail: String) -> Self {
        Self {
            passed,
            detail,
            shared_seconds: 0.0,
        }
    }
}

/// A bridge run kept for the criteria that reuse it.
struct BridgeRun {
    scenario: Scenario,
    config: BridgeConfig,
    noise: NoiseEnsemble,
    solution: FbsdeSolution,
    diagnostics: BridgeDiagnostics,
    seconds: f64,
}

fn run_bridge(scenario: Scenario, config: BridgeConfig, n_paths: usize, seed: u64) -> Result<BridgeRun> {
    let grid = TimeGrid::new(1.0, N_STEPS)?;
    let noise = sample_noise(grid, scenario.n_modes(), n_paths, seed)?;
    let start = Instant::now();
    let (solution, diagnostics) = BridgeSolver::new(&scenario, grid, config)?.solve(&noise)?;
    Ok(BridgeRun {
        scenario,
        config,
        noise,
        solution,
        diagnostics,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Default)]
struct Shared {
    lq_direct: Option<(Scenario, NoiseEnsemble, FbsdeSolution)>,
    nonlinear: Option<BridgeRun>,
}

impl Shared {
    fn lq_direct(&mut self) -> Result<&(Scenario, NoiseEnsemble, FbsdeSolution)> {
        if self.lq_direct.is_none() {
            let s = build("lq_benchmark", &ScenarioParams::default())?;
            let grid = TimeGrid::new(1.0, N_STEPS)?;
            let noise = sample_noise(grid, s.n_modes(), 10_000, 501)?;
            let (sol, _) = solve_direct_lq(&s, grid, &noise)?;
            self.lq_direct = Some((s, noise, sol));
        }
        Ok(self.lq_direct.as_ref().unwrap())
    }

    /// Returns the run and the seconds spent creating it now (zero when cached).
    fn nonlinear(&mut self) -> Result<(&BridgeRun, f64)> {
        let mut fresh = 0.0;
        if self.nonlinear.is_none() {
            let s = build("nonlinear_gamma", &ScenarioParams::default())?;
            let run = run_bridge(s, nonlinear_config(), 2000, 808)?;
            fresh = run.seconds;
            self.nonlinear = Some(run);
        }
        Ok((self.nonlinear.as_ref().unwrap(), fresh))
    }
}

fn nonlinear_config() -> BridgeConfig {
    BridgeConfig {
        features: FeatureSpec::quadratic(4),
        ..BridgeConfig::default()
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn worst<T: Copy + PartialOrd>(values: impl IntoIterator<Item = T>, init: T) -> T {
    values.into_iter().fold(init, |a, b| if b > a { b } else { a })
}

/// Eigenfunction values at the endpoints, computed from the explicit basis.
fn endpoint_values(k: usize) -> (f64, f64) {
    if k == 0 {
        let c = 1.0 / PI.sqrt();
        (c, c)
    } else {
        let c = (2.0 / PI).sqrt();
        (c, if k % 2 == 0 { c } else { -c })
    }
}

/// Composite Simpson rule on `[0, π]`.
fn simpson(f: impl Fn(f64) -> f64, panels: usize) -> f64 {
    let h = PI / panels as f64;
    let mut s = f(0.0) + f(PI);
    for i in 1..panels {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn c1_spectral_algebra(_: &mut Shared) -> Result<Check> {
    let n = 32;
    let model = SpectralModel::new(n, 1.0, 0.6, 0.75)?;
    let lifts = neumann_lift(&model);
    let lambda = model.lambda_shift();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut semi, mut frac, mut adj) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let v = SpectralField::from_vec(gaussian_vec(&mut rng, n, 1.0));
        let (s, t) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let composed = model.apply_semigroup(s, &model.apply_semigroup(t, &v)?)?;
        let direct = model.apply_semigroup(s + t, &v)?;
        let explicit = DVector::from_fn(n, |k, _| (-((k * k) as f64) * (s + t)).exp() * v.coeffs[k]);
        semi = semi.max((&composed.coeffs - &direct.coeffs).norm() / v.norm());
        semi = semi.max((&direct.coeffs - &explicit).norm() / v.norm());

        let (p, q) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let composed = model.apply_fractional_power(p, &model.apply_fractional_power(q, &v)?)?;
        let direct = model.apply_fractional_power(p + q, &v)?;
        let explicit = DVector::from_fn(n, |k, _| (lambda + (k * k) as f64).powf(p + q) * v.coeffs[k]);
        frac = frac.max((&composed.coeffs - &direct.coeffs).norm() / direct.norm());
        frac = frac.max((&direct.coeffs - &explicit).norm() / direct.norm());

        let (u1, u2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (z1, z2) = lifts.apply_e_adjoint(&v);
        let lhs = lifts.apply_e(u1, u2).dot(&v);
        adj = adj.max((lhs - (u1 * z1 + u2 * z2)).abs() / (v.norm() * (u1 * u1 + u2 * u2).sqrt()));
    }

    let mut lift = 0.0f64;
    for k in 0..n {
        let (left, right) = endpoint_values(k);
        let shifted = lambda + (k * k) as f64;
        lift = lift.max((lifts.b1_coeffs[k] + left / shifted).abs());
        lift = lift.max((lifts.b2_coeffs[k] - right / shifted).abs());
    }
    // closed-form lift profiles projected by an independent quadrature
    let mut closed = 0.0f64;
    for k in 0..8 {
        let basis = |x: f64| if k == 0 { 1.0 / PI.sqrt() } else { (2.0 / PI).sqrt() * (k as f64 * x).cos() };
        let c1 = simpson(|x| LiftCoefficients::b1_closed_form(lambda, x) * basis(x), 4000);
        let c2 = simpson(|x| LiftCoefficients::b2_closed_form(lambda, x) * basis(x), 4000);
        closed = closed.max((c1 - lifts.b1_coeffs[k]).abs()).max((c2 - lifts.b2_coeffs[k]).abs());
    }

    let passed = semi <= 1e-13 && frac <= 1e-12 && adj <= 1e-12 && lift <= 1e-12 && closed <= 1e-9;
    Ok(Check::new(
        passed,
        format!(
            "semigroup {semi:.1e} (tol 1e-13), fractional {frac:.1e} (1e-12), E-adjoint {adj:.1e} (1e-12), lift {lift:.1e} (1e-12), closed-form lift {closed:.1e} (1e-9)"
        ),
    ))
}

fn c2_noise_calibration(_: &mut Shared) -> Result<Check> {
    let n = 16;
    let n_paths = 10_000;
    let model = SpectralModel::new(n, 1.0, 0.6, 0.75)?;
    let lifts = neumann_lift(&model);
    let grid = TimeGrid::new(1.0, N_STEPS)?;
    let noise = sample_noise(grid, n, n_paths, 2024)?;
    let control = DMatrix::zeros(n, n + 2);
    let g_cos = MultiplicationOperator::assemble(&model, Profile::Cosine { c0: 1.0, c1: 0.5 }).matrix;
    let cases = [
        ("G = I", Some(DMatrix::identity(n, n)), None),
        ("G = 1 + cos/2", Some(g_cos), None),
        ("boundary", None, Some(lifts.e1_coeffs.clone())),
        ("G = I + boundary", Some(DMatrix::identity(n, n)), Some(lifts.e1_coeffs.clone())),
    ];
    let t = grid.horizon();
    // Itô isometry: ∫₀ᵗ e^{2a_k s} ds
    let isometry = |k: usize| if k == 0 { t } else { (1.0 - (-2.0 * (k * k) as f64 * t).exp()) / (2.0 * (k * k) as f64) };
    let mut worst_z = 0.0f64;
    let mut checks = 0;
    for (_, g, b) in &cases {
        let spec = NoiseSpec {
            distributed: g.clone(),
            boundary: b.clone(),
        };
        let fwd = ForwardModel::new(&model, grid, control.clone(), &spec)?;
        let ens = fwd.simulate(&SpectralField::zeros(n), &ControlProcess::Zero, &Forcing::Zero, Some(&noise), n_paths)?;
        let xt = &ens.states[N_STEPS];
        for k in 0..n {
            let mut oracle = 0.0;
            if let Some(g) = g {
                oracle += g.row(k).norm_squared() * isometry(k);
            }
            if let Some(b) = b {
                oracle += b[k] * b[k] * isometry(k);
            }
            let col: Vec<f64> = xt.column(k).iter().copied().collect();
            let mean = col.iter().sum::<f64>() / n_paths as f64;
            let sq: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
            let est = Estimate::from_samples(&sq);
            worst_z = worst_z.max((est.mean - oracle).abs() / est.se);
            checks += 1;
        }
    }
    Ok(Check::new(
        worst_z <= 3.0,
        format!("{checks} mode variances at t = T, largest deviation {worst_z:.2} SE (tol 3)"),
    ))
}

fn c3_hs_exponents(_: &mut Shared) -> Result<Check> {
    let n = 1024;
    let model = SpectralModel::new(n, 1.0, 0.6, 0.75)?;
    let lifts = neumann_lift(&model);
    let t = log_grid(1e-4, 1e-1, 31);
    let bound = hs_bound_profile(&model, &lifts, &t)?;
    let g = MultiplicationOperator::assemble(&model, Profile::Constant { value: 1.0 });
    let noise = hs_noise_profile(&model, &g, &t)?;
    // direct tail sums Σ_k e^{−2k²t}·e_k(0)² and Σ_k e^{−2k²t}
    let mut mismatch = 0.0f64;
    for (i, &ti) in t.iter().enumerate() {
        let b: f64 = (0..n).map(|k| (-2.0 * (k * k) as f64 * ti).exp() * endpoint_values(k).0.powi(2)).sum::<f64>().sqrt();
        let q: f64 = (0..n).map(|k| (-2.0 * (k * k) as f64 * ti).exp()).sum::<f64>().sqrt();
        mismatch = mismatch.max((bound[i] - b).abs() / b).max((noise[i] - q).abs() / q);
    }
    let sb = fit_loglog_slope(&t, &bound);
    let sg = fit_loglog_slope(&t, &noise);
    let passed = (sb + 0.25).abs() <= 0.03 && (sg + 0.25).abs() <= 0.03 && mismatch <= 1e-10;
    Ok(Check::new(
        passed,
        format!("boundary slope {sb:.4}, noise slope {sg:.4} (target -0.25 ± 0.03), profile vs tail sum {mismatch:.1e}"),
    ))
}

/// Scalar Riccati `−P' = 2aP − mP² + q`, `P(T) = pt`, by its two stationary roots.
fn scalar_riccati(a: f64, m: f64, q: f64, pt: f64, tau: f64) -> f64 {
    if m == 0.0 {
        if a == 0.0 {
            return pt + q * tau;
        }
        let e = (2.0 * a * tau).exp();
        return e * pt + q * (e - 1.0) / (2.0 * a);
    }
    let d = (a * a + m * q).sqrt();
    let (hi, lo) = ((a + d) / m, (a - d) / m);
    let e = (-2.0 * d * tau).exp();
    (hi * (pt - lo) - lo * (pt - hi) * e) / ((pt - lo) - (pt - hi) * e)
}

fn c4_riccati(_: &mut Shared) -> Result<Check> {
    let grid = TimeGrid::new(1.0, N_STEPS)?;
    let small = SpectralModel::new(4, 1.0, 0.6, 0.75)?;
    let (m, q, pt) = ([1.0, 0.0, 2.5, 0.7], [1.0, 2.0, 0.5, 0.0], [1.0, 0.3, 0.0, 2.0]);
    let diag = |v: [f64; 4]| DMatrix::from_diagonal(&DVector::from_row_slice(&v));
    let mut scalar = 0.0f64;
    for scheme in [RiccatiScheme::MatrixFraction, RiccatiScheme::Rk4 { substeps_per_step: 20 }] {
        let sol = solve_riccati(&small, &diag(m), &diag(q), &diag(pt), grid, scheme)?;
        for (node, p) in sol.p.iter().enumerate() {
            let tau = grid.horizon() - grid.node(node);
            for k in 0..4 {
                let exact = scalar_riccati(small.eigenvalue(k), m[k], q[k], pt[k], tau);
                scalar = scalar.max((p[(k, k)] - exact).abs());
            }
        }
    }

    let mut cross = 0.0f64;
    let mut asym = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for n in [8, 16] {
        let params = ScenarioParams {
            n_modes: n,
            ..ScenarioParams::default()
        };
        let s = build("neumann_heat_default", &params)?;
        let id = DMatrix::identity(n, n);
        let mf = solve_riccati(&s.model, &s.gain(), &id, &id, grid, RiccatiScheme::MatrixFraction)?;
        let rk = solve_riccati(&s.model, &s.gain(), &id, &id, grid, RiccatiScheme::Rk4 { substeps_per_step: 100 })?;
        cross = cross.max(mf.max_abs_diff(&rk));
        asym = asym.max(mf.max_asymmetry());
        min_eig = min_eig.min(mf.min_eigenvalue());
    }
    let passed = scalar <= 1e-8 && cross <= 1e-8 && asym <= 1e-12 && min_eig >= 0.0;
    Ok(Check::new(
        passed,
        format!(
            "scalar closed forms {scalar:.1e}, matrix fraction vs RK4 at n = 8, 16: {cross:.1e} (tol 1e-8), asymmetry {asym:.1e}, min eigenvalue {min_eig:.3e}"
        ),
    ))
}

fn c5_lq_optimality(shared: &mut Shared) -> Result<Check> {
    let (s, _, sol) = shared.lq_direct()?;
    let grid = sol.x.grid;
    let fwd = s.forward_model(grid)?;
    let u = s.optimal_controls(&sol.p);
    // u* = −(E+B)ᵀp with p = P X + r
    let feedback_gap = u
        .iter()
        .zip(&sol.p.states)
        .map(|(u, p)| (u + p * &s.control_op).amax())
        .fold(0.0, f64::max);
    let dirs = smooth_directions(s.control_dim(), grid, 20, 4, 55);
    let (j, rows) = perturbation_table(s, &fwd, &sol.x, &u, &dirs, &[1e-3, 1e-2], 2e-2)?;
    let dominated = rows.iter().all(|r| r.worst_decrease >= -r.tolerance);
    let worst_drop = rows.iter().map(|r| -r.worst_decrease).fold(f64::NEG_INFINITY, f64::max);
    let slope = worst(rows.iter().map(|r| r.central_slope.abs()), 0.0);
    let passed = dominated && slope <= 2e-2 && feedback_gap <= 1e-12;
    Ok(Check::new(
        passed,
        format!(
            "J = {:.5} ± {:.1e}; {} perturbations, largest decrease {worst_drop:.2e} vs 3 SE = {:.2e}; max central slope {slope:.2e} (tol 2e-2)",
            j.mean,
            j.se,
            rows.len() * 2,
            3.0 * j.se
        ),
    ))
}

fn duality_worst(s: &Scenario, sol: &FbsdeSolution, seed: u64) -> Result<(f64, usize)> {
    let fwd = s.forward_model(sol.x.grid)?;
    let dirs = smooth_directions(s.control_dim(), sol.x.grid, 20, 4, seed);
    let mut ratio = 0.0f64;
    for d in &dirs {
        let r = duality_identity_check(s, &fwd, sol, d)?;
        ratio = ratio.max(r.gap / r.combined_se);
    }
    Ok((ratio, dirs.len()))
}

fn c6_duality(shared: &mut Shared) -> Result<Check> {
    let (s, _, sol) = shared.lq_direct()?;
    let (lq, count) = duality_worst(s, sol, 66)?;
    let (run, fresh) = shared.nonlinear()?;
    let (nl, _) = duality_worst(&run.scenario, &run.solution, 67)?;
    let mut check = Check::new(
        lq <= 3.0 && nl <= 3.0,
        format!(
            "{count} directions each; worst |LHS − RHS| / combined SE: lq_benchmark {lq:.2}, nonlinear_gamma {nl:.2} (tol 3)"
        ),
    );
    check.shared_seconds = fresh;
    Ok(check)
}

fn c7_bridge_vs_riccati(_: &mut Shared) -> Result<Check> {
    let s = build("lq_benchmark", &ScenarioParams::default())?;
    let run = run_bridge(s, BridgeConfig::default(), 5000, 707)?;
    let (passed, detail) = bridge_vs_direct(&run)?;
    Ok(Check::new(passed, detail))
}

/// `|a − b|` in units of the reference error; exact agreement is required when that error vanishes.
fn deviation_se(a: Estimate, b: Estimate) -> f64 {
    if b.se > 0.0 {
        (a.mean - b.mean).abs() / b.se
    } else if a.mean == b.mean {
        0.0
    } else {
        f64::INFINITY
    }
}

fn bridge_vs_direct(run: &BridgeRun) -> Result<(bool, String)> {
    let s = &run.scenario;
    let grid = run.solution.x.grid;
    let (direct, _) = solve_direct_lq(s, grid, &run.noise)?;
    let mut worst_x = 0.0f64;
    let mut worst_p = 0.0f64;
    let (bx, dx) = (run.solution.x.sq_norm_estimates(), direct.x.sq_norm_estimates());
    let (bp, dp) = (run.solution.p.sq_norm_estimates(), direct.p.sq_norm_estimates());
    for m in 0..grid.n_nodes() {
        worst_x = worst_x.max(deviation_se(bx[m], dx[m]));
        worst_p = worst_p.max(deviation_se(bp[m], dp[m]));
    }
    let jb = cost_j(s, &run.solution.x, &s.optimal_controls(&run.solution.p));
    let jd = cost_j(s, &direct.x, &s.optimal_controls(&direct.p));
    let jz = (jb.mean - jd.mean).abs() / jd.se;
    let accepted = run.diagnostics.stages.iter().all(|st| st.accepted);
    let passed = accepted && worst_x <= 3.0 && worst_p <= 3.0 && jz <= 3.0 && run.diagnostics.common_random_numbers;
    Ok((
        passed,
        format!(
            "{} stages all accepted: {accepted}; worst node deviation E|X|² {worst_x:.2e} SE, E|p|² {worst_p:.2e} SE; J {:.5} vs {:.5} ({jz:.2e} SE); bridge {:.0} s",
            run.diagnostics.stages.len(),
            jb.mean,
            jd.mean,
            run.seconds
        ),
    ))
}

fn nonlinear_checks(run: &BridgeRun) -> Result<(bool, String)> {
    let s = &run.scenario;
    let grid = run.solution.x.grid;
    let solver = BridgeSolver::new(s, grid, run.config)?;
    let res = solver.residual(&run.solution, 1.0, &run.noise)?;
    let u = s.optimal_controls(&run.solution.p);
    let vi = variational_inequality_check(s, &run.solution, &u, 10_000, 17);
    let accepted = run.diagnostics.stages.iter().all(|st| st.accepted);
    let passed = accepted
        && res.forward_residual <= 1e-8
        && res.terminal_residual <= 1e-8
        && res.backward_gap <= 3.0 * res.backward_se
        && vi.passed
        && res.profile_ratio() <= 10.0;
    Ok((
        passed,
        format!(
            "stages accepted {accepted} ({} Picard iterations); forward residual {:.1e}, terminal {:.1e} (tol 1e-8); backward gap {:.3e} vs 3 SE = {:.3e}; VI max {:.1e} vs tol {:.1e}; profile sup/median {:.2} (tol 10); bridge {:.0} s",
            run.diagnostics.total_iterations,
            res.forward_residual,
            res.terminal_residual,
            res.backward_gap,
            3.0 * res.backward_se,
            vi.max_violation,
            vi.tolerance,
            res.profile_ratio(),
            run.seconds
        ),
    ))
}

fn c8_nonlinear(shared: &mut Shared) -> Result<Check> {
    let (run, fresh) = shared.nonlinear()?;
    let (passed, detail) = nonlinear_checks(run)?;
    let mut check = Check::new(passed, detail);
    // the bridge is charged here even when an earlier criterion triggered it
    check.shared_seconds = fresh - run.seconds;
    Ok(check)
}

/// `‖(E+B)ᵀp‖_{L²}` from per-path samples of `∫|(E+B)ᵀp|²` with a delta-method SE.
fn control_norm(s: &Scenario, sol: &FbsdeSolution) -> (f64, f64) {
    let est = Estimate::from_samples(&heatbridge::bridge::control_norm_samples(s, sol));
    let norm = est.mean.sqrt();
    (norm, est.se / (2.0 * norm))
}

fn difference_norm(s: &Scenario, a: &FbsdeSolution, b: &FbsdeSolution) -> f64 {
    let h = a.p.grid.step();
    let vals: Vec<f64> = a
        .p
        .states
        .iter()
        .zip(&b.p.states)
        .map(|(pa, pb)| ((pa - pb) * &s.control_op).norm_squared() / a.p.n_paths as f64)
        .collect();
    heatbridge::stats::trapezoid(&vals, h).sqrt()
}

fn c9_uniqueness(shared: &mut Shared) -> Result<Check> {
    let (run, fresh) = shared.nonlinear()?;
    let s = &run.scenario;
    let grid = run.solution.x.grid;
    // a single stage straight to θ = 1, halving if needed
    let config = BridgeConfig {
        delta: 1.0,
        ..run.config
    };
    let solver = BridgeSolver::new(s, grid, config)?;
    let linear = solver.linear_solution(&run.noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = s.n_modes();
    let mut first = linear.clone();
    for (x, p) in first.x.states.iter_mut().zip(first.p.states.iter_mut()) {
        *x += DMatrix::from_fn(x.nrows(), n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        *p += DMatrix::from_fn(p.nrows(), n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    }
    let shift = DVector::from_vec(gaussian_vec(&mut rng, n, 1.0));
    let mut second = linear;
    for p in second.p.states.iter_mut() {
        *p *= 1.5;
        for (k, mut col) in p.column_iter_mut().enumerate() {
            col.add_scalar_mut(shift[k]);
        }
    }
    let initial = difference_norm(s, &first, &second);
    let (a, da) = solver.solve_from(first, &run.noise)?;
    let (b, db) = solver.solve_from(second, &run.noise)?;
    let stages = da.stages.len() + db.stages.len();
    let gap = difference_norm(s, &a, &b);
    let to_bridge = difference_norm(s, &a, &run.solution);
    let (norm, se) = control_norm(s, &run.solution);
    let passed = a.theta == 1.0 && b.theta == 1.0 && gap <= 3.0 * se && to_bridge <= 3.0 * se;
    let mut check = Check::new(
        passed,
        format!(
            "initial separation {initial:.3}; both reached θ = 1 in {stages} stages; final ‖Δ(E+B)ᵀp‖ = {gap:.2e}, vs marched bridge {to_bridge:.2e}; ‖(E+B)ᵀp‖ = {norm:.4} ± {se:.1e} (tol 3 SE)"
        ),
    );
    check.shared_seconds = fresh;
    Ok(check)
}

fn c10_boundary_only(_: &mut Shared) -> Result<Check> {
    let s = build("boundary_only", &ScenarioParams::default())?;
    let quad = run_bridge(s, BridgeConfig::default(), 5000, 1010)?;
    let (p7, d7) = bridge_vs_direct(&quad)?;
    let (p8q, d8q) = nonlinear_checks(&quad)?;
    let mut sat = build("boundary_only", &ScenarioParams::default())?;
    sat.control_cost = ControlCost::Saturating { kappa: 0.25 };
    sat.name = "boundary_only_saturating".into();
    let sat = run_bridge(sat, nonlinear_config(), 2000, 1011)?;
    let (p8, d8) = nonlinear_checks(&sat)?;
    let budget_ok = quad.seconds <= 300.0;
    Ok(Check::new(
        p7 && p8q && p8 && budget_ok,
        format!("[vs Riccati] {d7} | [quadratic residuals] {d8q} | [saturating] {d8}"),
    ))
}

type Criterion = fn(&mut Shared) -> Result<Check>;

fn main() {
    let criteria: [(&str, f64, Criterion); 10] = [
        ("spectral algebra", 1.0, c1_spectral_algebra),
        ("noise calibration", 30.0, c2_noise_calibration),
        ("Hilbert-Schmidt exponents", 1.0, c3_hs_exponents),
        ("Riccati oracle", 10.0, c4_riccati),
        ("LQ optimality", 120.0, c5_lq_optimality),
        ("duality identity", 120.0, c6_duality),
        ("bridge vs Riccati", 300.0, c7_bridge_vs_riccati),
        ("nonlinear Hamiltonian system", 600.0, c8_nonlinear),
        ("uniqueness probe", 600.0, c9_uniqueness),
        ("boundary-only variant", 900.0, c10_boundary_only),
    ];
    let mut shared = Shared::default();
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run(&mut shared);
        let elapsed = start.elapsed().as_secs_f64();
        let (passed, detail, seconds) = match outcome {
            Ok(c) => {
                let seconds = elapsed - c.shared_seconds;
                (c.passed && seconds <= *budget, c.detail, seconds)
            }
            Err(e) => (false, format!("error: {e}"), elapsed),
        };
        if !passed {
            failures += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail}; {seconds:.1} s (budget {budget:.0} s)",
            if passed { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
