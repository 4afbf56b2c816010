//! Scenario runner behind the `relfp` binary: one pipeline per subcommand,
//! each writing CSV artifacts, a `checks.csv` verdict table and a `manifest`.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use config::{load_config, parse_config, InitialData, Scenario, ScenarioKind};

use crate::diagnostics::{lightcone_check, DiagnosticRecord, DiagnosticSeries};
use crate::fp_solver::{steady_state_linear, FpSolver, SolverState, TimeIntegrator, TransportScheme};
use crate::invariance_lab::{
    galilean_invariance_residual, lorentz_invariance_residual, max_discrepancy, observed_orders, sample_points,
    TestFunction,
};
use crate::kinematics::{energy, BoostVelocity};
use crate::mean_field::{
    convergence_csv, energy_vnfp, massless_lower_bound, minimizer_certificate_vmfp, minimizer_certificate_vnfp,
    momentum_density_integral, momentum_density_integral_1d, momentum_number_integral, reduced_entropy_vmfp,
    sobolev_check, vmfp_steady, vnfp_static_residual, vnfp_steady, CertificateReport, FixedPointConfig,
    MomentumQuadrature, RadialGrid,
};
use crate::phase_grid::{mass, write_csv, write_raw, DistributionField};
use crate::special::bessel_k;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Tolerances shared with the acceptance suite.
pub mod tolerances {
    pub const MASS_DRIFT: f64 = 1e-12;
    pub const STEP_INVARIANCE: f64 = 1e-12;
    pub const ENTROPY_IDENTITY: f64 = 0.05;
    pub const POISSON_RESIDUAL: f64 = 1e-6;
    pub const ORACLE: f64 = 1e-8;
    pub const INVARIANCE_ORDER: f64 = 2.0;
    pub const FRICTION_CONTROL: f64 = 1e-2;
    /// relative tolerance when counting increases of a monotone functional
    pub const MONOTONE_ROUNDING: f64 = 1e-12;
}

/// One pass/fail line.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="`, `"<"`, `">="` or `">"`
    pub relation: &'static str,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, relation: "<=" }
    }

    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, relation: "<" }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, relation: ">=" }
    }

    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, relation: ">" }
    }

    pub fn passed(&self) -> bool {
        match self.relation {
            "<=" => self.value <= self.threshold,
            "<" => self.value < self.threshold,
            ">=" => self.value >= self.threshold,
            _ => self.value > self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub kind: ScenarioKind,
    pub checks: Vec<Check>,
    /// artifacts written, relative to the output directory
    pub files: Vec<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() { EXIT_OK } else { EXIT_CHECK_FAILED }
    }

    pub fn checks_csv(&self) -> String {
        let mut s = String::from("check,value,relation,threshold,passed\n");
        for c in &self.checks {
            let _ = writeln!(s, "{},{:e},{},{:e},{}", c.name, c.value, c.relation, c.threshold, c.passed());
        }
        s
    }
}

/// Exit code for an error that aborted a run.
pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::Cfl { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn error_kind(error: &Error) -> &'static str {
    match error {
        Error::InvalidArgument(_) => "invalid-argument",
        Error::Cfl { .. } => "cfl",
        Error::SingularSolve { .. } => "singular-solve",
        Error::NotConfining(_) => "not-confining",
        Error::MassMismatch { .. } => "mass-mismatch",
        Error::NonConvergence { .. } => "non-convergence",
        Error::Divergence { .. } => "divergence",
        Error::Config { .. } => "config",
        Error::Format(..) => "format",
        Error::Io(_) => "io",
    }
}

/// `key = value` failure record written as `failure` in the output directory.
pub fn failure_record(kind: Option<ScenarioKind>, error: &Error) -> String {
    format!(
        "status = error\nscenario = {}\nerror = {}\nexit_code = {}\nmessage = {}\n",
        kind.map_or("unknown", ScenarioKind::name),
        error_kind(error),
        exit_code_for(error),
        error.to_string().replace('\n', " "),
    )
}

pub fn write_failure(out_dir: &Path, kind: Option<ScenarioKind>, error: &Error) -> Result<(), Error> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("failure"), failure_record(kind, error))?;
    Ok(())
}

/// Hex SHA-256 of the configuration text and the effective seed.
pub fn config_hash(scenario: &Scenario) -> String {
    let mut h = Sha256::new();
    h.update(scenario.source.as_bytes());
    h.update(scenario.seed.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Artifacts<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path) -> Result<Self, Error> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<(), Error> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn snapshot(&mut self, step: usize, t: f64, f: &DistributionField, raw: bool) -> Result<(), Error> {
        let stem = format!("snapshot_t{step:04}");
        write_csv(f, &self.dir.join(format!("{stem}.csv")))?;
        self.files.push(format!("{stem}.csv"));
        if raw {
            write_raw(f, t, &self.dir.join(format!("{stem}.raw")))?;
            self.files.push(format!("{stem}.raw"));
        }
        Ok(())
    }
}

/// Runs a scenario, writing every artifact into `out_dir`.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunOutcome, Error> {
    let mut art = Artifacts::new(out_dir)?;
    let checks = match scenario.kind {
        ScenarioKind::RunLinear => run_linear(scenario, &mut art)?,
        ScenarioKind::SteadyLinear => steady_linear(scenario, &mut art)?,
        ScenarioKind::SteadyVmfp => steady_vmfp(scenario, &mut art)?,
        ScenarioKind::SteadyVnfp => steady_vnfp(scenario, &mut art)?,
        ScenarioKind::CheckInvariance => check_invariance(scenario, &mut art)?,
        ScenarioKind::CheckLightcone => check_lightcone(scenario, &mut art)?,
        ScenarioKind::CheckOracles => check_oracles(&mut art)?,
    };
    let mut outcome = RunOutcome { kind: scenario.kind, checks, files: Vec::new() };
    art.text("checks.csv", &outcome.checks_csv())?;
    let manifest = manifest(scenario, &outcome, &art.files);
    art.text("manifest", &manifest)?;
    outcome.files = art.files;
    Ok(outcome)
}

fn manifest(s: &Scenario, outcome: &RunOutcome, files: &[String]) -> String {
    let g = &s.grid;
    let c = &s.solver;
    let mut m = String::new();
    let _ = writeln!(m, "relfp_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "scenario = {}", s.kind);
    let _ = writeln!(m, "config_sha256 = {}", config_hash(s));
    let _ = writeln!(m, "seed = {}", s.seed);
    let _ = writeln!(m, "grid = x:[{}, {}] p:[-{}, {}] n_x={} n_p={}", g.x_min, g.x_max, g.p_max, g.p_max, g.n_x, g.n_p);
    let _ = writeln!(m, "potential = {:?}", s.potential);
    let _ = writeln!(
        m,
        "solver = dt={} t_end={} splitting={:?} weights={:?} transport={:?} integrator={:?} collisions={}",
        c.dt, c.t_end, c.splitting, c.collision_weights, c.transport_scheme, c.integrator, c.collisions_enabled
    );
    if c.superluminal_factor != 1.0 {
        let _ = writeln!(m, "superluminal_factor = {}", c.superluminal_factor);
    }
    let _ = writeln!(m, "status = {}", if outcome.passed() { "pass" } else { "fail" });
    for f in files {
        let _ = writeln!(m, "file = {f}");
    }
    m
}

/// Initial distribution of a time-dependent scenario, normalized to its mass.
pub fn initial_field(s: &Scenario) -> Result<DistributionField, Error> {
    let mut f = match s.initial {
        InitialData::Equilibrium => return steady_state_linear(s.mass, &s.potential, &s.grid),
        InitialData::ShiftedJuttner { center, width, shift } => DistributionField::from_fn(s.grid, |x, p| {
            (-(x - center).powi(2) / (2.0 * width * width) - energy(&[p - shift])).exp()
        })?,
        InitialData::CompactBump { center, radius, shift } => DistributionField::from_fn(s.grid, |x, p| {
            let z = (x - center) / radius;
            if z.abs() < 1.0 { (1.0 - z * z).powi(2) * (-energy(&[p - shift])).exp() } else { 0.0 }
        })?,
    };
    let m = mass(&f);
    if !(m > 0.0) {
        return Err(Error::InvalidArgument("initial data has no mass on the grid".into()));
    }
    f.scale(s.mass / m);
    Ok(f)
}

/// Whether every substep is a nonnegative, mass-conserving map fixing the equilibrium.
fn is_monotone(s: &Scenario) -> bool {
    s.solver.transport_scheme == TransportScheme::Upwind1 && s.solver.integrator == TimeIntegrator::FirstOrder
}

/// Time series and snapshots of one solver run.
pub struct Trajectory {
    pub series: DiagnosticSeries,
    pub states: Vec<(f64, DistributionField)>,
}

/// Runs the solver of `s`, recording diagnostics every `diagnostics_every`
/// steps and, when `keep_states`, every recorded state.
pub fn trajectory(s: &Scenario, f0: DistributionField, keep_states: bool, mut on_snapshot: impl FnMut(usize, f64, &DistributionField) -> Result<(), Error>) -> Result<Trajectory, Error> {
    let solver = FpSolver::new(&s.grid, &s.potential, s.solver.clone())?;
    let equilibrium = steady_state_linear(s.mass, &s.potential, &s.grid).ok();
    let x0 = s.initial.center();
    let n = s.solver.n_steps();
    let every = s.output.diagnostics_every;
    let mut series = DiagnosticSeries::new();
    let mut states = Vec::new();
    let mut failure: Option<Error> = None;
    let mut state = SolverState::new(f0);
    solver.run(&mut state, |st| {
        if failure.is_some() {
            return;
        }
        let k = st.step_count;
        let last = k == n;
        if k % every == 0 || last {
            if let Err(e) = series.push(DiagnosticRecord::measure(st.t, &st.f, &s.potential, equilibrium.as_ref(), x0)) {
                failure = Some(e);
            }
            if keep_states {
                states.push((st.t, st.f.clone()));
            }
        }
        let snap = s.output.snapshot_every;
        if k == 0 || last || (snap > 0 && k % snap == 0) {
            if let Err(e) = on_snapshot(k, st.t, &st.f) {
                failure = Some(e);
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(Trajectory { series, states }),
    }
}

fn entropy_checks(s: &Scenario, series: &DiagnosticSeries, checks: &mut Vec<Check>) {
    use tolerances::*;
    checks.push(Check::at_most("mass_drift", series.mass_drift(), MASS_DRIFT));
    checks.push(Check::at_most("free_energy_increases", series.count_increases(|r| r.q, MONOTONE_ROUNDING) as f64, 0.0));
    if s.output.diagnostics_every == 1 {
        let (dq, integral) = series.entropy_balance();
        if integral > 0.0 {
            checks.push(Check::at_most("entropy_identity_relative", (dq + integral).abs() / integral, ENTROPY_IDENTITY));
        }
    }
    let has_chi2 = series.records().first().is_some_and(|r| r.chi2.is_finite());
    if has_chi2 && is_monotone(s) {
        checks.push(Check::at_most("chi2_increases", series.count_increases(|r| r.chi2, MONOTONE_ROUNDING) as f64, 0.0));
    }
}

fn run_linear(s: &Scenario, art: &mut Artifacts) -> Result<Vec<Check>, Error> {
    let f0 = initial_field(s)?;
    let raw = s.output.raw;
    let traj = trajectory(s, f0, false, |k, t, f| art.snapshot(k, t, f, raw))?;
    art.text("diagnostics.csv", &traj.series.to_csv())?;
    let mut checks = Vec::new();
    entropy_checks(s, &traj.series, &mut checks);
    Ok(checks)
}

fn steady_linear(s: &Scenario, art: &mut Artifacts) -> Result<Vec<Check>, Error> {
    let m = steady_state_linear(s.steady.mass, &s.potential, &s.grid)?;
    art.snapshot(0, 0.0, &m, s.output.raw)?;
    let solver = FpSolver::new(&s.grid, &s.potential, s.solver.clone())?;
    let mut state = SolverState::new(m.clone());
    let mut series = DiagnosticSeries::new();
    series.push(DiagnosticRecord::measure(0.0, &m, &s.potential, Some(&m), 0.0))?;
    let mut worst: f64 = 0.0;
    for _ in 0..s.steady.check_steps {
        let prev = state.f.clone();
        solver.step(&mut state)?;
        let change = prev
            .values()
            .iter()
            .zip(state.f.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / prev.max();
        worst = worst.max(change);
        series.push(DiagnosticRecord::measure(state.t, &state.f, &s.potential, Some(&m), 0.0))?;
    }
    art.snapshot(state.step_count, state.t, &state.f, s.output.raw)?;
    art.text("diagnostics.csv", &series.to_csv())?;
    Ok(vec![
        Check::at_most("relative_change_per_step", worst, tolerances::STEP_INVARIANCE),
        Check::at_most("mass_drift", series.mass_drift(), tolerances::MASS_DRIFT),
    ])
}

fn radial_setup(s: &Scenario) -> Result<(RadialGrid, MomentumQuadrature, FixedPointConfig), Error> {
    let st = &s.steady;
    let grid = RadialGrid::new(st.r_max, st.n_r)?;
    let momentum = MomentumQuadrature::new(crate::mean_field::MOMENTUM_CUTOFF, st.momentum_panels, st.momentum_order)?;
    let config = FixedPointConfig { damping: st.damping, tol: st.tol, max_iter: st.max_iter, mass: st.mass };
    Ok((grid, momentum, config))
}

/// Perturbation sizes used by the minimizer certificates.
pub const CERTIFICATE_EPS: [f64; 3] = [1e-1, 3e-2, 1e-2];

fn certificate_checks(report: &CertificateReport, checks: &mut Vec<Check>) {
    checks.push(Check::at_most("certificate_violations", report.violations as f64, 0.0));
    checks.push(Check::above("certificate_second_difference", report.second_difference, 0.0));
    checks.push(Check::at_least("certificate_stationary", f64::from(u8::from(report.stationary())), 1.0));
}

fn steady_vmfp(s: &Scenario, art: &mut Artifacts) -> Result<Vec<Check>, Error> {
    let (grid, momentum, config) = radial_setup(s)?;
    let sol = vmfp_steady(&s.potential, &grid, &momentum, &config)?;
    art.text("convergence.csv", &convergence_csv(&sol.log))?;
    let mut profile = String::from("r,U,rho\n");
    for (k, r) in grid.rs().iter().enumerate() {
        let _ = writeln!(profile, "{r:e},{:e},{:e}", sol.potential.values[k], sol.density.values[k]);
    }
    art.text("profile.csv", &profile)?;

    let m = sol.distribution.mass();
    let j_max = sol.distribution.axial_current().iter().map(|j| j.abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let report = minimizer_certificate_vmfp(&sol, &s.potential, s.steady.perturbations, &CERTIFICATE_EPS, &mut rng);
    let bound = massless_lower_bound(config.mass, &s.potential, &grid, &momentum);
    let mut checks = vec![
        Check::at_most("poisson_residual", sol.residual(), tolerances::POISSON_RESIDUAL),
        Check::at_most("mass_error_relative", (m - config.mass).abs() / config.mass, tolerances::MASS_DRIFT),
        Check::at_most("current_max_relative", j_max / sol.density.max(), 1e-12),
        Check::at_least("reduced_entropy_minus_bound", reduced_entropy_vmfp(&sol.distribution, &s.potential) - bound, 0.0),
    ];
    certificate_checks(&report, &mut checks);
    Ok(checks)
}

/// Fixed sample points for the static-equation residual.
pub fn static_sample_points(n: usize, rng: &mut impl Rng) -> Vec<([f64; 3], [f64; 3])> {
    (0..n)
        .map(|_| {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            (x, p)
        })
        .collect()
}

fn steady_vnfp(s: &Scenario, art: &mut Artifacts) -> Result<Vec<Check>, Error> {
    let (grid, momentum, config) = radial_setup(s)?;
    let sol = vnfp_steady(&s.potential, &grid, &momentum, &config)?;
    art.text("convergence.csv", &convergence_csv(&sol.iteration.log))?;
    let mut cont = String::from("mass,iterations,contraction_ratio,u_min,u_max,converged\n");
    for c in &sol.continuation {
        let _ = writeln!(cont, "{:e},{},{:e},{:e},{:e},{}", c.mass, c.iterations, c.contraction_ratio, c.range.0, c.range.1, c.converged);
    }
    art.text("continuation.csv", &cont)?;
    let mut profile = String::from("r,phi0,source\n");
    for (k, r) in grid.rs().iter().enumerate() {
        let _ = writeln!(profile, "{r:e},{:e},{:e}", sol.phi0.values[k], sol.source.values[k]);
    }
    art.text("profile.csv", &profile)?;

    let first = sol.continuation[0];
    let (lo, hi) = sol
        .continuation
        .iter()
        .filter(|c| c.converged)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c.range.0), b.max(c.range.1)));
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let report = minimizer_certificate_vnfp(&sol, &s.potential, s.steady.perturbations, &CERTIFICATE_EPS, &mut rng);
    let (sob_l, sob_r) = sobolev_check(&sol.phi0);
    let (transport, collision) = vnfp_static_residual(&sol, &s.potential, &static_sample_points(20, &mut rng));
    let bound = massless_lower_bound(config.mass, &s.potential, &grid, &momentum);
    let energy = energy_vnfp(&sol.distribution, &sol.phi0, &s.potential).0;
    let mut checks = vec![
        Check::below("small_mass_contraction_ratio", first.contraction_ratio, 1.0),
        Check::at_least("iterate_min", lo, 0.0),
        Check::at_most("iterate_max", hi, 1.0),
        Check::at_most("field_residual", sol.residual(), tolerances::POISSON_RESIDUAL),
        Check::at_least("continuation_final_mass", sol.mass, config.mass),
        Check::at_most("mass_error_relative", (sol.distribution.mass() - config.mass).abs() / config.mass, tolerances::MASS_DRIFT),
        Check::at_most("sobolev_ratio", sob_l / sob_r, 1.0),
        Check::at_most("static_transport_residual", transport, 1e-6),
        Check::at_most("static_collision_residual", collision, 1e-6),
        Check::at_least("energy_minus_bound", energy - bound, 0.0),
    ];
    certificate_checks(&report, &mut checks);
    Ok(checks)
}

/// Random boost velocity with `0 < |u| <= 1`.
fn random_boost(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n2: f64 = v.iter().map(|c| c * c).sum();
        if n2 <= 1.0 && n2 > 1e-4 {
            return v;
        }
    }
}

/// Test function of the invariance suite in `dim` dimensions.
pub fn invariance_test_function(dim: usize) -> Result<TestFunction, Error> {
    TestFunction::gaussian_polynomial(vec![0.3, -0.2, 0.1][..dim].to_vec(), vec![0.4, 0.0, -0.3][..dim].to_vec(), 0.5, 0.2)
}

fn check_invariance(s: &Scenario, art: &mut Artifacts) -> Result<Vec<Check>, Error> {
    let opt = &s.invariance;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let points = sample_points(opt.dim, opt.points, opt.radius, &mut rng);
    let f = invariance_test_function(opt.dim)?;
    let h_min = opt.steps[opt.steps.len() - 1];
    let mut table = String::from("transform,boost,u_norm,h,friction,max_discrepancy\n");
    let mut min_order = [f64::INFINITY; 2];
    let mut min_control = [f64::INFINITY; 2];
    for b in 0..opt.boosts {
        let u = random_boost(opt.dim, &mut rng);
        let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        let lorentz = BoostVelocity::new(u.clone())?;
        let eval = |which: usize, beta: f64, h: f64| {
            if which == 0 {
                max_discrepancy(&lorentz_invariance_residual(&lorentz, &f, &points, beta, h))
            } else {
                max_discrepancy(&galilean_invariance_residual(&u, &f, &points, beta, h))
            }
        };
        for (which, name) in ["lorentz", "galilean"].iter().enumerate() {
            let errs: Vec<f64> = opt.steps.iter().map(|&h| eval(which, 0.0, h)).collect();
            for (h, e) in opt.steps.iter().zip(&errs) {
                let _ = writeln!(table, "{name},{b},{norm:e},{h:e},0,{e:e}");
            }
            let order = observed_orders(&errs).into_iter().fold(f64::INFINITY, f64::min);
            min_order[which] = min_order[which].min(order);
            let control = eval(which, opt.friction, h_min);
            let _ = writeln!(table, "{name},{b},{norm:e},{h_min:e},{:e},{control:e}", opt.friction);
            min_control[which] = min_control[which].min(control);
        }
    }
    art.text("invariance.csv", &table)?;
    Ok(vec![
        Check::at_least("lorentz_min_order", min_order[0], tolerances::INVARIANCE_ORDER),
        Check::at_least("galilean_min_order", min_order[1], tolerances::INVARIANCE_ORDER),
        Check::above("lorentz_friction_control", min_control[0], tolerances::FRICTION_CONTROL),
        Check::above("galilean_friction_control", min_control[1], tolerances::FRICTION_CONTROL),
    ])
}

fn check_lightcone(s: &Scenario, art: &mut Artifacts) -> Result<Vec<Check>, Error> {
    let f0 = initial_field(s)?;
    let x0 = s.initial.center();
    let mut checks = Vec::new();
    let raw = s.output.raw;
    for collisions in [true, false] {
        let mut variant = s.clone();
        variant.solver.collisions_enabled = collisions;
        let tag = if collisions { "collisional" } else { "collisionless" };
        let traj = if collisions {
            trajectory(&variant, f0.clone(), true, |k, t, f| art.snapshot(k, t, f, raw))?
        } else {
            trajectory(&variant, f0.clone(), true, |_, _, _| Ok(()))?
        };
        let name = if collisions { "diagnostics.csv".to_string() } else { format!("diagnostics_{tag}.csv") };
        art.text(&name, &traj.series.to_csv())?;
        let report = lightcone_check(&traj.states, 0.0, x0)?;
        checks.push(Check::at_least(format!("lightcone_margin_{tag}"), report.margin, 0.0));
        checks.push(Check::at_most(format!("mass_drift_{tag}"), traj.series.mass_drift(), tolerances::MASS_DRIFT));
    }
    Ok(checks)
}

/// `(name, quadrature, closed form)` rows of the oracle table.
pub fn oracle_table() -> Result<Vec<(String, f64, f64)>, Error> {
    let mut rows = Vec::new();
    for &a in &[0.5, 1.0, 2.0] {
        rows.push((format!("4*pi*a*K1(a) a={a}"), momentum_number_integral(a)?, 4.0 * std::f64::consts::PI * a * bessel_k(1.0, a)));
        rows.push((format!("4*pi*a^2*K2(a) a={a}"), momentum_density_integral(a)?, 4.0 * std::f64::consts::PI * a * a * bessel_k(2.0, a)));
        rows.push((format!("2*a*K1(a) a={a}"), momentum_density_integral_1d(a)?, 2.0 * a * bessel_k(1.0, a)));
    }
    Ok(rows)
}

/// Published roundings: `(name, printed value, half unit of the last printed digit, closed form)`.
pub fn printed_constants() -> [(&'static str, f64, f64, f64); 3] {
    let pi4 = 4.0 * std::f64::consts::PI;
    [
        ("4*pi*K1(1)", 7.5638, 5e-5, pi4 * bessel_k(1.0, 1.0)),
        ("4*pi*K2(1)", 20.418, 5e-4, pi4 * bessel_k(2.0, 1.0)),
        ("2*K1(1)", 1.2038145, 5e-8, 2.0 * bessel_k(1.0, 1.0)),
    ]
}

fn check_oracles(art: &mut Artifacts) -> Result<Vec<Check>, Error> {
    let mut table = String::from("quantity,quadrature,closed_form,abs_error\n");
    let mut checks = Vec::new();
    for (name, q, c) in oracle_table()? {
        let _ = writeln!(table, "{name},{q:.17e},{c:.17e},{:e}", (q - c).abs());
        checks.push(Check::at_most(format!("oracle {name}"), (q - c).abs(), tolerances::ORACLE));
    }
    for (name, printed, half_ulp, c) in printed_constants() {
        let _ = writeln!(table, "{name} printed,{printed:.17e},{c:.17e},{:e}", (printed - c).abs());
        checks.push(Check::at_most(format!("printed {name}"), (printed - c).abs(), half_ulp));
    }
    art.text("oracles.csv", &table)?;
    Ok(checks)
}
