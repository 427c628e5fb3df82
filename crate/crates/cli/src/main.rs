//! `psilp`: solve, simulate, verify, oracle and sweep for periodic optimal
//! control problems.

mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use periodic_silp::basis::{build_basis, BasisMode};
use periodic_silp::colgen::{run_colgen, ColGenConfig, ColGenError, ColGenState};
use periodic_silp::control::{
    check_optimality_conditions, verify_hjb, Certificate, FeedbackLaw, ValuePolynomial, CONTROL_TOL,
};
use periodic_silp::error::{LpError, SimError};
use periodic_silp::lp::{dense_grid_oracle, write_mps};
use periodic_silp::problem::{builtin, load_problem, ControlProblem};
use periodic_silp::simulate::{
    average_cost, detect_limit_cycle, empirical_moments, integrate_closed_loop, CycleConfig,
    Trajectory,
};
use periodic_silp::study::{sweep_degree, sweep_oracle_resolution, BasisKind, SweepResult};
use serde_json::json;

use report::{RunReport, Tolerances};

#[derive(Parser)]
#[command(name = "psilp", version, about = "Near-optimal periodic control via semi-infinite LP")]
struct Cli {
    /// Worker threads for pricing and matrix assembly (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run column generation and write report, certificate and iteration log.
    Solve(SolveArgs),
    /// Integrate the closed loop of a certificate and detect its limit cycle.
    Simulate(SimulateArgs),
    /// Check the HJB inequality of a certificate on a state grid.
    Verify(VerifyArgs),
    /// Solve the restricted LP on a dense uniform grid.
    Oracle(OracleArgs),
    /// Sweep the basis degree or the oracle grid resolution.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Tensor,
    Total,
}

impl BasisArg {
    fn kind(self) -> BasisKind {
        match self {
            BasisArg::Tensor => BasisKind::Tensor,
            BasisArg::Total => BasisKind::TotalDegree,
        }
    }
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Built-in problem name or path to a TOML problem file.
    #[arg(long, default_value = "pendulum")]
    problem: String,
}

#[derive(Args, Clone)]
struct BasisArgs {
    #[arg(long, default_value_t = 10)]
    degree: u32,
    #[arg(long, value_enum, default_value = "tensor")]
    basis: BasisArg,
    /// Use raw monomials instead of monomials of the box-normalized state.
    #[arg(long)]
    no_scaling: bool,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "PSILP_OUT_DIR", default_value = "psilp-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    basis: BasisArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Relative duality-gap tolerance.
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Pricing grid nodes per axis (comma-separated, one value for all axes).
    #[arg(long, value_delimiter = ',')]
    pricing_res: Option<Vec<usize>>,
    /// Initial grid nodes per axis (comma-separated).
    #[arg(long, value_delimiter = ',')]
    init_res: Option<Vec<usize>>,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the final restricted LP in MPS format.
    #[arg(long)]
    dump_lp: bool,
    /// Skip the closed-loop simulation.
    #[arg(long)]
    no_simulate: bool,
    /// Simulation horizon.
    #[arg(long, default_value_t = 80.0)]
    horizon: f64,
    /// State samples per axis for the HJB check.
    #[arg(long, default_value_t = 201)]
    verify_res: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    certificate: PathBuf,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    out: OutArgs,
    #[arg(long, default_value_t = 80.0)]
    horizon: f64,
    /// Initial state (comma-separated); defaults to the heaviest support point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-5)]
    eps_cycle: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    certificate: PathBuf,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    out: OutArgs,
    /// State samples per axis.
    #[arg(long, value_delimiter = ',', default_value = "201")]
    res: Vec<usize>,
    /// Reference value; defaults to the certificate objective.
    #[arg(long, allow_hyphen_values = true)]
    reference: Option<f64>,
    /// Allowed negative residual; defaults to gap + pricing + control tolerances.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    basis: BasisArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Grid nodes per axis (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "21")]
    res: Vec<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    basis: BasisArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Degrees to sweep with column generation.
    #[arg(long, value_delimiter = ',', conflicts_with = "resolutions")]
    degrees: Option<Vec<u32>>,
    /// Oracle resolutions to sweep at `--degree`.
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

/// Process exit classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Tolerance = 2,
    Infeasible = 3,
    Stalled = 4,
    Config = 5,
    Simulation = 6,
    Internal = 1,
}

impl Class {
    fn name(self) -> &'static str {
        match self {
            Class::Tolerance => "tolerance",
            Class::Infeasible => "infeasible",
            Class::Stalled => "stalled",
            Class::Config => "config",
            Class::Simulation => "simulation",
            Class::Internal => "internal",
        }
    }
}

struct Failure {
    class: Class,
    message: String,
}

impl Failure {
    fn new(class: Class, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error-class: config\n{e}");
            return ExitCode::from(Class::Config as u8);
        }
    }
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error-class: {}\n{}", f.class.name(), f.message);
            ExitCode::from(f.class as u8)
        }
    }
}

fn load(arg: &ProblemArgs) -> Result<ControlProblem, Failure> {
    if let Some(p) = builtin(&arg.problem) {
        return Ok(p);
    }
    let text = fs::read_to_string(&arg.problem).map_err(|e| {
        Failure::new(Class::Config, format!("cannot read problem '{}': {e}", arg.problem))
    })?;
    load_problem(&text).map_err(|e| Failure::new(Class::Config, e.to_string()))
}

fn mode(b: &BasisArgs) -> BasisMode {
    b.basis.kind().mode(b.degree)
}

fn write(dir: &Path, name: &str, contents: &str) -> CmdResult {
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(dir.join(name), contents))
        .map_err(|e| Failure::new(Class::Internal, format!("writing {}: {e}", dir.join(name).display())))
}

fn read_certificate(path: &Path, problem: &ControlProblem) -> Result<(Certificate, ValuePolynomial), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(Class::Config, format!("cannot read certificate {}: {e}", path.display())))?;
    let cert = Certificate::from_json(&text).map_err(|e| Failure::new(Class::Config, e.to_string()))?;
    let psi = cert
        .value_polynomial(problem)
        .map_err(|e| Failure::new(Class::Config, e.to_string()))?;
    Ok((cert, psi))
}

fn colgen_config(gap_tol: Option<f64>, max_iter: Option<usize>) -> ColGenConfig {
    let mut cfg = ColGenConfig::default();
    if let Some(g) = gap_tol {
        cfg.gap_tol = g;
    }
    if let Some(m) = max_iter {
        cfg.max_iterations = m;
    }
    cfg
}

fn sim_class(e: &SimError) -> Class {
    match e {
        SimError::Problem(_) => Class::Config,
        _ => Class::Simulation,
    }
}

fn cmd_solve(a: SolveArgs) -> CmdResult {
    let problem = load(&a.problem)?;
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let basis = build_basis(&problem, mode(&a.basis), !a.basis.no_scaling)
        .map_err(|e| Failure::new(Class::Config, e.to_string()))?;
    let independence = basis.gradient_independence(a.seed);
    timings.insert("basis".to_string(), t.elapsed().as_secs_f64());

    let mut cfg = colgen_config(a.gap_tol, a.max_iter);
    if let Some(r) = &a.pricing_res {
        cfg.pricing.resolution = r.clone();
    }
    if let Some(r) = &a.init_res {
        cfg.initial_resolution = r.clone();
    }
    cfg.validate().map_err(|e| Failure::new(Class::Config, e))?;

    let t = Instant::now();
    let outcome = run_colgen(&basis, &cfg);
    timings.insert("colgen".to_string(), t.elapsed().as_secs_f64());
    let out = &a.out.out;
    let (state, failure) = match outcome {
        Ok(s) => (s, None),
        Err(ColGenError::Lp(LpError::Infeasible { residual, row })) => {
            return Err(Failure::new(
                Class::Infeasible,
                format!("initial restricted LP infeasible (residual {residual:e}, row {row}); refine the initial grid"),
            ))
        }
        Err(ColGenError::Lp(e)) => return Err(Failure::new(Class::Internal, e.to_string())),
        Err(ColGenError::Config(e)) => return Err(Failure::new(Class::Config, e)),
        Err(e @ ColGenError::Stalled(_)) => {
            let msg = e.to_string();
            let ColGenError::Stalled(s) = e else { unreachable!() };
            (*s, Some(Failure::new(Class::Stalled, msg)))
        }
        Err(e @ ColGenError::MaxIterations(_)) => {
            let msg = e.to_string();
            let ColGenError::MaxIterations(s) = e else { unreachable!() };
            (*s, Some(Failure::new(Class::Tolerance, msg)))
        }
    };
    write(out, "iterations.csv", &state.iteration_csv())?;
    if a.dump_lp {
        write(out, "lp.mps", &write_mps(state.lp(), "RESTRICTED"))?;
    }
    let cert = Certificate::new(&basis, &state.certificate, state.objective).with_support(state.points(), &state.measure);
    write(out, "certificate.json", &cert.to_json())?;

    let mut report = base_report(&a, &problem, &basis, &cfg, &state, &cert, independence);
    if failure.is_none() {
        let psi = ValuePolynomial::new(basis.clone(), state.certificate.lambda.clone())
            .map_err(|e| Failure::new(Class::Internal, e.to_string()))?;
        let law = FeedbackLaw::new(psi);
        let t = Instant::now();
        let tol = cfg.gap_tol * state.objective.abs().max(1.0) + cfg.pricing.tolerance + CONTROL_TOL;
        let hjb = verify_hjb(&law, state.objective, &[a.verify_res], tol);
        report.hjb_residual_min = Some(hjb.minimum);
        timings.insert("verify".to_string(), t.elapsed().as_secs_f64());
        if !a.no_simulate {
            let t = Instant::now();
            let y0 = cert.support.first().map(|s| s.y.clone()).unwrap_or_default();
            match simulate(&law, &y0, a.horizon, &CycleConfig::default()) {
                Ok((_, cycle)) => fill_cycle(&mut report, &law, state.objective, &cycle, out)?,
                Err(e) => report.simulation_error = Some(e.to_string()),
            }
            timings.insert("simulate".to_string(), t.elapsed().as_secs_f64());
        }
    }
    report.timings = timings;
    write(out, "report.json", &report.to_json())?;
    println!(
        "{}: G = {:.10}, gap = {:.3e}, iterations = {}",
        report.status, report.g_final, report.gap, report.iterations
    );
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn base_report(
    a: &SolveArgs,
    problem: &ControlProblem,
    basis: &periodic_silp::basis::MonomialBasis,
    cfg: &ColGenConfig,
    state: &ColGenState,
    cert: &Certificate,
    independence: f64,
) -> RunReport {
    RunReport {
        problem: problem.name().to_string(),
        problem_hash: problem.source_hash().to_string(),
        basis_mode: basis.mode(),
        scaling: basis.scaling_enabled(),
        n: basis.len(),
        tolerances: Tolerances {
            gap: cfg.gap_tol,
            pricing: cfg.pricing.tolerance,
            control: CONTROL_TOL,
            lp_feasibility: cfg.lp.feasibility,
            lp_optimality: cfg.lp.optimality,
        },
        initial_resolution: cfg.initial_grid(problem),
        pricing_resolution: cfg.pricing.resolution.clone(),
        seed: a.seed,
        status: format!("{:?}", state.status),
        iterations: state.iteration,
        points: state.points().len(),
        g_final: state.objective,
        lambda0: state.certificate.lambda0,
        gap: state.gap(),
        relative_gap: state.relative_gap(),
        support: cert.support.clone(),
        lambda: state.certificate.lambda.clone(),
        gradient_independence: independence,
        t_star: None,
        average_cost: None,
        closure_error: None,
        hjb_residual_min: None,
        moment_residual_max: None,
        optimality: None,
        simulation_error: None,
        timings: BTreeMap::new(),
    }
}

fn simulate(law: &FeedbackLaw, y0: &[f64], horizon: f64, cfg: &CycleConfig) -> Result<(Trajectory, Trajectory), SimError> {
    let traj = integrate_closed_loop(law, y0, horizon, &cfg.integrator).map_err(|f| f.error)?;
    let cycle = detect_limit_cycle(&traj, law, cfg)?;
    Ok((traj, cycle))
}

fn fill_cycle(report: &mut RunReport, law: &FeedbackLaw, g: f64, cycle: &Trajectory, out: &Path) -> CmdResult {
    let cfg = CycleConfig::default();
    report.t_star = cycle.t_star;
    report.closure_error = cycle.closure_error;
    report.average_cost = average_cost(cycle).ok().map(|c| c.value);
    report.moment_residual_max = empirical_moments(cycle, law.psi().basis())
        .ok()
        .map(|m| m.max_normalized());
    report.optimality = Some(check_optimality_conditions(law, g, cycle, cfg.min_period));
    write(out, "period.csv", &cycle.to_csv())
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let problem = load(&a.problem)?;
    let (cert, psi) = read_certificate(&a.certificate, &problem)?;
    let law = FeedbackLaw::new(psi);
    let y0 = match a.y0 {
        Some(y) => y,
        None => cert
            .support
            .first()
            .map(|s| s.y.clone())
            .ok_or_else(|| Failure::new(Class::Config, "certificate has no support points; pass --y0"))?,
    };
    let cfg = CycleConfig {
        eps_cycle: a.eps_cycle,
        ..Default::default()
    };
    let out = &a.out.out;
    let traj = match integrate_closed_loop(&law, &y0, a.horizon, &cfg.integrator) {
        Ok(t) => t,
        Err(f) => {
            write(out, "trajectory.csv", &f.partial.to_csv())?;
            return Err(Failure::new(sim_class(&f.error), f.error.to_string()));
        }
    };
    write(out, "trajectory.csv", &traj.to_csv())?;
    let cycle = detect_limit_cycle(&traj, &law, &cfg).map_err(|e| {
        let hint = match e {
            SimError::NoLimitCycle { .. } => "; try a longer --horizon or a looser --eps-cycle",
            _ => "",
        };
        Failure::new(sim_class(&e), format!("{e}{hint}"))
    })?;
    write(out, "period.csv", &cycle.to_csv())?;
    let avg = average_cost(&cycle).map_err(|e| Failure::new(Class::Internal, e.to_string()))?;
    let moments = empirical_moments(&cycle, law.psi().basis()).map_err(|e| Failure::new(Class::Internal, e.to_string()))?;
    let opt = check_optimality_conditions(&law, cert.objective, &cycle, cfg.min_period);
    let summary = json!({
        "t_star": cycle.t_star,
        "closure_error": cycle.closure_error,
        "average_cost": avg.value,
        "average_cost_error": avg.error_estimate,
        "reference_objective": cert.objective,
        "moment_residual_max": moments.max_normalized(),
        "optimality": opt,
    });
    write(out, "cycle.json", &serde_json::to_string_pretty(&summary).expect("json"))?;
    println!(
        "T* = {:.6}, average cost = {:.8}, closure = {:.2e}",
        cycle.t_star.unwrap_or(f64::NAN),
        avg.value,
        cycle.closure_error.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let problem = load(&a.problem)?;
    let (cert, psi) = read_certificate(&a.certificate, &problem)?;
    let law = FeedbackLaw::new(psi);
    let g = a.reference.unwrap_or(cert.objective);
    let tol = a
        .tol
        .unwrap_or(a.gap_tol * g.abs().max(1.0) + periodic_silp::colgen::PricingConfig::default().tolerance + CONTROL_TOL);
    let r = verify_hjb(&law, g, &a.res, tol);
    write(&a.out.out, "verify.json", &serde_json::to_string_pretty(&r).expect("json"))?;
    println!(
        "minimum residual {:.3e} at {:?} ({} samples, {:.2}% below -{tol:.1e})",
        r.minimum,
        r.argmin,
        r.samples,
        100.0 * r.violation_fraction
    );
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::new(
            Class::Tolerance,
            format!("HJB inequality violated: minimum residual {:.6e}", r.minimum),
        ))
    }
}

fn cmd_oracle(a: OracleArgs) -> CmdResult {
    let problem = load(&a.problem)?;
    let basis = build_basis(&problem, mode(&a.basis), !a.basis.no_scaling)
        .map_err(|e| Failure::new(Class::Config, e.to_string()))?;
    let t = Instant::now();
    let r = dense_grid_oracle(&basis, &a.res).map_err(|e| match e {
        LpError::Infeasible { .. } => Failure::new(Class::Infeasible, format!("{e}; refine the grid")),
        LpError::GridTooLarge { .. } => Failure::new(Class::Config, e.to_string()),
        other => Failure::new(Class::Internal, other.to_string()),
    })?;
    let summary = json!({
        "problem": problem.name(),
        "basis_mode": basis.mode(),
        "n": basis.len(),
        "resolution": a.res,
        "columns": r.lp.len(),
        "objective": r.objective,
        "lambda0": r.certificate.lambda0,
        "support": r.measure.support.len(),
        "seconds": t.elapsed().as_secs_f64(),
    });
    write(&a.out.out, "oracle.json", &serde_json::to_string_pretty(&summary).expect("json"))?;
    println!("oracle objective {:.10} on {} columns", r.objective, r.lp.len());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let problem = load(&a.problem)?;
    let result: Result<SweepResult, _> = match (&a.degrees, &a.resolutions) {
        (Some(d), _) => sweep_degree(
            &problem,
            d,
            a.basis.basis.kind(),
            !a.basis.no_scaling,
            &colgen_config(a.gap_tol, a.max_iter),
        ),
        (None, Some(r)) => sweep_oracle_resolution(&problem, mode(&a.basis), !a.basis.no_scaling, r),
        (None, None) => return Err(Failure::new(Class::Config, "pass --degrees or --resolutions")),
    };
    let out = &a.out.out;
    match result {
        Ok(r) => {
            write(out, "sweep.csv", &r.to_csv())?;
            write(out, "sweep_summary.txt", &r.summary())?;
            print!("{}", r.summary());
            if r.ordering_holds() {
                Ok(())
            } else {
                Err(Failure::new(Class::Tolerance, "sweep ordering violated"))
            }
        }
        Err(e) => {
            write(out, "sweep.csv", &e.partial.to_csv())?;
            let class = match &e.source {
                periodic_silp::study::SweepFailure::ColGen(ColGenError::Stalled(_)) => Class::Stalled,
                periodic_silp::study::SweepFailure::ColGen(ColGenError::MaxIterations(_)) => Class::Tolerance,
                periodic_silp::study::SweepFailure::ColGen(ColGenError::Lp(LpError::Infeasible { .. }))
                | periodic_silp::study::SweepFailure::Lp(LpError::Infeasible { .. }) => Class::Infeasible,
                periodic_silp::study::SweepFailure::Order | periodic_silp::study::SweepFailure::Basis(_) => Class::Config,
                _ => Class::Internal,
            };
            Err(Failure::new(class, e.to_string()))
        }
    }
}
