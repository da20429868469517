use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use evac_core::benders_conv::bc_solve;
use evac_core::benders_nc::bn_solve;
use evac_core::clearance::{clearance_benders, clearance_cg, clearance_cpg, ClearanceConfig, ClearanceResult};
use evac_core::colgen::{cg_solve, CgParams};
use evac_core::cpg::{cpg_solve, CpgParams};
use evac_core::eval::{compare_methods, validate_plan};
use evac_core::io::{generate_instance, write_json, write_probes_csv, write_trace_csv, GenSpec, InstanceFile, PlanFile, PLAN_VERSION};
use evac_core::mp::SolveOptions;
use evac_core::network::{ResponseCurve, StaticGraph, TimeExpandedGraph};
use evac_core::report::{Method, RunConfig, SolveReport, Solved};
use evac_core::zepp_mip::{solve_zepp_mip, ZeppOptions};

const BACKEND_VAR: &str = "EVAC_LP_BACKEND";

#[derive(Parser)]
#[command(name = "evac", version, about = "Zone-based evacuation planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance.
    Gen(GenArgs),
    /// Plan an evacuation.
    Solve(SolveArgs),
    /// Find the smallest horizon evacuating everyone.
    Clearance(SolveArgs),
    /// Check a plan file against its instance.
    Validate(ValidateArgs),
    /// Tabulate several runs of one instance.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Small,
    Hn80,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "small")]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Demand scaling factor.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    zones: Option<usize>,
    #[arg(long)]
    transit: Option<usize>,
    #[arg(long)]
    safe: Option<usize>,
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Mip,
    Bn,
    Bc,
    Cpg,
    Cg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Setting {
    Deadline,
    MinClearance,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, short)]
    instance: PathBuf,
    #[arg(long, short, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "deadline")]
    setting: Setting,
    #[arg(long)]
    contraflow: bool,
    /// Pareto-optimal cuts for the convergent Benders method.
    #[arg(long)]
    pareto: bool,
    /// Response rates for column generation, vehicles per step.
    #[arg(long, value_delimiter = ',', default_values_t = [2u64, 6, 10, 25, 50])]
    curves: Vec<u64>,
    /// Elementary pricing for column generation.
    #[arg(long)]
    elementary: bool,
    /// Path cost weights for travel time, pool usage and utilization.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    alpha: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the instance horizon, in steps.
    #[arg(long)]
    horizon: Option<u32>,
    /// Seconds for the whole run.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Seconds per horizon probe in clearance searches.
    #[arg(long)]
    probe_limit: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Integer flows in the direct model.
    #[arg(long)]
    integer_flows: bool,
    /// Write every solved model in LP format here.
    #[arg(long)]
    dump_models: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, short)]
    instance: PathBuf,
    #[arg(long, short)]
    plan: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, short)]
    instance: PathBuf,
    /// Output directories of `solve` runs.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(b) = std::env::var(BACKEND_VAR) {
        if !b.eq_ignore_ascii_case("highs") {
            eprintln!("error: {BACKEND_VAR}={b} is not available; only `highs` is built in");
            return ExitCode::from(2);
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) if a.setting == Setting::MinClearance => clearance(a),
        Command::Solve(a) => solve(a),
        Command::Clearance(a) => clearance(a),
        Command::Validate(a) => validate(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

type Res = Result<bool, Box<dyn std::error::Error>>;

fn gen(a: GenArgs) -> Res {
    let mut spec = match a.preset {
        Preset::Small => GenSpec::small(a.seed),
        Preset::Hn80 => GenSpec::hn80(a.seed),
    };
    spec.scale = a.scale;
    spec.zones = a.zones.unwrap_or(spec.zones);
    spec.transit = a.transit.unwrap_or(spec.transit);
    spec.safe = a.safe.unwrap_or(spec.safe);
    spec.horizon_steps = a.horizon.unwrap_or(spec.horizon_steps);
    let f = generate_instance(&spec);
    f.to_graph()?;
    f.save(&a.out)?;
    Ok(true)
}

fn secs(s: Option<f64>) -> Option<Duration> {
    s.map(Duration::from_secs_f64)
}

fn run_config(a: &SolveArgs) -> RunConfig {
    let mut run = RunConfig {
        contraflow: a.contraflow,
        time_limit: secs(a.time_limit),
        backend: SolveOptions { seed: a.seed, dump_dir: a.dump_models.clone(), ..SolveOptions::default() },
        ..RunConfig::default()
    };
    if let Some(m) = a.max_iterations {
        run.max_iterations = m;
    }
    run
}

fn cpg_params(a: &SolveArgs) -> Result<CpgParams, String> {
    let mut p = CpgParams { seed: a.seed, ..CpgParams::default() };
    if let Some(w) = &a.alpha {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err("alpha weights must be nonnegative and sum to 1".into());
        }
        p.alpha = [w[0], w[1], w[2]];
    }
    if let Some(m) = a.max_iterations {
        p.max_iterations = m;
    }
    Ok(p)
}

fn cg_params(a: &SolveArgs) -> Result<CgParams, String> {
    if a.curves.is_empty() {
        return Err("at least one response rate is needed".into());
    }
    let curves = a.curves.iter().map(|&r| ResponseCurve::step(r)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    Ok(CgParams { curves, elementary: a.elementary, ..CgParams::default() })
}

fn load(path: &Path) -> Result<(InstanceFile, StaticGraph), Box<dyn std::error::Error>> {
    let f = InstanceFile::load(path)?;
    let g = f.to_graph()?;
    Ok((f, g))
}

fn method_of(m: MethodArg) -> Method {
    match m {
        MethodArg::Mip => Method::Mip,
        MethodArg::Bn => Method::BendersNc,
        MethodArg::Bc => Method::BendersConv,
        MethodArg::Cpg => Method::Cpg,
        MethodArg::Cg => Method::ColGen,
    }
}

fn solve_with(a: &SolveArgs, g: &StaticGraph, horizon: u32) -> Result<Solved, Box<dyn std::error::Error>> {
    let teg = TimeExpandedGraph::build(g, horizon, true)?;
    let run = run_config(a);
    let s = match a.method {
        MethodArg::Mip => {
            let opts = ZeppOptions { contraflow: a.contraflow, convergent: false, integer_flows: a.integer_flows };
            solve_zepp_mip(&teg, &opts, &run)?
        }
        MethodArg::Bn => bn_solve(&teg, a.contraflow, &run)?,
        MethodArg::Bc => bc_solve(&teg, a.contraflow, a.pareto, &run)?,
        MethodArg::Cpg => cpg_solve(&teg, a.contraflow, &cpg_params(a)?, &run)?,
        MethodArg::Cg => cg_solve(&teg, a.contraflow, &cg_params(a)?, &run)?,
    };
    Ok(s)
}

/// Writes plan, report, trace and validation; true when the plan validates.
fn write_run(out: &Path, f: &InstanceFile, g: &StaticGraph, s: &mut Solved) -> Result<bool, Box<dyn std::error::Error>> {
    std::fs::create_dir_all(out)?;
    s.report.instance = f.meta.name.clone();
    let v = validate_plan(g, &s.plan, s.report.contraflow);
    let plan = PlanFile {
        version: PLAN_VERSION,
        instance: f.meta.name.clone(),
        method: s.report.method.name().to_string(),
        contraflow: s.report.contraflow,
        step_minutes: f.meta.step_minutes,
        plan: s.plan.clone(),
    };
    plan.save(&out.join("plan.json"))?;
    write_json(&out.join("report.json"), &s.report)?;
    write_trace_csv(&out.join("trace.csv"), &s.report.trace)?;
    write_json(&out.join("validation.json"), &v)?;
    println!(
        "{}: evacuated {:.0}/{} ({:.2}%), outcome {:?}, {} iterations, {:.2}s, plan {}",
        s.report.method.name(),
        s.report.evacuated,
        s.report.total_demand,
        s.report.evacuated_pct,
        s.report.outcome,
        s.report.iterations,
        s.report.wall_seconds,
        if v.ok { "valid" } else { "INVALID" }
    );
    for viol in &v.violations {
        println!("  violation: {viol:?}");
    }
    Ok(v.ok)
}

fn solve(a: SolveArgs) -> Res {
    let (f, g) = load(&a.instance)?;
    let horizon = a.horizon.unwrap_or(f.meta.horizon_steps);
    let mut s = solve_with(&a, &g, horizon)?;
    info!("solved {} with {}", f.meta.name, s.report.method.name());
    write_run(&a.out, &f, &g, &mut s)
}

fn clearance(a: SolveArgs) -> Res {
    let (f, g) = load(&a.instance)?;
    let max_horizon = a.horizon.unwrap_or(f.meta.horizon_steps);
    let mut cfg = ClearanceConfig::new(max_horizon);
    cfg.contraflow = a.contraflow;
    cfg.pareto = a.pareto;
    cfg.run = RunConfig { time_limit: secs(a.probe_limit), ..run_config(&a) };
    cfg.total_limit = secs(a.time_limit);
    let method = method_of(a.method);
    let mut result: ClearanceResult = match a.method {
        MethodArg::Bn | MethodArg::Bc => clearance_benders(method, &g, &cfg)?,
        MethodArg::Cpg => clearance_cpg(&g, &cpg_params(&a)?, &cfg)?,
        MethodArg::Cg => {
            let s = solve_with(&a, &g, max_horizon)?;
            let mut r = clearance_cg(&g, &s);
            r.solved = Some(s);
            r
        }
        MethodArg::Mip => return Err("clearance search is available for bn, bc, cpg and cg".into()),
    };
    std::fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("clearance.json"), &result)?;
    write_probes_csv(&a.out.join("probes.csv"), &result.probes)?;
    let minutes = result.h_star.map(|h| h * f.meta.step_minutes);
    println!(
        "{}: clearance {:?} steps ({:?} min), lower bound {}, status {:?}, certified {}",
        method.name(),
        result.h_star,
        minutes,
        result.h_dagger.unwrap_or(result.lower),
        result.status,
        result.certified
    );
    match result.solved.as_mut() {
        Some(s) => write_run(&a.out, &f, &g, s),
        None => Ok(false),
    }
}

fn validate(a: ValidateArgs) -> Res {
    let (_, g) = load(&a.instance)?;
    let p = PlanFile::load(&a.plan)?;
    let v = validate_plan(&g, &p.plan, p.contraflow);
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(v.ok)
}

fn compare(a: CompareArgs) -> Res {
    let (_, g) = load(&a.instance)?;
    let mut runs = Vec::new();
    for dir in &a.runs {
        let plan = PlanFile::load(&dir.join("plan.json"))?;
        let report: SolveReport = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?;
        runs.push(Solved { plan: plan.plan, report });
    }
    let rows = compare_methods(&g, &runs)?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows.iter().all(|r| r.valid))
}
