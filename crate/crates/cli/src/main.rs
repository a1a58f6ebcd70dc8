use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperid::experiments::verify::{self, Check};
use hyperid::experiments::{
    build_scenario, compare_methods, emit_comparison, emit_outputs, run_experiment, ExperimentError, Overrides,
    ScenarioSpec,
};
use hyperid::sensitivity::PlateOperator;

const BUILT_IN: &[&str] = &["exp1", "exp2", "exp3", "homogeneous", "custom"];

#[derive(Parser)]
#[command(name = "hyperid", version, about = "Identify stiffness coefficients of a hyperelastic plate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize data for a scenario and invert it with one method.
    Run(RunArgs),
    /// Run Landweber and RESESOP on identical data.
    Compare(CompareArgs),
    /// Run the oracle suites.
    Selftest {
        /// Also run the desk-scale sensitivity and time-stepping checks
        /// (several minutes).
        #[arg(long)]
        full: bool,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in scenario (exp1, exp2, exp3, homogeneous, custom) or a
    /// key = value config file.
    #[arg(long)]
    scenario: String,
    /// Absolute noise level.
    #[arg(long)]
    delta: Option<f64>,
    /// Noise level relative to the exact data norm.
    #[arg(long, conflicts_with = "delta")]
    relative_noise: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Tangential cone constant.
    #[arg(long)]
    ctc: Option<f64>,
    /// Landweber damping; derived from the operator norm when omitted.
    #[arg(long)]
    omega: Option<f64>,
    /// Number of RESESOP search directions.
    #[arg(long)]
    directions: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Synthesize data on a once-refined mesh.
    #[arg(long)]
    mitigate_inverse_crime: bool,
    /// Extra `key=value` settings in the config-file vocabulary.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Also write the Jacobian at the final coefficients.
    #[arg(long)]
    jacobian: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = ["landweber", "resesop"])]
    method: Option<String>,
    #[command(flatten)]
    common: ScenarioArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: ScenarioArgs,
}

fn resolve(args: &ScenarioArgs, method: Option<&str>) -> Result<ScenarioSpec, ExperimentError> {
    let (base, mut overrides) = if BUILT_IN.contains(&args.scenario.as_str()) {
        (args.scenario.clone(), Overrides::new())
    } else {
        let path = Path::new(&args.scenario);
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        ("custom".to_string(), Overrides::parse(&text)?)
    };
    let mut cli = Overrides::new();
    let flags: [(&str, Option<String>); 9] = [
        ("method", method.map(str::to_string)),
        ("delta", args.delta.map(|v| v.to_string())),
        ("relative_noise", args.relative_noise.map(|v| v.to_string())),
        ("tau", args.tau.map(|v| v.to_string())),
        ("ctc", args.ctc.map(|v| v.to_string())),
        ("omega", args.omega.map(|v| v.to_string())),
        ("directions", args.directions.map(|v| v.to_string())),
        ("max_iterations", args.max_iter.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cli.set(key, v)?;
        }
    }
    if args.mitigate_inverse_crime {
        cli.set("mitigate_inverse_crime", "true")?;
    }
    for pair in &args.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| ExperimentError::Config(format!("--set expects KEY=VALUE, got '{pair}'")))?;
        cli.set(k.trim(), v)?;
    }
    overrides.merge(&cli)?;
    build_scenario(&base, &overrides)
}

fn run(args: &RunArgs) -> Result<(), ExperimentError> {
    let spec = resolve(&args.common, args.method.as_deref())?;
    let report = run_experiment(&spec)?;
    let op = PlateOperator::new(spec.forward_problem()?);
    let written = emit_outputs(&report, &op, &args.common.out, args.common.jacobian)?;
    println!(
        "{} on {}: {} iterations, stopped by {}, residual {:.4e} (target {:.4e}), relative error {:.3}",
        report.method,
        spec.name,
        report.iterations,
        report.reason,
        report.final_residual,
        report.target_residual,
        report.relative_error
    );
    if let Some(f) = &report.failure {
        println!("forward failure: {f}");
    }
    let alpha = &report.alpha_final.coefficients;
    println!("alpha in [{:.4}, {:.4}], wall time {:.1} s", alpha.min(), alpha.max(), report.wall_time);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<(), ExperimentError> {
    let spec = resolve(&args.common, None)?;
    let cmp = compare_methods(&spec)?;
    let op = PlateOperator::new(spec.forward_problem()?);
    let written = emit_comparison(&cmp, &op, &args.common.out, args.common.jacobian)?;
    for r in [&cmp.resesop, &cmp.landweber] {
        println!(
            "{:<9} {:>4} iterations, {:<21} residual {:.4e}, monotone {}, wall time {:.1} s",
            r.method.to_string(),
            r.iterations,
            r.reason.to_string(),
            r.final_residual,
            r.residual_monotone(),
            r.wall_time
        );
    }
    match (cmp.landweber_iterations_to_match, cmp.iteration_ratio()) {
        (Some(n), Some(q)) => println!("Landweber reached the RESESOP residual after {n} iterations (ratio {q:.1})"),
        _ => println!("Landweber did not reach the RESESOP residual within the iteration cap"),
    }
    println!("wrote {} files under {}", written.len(), args.common.out.display());
    Ok(())
}

fn selftest(full: bool) -> bool {
    let mut checks: Vec<Check> = vec![
        verify::geometry_oracle_suite(1, 200, 1e-3),
        verify::intersection_stationarity(2, 100),
        verify::material_checks(5),
        verify::linear_fixture_checks(),
        verify::resesop_invariants(7),
    ];
    let (problem_name, overrides) = if full {
        ("desk", Overrides::new())
    } else {
        let mut o = Overrides::new();
        for (k, v) in [("surface_knots", "5"), ("thickness_knots", "2"), ("steps", "4"), ("dt", "0.5")] {
            o.set(k, v).expect("known key");
        }
        ("small", o)
    };
    match build_scenario("exp1", &overrides).and_then(|s| Ok((s.forward_problem()?, s.truth()))) {
        Ok((problem, alpha)) => {
            println!("sensitivity checks on the {problem_name} mesh");
            checks.push(verify::adjoint_identity(&problem, if full { 20 } else { 5 }, 3, 1e-10));
            checks.push(verify::derivative_check(&problem, &alpha, 1e-3, &[0.4, 0.2, 0.1], 1e-4));
            if full {
                checks.push(verify::forward_sanity(&problem, 256, 2));
            }
        }
        Err(e) => checks.push(Check::new("problem setup", false, e.to_string())),
    }
    for c in &checks {
        println!("{c}");
    }
    checks.iter().all(|c| c.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::Selftest { full } => {
            return if selftest(*full) { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
