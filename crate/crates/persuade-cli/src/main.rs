//! Command-line front end for the persuade solver suite.
//!
//! Exit codes: 0 success, 2 bad input, 3 cap refusal, 4 numerical failure.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use persuade::election::{ElectionInstance, RelaxationParams};
use persuade::io;
use persuade::oracle::{self, BaselineRule, RelaxedRule};
use persuade::private::{exact_private_oracle, solve_private, PrivateError};
use persuade::public::{solve_public_capped, theoretical_q, PublicError, DEFAULT_GRID_CAP};
use persuade::semipublic::{solve_semipublic_capped, SemiPublicError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_BAD_INPUT: u8 = 2;
const EXIT_CAP_REFUSAL: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "persuade", version, about = "Signaling-scheme solvers for district-based elections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for an optimal signaling scheme.
    Solve(SolveArgs),
    /// Exact brute-force oracles for small instances.
    Oracle(OracleArgs),
    /// Monte-Carlo checks of the comparative-stability inequalities.
    Stability(StabilityArgs),
    /// Generate an instance file.
    Generate(GenerateArgs),
    /// Solve and re-verify the returned scheme with independent checks.
    Audit(SolveArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolveMode {
    Private,
    Public,
    Semipublic,
    /// Alias for `oracle --mode private`.
    OraclePrivate,
    /// Alias for `oracle --mode public`.
    OraclePublic,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    mode: SolveMode,
    /// Posterior grid granularity for public and semi-public solves.
    #[arg(long, default_value_t = 6)]
    q: u32,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    delta_district: f64,
    #[arg(long, default_value_t = 0.0)]
    delta_aggregate: f64,
    /// Approximation parameter; only used to display the theoretical grid
    /// granularity next to the requested one.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for report JSON/CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid size cap for q-uniform enumeration.
    #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
    cap: usize,
    /// Also dump every LP model in text format into the output directory.
    #[arg(long)]
    dump_lp: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleMode {
    Private,
    Public,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    mode: OracleMode,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StabilityRule {
    WDelta,
    WDeltaDelta,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = StabilityRule::WDelta)]
    g: StabilityRule,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Stability constant; defaults to the proven value (1/delta for
    /// w-delta, 1/delta^2 for w-delta-delta).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.05, 0.1])]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run the falsifiable configuration instead (expects violations).
    #[arg(long)]
    negative_control: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long, default_value_t = 2)]
    n_states: usize,
    #[arg(long, default_value_t = 1)]
    n_districts: usize,
    #[arg(long, default_value_t = 5)]
    voters_per_district: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    UniformRandom,
    Example1,
    ThresholdAdversarial,
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => run_solve(&args, false),
        Command::Audit(args) => run_solve(&args, true),
        Command::Oracle(args) => run_oracle(&args),
        Command::Stability(args) => run_stability(&args),
        Command::Generate(args) => run_generate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

/// `PERSUADE_SOLVER_THREADS` bounds the rayon pool used for grid evaluation
/// and Monte-Carlo trials.
fn configure_threads() {
    if let Ok(value) = std::env::var("PERSUADE_SOLVER_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build_global();
        }
    }
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn bad_input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_BAD_INPUT,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_BAD_INPUT,
            error,
        }
    }
}

impl From<PublicError> for Failure {
    fn from(error: PublicError) -> Self {
        let code = match &error {
            PublicError::GridCap { .. } => EXIT_CAP_REFUSAL,
            PublicError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_BAD_INPUT,
        };
        Failure {
            code,
            error: error.into(),
        }
    }
}

impl From<PrivateError> for Failure {
    fn from(error: PrivateError) -> Self {
        let code = match &error {
            PrivateError::CapExceeded { .. } => EXIT_CAP_REFUSAL,
            PrivateError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_BAD_INPUT,
        };
        Failure {
            code,
            error: error.into(),
        }
    }
}

impl From<SemiPublicError> for Failure {
    fn from(error: SemiPublicError) -> Self {
        let code = match &error {
            SemiPublicError::Grid(PublicError::GridCap { .. }) => EXIT_CAP_REFUSAL,
            SemiPublicError::Numerical(_) | SemiPublicError::Inconsistent { .. } => EXIT_NUMERICAL,
            _ => EXIT_BAD_INPUT,
        };
        Failure {
            code,
            error: error.into(),
        }
    }
}

impl From<oracle::OracleError> for Failure {
    fn from(error: oracle::OracleError) -> Self {
        let code = match &error {
            oracle::OracleError::StateCap { .. } | oracle::OracleError::VoterCap { .. } => {
                EXIT_CAP_REFUSAL
            }
            oracle::OracleError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_BAD_INPUT,
        };
        Failure {
            code,
            error: error.into(),
        }
    }
}

fn load_instance(path: &Path) -> Result<ElectionInstance, Failure> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::from)?;
    io::parse_instance(&bytes).map_err(Failure::bad_input)
}

fn prepare_out_dir(out: &Option<PathBuf>) -> Result<(), Failure> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::from)?;
    }
    Ok(())
}

fn write_artifact(out: &Option<PathBuf>, name: &str, content: &str) -> Result<(), Failure> {
    if let Some(dir) = out {
        std::fs::write(dir.join(name), content)
            .with_context(|| format!("writing {name}"))
            .map_err(Failure::from)?;
    }
    Ok(())
}

fn run_solve(args: &SolveArgs, audit_mode: bool) -> Result<(), Failure> {
    let instance = load_instance(&args.instance)?;
    prepare_out_dir(&args.out)?;
    if args.dump_lp {
        persuade::lp::set_debug_dump_dir(args.out.clone());
    }
    let relax = RelaxationParams::new(args.delta_district, args.delta_aggregate, args.epsilon)
        .map_err(Failure::bad_input)?;
    if let Some(eta) = args.eta {
        let beta = if args.delta_district > 0.0 {
            1.0 / (args.delta_district * args.delta_district)
        } else {
            1.0
        };
        if args.epsilon > 0.0 {
            println!(
                "theoretical q for eta={eta}, beta={beta}: {:.1} (using q={})",
                theoretical_q(eta, beta, args.epsilon),
                args.q
            );
        }
    }

    match args.mode {
        SolveMode::OraclePrivate => {
            println!("value {:.6}", exact_private_oracle(&instance)?);
        }
        SolveMode::OraclePublic => {
            println!("value {:.6}", oracle::exact_public_oracle(&instance)?);
        }
        SolveMode::Private => {
            let report = solve_private(&instance)?;
            println!("value {:.6}", report.value);
            println!(
                "audit {} (max violation {:.2e})",
                if report.audit.pass { "pass" } else { "FAIL" },
                report.audit.max_violation
            );
            write_artifact(&args.out, "private_report.json", &io::private_report_json(&report))?;
            write_artifact(
                &args.out,
                "private_marginals.csv",
                &io::private_marginals_csv(&instance, &report),
            )?;
            if audit_mode && !report.audit.pass {
                return Err(Failure {
                    code: EXIT_NUMERICAL,
                    error: anyhow::anyhow!("persuasiveness audit failed"),
                });
            }
        }
        SolveMode::Public => {
            let report = solve_public_capped(&instance, args.q, &relax, args.cap)?;
            println!("value {:.6}", report.value);
            println!(
                "audit {} (max violation {:.2e}), bayes residual {:.2e}",
                if report.audit.pass { "pass" } else { "FAIL" },
                report.audit.max_violation,
                report.scheme.bayes_residual(&instance)
            );
            write_artifact(&args.out, "public_report.json", &io::public_report_json(&report))?;
            let signals = io::public_signals_csv(&instance, &report)?;
            write_artifact(&args.out, "public_signals.csv", &signals)?;
            if audit_mode {
                let residual = report.scheme.bayes_residual(&instance);
                if !report.audit.pass || residual > 1e-7 {
                    return Err(Failure {
                        code: EXIT_NUMERICAL,
                        error: anyhow::anyhow!("scheme re-check failed"),
                    });
                }
            }
        }
        SolveMode::Semipublic => {
            let report = solve_semipublic_capped(
                &instance,
                args.q,
                args.epsilon,
                args.delta_district,
                args.cap,
            )?;
            println!("value {:.6}", report.value);
            println!(
                "audit {} (max violation {:.2e})",
                if report.audit.pass { "pass" } else { "FAIL" },
                report.audit.max_violation
            );
            write_artifact(
                &args.out,
                "semipublic_report.json",
                &io::semipublic_report_json(&instance, &report),
            )?;
            let trace = io::semipublic_simulation_csv(&instance, &report, 1000, args.seed)?;
            write_artifact(&args.out, "semipublic_simulation.csv", &trace)?;
            if audit_mode && !report.audit.pass {
                return Err(Failure {
                    code: EXIT_NUMERICAL,
                    error: anyhow::anyhow!("persuasiveness audit failed"),
                });
            }
        }
    }
    Ok(())
}

fn run_oracle(args: &OracleArgs) -> Result<(), Failure> {
    let instance = load_instance(&args.instance)?;
    let value = match args.mode {
        OracleMode::Private => exact_private_oracle(&instance)?,
        OracleMode::Public => oracle::exact_public_oracle(&instance)?,
    };
    println!("value {:.6}", value);
    Ok(())
}

fn run_stability(args: &StabilityArgs) -> Result<(), Failure> {
    let instance = load_instance(&args.instance)?;
    prepare_out_dir(&args.out)?;
    if !(0.0..1.0).contains(&args.delta) || args.delta <= 0.0 {
        return Err(Failure {
            code: EXIT_BAD_INPUT,
            error: anyhow::anyhow!("delta must lie in (0, 1)"),
        });
    }
    let report = if args.negative_control {
        oracle::negative_control(&instance, args.delta, &args.alphas, args.trials, args.seed)
    } else {
        let (rule, default_beta) = match args.g {
            StabilityRule::WDelta => (RelaxedRule::WDelta, 1.0 / args.delta),
            StabilityRule::WDeltaDelta => {
                (RelaxedRule::WDeltaDelta, 1.0 / (args.delta * args.delta))
            }
        };
        oracle::check_comparative_stability(
            &instance,
            rule,
            BaselineRule::W,
            args.delta,
            args.beta.unwrap_or(default_beta),
            &args.alphas,
            args.trials,
            args.seed,
        )
    };
    println!(
        "cells {} violations {} worst ratio {:.4}",
        report.cells.len(),
        report.violation_count,
        report.worst_ratio
    );
    write_artifact(&args.out, "stability_report.json", &io::stability_report_json(&report))?;
    write_artifact(&args.out, "stability_cells.csv", &io::stability_cells_csv(&report))?;
    Ok(())
}

fn run_generate(args: &GenerateArgs) -> Result<(), Failure> {
    let family = match args.family {
        Family::UniformRandom => io::InstanceFamily::UniformRandom,
        Family::Example1 => io::InstanceFamily::Example1,
        Family::ThresholdAdversarial => io::InstanceFamily::ThresholdAdversarial,
    };
    if args.n_states == 0 || args.n_districts == 0 || args.voters_per_district == 0 {
        return Err(Failure {
            code: EXIT_BAD_INPUT,
            error: anyhow::anyhow!("dimensions must be positive"),
        });
    }
    let instance = io::generate_instance(&io::GenerateSpec {
        family,
        n_states: args.n_states,
        n_districts: args.n_districts,
        voters_per_district: args.voters_per_district,
        seed: args.seed,
    });
    let json = io::serialize_instance(&instance);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(Failure::from)?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}
