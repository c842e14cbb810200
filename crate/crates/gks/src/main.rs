use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gks_core::interior::IpOptions;
use gks_core::statespace::stack;
use gks_core::{ConstraintSet, ScalarLoss, SmootherProblem};

use gks::config::{Experiment, ExperimentConfig};
use gks::experiments::run_experiment;
use gks::model_io::read_model;
use gks::solvers::{run_solver, SolverKind, SolverSettings};
use gks::table::Table;
use gks::BenchError;

#[derive(Parser)]
#[command(name = "gks", version, about = "Generalized Kalman smoothing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smooth the data in a JSON model file and print the state estimate as CSV.
    Smooth(SmoothArgs),
    /// Run one of the benchmark experiments.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SmoothArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "ip")]
    solver: SolverKind,
    /// Measurement loss, e.g. `l2`, `l1`, `huber:kappa=1`.
    #[arg(long, default_value = "l2")]
    measurement_loss: String,
    /// Process loss.
    #[arg(long, default_value = "l2")]
    process_loss: String,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Bound every state component to `[lo, hi]`.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    bounds: Option<Vec<f64>>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    ip_theta: Option<f64>,
    #[arg(long)]
    ip_eps: Option<f64>,
    #[arg(long)]
    ip_max_iters: Option<usize>,
    /// Write the estimate here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(value_parser = parse_experiment)]
    experiment: Experiment,
    /// TOML overrides of the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse().map_err(|e: BenchError| e.to_string())
}

fn parse_loss(s: &str) -> Result<ScalarLoss, BenchError> {
    s.parse().map_err(|e| BenchError::Config(format!("loss {s:?}: {e}")))
}

fn smooth(a: &SmoothArgs) -> Result<(), BenchError> {
    let model = read_model(&a.model)?;
    let sys = stack(&model)?;
    let dim = sys.dim();
    let set = match &a.bounds {
        Some(b) => ConstraintSet::Box {
            lo: gks_core::DVector::from_element(dim, b[0]),
            hi: gks_core::DVector::from_element(dim, b[1]),
        },
        None => ConstraintSet::Unconstrained,
    };
    let problem = SmootherProblem::new(sys, parse_loss(&a.measurement_loss)?, parse_loss(&a.process_loss)?, a.gamma, set)
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let defaults = IpOptions::default();
    let settings = SolverSettings {
        eps: a.eps,
        max_iters: a.max_iters,
        tau: a.tau,
        sigma: a.sigma,
        ip: IpOptions {
            eps: a.ip_eps.unwrap_or(defaults.eps),
            max_iters: a.ip_max_iters.unwrap_or(defaults.max_iters),
            theta: a.ip_theta.unwrap_or(defaults.theta),
            ..defaults
        },
    };
    let report = run_solver(a.solver, &problem, &settings)?;
    let n = model.state_dim();
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let mut cols = vec!["t"];
    cols.extend(names.iter().map(String::as_str));
    let mut table = Table::new(&cols);
    for t in 0..report.x.len() / n {
        let mut row = vec![t as f64];
        row.extend(report.x.rows(t * n, n).iter());
        table.push(row);
    }
    eprintln!(
        "{}: {:?} after {} iterations, objective {:.12e}",
        a.solver,
        report.termination,
        report.iterations,
        problem.objective(&report.x)
    );
    match &a.out {
        Some(path) => table.write_csv(path),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(|v| gks::table::format_f64(*v)))?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn bench(a: &BenchArgs) -> Result<(), BenchError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml(a.experiment, &text)?
        }
        None => ExperimentConfig::defaults(a.experiment),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let summary = run_experiment(&cfg, &a.out)?;
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Smooth(a) => smooth(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
