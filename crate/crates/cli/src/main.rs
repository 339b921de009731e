use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rdciag::Method;
use rdciag_cli::{analyze_traces, parse_config, run_checks, run_comparison, run_experiment, CheckContext};
use rdciag_cli::{ExperimentConfig, ExperimentError, Report};

/// Seeded experiments for the RDCIAG dual solver.
///
/// Exit codes: 0 success, 1 other error, 2 divergence, 3 validation failure.
#[derive(Parser)]
#[command(name = "rdciag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config: a trace per seed plus report.txt.
    Solve {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run several methods on the config's problem against one reference.
    Compare {
        config: PathBuf,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit linear rates to existing trace files.
    Rate {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Fraction of leading rows to drop before fitting.
        #[arg(long, default_value_t = 0.2)]
        burn_in: f64,
    },
    /// Run the acceptance suite.
    Check {
        /// Criterion number or a substring of its name.
        #[arg(long)]
        filter: Option<String>,
        /// Directory holding the shipped `.cfg` files.
        #[arg(long, default_value = "configs")]
        configs: PathBuf,
    },
}

fn load(path: &Path) -> Result<(ExperimentConfig, PathBuf), ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((parse_config(&text, &base)?, base))
}

fn summarize(r: &Report) {
    let rate = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.8}"));
    println!(
        "{}: alpha {:.6e}, {} run(s), seed-mean rate {} vs theory {}",
        r.plan.method,
        r.plan.alpha,
        r.runs.len(),
        rate(r.mean_fit.as_ref().map(|f| f.empirical_rate)),
        rate(r.plan.theoretical_rate)
    );
}

fn execute(cmd: Command) -> Result<ExitCode, ExperimentError> {
    match cmd {
        Command::Solve { config, out } => {
            let (cfg, base) = load(&config)?;
            let report = run_experiment(&cfg, &base, &out)?;
            summarize(&report);
            println!("wrote {}", out.join("report.txt").display());
        }
        Command::Compare { config, methods, out } => {
            let (cfg, base) = load(&config)?;
            let methods = methods
                .iter()
                .map(|m| m.trim().parse::<Method>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
            for r in run_comparison(&cfg, &methods, &base, &out)? {
                summarize(&r);
            }
        }
        Command::Rate { traces, burn_in } => print!("{}", analyze_traces(&traces, burn_in)?),
        Command::Check { filter, configs } => {
            let ctx = CheckContext::new(configs);
            let outcomes = run_checks(filter.as_deref(), &ctx);
            for o in &outcomes {
                println!("{o}");
            }
            let passed = outcomes.iter().filter(|o| o.passed).count();
            println!("{passed}/{} criteria passed", outcomes.len());
            if passed < outcomes.len() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
