use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use preqcode::checks::CheckLevel;
use preqcode_cli::config::{parse_grid, parse_list};
use preqcode_cli::{
    cmd_check, cmd_families, cmd_probe, cmd_simulate, fmt_f64, write_family_rows,
    write_scenario_list, CliError, ExperimentConfig, PathChoice, WORKERS_ENV,
};

#[derive(Parser)]
#[command(
    name = "preqcode",
    version,
    about = "Redundancy experiments for prequential plug-in codes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fisher information, its second derivative, the fourth KL derivative
    /// and the variance of a family at one mean value, as CSV
    Families {
        /// Family string, e.g. `poisson` or `gamma_k(k=2)`
        #[arg(long)]
        family: String,
        #[arg(long)]
        mu: f64,
    },
    /// Shipped source/model scenarios, as CSV
    ListScenarios,
    /// Redundancy curves and slope fits for a set of coding rules
    Simulate(RunArgs),
    /// Slope fits for a zoo of in-model estimators (KL-sum path)
    ProbeTheorem1 {
        #[command(flatten)]
        run: RunArgs,
        /// Flag coefficients below variance_ratio minus this margin
        #[arg(long, default_value_t = 0.4)]
        margin: f64,
    },
    /// Internal consistency checks
    Check {
        #[arg(long, value_enum, default_value_t = Level::Fast)]
        level: Level,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Fast,
    Full,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated rule strings (estimator strings for the probe)
    #[arg(long)]
    rules: Option<String>,
    /// `pow2(lo,hi)` or a list such as `100,1000,10000`
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// direct, klsum or both
    #[arg(long)]
    path: Option<String>,
    #[arg(long)]
    burn_in: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[arg(long)]
    n0: Option<f64>,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                ExperimentConfig::from_text(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.scenario {
            cfg.scenario = v;
        }
        if let Some(v) = self.rules {
            cfg.rules = parse_list(&v)?;
        }
        if let Some(v) = self.n_grid {
            cfg.n_grid = parse_grid(&v)?;
        }
        if let Some(v) = self.reps {
            cfg.reps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.path {
            cfg.path = PathChoice::parse(&v)?;
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.x0 = self.x0.or(cfg.x0);
        cfg.n0 = self.n0.or(cfg.n0);
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout_err = |e: csv::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: io::Error::other(e),
    };
    match cli.command {
        Command::Families { family, mu } => {
            let row = cmd_families(&family, mu)?;
            write_family_rows(&[row], io::stdout().lock()).map_err(stdout_err)?;
        }
        Command::ListScenarios => write_scenario_list(io::stdout().lock()).map_err(stdout_err)?,
        Command::Simulate(args) => {
            let out = cmd_simulate(&args.into_config()?)?;
            for (path, _) in &out.curves {
                println!("wrote {}", path.display());
            }
            for note in &out.notes {
                println!("note: {note}");
            }
            for r in &out.fits {
                println!(
                    "{} {} [{}]: coefficient {} +/- {}",
                    r.scenario,
                    r.rule,
                    r.path,
                    fmt_f64(r.fit.coefficient),
                    fmt_f64(r.fit.confidence_halfwidth)
                );
            }
            println!("wrote {}", out.fits_path.display());
        }
        Command::ProbeTheorem1 { run, margin } => {
            let out = cmd_probe(&run.into_config()?, margin)?;
            for r in &out.rows {
                let flag = if r.null_exception {
                    " (constant at mu*, null-set exception)"
                } else if r.below_bound {
                    " BELOW variance ratio"
                } else {
                    ""
                };
                println!(
                    "{}: coefficient {} +/- {} vs variance ratio {}{flag}",
                    r.estimator,
                    fmt_f64(r.fit.coefficient),
                    fmt_f64(r.fit.confidence_halfwidth),
                    fmt_f64(r.variance_ratio)
                );
            }
            println!("wrote {}", out.path.display());
        }
        Command::Check { level, workers } => {
            let level = match level {
                Level::Fast => CheckLevel::Fast,
                Level::Full => CheckLevel::Full,
            };
            let report = cmd_check(level, workers)?;
            for o in &report.outcomes {
                println!("{o}");
            }
            let failed = report.outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
