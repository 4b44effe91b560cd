use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use causal_mi::data::MatchOn;
use causal_mi::io::{self, AnalysisConfig, SurveyMissingness};
use causal_mi::sim::{self, Format, Scenario, ScenarioSpec, StudyConfig};
use causal_mi::wild_bootstrap::WeightScheme;
use causal_mi::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "causal-mi", version, about = "ACE estimation after multiple imputation with wild-bootstrap variance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo study on a built-in scenario.
    Simulate(SimulateArgs),
    /// Impute, estimate and bootstrap a CSV dataset.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write m completed copies of a CSV dataset.
    Impute {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Overrides `mi.m` from the config.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a synthetic survey-like CSV for trying out `analyze`.
    Synthesize {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = io::SURVEY_N)]
        n: usize,
        /// About 35% missing instead of about 10%.
        #[arg(long)]
        amplified: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// Comma-separated imputation counts.
    #[arg(long, default_value = "5")]
    m: String,
    #[arg(long = "B", default_value_t = 300)]
    b: usize,
    #[arg(long, default_value = "mammen")]
    weights: String,
    #[arg(long, default_value = "all")]
    estimators: String,
    #[arg(long, default_value_t = 1)]
    matches: usize,
    #[arg(long, default_value_t = 1500)]
    gibbs_iters: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long, default_value_t = 200)]
    cond_draws: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Table destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Also write the congeniality diagnostics table here.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

fn parse_m(list: &str) -> causal_mi::Result<Vec<usize>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse '{s}' as an imputation count")))
        })
        .collect()
}

fn write_or_print(path: Option<&Path>, text: &str) -> causal_mi::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> causal_mi::Result<()> {
    let scenario: Scenario = a.scenario.parse()?;
    let format: Format = a.format.parse()?;
    let scheme: WeightScheme = a.weights.parse()?;
    let config = StudyConfig {
        reps: a.reps,
        m_values: parse_m(&a.m)?,
        kinds: io::parse_estimators(&a.estimators, a.matches, MatchOn::Covariates)?,
        b: a.b,
        scheme,
        gibbs_iterations: a.gibbs_iters,
        burn_in: a.burn_in,
        cond_draws: a.cond_draws,
        level: a.level,
        ..StudyConfig::desk(ScenarioSpec::new(scenario, a.n), a.seed)
    };
    let report = sim::run_study(&config)?;
    if report.failed > 0 {
        log::warn!("{} of {} replications failed and were excluded", report.failed, report.reps);
    }
    write_or_print(a.out.as_deref(), &sim::emit(&report, format)?)?;
    if let Some(path) = a.diagnostics {
        std::fs::write(path, sim::emit_diagnostics(&report, format)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> causal_mi::Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze { data, config, out } => {
            let config = AnalysisConfig::load(&config)?;
            let dataset = io::load_csv(&data, &config.roles)?;
            let report = io::analyze(&dataset, &config)?;
            let manifest = io::write_report(&out, &report)?;
            log::info!("wrote {} and {}", out.display(), manifest.display());
            Ok(())
        }
        Command::Impute {
            data,
            config,
            m,
            out_dir,
        } => {
            let mut config = AnalysisConfig::load(&config)?;
            if let Some(m) = m {
                config.m = m;
                config.check()?;
            }
            let dataset = io::load_csv(&data, &config.roles)?;
            let paths = io::impute_to_dir(&dataset, &config, &out_dir)?;
            log::info!("wrote {} imputations to {}", paths.len(), out_dir.display());
            Ok(())
        }
        Command::Synthesize { out, n, amplified, seed } => {
            let missingness = if amplified {
                SurveyMissingness::Amplified
            } else {
                SurveyMissingness::Base
            };
            let data = io::survey_like(n, missingness, seed);
            io::save_csv(&out, &data, &io::survey_roles())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            })
        }
    }
}
