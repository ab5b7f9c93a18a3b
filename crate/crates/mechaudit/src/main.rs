use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mechaudit::config::{load_config, AuditKind, ExperimentConfig};
use mechaudit::game::solve_parameters;
use mechaudit::instances::digital_goods_error_bound;
use mechaudit::runner::{deterministic_json, emit_report, render_csv, run_experiment, ReportFormat};

#[derive(Parser)]
#[command(name = "mechaudit", version, about = "Privacy-aware mechanism audit runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's Monte Carlo trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Directory to write the report into.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct BuiltinArgs {
    /// Number of agents.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run every audit requested by the config.
    Run(RunArgs),
    /// Run only the differential-privacy audit.
    AuditDp(RunArgs),
    /// Run only the truthfulness-dominance audit.
    AuditDominance(RunArgs),
    /// Run only the accuracy audit.
    AuditAccuracy(RunArgs),
    /// Evaluate the closed-form parameter setting.
    SolveParams {
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Outcome-utility gap of the underlying game.
        #[arg(long)]
        gap: f64,
        /// Number of alternatives.
        #[arg(long)]
        alternatives: usize,
        /// Sensitivity of the objective function.
        #[arg(long, default_value_t = 1.0)]
        sensitivity: f64,
    },
    /// Audit the builtin electronic poll.
    Poll {
        #[command(flatten)]
        common: BuiltinArgs,
        /// Number of magazines.
        #[arg(long)]
        m: usize,
        /// Outcome-utility gap for a non-favorite magazine.
        #[arg(long, default_value_t = 0.5)]
        g: f64,
    },
    /// Audit the builtin digital-goods pricing game.
    DigitalGoods {
        #[command(flatten)]
        common: BuiltinArgs,
        /// Price grid resolution: valuations and prices live on the 1/q grid.
        #[arg(long)]
        q: usize,
    },
}

fn run_and_report(config: &ExperimentConfig, out: Option<&PathBuf>, format: Format) -> ExitCode {
    let report = match run_experiment(config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let rendered = match format {
        Format::Json => deterministic_json(&report).expect("report serializes"),
        Format::Csv => render_csv(&report),
    };
    println!("{rendered}");
    if let Some(dir) = out {
        match emit_report(&report, dir, format.into()) {
            Ok(paths) => {
                for p in paths {
                    eprintln!("wrote {}", p.display());
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run_subcommand(args: &RunArgs, only: Option<AuditKind>) -> ExitCode {
    let mut config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(kind) = only {
        config.audits = Some(vec![kind]);
    }
    run_and_report(&config, args.out.as_ref(), args.format)
}

fn builtin_config(common: &BuiltinArgs, instance: toml::Value) -> ExperimentConfig {
    let mut root = toml::map::Map::new();
    root.insert("instance".into(), instance);
    root.insert(
        "mechanism".into(),
        toml::Value::try_from(toml::toml! {
            solve = true
        })
        .unwrap(),
    );
    let mut config: ExperimentConfig = root
        .try_into()
        .expect("builtin instance tables deserialize");
    config.mechanism.alpha = common.alpha;
    config.seed = common.seed;
    config.trials = common.trials;
    config
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run_subcommand(&args, None),
        Command::AuditDp(args) => run_subcommand(&args, Some(AuditKind::Dp)),
        Command::AuditDominance(args) => run_subcommand(&args, Some(AuditKind::Dominance)),
        Command::AuditAccuracy(args) => run_subcommand(&args, Some(AuditKind::Accuracy)),
        Command::SolveParams {
            n,
            alpha,
            gap,
            alternatives,
            sensitivity,
        } => match solve_parameters(n, alpha, gap, alternatives, sensitivity) {
            Ok(solved) => {
                println!("{}", serde_json::to_string_pretty(&solved).unwrap());
                if solved.feasible {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Poll { common, m, g } => {
            let instance = toml::Value::try_from(toml::toml! {
                builtin = "poll"
                n = 0
                m = 0
            })
            .unwrap();
            let mut instance = instance;
            instance["n"] = toml::Value::Integer(common.n as i64);
            instance["m"] = toml::Value::Integer(m as i64);
            instance
                .as_table_mut()
                .unwrap()
                .insert("g".into(), toml::Value::Float(g));
            let config = builtin_config(&common, instance);
            run_and_report(&config, common.out.as_ref(), common.format)
        }
        Command::DigitalGoods { common, q } => {
            let mut instance = toml::Value::try_from(toml::toml! {
                builtin = "digital-goods"
                n = 0
                q = 0
            })
            .unwrap();
            instance["n"] = toml::Value::Integer(common.n as i64);
            instance["q"] = toml::Value::Integer(q as i64);
            let config = builtin_config(&common, instance);
            match digital_goods_error_bound(common.n as u64, common.alpha, q) {
                Ok(bound) => eprintln!(
                    "revenue error bound: {} (vacuous: {})",
                    bound.bound, bound.vacuous
                ),
                Err(e) => eprintln!("bound unavailable: {e}"),
            }
            run_and_report(&config, common.out.as_ref(), common.format)
        }
    }
}
