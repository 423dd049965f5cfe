use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smallball::estimator::StageEvent;
use smallball_cli::commands::{execute, Task};
use smallball_cli::config::{validate_config, ExperimentConfig, MethodChoice};
use smallball_cli::plotdata::PlotKind;
use smallball_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "spde", version, about = "Small-ball probabilities of the stochastic heat equation")]
struct Cli {
    /// JSON experiment config; defaults apply to every omitted field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one path and store the field at the checkpoints.
    Simulate,
    /// Estimate ball probabilities at one radius or a sweep.
    Smallball(SmallballArgs),
    /// Tail frequencies of the linear equation's box supremum.
    Tail(TailArgs),
    /// Distance between the equation and its frozen-coefficient comparison.
    Couple(ReplicaArgs),
    /// Check that clipping the coefficient is invisible before exit.
    ClipCheck(ClipArgs),
    /// Density martingale and Cauchy–Schwarz comparison for a constant drift.
    GirsanovCheck(GirsanovArgs),
    /// Fit decay exponents to a small-ball CSV.
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Convert a result CSV into plot coordinates.
    Plotdata {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
    },
    /// Check a config and print its resolved form.
    Validate,
}

#[derive(Args)]
struct ReplicaArgs {
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Args)]
struct SmallballArgs {
    #[arg(long, value_parser = parse_method)]
    method: Option<MethodChoice>,
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated radii.
    #[arg(long, value_delimiter = ',')]
    eps_sweep: Option<Vec<f64>>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// `pinned` or `path_only`.
    #[arg(long, value_parser = parse_stage_event)]
    stage_event: Option<StageEvent>,
}

#[derive(Args)]
struct TailArgs {
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',')]
    lambda_list: Option<Vec<f64>>,
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Args)]
struct ClipArgs {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Args)]
struct GirsanovArgs {
    #[arg(long)]
    g_bound: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
}

fn parse_method(s: &str) -> Result<MethodChoice, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown method {s:?}"))
}

fn parse_stage_event(s: &str) -> Result<StageEvent, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown stage event {s:?}"))
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
            validate_config(&raw).map_err(CliError::Invalid)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.out {
        config.output.directory = o.display().to_string();
    }
    Ok(config)
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("SPDE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::invalid("SPDE_THREADS", format!("expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::invalid("SPDE_THREADS", e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let mut c = load(&cli)?;
    let task = match cli.command {
        Command::Validate => {
            let issues = smallball_cli::config::check(&c);
            if !issues.is_empty() {
                return Err(CliError::Invalid(issues));
            }
            return emit(&serde_json::to_string_pretty(&c)?);
        }
        Command::Simulate => Task::Simulate,
        Command::Smallball(a) => {
            set(&mut c.estimator.method, a.method);
            set(&mut c.event.eps, a.eps);
            set(&mut c.event.eps_sweep, a.eps_sweep);
            set(&mut c.estimator.replicas, a.replicas);
            set(&mut c.estimator.particles, a.particles);
            set(&mut c.mesh.beta, a.beta);
            set(&mut c.estimator.stage_event, a.stage_event);
            Task::Smallball
        }
        Command::Tail(a) => {
            set(&mut c.tail.a, a.a);
            set(&mut c.tail.eps, a.eps);
            set(&mut c.tail.lambdas, a.lambda_list);
            set(&mut c.estimator.replicas, a.replicas);
            Task::Tail
        }
        Command::Couple(a) => {
            set(&mut c.estimator.replicas, a.replicas);
            Task::Couple
        }
        Command::ClipCheck(a) => {
            set(&mut c.event.eps, a.eps);
            set(&mut c.estimator.replicas, a.replicas);
            Task::ClipCheck
        }
        Command::GirsanovCheck(a) => {
            set(&mut c.girsanov.g_bound, a.g_bound);
            set(&mut c.girsanov.replicas, a.replicas);
            Task::GirsanovCheck
        }
        Command::Fit { input } => Task::Fit { input },
        Command::Plotdata { input, kind } => Task::Plotdata { input, kind },
    };
    let paths: Vec<String> = execute(&task, &c)?.iter().map(|p| p.display().to_string()).collect();
    emit(&paths.join("\n"))
}

/// Prints to stdout, treating a closed pipe (`spde validate | head`) as success.
fn emit(text: &str) -> CliResult<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("writing to stdout", e)),
        _ => Ok(()),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
