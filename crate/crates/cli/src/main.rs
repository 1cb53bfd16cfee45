//! `lrcontrol`: run learning-rate controller experiments from a config file.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime divergence, 3 I/O error.
//! `LRCONTROL_SEED` overrides the config's `seed`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lrcontrol::config::parse_config;
use lrcontrol::data::write_fixture;
use lrcontrol::metrics::{aggregate, MetricsSummary};
use lrcontrol::report::{emit_summary, emit_trace_csv, render_summary, SummaryFormat};
use lrcontrol::sweep::{run_sweep, SweepParameter, SweepSpec};
use lrcontrol::{harness, Error, ExperimentConfig64};

const SEED_ENV: &str = "LRCONTROL_SEED";

#[derive(Parser)]
#[command(
    name = "lrcontrol",
    version,
    about = "Learning-rate controller experiments on streaming batches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and report its metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Per-epoch trace CSV.
        #[arg(long)]
        out_trace: Option<PathBuf>,
        /// Summary file; JSON if the extension is .json unless --format says otherwise.
        #[arg(long)]
        out_summary: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run one experiment per value of a parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// initial_lr or schedule.
        #[arg(long)]
        param: String,
        /// Comma-separated values; schedule values may be written kind@lr.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out_summary: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Write the two-image IDX fixture pair.
    GenFixtures {
        #[arg(long, default_value = "fixtures")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Config(String),
    Diverged(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Diverged(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Diverged(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_)
            | Error::InvalidSchedule(_)
            | Error::Data(_)
            | Error::Shape(_)
            | Error::InvalidNetwork(_) => Failure::Config(msg),
            Error::Io { .. } | Error::Idx { .. } => Failure::Io(msg),
            _ => Failure::Diverged(msg),
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig64, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("reading {}: {e}", path.display())))?;
    let mut config = parse_config(&text)?;
    if let Ok(seed) = std::env::var(SEED_ENV) {
        config.base_seed = seed
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("{SEED_ENV} must be a nonnegative integer, got '{seed}'")))?;
    }
    Ok(config)
}

fn summary_format(path: &Path, format: Option<Format>) -> SummaryFormat {
    match format {
        Some(Format::Csv) => SummaryFormat::Csv,
        Some(Format::Json) => SummaryFormat::Json,
        None => SummaryFormat::from_path(path),
    }
}

fn report(rows: &[(String, MetricsSummary<f64>)], out: Option<&Path>, format: Option<Format>) -> Result<(), Failure> {
    print!("{}", render_summary(rows, SummaryFormat::Csv));
    if let Some(path) = out {
        emit_summary(rows, path, summary_format(path, format))?;
    }
    Ok(())
}

fn run(
    config: &Path,
    out_trace: Option<&Path>,
    out_summary: Option<&Path>,
    format: Option<Format>,
) -> Result<(), Failure> {
    let config = load_config(config)?;
    let trace = harness::run_experiment(&config)?;
    if let Some(path) = out_trace {
        emit_trace_csv(&trace, path)?;
    }
    for d in &trace.divergences {
        eprintln!(
            "run {} diverged at batch {} epoch {} (lr {}): {}",
            d.run, d.batch, d.epoch_global, d.lr, d.reason
        );
    }
    match aggregate(&trace) {
        Ok(summary) => report(&[(config.schedule.kind.to_string(), summary)], out_summary, format)?,
        Err(e) if trace.divergences.is_empty() => return Err(e.into()),
        Err(_) => {}
    }
    if trace.divergences.is_empty() {
        Ok(())
    } else {
        Err(Failure::Diverged(format!(
            "{} of {} runs diverged",
            trace.divergences.len(),
            trace.runs
        )))
    }
}

fn sweep(
    config: &Path,
    param: &str,
    values: &str,
    out_summary: Option<&Path>,
    format: Option<Format>,
) -> Result<(), Failure> {
    let base = load_config(config)?;
    let parameter = SweepParameter::from_name(param).ok_or_else(|| {
        Failure::Config(format!(
            "unknown sweep parameter '{param}', expected initial_lr or schedule"
        ))
    })?;
    let spec = SweepSpec::new(base, parameter, values)?;
    let rows = run_sweep(&spec)?;
    let diverged: usize = rows.iter().map(|r| r.trace.divergences.len()).sum();
    let summaries: Vec<_> = rows.into_iter().map(|r| (r.label, r.summary)).collect();
    report(&summaries, out_summary, format)?;
    if diverged > 0 {
        return Err(Failure::Diverged(format!("{diverged} runs diverged across the sweep")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out_trace,
            out_summary,
            format,
        } => run(config, out_trace.as_deref(), out_summary.as_deref(), *format),
        Command::Sweep {
            config,
            param,
            values,
            out_summary,
            format,
        } => sweep(config, param, values, out_summary.as_deref(), *format),
        Command::GenFixtures { out_dir } => write_fixture(out_dir)
            .map(|(images, labels)| println!("wrote {} and {}", images.display(), labels.display()))
            .map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
