//! Command line front end for the meeting processing pipeline.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a pipeline
//! stage fails.

mod plots;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wasn_core::config::{ArrayMode, InitMode, PipelineConfig, SyncMode};
use wasn_core::diarize::parse_rttm;
use wasn_core::evaluate::der;
use wasn_core::pipeline;

#[derive(Parser)]
#[command(name = "wasn", version, about = "Meeting front-end for ad-hoc microphone array networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate simulated meetings (multichannel WAVs plus ground truth).
    Simulate(RunArgs),
    /// Run the processing pipeline and write metrics and artifacts.
    Run(RunArgs),
    /// Compare the metric tables of completed runs and render plots.
    Compare(CompareArgs),
    /// Score a hypothesis RTTM against a reference RTTM.
    Score(ScoreArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (relative paths resolve against WASN_DATA_ROOT).
    #[arg(long)]
    out: PathBuf,
    /// Named preset; `desk` is ten 60 s meetings with default noise.
    #[arg(long)]
    preset: Option<String>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the meeting count.
    #[arg(long)]
    meetings: Option<usize>,
    /// Override the meeting duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Synchronization mode: est, coarse-only, or oracle.
    #[arg(long)]
    sync: Option<String>,
    /// Mixture model initialization: informed, dirichlet, or oracle-diary.
    #[arg(long)]
    init: Option<String>,
    /// Array selection: multi, or single:<index>.
    #[arg(long)]
    arrays: Option<String>,
    /// Skip the mixture model and beamforming.
    #[arg(long)]
    skip_separation: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories to compare (two or more).
    #[arg(required = true, num_args = 2..)]
    runs: Vec<PathBuf>,
    /// Also render plots for each run.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    hypothesis: PathBuf,
    /// Collar in seconds around reference boundaries.
    #[arg(long, default_value_t = 0.25)]
    collar: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => with_config(&args).and_then(|(cfg, out)| {
            pipeline::export_simulation(&cfg, &out).map_err(stage_error)?;
            println!("simulated {} meetings into {}", cfg.simulate.num_meetings, out.display());
            Ok(ExitCode::SUCCESS)
        }),
        Command::Run(args) => with_config(&args).and_then(|(cfg, out)| {
            let summary = pipeline::run(&cfg, &out).map_err(stage_error)?;
            for row in summary.table.summary() {
                println!(
                    "{} / sync {} / init {}: {} meetings, DER {} %, SI-SDR {} dB",
                    row.system,
                    row.sync,
                    row.init,
                    row.meetings,
                    row.der_mean.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
                    row.si_sdr_mean.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
                );
            }
            if summary.failures.is_empty() {
                println!("artifacts in {}", out.display());
                Ok(ExitCode::SUCCESS)
            } else {
                for (meeting, error) in &summary.failures {
                    eprintln!("{meeting}: {error}");
                }
                Ok(ExitCode::from(3))
            }
        }),
        Command::Compare(args) => run_compare(&args),
        Command::Score(args) => run_score(&args),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Stage(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}

enum CliError {
    Config(String),
    Stage(String),
}

fn stage_error(e: wasn_core::Error) -> CliError {
    match e {
        wasn_core::Error::InvalidConfig(msg) => CliError::Config(msg),
        other => CliError::Stage(other.to_string()),
    }
}

/// Resolve the output directory against WASN_DATA_ROOT and assemble the
/// configuration from file, preset and overrides.
fn with_config(args: &RunArgs) -> Result<(PipelineConfig, PathBuf), CliError> {
    let mut cfg = match (&args.config, args.preset.as_deref()) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str::<PipelineConfig>(&text)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        (None, Some("desk")) | (None, None) => PipelineConfig::desk_preset(),
        (None, Some(other)) => {
            return Err(CliError::Config(format!("unknown preset '{other}'")));
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.meetings {
        cfg.simulate.num_meetings = n;
    }
    if let Some(d) = args.duration {
        cfg.simulate.duration_s = d;
    }
    if let Some(sync) = &args.sync {
        cfg.sync = match sync.as_str() {
            "est" | "estimated" => SyncMode::Estimated,
            "coarse-only" | "coarse" => SyncMode::CoarseOnly,
            "oracle" | "perfect" => SyncMode::Oracle,
            other => return Err(CliError::Config(format!("unknown sync mode '{other}'"))),
        };
    }
    if let Some(init) = &args.init {
        cfg.init = match init.as_str() {
            "informed" => InitMode::Informed,
            "dirichlet" => InitMode::Dirichlet,
            "oracle-diary" => InitMode::OracleDiary,
            other => return Err(CliError::Config(format!("unknown init mode '{other}'"))),
        };
    }
    if let Some(arrays) = &args.arrays {
        cfg.arrays = if arrays == "multi" {
            ArrayMode::Multi
        } else if let Some(index) = arrays.strip_prefix("single:") {
            let j: usize = index
                .parse()
                .map_err(|_| CliError::Config(format!("bad array index '{index}'")))?;
            ArrayMode::Single(j)
        } else {
            return Err(CliError::Config(format!("unknown arrays mode '{arrays}'")));
        };
    }
    if args.skip_separation {
        cfg.skip_separation = true;
    }
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok((cfg, resolve_path(&args.out)))
}

fn resolve_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("WASN_DATA_ROOT") {
        Some(root) => PathBuf::from(root).join(path),
        None => path.to_path_buf(),
    }
}

fn run_compare(args: &CompareArgs) -> Result<ExitCode, CliError> {
    let dirs: Vec<PathBuf> = args.runs.iter().map(|p| resolve_path(p)).collect();
    let comparison = pipeline::compare(&dirs).map_err(stage_error)?;
    print!("{}", comparison.to_text());
    if args.plots {
        for dir in &dirs {
            let plot_dir = dir.join("plots");
            if let Err(e) = plots::render_run_plots(dir, &plot_dir) {
                eprintln!("plots for {}: {e}", dir.display());
            } else {
                println!("plots in {}", plot_dir.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_score(args: &ScoreArgs) -> Result<ExitCode, CliError> {
    let read = |p: &PathBuf| -> Result<_, CliError> {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        parse_rttm(&text).map_err(|e| CliError::Config(e.to_string()))
    };
    let reference = read(&args.reference)?;
    let hypothesis = read(&args.hypothesis)?;
    let result = der(&reference, &hypothesis, args.collar).map_err(stage_error)?;
    println!(
        "DER {:.2} % (missed {:.2} s, false alarm {:.2} s, confusion {:.2} s, scored {:.2} s)",
        result.der_percent,
        result.missed_s,
        result.false_alarm_s,
        result.confusion_s,
        result.scored_s
    );
    Ok(ExitCode::SUCCESS)
}
