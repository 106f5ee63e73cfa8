use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use harness_cli::artifacts::{read_rows, write_json, write_rows, DiagramRow, MetricsRow};
use harness_cli::experiment::{oracle, run_dir_name, run_experiment, trace_model};
use harness_cli::model::load_model;
use harness_cli::plot::{bifurcation_svg, learning_curve_svg};
use harness_cli::report::{compare_report, mean_curves};
use harness_cli::{HarnessError, Result, RunConfig};
use rl_driver::Method;

#[derive(Parser)]
#[command(name = "voi-pathfollow", version, about = "Value-of-information exploration with path following")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Svg,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Print a configuration with every default filled in.
    Init,
    /// Train every configured method on every seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace the solution set for a model's optimal costs, without learning.
    Trace {
        /// Model JSON, or an environment spec JSON.
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        theta_max: f64,
        #[arg(long)]
        out: PathBuf,
        /// Configuration supplying the remaining continuation settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed used when `--mdp` holds an environment spec.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Blahut-Arimoto solutions at the given parameter values, as JSON.
    Oracle {
        #[arg(long)]
        mdp: PathBuf,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare methods in an experiment directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write plots for an experiment or trace directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Svg)]
        format: Format,
    },
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::usage(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_toml(&text)
}

/// Configuration stored alongside an experiment, or the defaults.
fn stored_config(dir: &Path) -> Result<RunConfig> {
    let path = dir.join("config.toml");
    if path.exists() {
        read_config(&path)
    } else {
        Ok(RunConfig::default())
    }
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(HarnessError::usage(format!("{} is not a directory", dir.display())))
    }
}

/// Diagram of a trace directory, or of the first path-following run.
fn find_diagram(dir: &Path, config: &RunConfig) -> Option<PathBuf> {
    let direct = dir.join("diagram.csv");
    if direct.exists() {
        return Some(direct);
    }
    config
        .seeds
        .iter()
        .map(|&s| dir.join("runs").join(run_dir_name(Method::PathFollowing, s)).join("diagram.csv"))
        .find(|p| p.exists())
}

fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init => emit(&RunConfig::default().to_toml())?,
        Command::Run { config, out } => {
            let config = read_config(&config)?;
            let out = out.unwrap_or_else(|| config.output_dir.clone());
            let summary = run_experiment(&config, &out)?;
            let failed: Vec<String> =
                summary.failures().map(|r| format!("{}: {}", r.dir.display(), r.error.as_deref().unwrap_or(""))).collect();
            eprintln!("{} runs written to {}", summary.runs.len(), out.display());
            if !failed.is_empty() {
                return Err(HarnessError::Runtime(anyhow::anyhow!("{} runs failed:\n{}", failed.len(), failed.join("\n"))));
            }
        }
        Command::Trace { mdp, theta_max, out, config, seed } => {
            let mut config = match config {
                Some(path) => read_config(&path)?,
                None => RunConfig::default(),
            };
            config.trace.theta_max = theta_max;
            config.validate()?;
            let model = load_model(&mdp, seed)?;
            let trace = trace_model(&config, &model, &out)?;
            let points: usize = trace.branches.iter().map(|b| b.points.len()).sum();
            eprintln!("{} branches, {points} points written to {}", trace.branches.len(), out.display());
        }
        Command::Oracle { mdp, theta, seed } => {
            let model = load_model(&mdp, seed)?;
            let solutions = oracle(&model, &theta)?;
            emit(&(serde_json::to_string_pretty(&solutions)? + "\n"))?;
        }
        Command::Report { input } => {
            require_dir(&input)?;
            let config = stored_config(&input)?;
            let metrics: Vec<MetricsRow> = read_rows(&input.join("metrics.csv"))?;
            let report = compare_report(&metrics, &config.report)?;
            emit(&report.to_table())?;
            write_json(&input.join("report.json"), &report)?;
        }
        Command::Plot { input, format } => {
            require_dir(&input)?;
            let config = stored_config(&input)?;
            let metrics_path = input.join("metrics.csv");
            let diagram_path = find_diagram(&input, &config);
            if !metrics_path.exists() && diagram_path.is_none() {
                return Err(HarnessError::Runtime(anyhow::anyhow!("no metrics.csv or diagram.csv in {}", input.display())));
            }
            if metrics_path.exists() {
                let metrics: Vec<MetricsRow> = read_rows(&metrics_path)?;
                let curves = mean_curves(&metrics, &config.report);
                match format {
                    Format::Svg => std::fs::write(input.join("learning_curves.svg"), learning_curve_svg(&curves))?,
                    Format::Csv => {
                        let rows: Vec<(String, usize, f64)> = curves
                            .iter()
                            .flat_map(|(m, v)| v.iter().enumerate().map(move |(i, c)| (m.clone(), i, *c)))
                            .collect();
                        write_rows(&input.join("learning_curves.csv"), &rows, &["method", "episode", "smoothed_cost"])?;
                    }
                }
            }
            if let Some(path) = diagram_path {
                let rows: Vec<DiagramRow> = read_rows(&path)?;
                match format {
                    Format::Svg => std::fs::write(input.join("bifurcation.svg"), bifurcation_svg(&rows))?,
                    Format::Csv => write_rows(&input.join("bifurcation.csv"), &rows, &["theta", "branch_id", "n_state_groups"])?,
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
