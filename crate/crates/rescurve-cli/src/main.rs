//! `rescurve`: batch analytics for power-outage resilience curves.
//!
//! Subcommands cover the whole pipeline — `ingest` raw observations,
//! `select-k` a cluster count, `analyze` shapes and archetypes, `synth`
//! labeled test data, `plot` existing reports, and `run-all` end to end.
//! Every stochastic step takes an explicit `--seed`; reruns with the same
//! configuration produce byte-identical outputs.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rescurve::ingest::{IngestParams, Schema};
use rescurve::{Error, Result, TimeGrid};

use crate::commands::{
    cmd_analyze, cmd_ingest, cmd_plot, cmd_run_all, cmd_select_k, cmd_synth, AnalyzeArgs,
    IngestArgs, PlotArgs, RunAllArgs, RunAllInput, SelectKArgs, SynthArgs,
};
use crate::config::{layered, parse_grid_start, required, ArchetypeLayer, FileConfig};

#[derive(Parser)]
#[command(
    name = "rescurve",
    version,
    about = "Turn raw outage observations into clustered, classified resilience curves"
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports and plots (default "out").
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw outage CSV and emit a normalized curve-set file.
    Ingest(IngestCli),
    /// Sweep a k range and recommend a cluster count.
    SelectK(SelectKCli),
    /// Cluster at a fixed k and classify each cluster's archetype.
    Analyze(AnalyzeCli),
    /// Generate a labeled synthetic curve set from archetype templates.
    Synth(SynthCli),
    /// Re-render SVG plots from existing report files.
    Plot(PlotCli),
    /// Ingest (or load), select k, and analyze in one pass.
    RunAll(RunAllCli),
}

#[derive(Args)]
struct GridCli {
    /// Grid origin, RFC 3339 (e.g. 2021-08-28T00:00:00Z).
    #[arg(long)]
    grid_start: Option<String>,
    /// Grid step in seconds.
    #[arg(long)]
    grid_step: Option<u64>,
    /// Number of grid steps covering the observation window.
    #[arg(long)]
    n_steps: Option<usize>,
    /// Drop units with more than this fraction of grid cells empty.
    #[arg(long)]
    max_missing_ratio: Option<f64>,
    /// Drop units whose peak outage fraction never reaches this level.
    #[arg(long)]
    min_peak: Option<f64>,
}

impl GridCli {
    fn merge(&self, file: &FileConfig) -> Result<(TimeGrid, IngestParams)> {
        let start = required(self.grid_start.clone(), file.grid_start.clone(), "grid_start")?;
        let step = layered(self.grid_step, file.grid_step_seconds, 86_400);
        let n_steps = required(self.n_steps, file.n_steps, "n_steps")?;
        let grid = TimeGrid::new(parse_grid_start(&start)?, step, n_steps)?;
        let defaults = IngestParams::default();
        let params = IngestParams {
            max_missing_ratio: layered(
                self.max_missing_ratio,
                file.max_missing_ratio,
                defaults.max_missing_ratio,
            ),
            min_peak: layered(self.min_peak, file.min_peak, defaults.min_peak),
        };
        params.validate()?;
        Ok((grid, params))
    }
}

#[derive(Args)]
struct IngestCli {
    /// Raw observation CSV.
    #[arg(long)]
    input: PathBuf,
    /// Event name recorded in the curve-set file.
    #[arg(long, default_value = "event")]
    event: String,
    /// Input schema: "counts" (affected/total) or "fraction".
    #[arg(long)]
    schema: Option<Schema>,
    #[command(flatten)]
    grid: GridCli,
}

#[derive(Args)]
struct ArchetypeCli {
    /// Gradients below this magnitude count as no movement.
    #[arg(long)]
    eps_grad: Option<f64>,
    /// Minimum |percentage change| for a significant turning point.
    #[arg(long)]
    pc_peak_threshold: Option<f64>,
    /// Plateau membership tolerance as a fraction of maximum loss.
    #[arg(long)]
    plateau_tol: Option<f64>,
    /// Minimum plateau length (grid steps) for a Trapezoidal label.
    #[arg(long)]
    min_plateau: Option<usize>,
    /// Values within this distance of 0 count as recovered.
    #[arg(long)]
    eps_rec: Option<f64>,
}

impl ArchetypeCli {
    fn layer(&self) -> ArchetypeLayer {
        ArchetypeLayer {
            eps_grad: self.eps_grad,
            pc_peak_threshold: self.pc_peak_threshold,
            plateau_tol: self.plateau_tol,
            min_plateau: self.min_plateau,
            eps_rec: self.eps_rec,
        }
    }
}

#[derive(Args)]
struct SelectKCli {
    /// Curve-set file from `ingest` or `synth`.
    #[arg(long)]
    curves: PathBuf,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// RNG seed; mandatory, never defaulted from the clock.
    #[arg(long)]
    seed: Option<u64>,
    /// Clustering restarts per k.
    #[arg(long)]
    restarts: Option<usize>,
    /// Also write the pairwise DTW distance matrix.
    #[arg(long)]
    emit_distances: bool,
}

#[derive(Args)]
struct AnalyzeCli {
    /// Curve-set file from `ingest` or `synth`.
    #[arg(long)]
    curves: PathBuf,
    /// Number of clusters to fit.
    #[arg(long)]
    k: usize,
    /// RNG seed; mandatory, never defaulted from the clock.
    #[arg(long)]
    seed: Option<u64>,
    /// Clustering restarts.
    #[arg(long)]
    restarts: Option<usize>,
    /// Also write the pairwise DTW distance matrix.
    #[arg(long)]
    emit_distances: bool,
    #[command(flatten)]
    archetype: ArchetypeCli,
}

#[derive(Args)]
struct SynthCli {
    /// Number of triangular-template curves.
    #[arg(long, default_value_t = 0)]
    triangular: usize,
    /// Number of trapezoidal-template curves.
    #[arg(long, default_value_t = 0)]
    trapezoidal: usize,
    /// Number of transitional-template curves.
    #[arg(long, default_value_t = 0)]
    transitional: usize,
    /// Number of flat-template curves.
    #[arg(long, default_value_t = 0)]
    flat: usize,
    /// Curve length in grid steps.
    #[arg(long, default_value_t = 14)]
    len: usize,
    /// Gaussian noise level added to every sample after the baseline.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// RNG seed; mandatory, never defaulted from the clock.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlotCli {
    /// KSweepReport JSON produced by `select-k`.
    #[arg(long)]
    sweep: Option<PathBuf>,
    /// Analysis JSON produced by `analyze`.
    #[arg(long)]
    analysis: Option<PathBuf>,
}

#[derive(Args)]
struct RunAllCli {
    /// Raw observation CSV (alternative to --curves).
    #[arg(long, conflicts_with = "curves")]
    input: Option<PathBuf>,
    /// Existing curve-set file (alternative to --input).
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Event name recorded when ingesting from CSV.
    #[arg(long, default_value = "event")]
    event: String,
    /// Input schema when ingesting from CSV.
    #[arg(long)]
    schema: Option<Schema>,
    #[command(flatten)]
    grid: GridCli,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// RNG seed; mandatory, never defaulted from the clock.
    #[arg(long)]
    seed: Option<u64>,
    /// Clustering restarts per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Also write the pairwise DTW distance matrix.
    #[arg(long)]
    emit_distances: bool,
    #[command(flatten)]
    archetype: ArchetypeCli,
}

fn parse_schema(flag: Option<Schema>, file: &FileConfig) -> Result<Schema> {
    if let Some(schema) = flag {
        return Ok(schema);
    }
    match &file.schema {
        Some(text) => text.parse(),
        None => Ok(Schema::Counts),
    }
}

fn k_range(
    k_min: Option<usize>,
    k_max: Option<usize>,
    file: &FileConfig,
) -> Result<(usize, usize)> {
    let k_min = layered(k_min, file.k_min, 2);
    let k_max = layered(k_max, file.k_max, 10);
    if k_min < 2 || k_max < k_min {
        return Err(Error::Config(format!("bad k range [{k_min}, {k_max}]")));
    }
    Ok((k_min, k_max))
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let out_dir = layered(cli.out_dir, file.out_dir.clone(), PathBuf::from("out"));

    match cli.command {
        Command::Ingest(args) => {
            let (grid, params) = args.grid.merge(&file)?;
            cmd_ingest(&IngestArgs {
                input: args.input,
                event_name: args.event,
                schema: parse_schema(args.schema, &file)?,
                grid,
                params,
                out_dir,
            })?;
        }
        Command::SelectK(args) => {
            let (k_min, k_max) = k_range(args.k_min, args.k_max, &file)?;
            cmd_select_k(&SelectKArgs {
                curves: args.curves,
                k_min,
                k_max,
                seed: required(args.seed, file.seed, "seed")?,
                restarts: layered(args.restarts, file.restarts, 5),
                emit_distances: args.emit_distances,
                out_dir,
            })?;
        }
        Command::Analyze(args) => {
            if args.k < 1 {
                return Err(Error::Config("k must be at least 1".into()));
            }
            cmd_analyze(&AnalyzeArgs {
                curves: args.curves,
                k: args.k,
                seed: required(args.seed, file.seed, "seed")?,
                restarts: layered(args.restarts, file.restarts, 5),
                archetype: args.archetype.layer().merge(&file)?,
                emit_distances: args.emit_distances,
                out_dir,
            })?;
        }
        Command::Synth(args) => {
            cmd_synth(&SynthArgs {
                triangular: args.triangular,
                trapezoidal: args.trapezoidal,
                transitional: args.transitional,
                flat: args.flat,
                len: args.len,
                noise_sigma: args.noise_sigma,
                seed: required(args.seed, file.seed, "seed")?,
                out_dir,
            })?;
        }
        Command::Plot(args) => {
            cmd_plot(&PlotArgs { sweep: args.sweep, analysis: args.analysis, out_dir })?;
        }
        Command::RunAll(args) => {
            let input = match (&args.input, &args.curves) {
                (Some(input), None) => {
                    let (grid, params) = args.grid.merge(&file)?;
                    RunAllInput::Csv(IngestArgs {
                        input: input.clone(),
                        event_name: args.event.clone(),
                        schema: parse_schema(args.schema, &file)?,
                        grid,
                        params,
                        out_dir: out_dir.clone(),
                    })
                }
                (None, Some(curves)) => RunAllInput::CurveSet(curves.clone()),
                _ => {
                    return Err(Error::Config(
                        "run-all needs exactly one of --input or --curves".into(),
                    ))
                }
            };
            let (k_min, k_max) = k_range(args.k_min, args.k_max, &file)?;
            cmd_run_all(&RunAllArgs {
                input,
                k_min,
                k_max,
                seed: required(args.seed, file.seed, "seed")?,
                restarts: layered(args.restarts, file.restarts, 5),
                archetype: args.archetype.layer().merge(&file)?,
                emit_distances: args.emit_distances,
                out_dir,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => ExitCode::from(2),
                Error::Data(_) => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
