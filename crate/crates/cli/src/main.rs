use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ecasim_cli::output::DirSink;
use ecasim_cli::sweep::{build_world, PointResult, ResultRow, SweepSink};
use ecasim_cli::trace::emit_trace;
use ecasim_cli::{parse_scenario_with, Execution, Overrides, Scenario, SweepError};

#[derive(Parser)]
#[command(name = "ecasim", version, about = "Slotted CSMA/CA and CSMA/ECA contention simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicate the scenario's fixed population(s).
    Run(RunArgs),
    /// Replicate every station count of the sweep range.
    Sweep(SweepArgs),
    /// Write a per-slot trace of one run.
    Trace(TraceArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Slots per run.
    #[arg(long)]
    slots: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    replications: Option<u64>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Run replications one at a time.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    n_step: Option<usize>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: Common,
    /// Trace file to write.
    #[arg(long, short, default_value = "trace.csv")]
    out: PathBuf,
}

/// Writes result files and reports each finished point on stderr.
struct Progress(DirSink);

impl SweepSink for Progress {
    fn point(&mut self, result: &PointResult) -> Result<(), SweepError> {
        let row = &result.row;
        eprintln!(
            "{:>24}  {:8.3} Mb/s  jfi {}  converged {:.2}",
            row.variant_mix,
            row.throughput_mbps_mean,
            row.jfi_mean.map_or("-".to_string(), |j| format!("{j:.4}")),
            row.convergence_rate,
        );
        self.0.point(result)
    }

    fn finish(&mut self, rows: &[ResultRow]) -> Result<(), SweepError> {
        self.0.finish(rows)
    }
}

fn load(common: &Common, overrides: Overrides) -> Result<Scenario> {
    let overrides = Overrides {
        seed: common.seed,
        slots: common.slots,
        ..overrides
    };
    parse_scenario_with(&common.scenario, &overrides).with_context(|| format!("loading {}", common.scenario.display()))
}

fn execution(serial: bool) -> Execution {
    if serial {
        Execution::Serial
    } else {
        Execution::Parallel
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let scenario = load(
                &args.common,
                Overrides {
                    replications: args.replications,
                    ..Default::default()
                },
            )?;
            if scenario.single_points().is_empty() {
                bail!("scenario has no fixed station count; use `sweep` or set `n`");
            }
            let mut sink = Progress(DirSink::create(&args.out, &scenario)?);
            ecasim_cli::run(&scenario, execution(args.serial), &mut sink)?;
            eprintln!("results in {}", args.out.display());
        }
        Command::Sweep(args) => {
            let scenario = load(
                &args.run.common,
                Overrides {
                    replications: args.run.replications,
                    n_min: args.n_min,
                    n_max: args.n_max,
                    n_step: args.n_step,
                    ..Default::default()
                },
            )?;
            let mut sink = Progress(DirSink::create(&args.run.out, &scenario)?);
            ecasim_cli::sweep(&scenario, execution(args.run.serial), &mut sink)?;
            eprintln!("results in {}", args.run.out.display());
        }
        Command::Trace(args) => {
            let scenario = load(&args.common, Overrides::default())?;
            let points = scenario.single_points();
            let [point] = points.as_slice() else {
                bail!("a trace needs exactly one population, found {}", points.len());
            };
            let mut world = build_world(&scenario, point, 0)?;
            emit_trace(&mut world, scenario.slots, &args.out)?;
            eprintln!("trace of {} slots in {}", scenario.slots, args.out.display());
        }
    }
    Ok(())
}
