use std::path::{Path, PathBuf};
use std::process::ExitCode;

use activeqa::report::{write_comparison, write_curve_svg, write_run};
use activeqa::{compare, run, Error, ScenarioConfig, StrategyKind};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "activeqa",
    version,
    about = "Quality-inspection sampling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy on one seed and write events.csv, curve.csv, summary.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several strategies over derived seeds and write comparison.csv.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
        #[arg(long)]
        replications: u32,
        #[arg(long)]
        out: PathBuf,
        /// Skip curve.svg.
        #[arg(long)]
        no_chart: bool,
    },
    /// Check a scenario file and report every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Bad input (exit 1) versus a failure while running (exit 2).
enum Failure {
    Invalid(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

fn parse_strategies(names: &[String]) -> Result<Vec<StrategyKind>, Failure> {
    names
        .iter()
        .map(|n| n.trim().parse().map_err(Failure::Invalid))
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            println!(
                "{}: ok ({} parts, {} regime(s), {} fault(s))",
                config.display(),
                cfg.horizon,
                cfg.regimes.len(),
                cfg.faults.len()
            );
        }
        Command::Simulate {
            config,
            strategy,
            seed,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let kind: StrategyKind = strategy.parse().map_err(Failure::Invalid)?;
            let output = run(&cfg, kind, seed)?;
            ensure_dir(&out)?;
            write_run(&out, &output.report)?;
            let model_path = out.join("model.txt");
            std::fs::write(&model_path, output.model.to_key_values())
                .map_err(|e| Error::io(&model_path, e))?;
            let r = &output.report;
            println!(
                "{kind} seed {seed}: {} inspections, {} NOK of {} labels, cost {}, final balanced accuracy {}",
                r.totals.inspections,
                r.labels.nok,
                r.labels.total,
                r.total_cost(),
                r.final_balanced_accuracy()
                    .map_or("n/a".to_string(), |a| format!("{a:.4}"))
            );
        }
        Command::Compare {
            config,
            strategies,
            replications,
            out,
            no_chart,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let kinds = parse_strategies(&strategies)?;
            if replications == 0 {
                return Err(Failure::Invalid(Error::Usage(
                    "--replications must be at least 1".into(),
                )));
            }
            let summary = compare(&cfg, &kinds, replications)?;
            ensure_dir(&out)?;
            write_comparison(&out.join("comparison.csv"), &summary)?;
            if !no_chart {
                write_curve_svg(&out.join("curve.svg"), &summary)?;
            }
            let fmt = |s: Option<activeqa::compare::Stat>| {
                s.map_or("n/a".to_string(), |s| {
                    format!("{:.4} ± {:.4}", s.mean, s.std)
                })
            };
            println!(
                "strategy  runs  balanced_accuracy  inspections  nok_fraction  total_cost  latency"
            );
            for a in &summary.aggregates {
                println!(
                    "{:<9} {:>4}  {}  {}  {}  {}  {}",
                    a.strategy.name(),
                    a.runs,
                    fmt(a.final_balanced_accuracy),
                    fmt(a.inspections),
                    fmt(a.balance),
                    fmt(a.total_cost),
                    fmt(a.mean_latency)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
