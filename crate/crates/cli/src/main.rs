use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use minuet::metrics::{MetricSummary, MetricsOptions};
use minuet::scenario::{self, ScenarioFile};
use minuet::StrategyKind;

mod report;

#[derive(Parser)]
#[command(name = "minuet", version, about = "Cooperative vehicular event monitoring simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write the log, metric CSVs and a summary.
    Run(RunArgs),
    /// Run every strategy over several seeds and tabulate mean metrics.
    Compare(CompareArgs),
    /// Check a scenario and print it with every default filled in.
    Validate(ScenarioArg),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file or built-in name (paper_ld, paper_hd, smoke, clique).
    #[arg(value_name = "SCENARIO", required_unless_present = "scenario")]
    positional: Option<String>,
    #[arg(long, conflicts_with = "positional")]
    scenario: Option<String>,
}

impl ScenarioArg {
    fn load(&self) -> Result<(ScenarioFile, PathBuf)> {
        let name = self.positional.as_deref().or(self.scenario.as_deref()).expect("clap requires one");
        load_scenario(name)
    }
}

#[derive(Args)]
struct MetricFlags {
    /// Triangular denominator for the grouped-vehicle ratio.
    #[arg(long)]
    eq7_literal: bool,
    /// Average delay over first receipts only.
    #[arg(long)]
    per_unique_delay: bool,
}

impl MetricFlags {
    fn options(&self) -> MetricsOptions {
        MetricsOptions { eq7_literal: self.eq7_literal, per_unique_delay: self.per_unique_delay }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    strategy: Option<StrategyKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    metrics: MetricFlags,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',', default_values_t = StrategyKind::ALL.to_vec())]
    strategies: Vec<StrategyKind>,
    /// Comma-separated seeds or an inclusive range such as `1-5`.
    #[arg(long, default_value = "1-5")]
    seeds: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    metrics: MetricFlags,
}

/// A path to an existing file wins over a built-in of the same name.
fn load_scenario(name: &str) -> Result<(ScenarioFile, PathBuf)> {
    let path = Path::new(name);
    if path.is_file() {
        let file = ScenarioFile::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((file, base))
    } else {
        Ok((scenario::builtin(name)?, PathBuf::from(".")))
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty seed range '{part}'");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("invalid seed '{part}'"))?),
        }
    }
    if out.is_empty() {
        bail!("no seeds given");
    }
    Ok(out)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let (mut file, base) = args.scenario.load()?;
    if let Some(s) = args.strategy {
        file.clustering = s;
    }
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    let done = report::execute(&file, &base, &args.out, args.metrics.options())?;
    print!("{}", fs::read_to_string(&done.summary_txt)?);
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let (file, base) = args.scenario.load()?;
    let mut strategies: Vec<StrategyKind> = Vec::new();
    for s in &args.strategies {
        if !strategies.contains(s) {
            strategies.push(*s);
        }
    }
    if strategies.len() < 2 {
        bail!("compare needs at least two strategies");
    }
    let seeds = parse_seeds(&args.seeds)?;
    let options = args.metrics.options();
    let jobs: Vec<(StrategyKind, u64)> =
        strategies.iter().flat_map(|s| seeds.iter().map(move |seed| (*s, *seed))).collect();

    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.unwrap_or(0)).build()?;
    let results: Vec<Result<(StrategyKind, u64, Vec<MetricSummary>)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(strategy, seed)| {
                let mut f = file.clone();
                f.clustering = strategy;
                f.seed = seed;
                let dir = args.out.join("runs").join(format!("{strategy}_seed{seed}"));
                let done = report::execute(&f, &base, &dir, options)?;
                Ok((strategy, seed, done.summaries))
            })
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let table = report::write_comparison(&args.out, &file, &runs)?;
    print!("{table}");
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn cmd_validate(args: &ScenarioArg) -> Result<()> {
    let (file, base) = args.load()?;
    let resolved = scenario::validate(&file, &base).map_err(scenario::ScenarioError::Invalid)?;
    print!("{}", resolved.to_toml());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
