use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hetnet::harness::{
    read_drop_rows, run_experiment, summarize, write_summary, ExperimentConfig, ExperimentReport, PatternSource,
    Strategy,
};
use hetnet::oracle::validation_suite;
use hetnet::scenario::realize;
use hetnet::ScenarioConfig;
use log::info;

#[derive(Parser)]
#[command(name = "hetnet", version, about = "Joint user association and reuse-pattern allocation for HetNets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop cells and users and write them as CSV.
    Generate(Common),
    /// Run the tabu search on one drop and keep its decision trace.
    Optimize(Common),
    /// Evaluate the reuse-1 baseline over a pico bias sweep.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Pico biases in dB.
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,15")]
        biases: Vec<f64>,
    },
    /// Compare the search and the split solver with exhaustive references.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Run the configured study over all user counts and drops.
    Experiment(Common),
    /// Aggregate per-drop CSVs into summary tables.
    Report {
        /// `drops.csv` files or directories containing one.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Patterns {
    Candidates,
    Full,
    File,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    patterns: Option<Patterns>,
    /// Pattern list for `--patterns file`, one 0/1 string per line.
    #[arg(long)]
    pattern_file: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed_base = seed;
        }
        match (self.patterns, &self.pattern_file) {
            (Some(Patterns::Candidates), _) => cfg.patterns = PatternSource::Candidates,
            (Some(Patterns::Full), _) => cfg.patterns = PatternSource::Full,
            (Some(Patterns::File), Some(path)) => cfg.patterns = PatternSource::File(path.clone()),
            (Some(Patterns::File), None) => bail!("--patterns file needs --pattern-file"),
            (None, Some(path)) => cfg.patterns = PatternSource::File(path.clone()),
            (None, None) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// First user count and a single drop.
    fn single_drop(&self) -> Result<ExperimentConfig> {
        let cfg = self.resolve()?;
        Ok(ExperimentConfig {
            user_counts: cfg.user_counts[..1].to_vec(),
            drops: 1,
            ..cfg
        })
    }
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:>6}  {:<16} {:>5} {:>10} {:>10} {:>10} {:>12} {:>11}",
        "users", "strategy", "drops", "p5 Mb/s", "p50 Mb/s", "p95 Mb/s", "sum Mb/s", "log-util"
    );
    for s in &report.summary {
        println!(
            "{:>6}  {:<16} {:>5} {:>10.3} {:>10.3} {:>10.3} {:>12.2} {:>11.2}",
            s.user_count,
            s.strategy,
            s.drops,
            s.p5 / 1e6,
            s.p50 / 1e6,
            s.p95 / 1e6,
            s.sum_rate / 1e6,
            s.log_utility
        );
    }
    for r in &report.study {
        println!(
            "{:>6}  restricted/full {:<12} {:>8.2}%",
            r.user_count,
            r.metric,
            100.0 * r.ratio
        );
    }
    for f in &report.failures {
        eprintln!("failed: {} users, drop {}, {}: {}", f.user_count, f.drop, f.strategy, f.message);
    }
}

fn run_and_report(cfg: &ExperimentConfig, out: &Path) -> Result<ExitCode> {
    let report = run_experiment(cfg, Some(out))?;
    print_summary(&report);
    info!("results in {}", out.display());
    Ok(if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn generate(common: &Common) -> Result<ExitCode> {
    let cfg = common.resolve()?;
    for &users in &cfg.user_counts {
        let scenario_cfg = ScenarioConfig {
            user_count: users,
            ..cfg.scenario.clone()
        };
        for d in 0..cfg.drops {
            let seed = cfg.drop_seed(d);
            let (scenario, _) = realize(&scenario_cfg, seed)?;
            let dir = common.out.join(format!("users{users}_drop{d}"));
            scenario.write_csv(&dir)?;
            println!("{}: {} cells, {} users (seed {seed})", dir.display(), scenario.cell_count(), users);
        }
    }
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("metadata.txt"), cfg.to_toml())?;
    Ok(ExitCode::SUCCESS)
}

fn oracle(common: &Common, instances: usize) -> Result<ExitCode> {
    let cfg = common.resolve()?;
    let rows = validation_suite(instances, cfg.seed_base, &cfg.search)?;
    fs::create_dir_all(&common.out)?;
    let path = common.out.join("oracle.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut bad = 0;
    println!("{:>6} {:>3} {:>3} {:>12} {:>12} {:>10} {:>10}", "seed", "K", "I", "brute", "tabu", "FW-grid", "gap");
    for r in &rows {
        w.serialize(r)?;
        let fw_grid = r.grid.map(|g| r.frank_wolfe - g);
        let tabu_ok = r.tabu >= 0.99 * r.brute_force;
        let fw_ok = r.fw_gap <= 1e-6 && fw_grid.is_none_or(|d| d.abs() <= 1e-4);
        if !(tabu_ok && fw_ok) {
            bad += 1;
        }
        println!(
            "{:>6} {:>3} {:>3} {:>12.6} {:>12.6} {:>10} {:>10.2e}",
            r.seed,
            r.users,
            r.patterns,
            r.brute_force,
            r.tabu,
            fw_grid.map_or("-".into(), |d| format!("{d:.2e}")),
            r.fw_gap
        );
    }
    w.flush()?;
    let exact = rows
        .iter()
        .filter(|r| r.brute_force - r.tabu <= 1e-6 * r.brute_force.abs())
        .count();
    println!("{exact}/{} instances solved to optimality, {bad} outside tolerance", rows.len());
    Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn report(inputs: &[PathBuf], out: &Path) -> Result<ExitCode> {
    let mut rows = Vec::new();
    for input in inputs {
        let path = if input.is_dir() { input.join("drops.csv") } else { input.clone() };
        rows.extend(read_drop_rows(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    let (summary, study) = summarize(&rows);
    write_summary(out, &summary, &study)?;
    print_summary(&ExperimentReport {
        rows,
        summary,
        study,
        failures: Vec::new(),
    });
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate(common) => generate(&common),
        Command::Optimize(common) => {
            let cfg = ExperimentConfig {
                strategies: vec![Strategy::Proposed],
                record_traces: true,
                ..common.single_drop()?
            };
            run_and_report(&cfg, &common.out)
        }
        Command::Baseline { common, biases } => {
            if biases.is_empty() {
                bail!("no biases given");
            }
            let cfg = ExperimentConfig {
                strategies: biases.into_iter().map(Strategy::Reuse1).collect(),
                ..common.resolve()?
            };
            cfg.validate()?;
            run_and_report(&cfg, &common.out)
        }
        Command::Oracle { common, instances } => oracle(&common, instances),
        Command::Experiment(common) => {
            let cfg = common.resolve()?;
            run_and_report(&cfg, &common.out)
        }
        Command::Report { inputs, out } => report(&inputs, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
