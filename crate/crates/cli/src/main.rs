use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chaosbench::analysis::{write_analysis, DEFAULT_BOOTSTRAP};
use chaosbench::harness::{load_records, run_campaign, titrate_history, workers_from_env, ExperimentConfig, SystemContext};
use chaosbench::invariants::{compute_invariants, InvariantConfig};
use chaosbench::metrics::MetricKind;
use chaosbench::models::ModelKind;
use chaosbench::{align_system, registry, system_by_name, AlignmentConfig, SystemSpec};
use clap::{Parser, Subcommand};

/// Statistical forecasting benchmark on low-dimensional chaotic systems.
#[derive(Parser)]
#[command(name = "chaosbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the system registry.
    ListSystems {
        #[arg(long)]
        json: bool,
    },
    /// Align one system to 100 samples per dominant period.
    Align {
        system: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute dynamical invariants as CSV.
    Invariants {
        /// Systems to annotate; the whole registry when omitted.
        systems: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the short ensemble used for the ergodicity check.
        #[arg(long)]
        skip_ergodicity: bool,
        /// Write the full sets as JSON instead of the CSV summary.
        #[arg(long)]
        json: bool,
    },
    /// Run (or resume) a benchmark campaign.
    Benchmark {
        /// Comma-separated system names; the whole registry when omitted.
        #[arg(long, value_delimiter = ',')]
        systems: Vec<String>,
        /// Comma-separated model names; every model when omitted.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Comma-separated seeds, overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Experiment configuration as JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to CHAOSBENCH_WORKERS or the core count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Error at one Lyapunov time against training history length.
    Titrate {
        system: String,
        #[arg(long)]
        model: String,
        #[arg(long, value_delimiter = ',', default_value = "100,200,500,1000")]
        lengths: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Cross-model analyses over a finished campaign.
    Analyze {
        dir: PathBuf,
        /// Output directory; defaults to `<dir>/analysis`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Metric catalog.
    Metrics {
        #[command(subcommand)]
        action: MetricsAction,
    },
}

#[derive(Subcommand)]
enum MetricsAction {
    /// Names, ranges and orientation of every metric.
    List,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::ListSystems { json } => list_systems(json),
        Command::Align { system, seed } => {
            let spec = system_by_name(&system)?;
            let a = align_system(&spec, seed, &AlignmentConfig::default())?;
            println!("{}", serde_json::to_string_pretty(&a)?);
            Ok(())
        }
        Command::Invariants {
            systems,
            seed,
            skip_ergodicity,
            json,
        } => invariants(&systems, seed, skip_ergodicity, json),
        Command::Benchmark {
            systems,
            models,
            seeds,
            config,
            out,
            workers,
        } => {
            let mut config = load_config(config.as_deref())?;
            if !seeds.is_empty() {
                config.seeds = seeds;
            }
            let systems = select_systems(&systems)?;
            let kinds = select_models(&models)?;
            let workers = workers.unwrap_or_else(workers_from_env);
            let records = run_campaign(&config, &systems, &kinds, &out, workers)?;
            let failed = records.iter().filter(|r| r.failure.is_some()).count();
            eprintln!("{} records in {} ({failed} failed)", records.len(), out.display());
            Ok(())
        }
        Command::Titrate {
            system,
            model,
            lengths,
            seeds,
            config,
        } => {
            let mut config = load_config(config.as_deref())?;
            if !seeds.is_empty() {
                config.seeds = seeds;
            }
            let ctx = SystemContext::prepare(&system_by_name(&system)?, &config)?;
            let kind: ModelKind = model.parse()?;
            let points = titrate_history(&ctx, kind, &config, &lengths)?;
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(["history_len", "median_smape", "skipped"])?;
            for p in points {
                w.write_record([
                    p.history_len.to_string(),
                    p.median_smape.map_or(String::new(), |v| v.to_string()),
                    p.skipped.unwrap_or_default(),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Analyze { dir, out, bootstrap, seed } => {
            let records = load_records(&dir)?;
            if records.is_empty() {
                bail!("no records under {}", dir.display());
            }
            let out = out.unwrap_or_else(|| dir.join("analysis"));
            let summary = write_analysis(&records, &out, bootstrap, seed)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Metrics {
            action: MetricsAction::List,
        } => {
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(["metric", "min", "max", "better"])?;
            for m in MetricKind::ALL {
                let (lo, hi) = m.range();
                let better = if m.higher_is_better() { "higher" } else { "lower" };
                w.write_record([m.name(), &lo.to_string(), &hi.to_string(), better])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn list_systems(json: bool) -> Result<()> {
    let systems = registry();
    let mut out = io::stdout().lock();
    if json {
        let summaries: Vec<_> = systems.iter().map(SystemSpec::summary).collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&summaries)?)?;
        return Ok(());
    }
    for s in systems {
        let params: Vec<String> = s.named_params().iter().map(|(k, v)| format!("{k}={v}")).collect();
        let kind = if s.is_delay() { "delay" } else { "ode" };
        let line = format!("{:<12} {} {kind:<5} {}", s.name, s.dim, params.join(" "));
        writeln!(out, "{}", line.trim_end())?;
    }
    Ok(())
}

fn invariants(names: &[String], seed: u64, skip_ergodicity: bool, json: bool) -> Result<()> {
    let config = InvariantConfig {
        seed,
        check_ergodicity: !skip_ergodicity,
        ..Default::default()
    };
    let mut sets = Vec::new();
    for spec in select_systems(names)? {
        let alignment = align_system(&spec, seed, &AlignmentConfig::default())
            .with_context(|| format!("aligning {}", spec.name))?;
        sets.push(compute_invariants(&spec, &alignment, &config).with_context(|| format!("invariants of {}", spec.name))?);
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&sets)?);
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(io::stdout());
    w.write_record(["system", "lambda_max", "corr_dim", "ky_dim", "entropy"])?;
    for s in sets {
        w.write_record([s.system, s.lyapunov_max.to_string(), s.corr_dim.to_string(), s.ky_dim.to_string(), s.mse.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn select_systems(names: &[String]) -> Result<Vec<SystemSpec>> {
    if names.is_empty() {
        return Ok(registry());
    }
    Ok(names.iter().map(|n| system_by_name(n)).collect::<chaosbench::Result<_>>()?)
}

fn select_models(names: &[String]) -> Result<Vec<ModelKind>> {
    if names.is_empty() {
        return Ok(ModelKind::ALL.to_vec());
    }
    Ok(names.iter().map(|n| n.parse()).collect::<chaosbench::Result<_>>()?)
}
