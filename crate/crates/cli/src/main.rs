mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use catenc_core::benchmark::{run_benchmark, SCHEMA_VERSION};
use catenc_core::report::{build_report, read_records, write_report};
use catenc_core::table::{load_dataset, profile_dataset, LoadOptions};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{parse_config, RunConfig};

/// Benchmark categorical encoders and summarize the results.
#[derive(Parser, Debug)]
#[command(name = "catenc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the benchmark grid of a TOML config (or a resolved JSON config).
    Run {
        config: PathBuf,
        /// Results directory; overrides `output_dir`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads; overrides the config and CATENC_WORKERS.
        #[arg(long)]
        workers: Option<usize>,
        /// Suppress progress output.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Build summary tables, consensus rankings, runtime ratios and the
    /// dendrogram from a results directory.
    Report {
        dir: PathBuf,
        /// Significance level; defaults to the run's resolved config.
        #[arg(long)]
        alpha: Option<f64>,
        /// Seed of the consensus local search.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Profile the categorical columns of a dataset.
    Profile {
        /// Dataset name in the config.
        name: Option<String>,
        #[arg(long, requires = "name")]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config", requires = "schema")]
        csv: Option<PathBuf>,
        #[arg(long, requires = "csv")]
        schema: Option<PathBuf>,
        /// Write the profile here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status classes.
enum Failure {
    Config(anyhow::Error),
    AllFailed(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output,
            workers,
            quiet,
        } => cmd_run(&config, output, workers, quiet),
        Command::Report { dir, alpha, seed } => cmd_report(&dir, alpha, seed).map_err(Failure::from),
        Command::Profile {
            name,
            config,
            csv,
            schema,
            out,
        } => cmd_profile(name, config, csv, schema, out).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::AllFailed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn config_dir(path: &Path) -> Result<PathBuf> {
    let abs = std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))?;
    Ok(abs.parent().map(Path::to_owned).unwrap_or_default())
}

fn load_config(path: &Path, workers: Option<usize>) -> Result<RunConfig> {
    parse_config(path)?.resolve(&config_dir(path)?, workers)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(path: &Path, output: Option<PathBuf>, workers: Option<usize>, quiet: bool) -> Result<(), Failure> {
    let mut cfg = load_config(path, workers)?;
    if let Some(out) = output {
        cfg.output_dir = std::path::absolute(&out).context("resolving output directory")?;
    }
    let datasets = cfg
        .datasets
        .iter()
        .map(|d| d.load())
        .collect::<Result<Vec<_>>>()?;
    let plan = cfg.plan();
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("resolved-config.json"), &cfg)?;

    let records_path = dir.join("records.jsonl");
    let file = File::create(&records_path).with_context(|| format!("creating {}", records_path.display()))?;
    let mut writer = BufWriter::new(file);
    let mut written = 0usize;
    let summary = run_benchmark(&datasets, &plan, &mut |r| {
        let line = r.to_json_line()?;
        let io = |e| catenc_core::Error::Io {
            path: records_path.clone(),
            source: e,
        };
        writeln!(writer, "{line}").map_err(io)?;
        writer.flush().map_err(io)?;
        written += 1;
        if !quiet && written.is_multiple_of(50) {
            eprintln!("{written} records");
        }
        Ok(())
    })
    .context("running benchmark")?;

    write_json(
        &dir.join("manifest.json"),
        &json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "schema_version": SCHEMA_VERSION,
            "n_records": summary.n_records,
            "n_ok": summary.n_ok,
            "n_degenerate": summary.n_degenerate,
            "n_failed": summary.n_failed,
            "conditions": summary.conditions,
        }),
    )?;
    if !quiet {
        eprintln!(
            "{} records ({} ok, {} degenerate, {} failed) in {}",
            summary.n_records,
            summary.n_ok,
            summary.n_degenerate,
            summary.n_failed,
            dir.display()
        );
    }
    if summary.n_ok + summary.n_degenerate == 0 {
        return Err(Failure::AllFailed("no condition produced a result".into()));
    }
    Ok(())
}

fn cmd_report(dir: &Path, alpha: Option<f64>, seed: u64) -> Result<()> {
    let records = read_records(&dir.join("records.jsonl"))?;
    let alpha = match alpha {
        Some(a) => a,
        None => {
            let resolved = dir.join("resolved-config.json");
            if resolved.exists() {
                parse_config(&resolved)?.alpha
            } else {
                0.05
            }
        }
    };
    let report = build_report(&records, alpha, seed)?;
    write_report(dir, &report)?;
    Ok(())
}

fn cmd_profile(
    name: Option<String>,
    config: Option<PathBuf>,
    csv: Option<PathBuf>,
    schema: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let table = match (csv, schema) {
        (Some(csv), Some(schema)) => load_dataset(&csv, &schema, &LoadOptions::default())?,
        _ => {
            let name = name.context("give a dataset name with --config, or --csv and --schema")?;
            let config = config.context("--config is required with a dataset name")?;
            let cfg = parse_config(&config)?.resolve(&config_dir(&config)?, Some(1))?;
            cfg.dataset(&name)?.load()?.table
        }
    };
    let profile = profile_dataset(&table);
    match out {
        Some(path) => write_json(&path, &profile),
        None => {
            let text = serde_json::to_string_pretty(&profile)?;
            match writeln!(std::io::stdout(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}
