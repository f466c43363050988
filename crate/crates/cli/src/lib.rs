//! The `pfn` command-line tool.
//!
//! Commands read an optional TOML config ([`config::RunConfig`]), apply flag
//! overrides and write their outputs plus a `manifest.toml` into the output
//! directory. Exit codes: 0 success, 2 configuration error, 3 runtime fault,
//! 4 numeric abort.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{PriorPreset, RunConfig};
pub use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "pfn", version, about = "Meta-train and benchmark a prior-data fitted network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `runs/<command>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Significance level of the rank tests.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Share of the best score that counts as reaching it.
    #[arg(long, global = true)]
    pub efficiency_threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Meta-train a model on the synthetic prior.
    MetaTrain {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum)]
        prior: Option<PriorPreset>,
    },
    /// Write the built-in toy problems as dataset CSVs.
    GenData {
        #[arg(long, value_delimiter = ',')]
        problems: Vec<String>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Run the benchmark protocol and analyze the records.
    Bench {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Number of splits per dataset.
        #[arg(long)]
        reps: Option<usize>,
        /// Integrate time curves over log10 seconds.
        #[arg(long)]
        log_time: bool,
    },
    /// Class probabilities for query rows given a labeled training file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        query: PathBuf,
    },
    /// Rank statistics of one metric from an existing report.
    Stats {
        #[arg(long)]
        report: PathBuf,
        /// f1, macro_f1, accuracy or total_seconds.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Re-run the full analysis of an existing report.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        log_time: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MetaTrain { .. } => "meta-train",
            Command::GenData { .. } => "gen-data",
            Command::Bench { .. } => "bench",
            Command::Predict { .. } => "predict",
            Command::Stats { .. } => "stats",
            Command::Report { .. } => "report",
        }
    }
}

/// Configuration after the file and every flag are applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let preset = match &cli.command {
        Command::MetaTrain { prior, .. } => *prior,
        _ => None,
    };
    let mut cfg = RunConfig::load(cli.config.as_deref(), preset)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(a) = cli.alpha {
        cfg.analysis.alpha = a;
    }
    if let Some(t) = cli.efficiency_threshold {
        cfg.analysis.efficiency_threshold = t;
    }
    match &cli.command {
        Command::MetaTrain { steps, .. } => {
            if let Some(s) = steps {
                cfg.train.steps = *s;
            }
        }
        Command::GenData { problems, n_train, n_test } => {
            if !problems.is_empty() {
                cfg.gen_data.problems = problems.clone();
            }
            if let Some(n) = n_train {
                cfg.gen_data.n_train = *n;
            }
            if let Some(n) = n_test {
                cfg.gen_data.n_test = *n;
            }
        }
        Command::Bench { checkpoint, methods, reps, log_time } => {
            if checkpoint.is_some() {
                cfg.bench.checkpoint = checkpoint.clone();
            }
            if !methods.is_empty() {
                cfg.bench.methods = methods.clone();
            }
            if let Some(r) = reps {
                cfg.bench.n_reps = *r;
            }
            cfg.analysis.log_time |= log_time;
        }
        Command::Stats { metric, .. } => {
            if let Some(m) = metric {
                cfg.analysis.metric = m.clone();
            }
        }
        Command::Report { log_time, .. } => cfg.analysis.log_time |= log_time,
        Command::Predict { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command line; returns the output directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let cfg = resolve_config(cli)?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(cli.command.name()));
    let manifest = match &cli.command {
        Command::MetaTrain { .. } => commands::meta_train_cmd(&cfg, &out)?,
        Command::GenData { .. } => commands::gen_data_cmd(&cfg, &out)?,
        Command::Bench { .. } => commands::bench_cmd(&cfg, &out)?,
        Command::Predict { checkpoint, train, query } => commands::predict_cmd(checkpoint, train, query, &out)?,
        Command::Stats { report, .. } => {
            let (m, text) = commands::stats_cmd(&cfg, report, &out)?;
            print!("{text}");
            m
        }
        Command::Report { report, .. } => commands::report_cmd(&cfg, report, &out)?,
    };
    for n in &manifest.notes {
        println!("{n}");
    }
    manifest.write(&cfg, &out)?;
    Ok(out)
}
