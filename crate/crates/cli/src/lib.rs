//! Reproducible experiment workflows over the propwake estimator.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use commands::*;
pub use config::{ConfigError, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "propwake", version, about = "Propeller wake state estimation experiments")]
pub struct Cli {
    /// TOML run configuration; defaults are used for missing fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sliding-window length.
    #[arg(long, global = true)]
    pub sl: Option<usize>,
    /// 1: longitudinal offset 250 mm, 2: 300 mm.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub case: Option<u8>,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the scenario grid and write trace files.
    Gen,
    /// Train a model and score it on the test split.
    Train,
    /// Score a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Search task weights, retrain, and compare with random weights.
    Tune,
    /// Compare the hybrid network with the CNN-only variant.
    Ablate,
    /// Train across window lengths.
    SweepSeqlen {
        /// Comma-separated window lengths, replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
    },
    /// Summarize run directories into tables and text charts.
    Report { dirs: Vec<PathBuf> },
}

/// Loads the config file (if any), applies flag overrides and validates.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.apply(&Overrides { seed: cli.seed, out_dir: cli.out.clone(), sl: cli.sl, case: cli.case });
    if let Command::SweepSeqlen { lengths: Some(l) } = &cli.command {
        cfg.sweep.seq_lens = l.clone();
    }
    cfg.resolve()
}

/// Runs one command and returns the line printed on success.
pub fn run(cli: &Cli) -> Result<String> {
    set_verbose(!cli.quiet);
    let cfg = resolve_config(cli)?;
    let line = match &cli.command {
        Command::Gen => {
            let s = cmd_gen(&cfg)?;
            format!("gen: {} traces in {} (corpus hash {})", s.traces, s.corpus_dir.display(), s.corpus_hash)
        }
        Command::Train => {
            let m = cmd_train(&cfg)?;
            format!("train: {}", metrics_line(&m))
        }
        Command::Eval { checkpoint } => {
            let m = cmd_eval(&cfg, checkpoint.as_deref())?;
            format!("eval: {}", metrics_line(&m))
        }
        Command::Tune => {
            let s = cmd_tune(&cfg)?;
            let w = s.tuning.best_weights;
            format!(
                "tune: weights ({:.4}, {:.4}, {:.4}) fitness {:.4}, random-weight median {:.4}",
                w.displacement, w.speed, w.direction, s.tuned.fitness, s.baseline_median_fitness
            )
        }
        Command::Ablate => {
            let s = cmd_ablate(&cfg)?;
            format!("ablate: mean fitness cnn-bilstm {:.4}, cnn-only {:.4}", s.hybrid.fitness.mean, s.cnn_only.fitness.mean)
        }
        Command::SweepSeqlen { .. } => {
            let s = cmd_sweep_seqlen(&cfg)?;
            let parts: Vec<String> = s.rows.iter().map(|r| format!("sl={} {:.4}", r.sl, r.summary.fitness.mean)).collect();
            format!("sweep-seqlen: mean fitness {}", parts.join(", "))
        }
        Command::Report { dirs } => {
            let r = report::collect(dirs)?;
            report::write_report(&r, &cfg.out_dir)?
        }
    };
    Ok(line)
}

fn metrics_line(m: &RunMetrics) -> String {
    format!("rmse_x {:.4} acc_speed {:.4} acc_dir {:.4} fitness {:.4}", m.rmse_x, m.acc_speed, m.acc_dir, m.fitness)
}

/// Exit status for an error: 2 for configuration problems, 3 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.downcast_ref::<ConfigError>().is_some()) {
        2
    } else {
        3
    }
}

/// Single-line, machine-parsable error record.
pub fn error_line(err: &anyhow::Error) -> String {
    let kind = if exit_code(err) == 2 { "config" } else { "runtime" };
    format!("error kind={kind} message={:?}", format!("{err:#}"))
}
