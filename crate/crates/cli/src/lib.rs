//! `graphodex` command line: synthetic data, preprocessing, training,
//! evaluation, prediction, the seven-configuration suite, reports and the
//! examiner-study service.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use graphodex_core::patching::Language;

pub use config::{Preset, Settings};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "graphodex", version, about = "Writer-gender classification from handwriting patches")]
pub struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Md,
    Csv,
}

fn parse_language(s: &str) -> std::result::Result<Language, String> {
    s.parse().map_err(|e: graphodex_core::patching::PatchError| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a labeled two-script synthetic corpus and its manifest.
    Synth {
        /// Forms per gender (even: one per script and writer).
        #[arg(long, default_value_t = 20)]
        forms_per_class: usize,
        #[arg(long, default_value_t = 256)]
        page_size: usize,
    },
    /// Balance the manifest and write the patch archive plus a summary.
    Preprocess,
    /// Train one network on a fold's training writers and save a checkpoint.
    Train {
        /// 1-based fold whose train/validation split is used.
        #[arg(long, default_value_t = 1)]
        fold: usize,
        /// Comma-separated training languages.
        #[arg(long, value_delimiter = ',', default_value = "HE,EN", value_parser = parse_language)]
        train_langs: Vec<Language>,
    },
    /// Form-level accuracy of a checkpoint on the held-out test forms.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "HE,EN", value_parser = parse_language)]
        test_langs: Vec<Language>,
    },
    /// Classify one form image with both aggregation methods.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_parser = parse_language)]
        language: Language,
    },
    /// Run all seven train/test language configurations.
    RunSuite,
    /// Re-render a saved results.json as a table.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
    },
    /// Serve the examiner-study API; `--out` holds the event log.
    Serve {
        /// Directory with the built examiner UI, served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

/// Resolves settings and runs the subcommand, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let file = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let settings = file.overlaid(&cli.settings);
    commands::dispatch(&cli.command, &settings, out)
}
