//! Command-line front end: `segment → classify → review → build → eval → score`.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3 backend or
//! transport error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use glyphforge_core::client::ClientError;
use glyphforge_core::dataset::{Condition, DatasetError};
use glyphforge_core::eval::EvalError;
use glyphforge_core::project::ProjectError;
use glyphforge_core::raster::Threshold;
use serde::Deserialize;
use thiserror::Error;

pub use commands::{classifier_params, segment_config};
use config::FileConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Human,
    Json,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Backend(_) => "backend",
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e.field() {
            Some(field) => CliError::Validation(format!("{field}: {e}")),
            None => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ProjectError> for CliError {
    fn from(e: ProjectError) -> Self {
        match e {
            ProjectError::Dataset(d) => d.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Dataset(d) => d.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::Backend(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "glyphforge", version, about = "Build and score undeciphered-script puzzles")]
pub struct Cli {
    /// Project directory [default: .]
    #[arg(long, global = true)]
    pub project: Option<PathBuf>,
    /// TOML config file.
    #[arg(long, global = true, env = "GLYPHFORGE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output format [default: human]
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// More logging (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment line images into glyph occurrences.
    Segment(SegmentArgs),
    /// Cluster occurrences into token classes and write inventory.json.
    Classify(ClassifyArgs),
    /// Serve the review API (and optionally the review UI).
    Review(ReviewArgs),
    /// Build a prompt bundle for one puzzle and condition.
    Build(BuildArgs),
    /// Run prompt bundles against a backend and write evaluation records.
    Eval(EvalArgs),
    /// Aggregate evaluation records into a report.
    Score(ScoreArgs),
    /// Create or check the token description table.
    #[command(subcommand)]
    Describe(DescribeCommand),
    /// Build a description-pairing bundle.
    Pairing(PairingArgs),
    /// Render the token sheet PNG.
    Sheet(SheetArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Line images; re-segments every project image when omitted.
    pub images: Vec<PathBuf>,
    #[arg(long)]
    pub min_gap: Option<usize>,
    #[arg(long)]
    pub band_top: Option<f64>,
    #[arg(long)]
    pub band_bottom: Option<f64>,
    #[arg(long, overrides_with = "no_bridge_exception")]
    pub bridge_exception: bool,
    #[arg(long)]
    pub no_bridge_exception: bool,
    #[arg(long)]
    pub min_glyph_width: Option<usize>,
    /// `otsu` or a fixed level 0-255.
    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<Threshold>,
    /// Sources are light ink on a dark background.
    #[arg(long, overrides_with = "no_invert")]
    pub invert: bool,
    #[arg(long)]
    pub no_invert: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Similarity threshold in (0, 1].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Side of the normalized glyph grid.
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long, overrides_with = "no_mirror_detect")]
    pub mirror_detect: bool,
    #[arg(long)]
    pub no_mirror_detect: bool,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    /// Address to listen on [default: 127.0.0.1:8737]
    #[arg(long)]
    pub bind: Option<String>,
    /// Directory of static UI files served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Puzzle JSON file, or the id of a puzzle under `puzzles/`.
    pub puzzle: PathBuf,
    #[arg(long, value_parser = parse_condition)]
    pub condition: Option<Condition>,
    /// Prompt template file, or a file name under `templates/`.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Description table CSV [default: descriptions.csv in the project]
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    #[arg(long, overrides_with = "no_reveal_direction")]
    pub reveal_direction: bool,
    #[arg(long)]
    pub no_reveal_direction: bool,
    /// [default: build/<puzzle_id>.<condition>.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub columns: Option<usize>,
    #[arg(long)]
    pub cell_px: Option<usize>,
    #[arg(long)]
    pub label_px: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(required = true)]
    pub bundles: Vec<PathBuf>,
    /// Backend name: `mock`, `mock-empty`, or a `[[backends]]` entry.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: runs/<backend>.ndjson]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub initial_backoff_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// NDJSON record files.
    #[arg(required = true)]
    pub records: Vec<PathBuf>,
    /// Write the report JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DescribeCommand {
    /// Write an empty description table with one row per class.
    Scaffold {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite an existing table.
        #[arg(long)]
        force: bool,
    },
    /// Check a description table against the inventory.
    Check { descriptions: Option<PathBuf> },
}

#[derive(Debug, Args)]
pub struct PairingArgs {
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: build/pairing.<seed>.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SheetArgs {
    /// [default: build/token_sheet.png]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_threshold(s: &str) -> Result<Threshold, String> {
    if s.eq_ignore_ascii_case("otsu") {
        return Ok(Threshold::Otsu);
    }
    s.parse::<u8>()
        .map(Threshold::Fixed)
        .map_err(|_| format!("expected `otsu` or a level 0-255, got {s:?}"))
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse()
}

/// Result of a command: text for people, JSON for machines, and the exit code.
pub struct Outcome {
    pub human: String,
    pub json: serde_json::Value,
    pub code: i32,
}

impl Outcome {
    fn ok(human: String, json: serde_json::Value) -> Self {
        Self {
            human,
            json,
            code: EXIT_OK,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => return report_error(&e, cli.format.unwrap_or(OutputFormat::Human), err),
    };
    let format = config::pick(cli.format, file.format, OutputFormat::Human);
    init_logging(config::pick((cli.verbose > 0).then_some(cli.verbose), file.verbose, 0));
    let ctx = commands::Ctx {
        root: config::pick(cli.project.clone(), file.project.clone(), PathBuf::from(".")),
        file,
    };
    match commands::dispatch(&cli.command, &ctx) {
        Ok(o) => {
            let _ = match format {
                OutputFormat::Human => write!(out, "{}", o.human),
                OutputFormat::Json => writeln!(out, "{}", o.json),
            };
            o.code
        }
        Err(e) => report_error(&e, format, err),
    }
}

fn report_error(e: &CliError, format: OutputFormat, err: &mut dyn Write) -> i32 {
    let _ = match format {
        OutputFormat::Human => writeln!(err, "error: {e}"),
        OutputFormat::Json => writeln!(
            err,
            "{}",
            serde_json::json!({"error": {"code": e.code(), "message": e.to_string()}})
        ),
    };
    e.exit_code()
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}
