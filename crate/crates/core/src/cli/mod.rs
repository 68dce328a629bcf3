//! Command-line entry point. Settings resolve as flag, then the
//! subcommand's section of `--config` (TOML), then built-in defaults; the
//! resolved values are recorded in each run manifest.

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::attribution::AttributionError;
use crate::cd::CdError;
use crate::corpus::CorpusError;
use crate::models::ModelError;
use crate::report::ReportError;

/// Environment variable naming a directory searched for relative input
/// paths that do not exist in the working directory.
pub const DATA_DIR_ENV: &str = "CHARCD_DATA_DIR";

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_FILE: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_INVALID_INPUT: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("input file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema or model mismatch: {0}")]
    Mismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::MissingFile(_) => EXIT_MISSING_FILE,
            CliError::Mismatch(_) => EXIT_MISMATCH,
            CliError::InvalidInput(_) => EXIT_INVALID_INPUT,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::UnknownValue { .. } | CorpusError::UnknownClass(_) | CorpusError::Schema(_) => {
                CliError::Mismatch(e.to_string())
            }
            CorpusError::Config(_) => CliError::Usage(e.to_string()),
            CorpusError::Io(io) => CliError::Other(io.to_string()),
            _ => CliError::InvalidInput(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Corpus(c) => c.into(),
            ModelError::SchemaMismatch(_) | ModelError::Dimension { .. } => CliError::Mismatch(e.to_string()),
            ModelError::BadMagic
            | ModelError::UnsupportedVersion { .. }
            | ModelError::Checksum
            | ModelError::Corrupt(_) => CliError::InvalidInput(e.to_string()),
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<CdError> for CliError {
    fn from(e: CdError) -> Self {
        match e {
            CdError::Model(m) => m.into(),
            CdError::OutOfBounds { .. } | CdError::PadPosition(_) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<AttributionError> for CliError {
    fn from(e: AttributionError) -> Self {
        match e {
            AttributionError::UnknownClass(_) | AttributionError::UnknownValue { .. } => {
                CliError::Mismatch(e.to_string())
            }
            AttributionError::Cardinality { .. } | AttributionError::Config(_) => CliError::Usage(e.to_string()),
            AttributionError::Cd(c) => c.into(),
            AttributionError::Model(m) => m.into(),
            AttributionError::Corpus(c) => c.into(),
            AttributionError::Stats(s) => CliError::Other(s.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "charcd",
    version,
    about = "Character-level morphological taggers and contextual decomposition"
)]
pub struct Cli {
    /// TOML file with one table per subcommand, e.g. [train].
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a tagger on CoNLL-U files.
    Train(TrainArgs),
    /// Per-class accuracy on a CoNLL-U file, with the majority-vote baseline.
    Evaluate(EvaluateArgs),
    /// Contribution scores of character sets of one word.
    Attribute(AttributeArgs),
    /// Top-k agreement of attributions with segment annotations.
    Segeval(SegevalArgs),
    /// Synthetic-token validation experiment.
    Synthetic(SyntheticArgs),
    /// Most frequent highest-contributing character patterns.
    Patterns(PatternsArgs),
    /// Group-wise comparison of extreme contributions with rank tests.
    Interaction(InteractionArgs),
    /// SVG heatmap of per-character (or per-pair) contributions.
    Heatmap(HeatmapArgs),
    /// Generate a rule-based toy corpus with segment annotations.
    Toy(ToyArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Language code; fi, es and sv have built-in schemas, others are inferred.
    #[arg(long)]
    pub lang: Option<String>,
    /// cnn or bilstm.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Optional test file evaluated after training.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Leading lines dropped from the training file (default 520 for fi).
    #[arg(long)]
    pub skip_lines: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// BiLSTM hidden units per direction.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// CNN filters per unit of width (width n gets scale·n filters).
    #[arg(long)]
    pub filter_scale: Option<usize>,
    /// Widest CNN filter.
    #[arg(long)]
    pub max_width: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Training file for the majority-vote baseline.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub skip_lines: Option<usize>,
    /// JSON-lines report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub word: Option<String>,
    #[arg(long)]
    pub class: Option<String>,
    /// Label to explain; defaults to the predicted one.
    #[arg(long)]
    pub value: Option<String>,
    /// singleton, bigram, cons or all.
    #[arg(long)]
    pub mode: Option<String>,
    /// Set cardinality for cons/all.
    #[arg(long)]
    pub k: Option<usize>,
    /// Also score the start and end symbols (singleton mode).
    #[arg(long)]
    pub boundaries: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegevalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// TSV: word, Class=Value, comma-separated character positions.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long)]
    pub topk: Option<usize>,
    /// cons or all.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    /// Built-in toy ruleset name or TOML ruleset file; replaces the CoNLL-U inputs.
    #[arg(long)]
    pub toy: Option<String>,
    #[arg(long)]
    pub toy_words: Option<usize>,
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Segment annotations locating the ground-truth characters.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long)]
    pub skip_lines: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long)]
    pub positive: Option<String>,
    #[arg(long)]
    pub negative: Option<String>,
    #[arg(long)]
    pub symbol: Option<char>,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PatternsArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long)]
    pub value: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    /// Rows printed per length.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InteractionArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long)]
    pub value: Option<String>,
    /// Select words ending in this string.
    #[arg(long)]
    pub suffix: Option<String>,
    /// JSON-lines statistics table.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON-lines per-word extreme sets.
    #[arg(long)]
    pub words_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// One heatmap row per model.
    #[arg(long, required = false)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub word: Option<String>,
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long)]
    pub value: Option<String>,
    /// Ground-truth character positions drawn bold, e.g. 8,9.
    #[arg(long, value_delimiter = ',')]
    pub gt: Option<Vec<usize>>,
    /// Pair grid for the first model instead of per-character rows.
    #[arg(long)]
    pub bigram: bool,
    /// SVG path; a .txt matrix is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    /// plural_suffix, ambiguous_number or a TOML ruleset file.
    #[arg(long)]
    pub ruleset: Option<String>,
    #[arg(long)]
    pub words: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Resolved settings of one subcommand.
pub(crate) struct Settings {
    file: toml::Table,
    resolved: serde_json::Map<String, serde_json::Value>,
}

impl Settings {
    fn load(config: Option<&Path>, section: &str) -> Result<Self> {
        let file = match config {
            None => toml::Table::new(),
            Some(p) => {
                let p = resolve_input(p)?;
                let text = std::fs::read_to_string(&p)?;
                let mut all: toml::Table = text
                    .parse()
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
                match all.remove(section) {
                    Some(toml::Value::Table(t)) => t,
                    Some(_) => return Err(CliError::Usage(format!("config section [{section}] is not a table"))),
                    None => toml::Table::new(),
                }
            }
        };
        Ok(Settings {
            file,
            resolved: serde_json::Map::new(),
        })
    }

    fn resolve<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(
                    raw.clone()
                        .try_into()
                        .map_err(|e| CliError::Usage(format!("config key {key:?}: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &v {
            let json = serde_json::to_value(v).map_err(|e| CliError::Other(e.to_string()))?;
            self.resolved.insert(key.to_string(), json);
        }
        Ok(v)
    }

    pub(crate) fn get<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        match self.resolve(key, flag)? {
            Some(v) => Ok(v),
            None => {
                let json = serde_json::to_value(&default).map_err(|e| CliError::Other(e.to_string()))?;
                self.resolved.insert(key.to_string(), json);
                Ok(default)
            }
        }
    }

    pub(crate) fn opt<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        self.resolve(key, flag)
    }

    pub(crate) fn require<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<T> {
        self.resolve(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting --{}", key.replace('_', "-"))))
    }

    pub(crate) fn config(&self) -> serde_json::Value {
        serde_json::Value::Object(self.resolved.clone())
    }
}

/// `path` itself if it exists, else the same relative path under
/// `$CHARCD_DATA_DIR`.
pub fn resolve_input(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
    }
    Err(CliError::MissingFile(path.to_path_buf()))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
