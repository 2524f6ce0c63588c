//! Command-line driver for the toolrec recommender.
//!
//! The binary is a thin wrapper over [`run`]; tests call the same entry point
//! with a captured output stream.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use toolrec_core::coverage::CoverageMapper;
use toolrec_core::dataset::load_catalog;
use toolrec_core::llm::{EndpointConfig, HttpChat, MockRuleTable, PromptSet, RemoteMapper, RuleMockMapper};
use toolrec_core::{DatasetStyle, EmbeddingTable, MapperKind, PipelineConfig, ScorerKind, ToolCorpus};

pub mod evaluate;
pub mod recommend;
pub mod validate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid input files.
    #[error("{0}")]
    Input(String),
    /// Anything that went wrong after the inputs were accepted.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<toolrec_core::Error> for CliError {
    fn from(e: toolrec_core::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub(crate) fn write_err(e: std::io::Error) -> CliError {
    CliError::Runtime(format!("cannot write output: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "toolrec", version, about = "Precision-driven tool recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a catalog and dataset, listing every violation.
    Validate(validate::ValidateArgs),
    /// Recommend a toolset for one query, using the whole dataset as history.
    Recommend(recommend::RecommendArgs),
    /// Split the dataset, recommend for every test query and write reports.
    Evaluate(evaluate::EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Toollens,
    Metatool,
    Rectools,
}

impl From<StyleArg> for DatasetStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Toollens => DatasetStyle::ToolLens,
            StyleArg::Metatool => DatasetStyle::MetaTool,
            StyleArg::Rectools => DatasetStyle::RecTools,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Random,
    Bm25,
    Dense,
}

impl From<ScorerArg> for ScorerKind {
    fn from(s: ScorerArg) -> Self {
        match s {
            ScorerArg::Random => ScorerKind::Random,
            ScorerArg::Bm25 => ScorerKind::Bm25,
            ScorerArg::Dense => ScorerKind::Dense,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapperArg {
    Remote,
    Mock,
}

impl From<MapperArg> for MapperKind {
    fn from(m: MapperArg) -> Self {
        match m {
            MapperArg::Remote => MapperKind::Remote,
            MapperArg::Mock => MapperKind::RuleMock,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Tool catalog (JSON).
    #[arg(long)]
    pub catalog: PathBuf,
    /// Dataset of (query, tools) records (JSON lines).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Tools-per-query bound to enforce.
    #[arg(long, value_enum, default_value = "rectools")]
    pub style: StyleArg,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Pipeline configuration (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerArg>,
    #[arg(long, value_enum)]
    pub mapper: Option<MapperArg>,
    /// Rule table for the mock mapper.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Embedding table for the dense scorer.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Seed for the split and the random baseline.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub k_per_view: Option<usize>,
    /// Skip bundle acquisition; every functionality goes to re-ranking.
    #[arg(long)]
    pub ablation_no_bundle: bool,
    /// Worker threads for batch recommendation.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl PipelineArgs {
    /// Config file (or defaults) with flag overrides applied.
    pub fn effective_config(&self) -> Result<PipelineConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.scorer {
            config.acquisition.scorer = s.into();
        }
        if let Some(m) = self.mapper {
            config.mapper = m.into();
        }
        if let Some(k) = self.k_per_view {
            config.rerank.k_per_view = k;
        }
        if self.ablation_no_bundle {
            config.enable_bundle_acquisition = false;
        }
        config.acquisition.random_seed = Some(self.seed);
        Ok(config)
    }

    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    fn uses_dense(&self, config: &PipelineConfig) -> bool {
        let r = &config.rerank;
        [
            Some(config.acquisition.scorer),
            r.dsa_scorer,
            r.hqc_scorer,
            r.cte_scorer,
        ]
        .contains(&Some(ScorerKind::Dense))
    }

    pub fn load_embeddings(&self, config: &PipelineConfig) -> Result<Option<Arc<EmbeddingTable>>, CliError> {
        match &self.embeddings {
            Some(path) => Ok(Some(Arc::new(EmbeddingTable::load(path)?))),
            None if self.uses_dense(config) => {
                Err(CliError::Input("the dense scorer needs --embeddings <file>".into()))
            }
            None => Ok(None),
        }
    }

    /// Builds the coverage mapper. Rule-file problems are input errors; a
    /// missing endpoint credential is a runtime error.
    pub fn build_mapper(&self, config: &PipelineConfig) -> Result<Arc<dyn CoverageMapper>, CliError> {
        match config.mapper {
            MapperKind::RuleMock => {
                let path = self
                    .rules
                    .as_deref()
                    .ok_or_else(|| CliError::Input("the mock mapper needs --rules <file>".into()))?;
                let table =
                    MockRuleTable::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                Ok(Arc::new(RuleMockMapper::new(table)))
            }
            MapperKind::Remote => {
                let endpoint = EndpointConfig::from_env().map_err(|e| CliError::Runtime(e.to_string()))?;
                let model = endpoint.model.clone();
                let chat = HttpChat::new(endpoint).map_err(|e| CliError::Runtime(e.to_string()))?;
                Ok(Arc::new(RemoteMapper::new(chat, PromptSet::default(), model)))
            }
        }
    }
}

pub(crate) fn load_corpus(path: &Path) -> Result<Arc<ToolCorpus>, CliError> {
    Ok(Arc::new(load_catalog(path)?))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(args) => validate::cmd_validate(&args, out),
        Command::Recommend(args) => recommend::cmd_recommend(&args, out),
        Command::Evaluate(args) => evaluate::cmd_evaluate(&args, out).map(|_| ()),
    }
}

/// Parses `args` (including the program name) and runs the command, returning
/// the process exit code. Errors go to `err`.
pub fn run_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
        }
    };
    match run(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
