//! Batch evaluation over a seeded train/test split.
//!
//! Output directory layout:
//!
//! * `per_query.jsonl`: one line per test query with its recommendation and metrics
//! * `report.txt`: the aggregate table
//! * `report.json`: per-query metrics and aggregates
//! * `manifest.json`: everything needed to replay the run
//! * `timing.json`: wall-clock data, kept apart so the files above are reproducible

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Args;
use serde::Serialize;
use sha2::{Digest, Sha256};

use toolrec_core::coverage::Scenario;
use toolrec_core::dataset::{load_dataset, split, DatasetRecord};
use toolrec_core::metrics::{evaluate, Aggregates};
use toolrec_core::{
    DatasetStyle, EvaluationReport, Pipeline, PipelineConfig, Provenance, QueryEvaluation, RecommendationResult, Score,
    SplitConfig, ToolId, ToolSet,
};

use crate::{load_corpus, write_err, CliError, DataArgs, PipelineArgs};

pub const PER_QUERY_FILE: &str = "per_query.jsonl";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Fraction of records held out as test queries.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Output directory.
    #[arg(long, default_value = "toolrec-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSummary {
    pub history_records: usize,
    pub unique_bundles: usize,
    pub test_records: usize,
}

/// Replay record for an evaluation run. Contains no timestamps.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub test_fraction: f64,
    pub style: DatasetStyle,
    pub enable_bundle_acquisition: bool,
    pub config: PipelineConfig,
    pub inputs: Vec<InputDigest>,
    pub split: SplitSummary,
    pub failed_queries: usize,
    pub aggregates: Aggregates<Score>,
}

#[derive(Debug, Clone, Serialize)]
struct PerQueryLine<'a> {
    index: usize,
    query: &'a str,
    ground: Vec<&'a str>,
    recommended: Vec<&'a str>,
    provenance: &'a BTreeMap<ToolId, Provenance>,
    retained: Vec<&'a str>,
    scenario: Option<Scenario>,
    unsolved_remaining: &'a [String],
    #[serde(flatten)]
    metrics: &'a QueryEvaluation,
    error: Option<&'a str>,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    started_unix_ms: u128,
    finished_unix_ms: u128,
    elapsed_ms: u128,
    jobs: usize,
    acquisition_us: u128,
    coverage_us: u128,
    rerank_us: u128,
}

/// What a finished evaluation produced.
#[derive(Debug, Clone)]
pub struct EvaluationOutput {
    pub report: EvaluationReport,
    pub manifest: RunManifest,
    pub results: Vec<RecommendationResult>,
    pub retained: Vec<ToolSet>,
    pub errors: Vec<Option<String>>,
    pub out_dir: PathBuf,
}

fn digest(role: &'static str, path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(InputDigest {
        role,
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len(),
    })
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn method_name(config: &PipelineConfig) -> String {
    let scorer = match config.acquisition.scorer {
        toolrec_core::ScorerKind::Random => "random",
        toolrec_core::ScorerKind::Bm25 => "bm25",
        toolrec_core::ScorerKind::Dense => "dense",
    };
    if config.enable_bundle_acquisition {
        format!("ptr-{scorer}")
    } else {
        format!("ptr-{scorer}-no-bundle")
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot serialize: {e}")))
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<EvaluationOutput, CliError> {
    let started = unix_ms();
    let clock = Instant::now();

    let corpus = load_corpus(&args.data.catalog)?;
    let style = DatasetStyle::from(args.data.style);
    let records = load_dataset(&args.data.dataset, &corpus, style.bound())?;
    let config = args.pipeline.effective_config()?;
    let spec = SplitConfig {
        test_fraction: args.test_fraction,
        seed: args.pipeline.seed,
    };
    let parts = split(&records, spec, &corpus)?;
    let embeddings = args.pipeline.load_embeddings(&config)?;

    let mut inputs = vec![
        digest("catalog", &args.data.catalog)?,
        digest("dataset", &args.data.dataset)?,
    ];
    for (role, path) in [
        ("config", &args.pipeline.config),
        ("rules", &args.pipeline.rules),
        ("embeddings", &args.pipeline.embeddings),
    ] {
        if let Some(path) = path {
            inputs.push(digest(role, path)?);
        }
    }

    let mapper = args.pipeline.build_mapper(&config)?;
    let split_summary = SplitSummary {
        history_records: parts.history.len(),
        unique_bundles: parts.history.unique_bundles().len(),
        test_records: parts.test.len(),
    };
    let pipeline = Pipeline::new(corpus, Arc::new(parts.history), config.clone(), mapper, embeddings)?;

    let queries = parts
        .test
        .iter()
        .map(DatasetRecord::query)
        .collect::<toolrec_core::Result<Vec<_>>>()?;
    let grounds = parts
        .test
        .iter()
        .map(DatasetRecord::toolset)
        .collect::<toolrec_core::Result<Vec<_>>>()?;

    let jobs = args.pipeline.jobs();
    let outcomes = pipeline.recommend_batch(&queries, jobs);

    let mut results = Vec::with_capacity(outcomes.len());
    let mut retained = Vec::with_capacity(outcomes.len());
    let mut scenarios = Vec::with_capacity(outcomes.len());
    let mut errors = Vec::with_capacity(outcomes.len());
    let (mut acquisition_us, mut coverage_us, mut rerank_us) = (0, 0, 0);
    for (query, outcome) in queries.iter().zip(outcomes) {
        match outcome {
            Ok((result, trace)) => {
                for w in &trace.warnings {
                    log::warn!("{}: {w}", query.text());
                }
                acquisition_us += trace.timings.acquisition_us;
                coverage_us += trace.timings.coverage_us;
                rerank_us += trace.timings.rerank_us;
                let report = trace.coverage.as_ref();
                retained.push(report.map(|c| c.assessment.retained.clone()).unwrap_or_default());
                scenarios.push(report.map(|c| c.assessment.scenario));
                results.push(result);
                errors.push(None);
            }
            // A failed query scores as an empty recommendation.
            Err(e) => {
                log::error!("{}: {e}", query.text());
                retained.push(ToolSet::new());
                scenarios.push(None);
                results.push(RecommendationResult::empty());
                errors.push(Some(e.to_string()));
            }
        }
    }
    let failed_queries = errors.iter().filter(|e| e.is_some()).count();

    let mut report: EvaluationReport = evaluate(&results, &grounds)?;
    report.dataset = args
        .data
        .dataset
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    report.method = method_name(&config);

    let mut per_query = String::new();
    for (i, metrics) in report.per_query.iter().enumerate() {
        let result = &results[i];
        let line = PerQueryLine {
            index: i,
            query: queries[i].text(),
            ground: grounds[i].iter().map(ToolId::as_str).collect(),
            recommended: result.ranked_order.iter().map(ToolId::as_str).collect(),
            provenance: &result.provenance,
            retained: retained[i].iter().map(ToolId::as_str).collect(),
            scenario: scenarios[i],
            unsolved_remaining: &result.unsolved_remaining,
            metrics,
            error: errors[i].as_deref(),
        };
        per_query
            .push_str(&serde_json::to_string(&line).map_err(|e| CliError::Runtime(format!("cannot serialize: {e}")))?);
        per_query.push('\n');
    }

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: args.pipeline.seed,
        test_fraction: args.test_fraction,
        style,
        enable_bundle_acquisition: config.enable_bundle_acquisition,
        config,
        inputs,
        split: split_summary,
        failed_queries,
        aggregates: report.aggregate.clone(),
    };
    let table = report.render_table();
    let timing = Timing {
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        elapsed_ms: clock.elapsed().as_millis(),
        jobs,
        acquisition_us,
        coverage_us,
        rerank_us,
    };

    // Everything is rendered before the first write.
    let files = [
        (PER_QUERY_FILE, per_query),
        (REPORT_TEXT_FILE, table.clone()),
        (REPORT_JSON_FILE, to_json(&report)?),
        (MANIFEST_FILE, to_json(&manifest)?),
        (TIMING_FILE, to_json(&timing)?),
    ];
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    for (name, contents) in &files {
        write_file(&args.out, name, contents)?;
    }

    write!(out, "{table}").map_err(write_err)?;
    if failed_queries > 0 {
        writeln!(out, "{failed_queries} of {} queries failed", queries.len()).map_err(write_err)?;
    }
    writeln!(out, "reports: {}", args.out.display()).map_err(write_err)?;

    Ok(EvaluationOutput {
        report,
        manifest,
        results,
        retained,
        errors,
        out_dir: args.out.clone(),
    })
}
