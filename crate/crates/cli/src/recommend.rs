use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use serde::Serialize;

use toolrec_core::dataset::{load_dataset, to_history};
use toolrec_core::{DatasetStyle, Pipeline, Provenance, Query, RecommendationResult, RunTrace};

use crate::{load_corpus, write_err, CliError, DataArgs, PipelineArgs};

#[derive(Debug, Clone, Args)]
pub struct RecommendArgs {
    /// The query to recommend tools for.
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Where to write the JSON trace.
    #[arg(long, default_value = "toolrec-trace.json")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct TraceFile<'a> {
    result: &'a RecommendationResult,
    trace: &'a RunTrace,
}

pub fn cmd_recommend(args: &RecommendArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let query = Query::new(args.query.clone())?;
    let corpus = load_corpus(&args.data.catalog)?;
    let style = DatasetStyle::from(args.data.style);
    let records = load_dataset(&args.data.dataset, &corpus, style.bound())?;
    let history = Arc::new(to_history(&records, &corpus)?);
    let config = args.pipeline.effective_config()?;
    let embeddings = args.pipeline.load_embeddings(&config)?;
    let mapper = args.pipeline.build_mapper(&config)?;

    let pipeline = Pipeline::new(corpus, history, config, mapper, embeddings)?;
    let (result, trace) = pipeline.recommend(&query)?;

    let json = serde_json::to_string_pretty(&TraceFile {
        result: &result,
        trace: &trace,
    })
    .map_err(|e| CliError::Runtime(format!("cannot serialize trace: {e}")))?;
    std::fs::write(&args.out, json + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;

    print_result(&result, out).map_err(write_err)?;
    writeln!(out, "trace: {}", args.out.display()).map_err(write_err)?;
    Ok(())
}

fn print_result(result: &RecommendationResult, out: &mut dyn Write) -> std::io::Result<()> {
    let ids: Vec<&str> = result.ranked_order.iter().map(|t| t.as_str()).collect();
    writeln!(out, "recommended: {}", ids.join(", "))?;
    writeln!(out, "ranked order:")?;
    for (i, id) in result.ranked_order.iter().enumerate() {
        let origin = match result.provenance.get(id) {
            Some(Provenance::BundleRetained) => "bundle-retained",
            Some(Provenance::RerankedAddition) => "reranked-addition",
            None => "?",
        };
        writeln!(out, "  {}. {id} ({origin})", i + 1)?;
    }
    for problem in &result.unsolved_remaining {
        writeln!(out, "unsolved: {problem}")?;
    }
    Ok(())
}
