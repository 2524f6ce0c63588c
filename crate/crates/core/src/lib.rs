//! Precision-driven tool recommendation.
//!
//! Given a query, a tool catalog and a history of `(query, tool bundle)`
//! usage records, [`Pipeline`] recommends an exact tool set in three stages:
//!
//! 1. [`bundle`]: retrieve the single most relevant historical bundle.
//! 2. [`coverage`]: decompose the query into functionalities, keep the bundle
//!    tools that serve one, and collect the needs nobody serves.
//! 3. [`rerank`]: for each unmet need, vote across three candidate lists and
//!    add the winning tool.
//!
//! [`metrics`] scores recommendations with TRACC, Recall@K, NDCG@K and the
//! average length difference. Scoring and metric code is generic over the
//! scalar type (see [`scalar`]); the aliases below fix it to `f64`.

pub mod bundle;
pub mod coverage;
pub mod dataset;
pub mod domain;
pub mod error;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod rerank;
pub mod scalar;
pub mod similarity;

pub use bundle::{AcquisitionConfig, Representation, ScorerKind};
pub use coverage::{CoverageAssessment, CoverageMapper, Functionality, Scenario, UnsolvedProblem};
pub use dataset::{DatasetRecord, DatasetStyle, SplitConfig};
pub use domain::{
    HistoricalRecord, History, Provenance, Query, RecommendationResult, Tool, ToolCorpus, ToolId, ToolSet,
};
pub use error::{Error, Result};
pub use pipeline::{MapperKind, PipelineConfig};
pub use rerank::{RerankConfig, ViewLists};
pub use scalar::{Field, Rational, Real};

/// Default scalar for scores and metrics.
pub type Score = f64;

pub type Pipeline = pipeline::Pipeline<Score>;
pub type RunTrace = pipeline::RunTrace<Score>;
pub type Acquisition = bundle::Acquisition<Score>;
pub type BundleIndex = bundle::BundleIndex<Score>;
pub type MultiViewReranker = rerank::MultiViewReranker<Score>;
pub type ScoredCandidate = similarity::ScoredCandidate<Score>;
pub type Bm25Index = similarity::Bm25Index<Score>;
pub type Bm25Params = similarity::Bm25Params<Score>;
pub type DenseIndex = similarity::DenseIndex<Score>;
pub type EmbeddingTable = similarity::EmbeddingTable<Score>;
pub type QueryEvaluation = metrics::QueryEvaluation<Score>;
pub type EvaluationReport = metrics::EvaluationReport<Score>;
