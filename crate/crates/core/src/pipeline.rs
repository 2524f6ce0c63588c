//! The three-stage recommender: bundle acquisition, coverage mapping and
//! multi-view re-ranking.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{build_bundle_index, Acquisition, AcquisitionConfig, BundleIndex, ScorerKind};
use crate::coverage::{
    extract_functionalities, map_coverage, CoverageMapper, CoverageReport, Scenario, UnsolvedProblem,
};
use crate::domain::{History, Provenance, Query, RecommendationResult, ToolCorpus, ToolId, ToolSet};
use crate::error::{Error, Result};
use crate::rerank::{MultiViewReranker, ProblemTrace, RerankConfig, ViewScorers};
use crate::scalar::Real;
use crate::similarity::{Bm25Params, Bm25Scorer, DenseScorer, EmbeddingTable, SimilarityScorer};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapperKind {
    Remote,
    #[default]
    RuleMock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// When false, stage 1 and stage 2 are skipped and every extracted
    /// functionality goes straight to re-ranking.
    pub enable_bundle_acquisition: bool,
    pub acquisition: AcquisitionConfig,
    pub rerank: RerankConfig,
    pub mapper: MapperKind,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            enable_bundle_acquisition: true,
            acquisition: AcquisitionConfig::default(),
            rerank: RerankConfig::default(),
            mapper: MapperKind::default(),
            bm25_k1: 1.2,
            bm25_b: 0.75,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::parse(
                format!("{}: line {} column {}", path.display(), e.line(), e.column()),
                e.to_string(),
            )
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub acquisition_us: u128,
    pub coverage_us: u128,
    pub rerank_us: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace<S> {
    pub query: String,
    pub bundle_acquisition_enabled: bool,
    pub acquisition: Option<Acquisition<S>>,
    pub coverage: Option<CoverageReport>,
    pub problems: Vec<UnsolvedProblem>,
    pub rerank: Vec<ProblemTrace>,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

fn make_scorer<S: Real>(
    kind: ScorerKind,
    config: &PipelineConfig,
    embeddings: Option<&Arc<EmbeddingTable<S>>>,
) -> Result<Box<dyn SimilarityScorer<S>>> {
    match kind {
        ScorerKind::Dense => {
            let table =
                embeddings.ok_or_else(|| Error::invalid("scorer", "the dense scorer needs an embedding table"))?;
            Ok(Box::new(DenseScorer {
                table: Arc::clone(table),
            }))
        }
        // The random baseline only affects bundle acquisition; retrieval views use BM25.
        ScorerKind::Bm25 | ScorerKind::Random => Ok(Box::new(Bm25Scorer::new(Bm25Params {
            k1: S::from_f64_lossy(config.bm25_k1),
            b: S::from_f64_lossy(config.bm25_b),
        }))),
    }
}

pub struct Pipeline<S> {
    corpus: Arc<ToolCorpus>,
    history: Arc<History>,
    config: PipelineConfig,
    mapper: Arc<dyn CoverageMapper>,
    bundles: Option<BundleIndex<S>>,
    reranker: MultiViewReranker<S>,
}

impl<S: Real> Pipeline<S> {
    pub fn new(
        corpus: Arc<ToolCorpus>,
        history: Arc<History>,
        config: PipelineConfig,
        mapper: Arc<dyn CoverageMapper>,
        embeddings: Option<Arc<EmbeddingTable<S>>>,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let shared = config.acquisition.scorer;
        let scorer = make_scorer(shared, &config, embeddings.as_ref())?;
        let bundles = if config.enable_bundle_acquisition {
            Some(build_bundle_index(
                &history,
                &corpus,
                &config.acquisition,
                scorer.as_ref(),
            )?)
        } else {
            None
        };
        let dsa = make_scorer(config.rerank.dsa_scorer.unwrap_or(shared), &config, embeddings.as_ref())?;
        let hqc = make_scorer(config.rerank.hqc_scorer.unwrap_or(shared), &config, embeddings.as_ref())?;
        let cte = make_scorer(config.rerank.cte_scorer.unwrap_or(shared), &config, embeddings.as_ref())?;
        let reranker = MultiViewReranker::build(
            &corpus,
            &history,
            config.rerank.k_per_view,
            ViewScorers {
                dsa: dsa.as_ref(),
                hqc: hqc.as_ref(),
                cte: cte.as_ref(),
            },
        )?;
        Ok(Pipeline {
            corpus,
            history,
            config,
            mapper,
            bundles,
            reranker,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn corpus(&self) -> &ToolCorpus {
        &self.corpus
    }

    /// Retained tools ordered by similarity to the query (corpus order on
    /// ties or when the query cannot be scored).
    fn rank_retained(&self, query: &Query, retained: &ToolSet, warnings: &mut Vec<String>) -> Vec<ToolId> {
        let mut ordered = self.corpus.canonical_order(retained);
        match self.reranker.score_tools(query.text()) {
            Ok(scores) if !scores.is_empty() => {
                let score = |id: &ToolId| {
                    self.corpus
                        .position(id.as_str())
                        .map_or(S::neg_infinity(), |p| scores[p])
                };
                ordered.sort_by(|a, b| score(b).partial_cmp(&score(a)).unwrap_or(std::cmp::Ordering::Equal));
            }
            Ok(_) => {}
            Err(e) => warnings.push(format!("could not score query for ranking: {e}")),
        }
        ordered
    }

    pub fn recommend(&self, query: &Query) -> Result<(RecommendationResult, RunTrace<S>)> {
        let mut trace = RunTrace {
            query: query.text().to_string(),
            bundle_acquisition_enabled: self.bundles.is_some(),
            acquisition: None,
            coverage: None,
            problems: Vec::new(),
            rerank: Vec::new(),
            warnings: Vec::new(),
            timings: StageTimings::default(),
        };

        let (retained, problems) = match &self.bundles {
            Some(bundles) => {
                let t = Instant::now();
                let acquisition = bundles.acquire(query)?;
                trace.timings.acquisition_us = t.elapsed().as_micros();

                let t = Instant::now();
                let report = map_coverage(query, &acquisition.bundle, &self.corpus, self.mapper.as_ref());
                trace.timings.coverage_us = t.elapsed().as_micros();
                let retained = report.assessment.retained.clone();
                let problems = match report.assessment.scenario {
                    Scenario::PartialSolving => report.assessment.unsolved.clone(),
                    _ => Vec::new(),
                };
                trace.warnings.extend(report.warnings.iter().cloned());
                trace.acquisition = Some(acquisition);
                trace.coverage = Some(report);
                (retained, problems)
            }
            None => {
                let t = Instant::now();
                let extraction = extract_functionalities(query, self.mapper.as_ref());
                trace.timings.coverage_us = t.elapsed().as_micros();
                let problems = extraction
                    .functionalities
                    .into_iter()
                    .map(|f| UnsolvedProblem { text: f.text })
                    .collect();
                (ToolSet::new(), problems)
            }
        };
        trace.problems = problems.clone();

        let t = Instant::now();
        let outcome = self
            .reranker
            .rerank_for_problems(&problems, &retained, &self.history, &self.corpus)?;
        trace.timings.rerank_us = t.elapsed().as_micros();

        let mut ranked_order = self.rank_retained(query, &retained, &mut trace.warnings);
        let mut provenance: BTreeMap<ToolId, Provenance> = retained
            .iter()
            .map(|t| (t.clone(), Provenance::BundleRetained))
            .collect();
        for id in &outcome.additions {
            provenance.insert(id.clone(), Provenance::RerankedAddition);
            ranked_order.push(id.clone());
        }
        let result = RecommendationResult {
            recommended: ranked_order.iter().cloned().collect(),
            ranked_order,
            provenance,
            unsolved_remaining: outcome.still_unsolved.iter().map(|p| p.text.clone()).collect(),
        };
        result.check_invariants()?;
        trace.rerank = outcome.traces;
        Ok((result, trace))
    }

    /// Runs [`Pipeline::recommend`] over `queries` on up to `jobs` threads.
    /// Output order matches input order; failures are kept per element.
    pub fn recommend_batch(&self, queries: &[Query], jobs: usize) -> Vec<Result<(RecommendationResult, RunTrace<S>)>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build();
        match pool {
            Ok(pool) => pool.install(|| queries.par_iter().map(|q| self.recommend(q)).collect()),
            Err(_) => queries.iter().map(|q| self.recommend(q)).collect(),
        }
    }
}

/// One-shot convenience: builds a pipeline and recommends for `query`.
pub fn recommend<S: Real>(
    query: &Query,
    corpus: Arc<ToolCorpus>,
    history: Arc<History>,
    config: PipelineConfig,
    mapper: Arc<dyn CoverageMapper>,
    embeddings: Option<Arc<EmbeddingTable<S>>>,
) -> Result<(RecommendationResult, RunTrace<S>)> {
    Pipeline::new(corpus, history, config, mapper, embeddings)?.recommend(query)
}
