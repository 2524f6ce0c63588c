//! Stage 3: multi-view re-ranking for unsolved problems.
//!
//! For each problem three candidate lists are built:
//!
//! * DSA (direct semantic alignment): top-K tools scored against the problem.
//! * HQC (historical query correlation): bundles of the top-K most similar
//!   past queries, flattened and deduplicated.
//! * CTE (contextual tool expansion): top-K tools scored against the
//!   description of the first DSA tool.
//!
//! The lists are concatenated, occurrences counted, and the most frequent
//! tool wins. Ties go to the earliest occurrence in the DSA, HQC, CTE
//! concatenation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bundle::ScorerKind;
use crate::coverage::UnsolvedProblem;
use crate::domain::{History, ToolCorpus, ToolId, ToolSet};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::similarity::{select_k, Document, DocumentIndex, Probe, SimilarityScorer};

pub const DEFAULT_K_PER_VIEW: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankConfig {
    pub k_per_view: usize,
    /// Per-view scorer overrides; `None` uses the pipeline's shared scorer.
    pub dsa_scorer: Option<ScorerKind>,
    pub hqc_scorer: Option<ScorerKind>,
    pub cte_scorer: Option<ScorerKind>,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            k_per_view: DEFAULT_K_PER_VIEW,
            dsa_scorer: None,
            hqc_scorer: None,
            cte_scorer: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ViewLists {
    pub dsa: Vec<ToolId>,
    pub hqc: Vec<ToolId>,
    pub cte: Vec<ToolId>,
}

impl ViewLists {
    pub fn concatenated(&self) -> impl Iterator<Item = &ToolId> {
        self.dsa.iter().chain(&self.hqc).chain(&self.cte)
    }

    pub fn is_empty(&self) -> bool {
        self.dsa.is_empty() && self.hqc.is_empty() && self.cte.is_empty()
    }
}

/// `(tool, count)` pairs, counts non-increasing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct FrequencyRanking(pub Vec<(ToolId, usize)>);

impl FrequencyRanking {
    pub fn top(&self) -> Option<&ToolId> {
        self.0.first().map(|(t, _)| t)
    }
}

/// Counts occurrences across the three views and ranks by frequency.
pub fn rank_by_frequency(views: &ViewLists) -> FrequencyRanking {
    let mut counts: Vec<(ToolId, usize)> = Vec::new();
    let mut slot: HashMap<&ToolId, usize> = HashMap::new();
    for id in views.concatenated() {
        match slot.get(id) {
            Some(&i) => counts[i].1 += 1,
            None => {
                slot.insert(id, counts.len());
                counts.push((id.clone(), 1));
            }
        }
    }
    // Stable sort keeps first-occurrence order among equal counts.
    counts.sort_by_key(|c| std::cmp::Reverse(c.1));
    FrequencyRanking(counts)
}

pub fn aggregate_and_select(views: &ViewLists) -> Option<ToolId> {
    rank_by_frequency(views).top().cloned()
}

/// Scorers bound to each view.
pub struct ViewScorers<'a, S> {
    pub dsa: &'a dyn SimilarityScorer<S>,
    pub hqc: &'a dyn SimilarityScorer<S>,
    pub cte: &'a dyn SimilarityScorer<S>,
}

impl<'a, S> ViewScorers<'a, S> {
    pub fn shared(scorer: &'a dyn SimilarityScorer<S>) -> Self {
        ViewScorers {
            dsa: scorer,
            hqc: scorer,
            cte: scorer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemOutcome {
    Added,
    /// The selected tool was already recommended; nothing added.
    AlreadyPresent,
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProblemTrace {
    pub problem: UnsolvedProblem,
    pub views: ViewLists,
    pub ranking: FrequencyRanking,
    pub selected: Option<ToolId>,
    pub outcome: ProblemOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RerankOutcome {
    pub additions: Vec<ToolId>,
    pub still_unsolved: Vec<UnsolvedProblem>,
    pub traces: Vec<ProblemTrace>,
}

fn tool_documents(corpus: &ToolCorpus) -> Vec<Document> {
    corpus
        .tools()
        .iter()
        .map(|t| Document::new(t.id.as_str(), t.matching_text()))
        .collect()
}

fn record_key(i: usize) -> String {
    format!("record-{i}")
}

/// Pre-built view indexes over a tool corpus and a history.
pub struct MultiViewReranker<S> {
    k: usize,
    dsa_tools: Option<Box<dyn DocumentIndex<S>>>,
    cte_tools: Option<Box<dyn DocumentIndex<S>>>,
    past_queries: Option<Box<dyn DocumentIndex<S>>>,
}

impl<S: Real> MultiViewReranker<S> {
    pub fn build(
        corpus: &ToolCorpus,
        history: &History,
        k_per_view: usize,
        scorers: ViewScorers<'_, S>,
    ) -> Result<Self> {
        if k_per_view == 0 {
            return Err(Error::invalid("rerank config", "k_per_view must be at least 1"));
        }
        let dsa_tools = (!corpus.is_empty())
            .then(|| scorers.dsa.index(tool_documents(corpus)))
            .transpose()?;
        let cte_tools = (!corpus.is_empty())
            .then(|| scorers.cte.index(tool_documents(corpus)))
            .transpose()?;
        let past_queries = (!history.is_empty())
            .then(|| {
                scorers.hqc.index(
                    history
                        .records()
                        .iter()
                        .enumerate()
                        .map(|(i, r)| Document::new(record_key(i), r.query.text()))
                        .collect(),
                )
            })
            .transpose()?;
        Ok(MultiViewReranker {
            k: k_per_view,
            dsa_tools,
            cte_tools,
            past_queries,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Scores every tool against `text` with the DSA index, in corpus order.
    pub fn score_tools(&self, text: &str) -> Result<Vec<S>> {
        match &self.dsa_tools {
            Some(index) => Ok(index.score(Probe::text(text))?.into_iter().map(|c| c.score).collect()),
            None => Ok(Vec::new()),
        }
    }

    pub fn build_dsa(&self, problem: &UnsolvedProblem) -> Result<Vec<ToolId>> {
        let Some(index) = &self.dsa_tools else {
            return Ok(Vec::new());
        };
        let scores = index.score(Probe::text(&problem.text))?;
        let dsa = to_ids(select_k(&scores, self.k))?;
        assert!(dsa.len() <= self.k);
        Ok(dsa)
    }

    pub fn build_hqc(&self, problem: &UnsolvedProblem, history: &History, corpus: &ToolCorpus) -> Result<Vec<ToolId>> {
        let Some(index) = &self.past_queries else {
            return Ok(Vec::new());
        };
        let scores = index.score(Probe::text(&problem.text))?;
        let mut seen = ToolSet::new();
        let mut hqc = Vec::new();
        for key in select_k(&scores, self.k) {
            let pos = index
                .keys()
                .iter()
                .position(|k| *k == key)
                .expect("selected key comes from the index");
            for id in corpus.canonical_order(&history.records()[pos].bundle) {
                if seen.insert(id.clone()) {
                    hqc.push(id);
                }
            }
        }
        Ok(hqc)
    }

    pub fn build_cte(&self, dsa: &[ToolId], corpus: &ToolCorpus) -> Result<Vec<ToolId>> {
        let (Some(primary), Some(index)) = (dsa.first(), &self.cte_tools) else {
            return Ok(Vec::new());
        };
        let tool = corpus
            .get(primary.as_str())
            .ok_or_else(|| Error::UnknownTool(primary.to_string()))?;
        let scores = index.score(Probe::with_key(&tool.description, tool.id.as_str()))?;
        let cte = to_ids(select_k(&scores, self.k))?;
        assert!(cte.len() <= self.k);
        Ok(cte)
    }

    pub fn views(&self, problem: &UnsolvedProblem, history: &History, corpus: &ToolCorpus) -> Result<ViewLists> {
        let dsa = self.build_dsa(problem)?;
        let hqc = self.build_hqc(problem, history, corpus)?;
        let cte = self.build_cte(&dsa, corpus)?;
        Ok(ViewLists { dsa, hqc, cte })
    }

    /// Selects one tool per problem, in order. A selection already present in
    /// `current` or among earlier additions is ignored.
    pub fn rerank_for_problems(
        &self,
        problems: &[UnsolvedProblem],
        current: &ToolSet,
        history: &History,
        corpus: &ToolCorpus,
    ) -> Result<RerankOutcome> {
        let mut outcome = RerankOutcome::default();
        let mut taken = current.clone();
        for problem in problems {
            let views = self.views(problem, history, corpus)?;
            let ranking = rank_by_frequency(&views);
            let selected = ranking.top().cloned();
            let result = match &selected {
                None => {
                    outcome.still_unsolved.push(problem.clone());
                    ProblemOutcome::NoCandidate
                }
                Some(id) if taken.contains(id.as_str()) => ProblemOutcome::AlreadyPresent,
                Some(id) => {
                    taken.insert(id.clone());
                    outcome.additions.push(id.clone());
                    ProblemOutcome::Added
                }
            };
            outcome.traces.push(ProblemTrace {
                problem: problem.clone(),
                views,
                ranking,
                selected,
                outcome: result,
            });
        }
        Ok(outcome)
    }
}

fn to_ids(keys: Vec<String>) -> Result<Vec<ToolId>> {
    keys.into_iter().map(ToolId::new).collect()
}
