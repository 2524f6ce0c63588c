//! Stage 2: functional coverage mapping.
//!
//! The natural-language steps (decomposing the query, matching tools to
//! functionalities, restating unmet needs) are delegated to a
//! [`CoverageMapper`]. Everything else, including the completeness verdict
//! and the retain/discard split, is computed here from the returned mapping.

use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{Query, Tool, ToolCorpus, ToolId, ToolSet};
use crate::llm::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Functionality {
    /// 1-based position in the extraction output.
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnsolvedProblem {
    pub text: String,
}

/// The natural-language half of coverage mapping.
///
/// Implementations must always return (possibly empty) lists; the callers in
/// this module supply fallbacks for empty or failed outputs.
pub trait CoverageMapper: Send + Sync {
    fn extract(&self, query: &Query) -> Result<Vec<String>, LlmError>;

    /// Returns `(functionality index, tool id)` pairs.
    fn match_tools(&self, functionalities: &[Functionality], tools: &[Tool]) -> Result<Vec<(usize, ToolId)>, LlmError>;

    /// Restates each unmet functionality as a standalone sub-query.
    fn restate(&self, query: &Query, unmet: &[Functionality]) -> Result<Vec<String>, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Extraction {
    pub functionalities: Vec<Functionality>,
    /// The mapper produced nothing usable; the whole query is one functionality.
    pub undecomposed: bool,
}

pub fn extract_functionalities(query: &Query, mapper: &dyn CoverageMapper) -> Extraction {
    let texts = match mapper.extract(query) {
        Ok(texts) => texts,
        Err(e) => {
            warn!("functionality extraction failed, using the whole query: {e}");
            Vec::new()
        }
    };
    let texts: Vec<String> = texts
        .into_iter()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    if texts.is_empty() {
        return Extraction {
            functionalities: vec![Functionality {
                index: 1,
                text: query.text().to_string(),
            }],
            undecomposed: true,
        };
    }
    Extraction {
        functionalities: texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| Functionality { index: i + 1, text })
            .collect(),
        undecomposed: false,
    }
}

/// Many-to-many relation between functionalities (by index) and bundle tools.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CoverageMap {
    assignments: BTreeSet<(usize, ToolId)>,
}

impl CoverageMap {
    pub fn new() -> Self {
        CoverageMap::default()
    }

    pub fn assign(&mut self, functionality: usize, tool: ToolId) {
        self.assignments.insert((functionality, tool));
    }

    pub fn assignments(&self) -> impl Iterator<Item = &(usize, ToolId)> {
        self.assignments.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn covers_functionality(&self, index: usize) -> bool {
        self.assignments.iter().any(|(f, _)| *f == index)
    }

    pub fn tools(&self) -> ToolSet {
        self.assignments.iter().map(|(_, t)| t.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchOutcome {
    pub map: CoverageMap,
    pub warnings: Vec<String>,
}

/// Asks the mapper to pair functionalities with bundle tools. Pairs naming a
/// tool outside the bundle or an unknown functionality are dropped.
pub fn match_tools(
    functionalities: &[Functionality],
    bundle: &ToolSet,
    corpus: &ToolCorpus,
    mapper: &dyn CoverageMapper,
) -> MatchOutcome {
    let mut outcome = MatchOutcome {
        map: CoverageMap::new(),
        warnings: Vec::new(),
    };
    if bundle.is_empty() || functionalities.is_empty() {
        return outcome;
    }
    let tools: Vec<Tool> = corpus
        .canonical_order(bundle)
        .iter()
        .filter_map(|id| corpus.get(id.as_str()).cloned())
        .collect();
    let pairs = match mapper.match_tools(functionalities, &tools) {
        Ok(pairs) => pairs,
        Err(e) => {
            outcome.warnings.push(format!("tool matching failed: {e}"));
            return outcome;
        }
    };
    for (f, tool) in pairs {
        if !bundle.contains(tool.as_str()) {
            outcome
                .warnings
                .push(format!("dropped assignment to `{tool}`: not in the acquired bundle"));
        } else if !functionalities.iter().any(|x| x.index == f) {
            outcome
                .warnings
                .push(format!("dropped assignment of `{tool}` to unknown functionality {f}"));
        } else {
            outcome.map.assign(f, tool);
        }
    }
    for w in &outcome.warnings {
        warn!("{w}");
    }
    outcome
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    ExactSolving,
    Oversolving,
    PartialSolving,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageAssessment {
    pub functionalities: Vec<Functionality>,
    pub map: CoverageMap,
    pub scenario: Scenario,
    pub retained: ToolSet,
    pub discarded: ToolSet,
    pub unsolved: Vec<UnsolvedProblem>,
}

impl CoverageAssessment {
    pub fn unmet(&self) -> Vec<Functionality> {
        self.functionalities
            .iter()
            .filter(|f| !self.map.covers_functionality(f.index))
            .cloned()
            .collect()
    }
}

/// Classifies the bundle against the functionalities.
///
/// Unsolved problems are the unmet functionalities verbatim; use
/// [`identify_unsolved`] to have the mapper restate them.
pub fn assess_completeness(
    functionalities: &[Functionality],
    map: &CoverageMap,
    bundle: &ToolSet,
) -> CoverageAssessment {
    let retained: ToolSet = map
        .tools()
        .iter()
        .filter(|t| bundle.contains(t.as_str()))
        .cloned()
        .collect();
    let discarded = bundle.difference(&retained);
    let unmet: Vec<&Functionality> = functionalities
        .iter()
        .filter(|f| !map.covers_functionality(f.index))
        .collect();
    let scenario = if !unmet.is_empty() {
        Scenario::PartialSolving
    } else if discarded.is_empty() {
        Scenario::ExactSolving
    } else {
        Scenario::Oversolving
    };
    CoverageAssessment {
        functionalities: functionalities.to_vec(),
        map: map.clone(),
        scenario,
        retained,
        discarded,
        unsolved: unmet
            .into_iter()
            .map(|f| UnsolvedProblem { text: f.text.clone() })
            .collect(),
    }
}

/// One problem per unmet functionality, in order. Falls back to the
/// functionality text when the mapper fails or returns the wrong count.
pub fn identify_unsolved(query: &Query, unmet: &[Functionality], mapper: &dyn CoverageMapper) -> Vec<UnsolvedProblem> {
    if unmet.is_empty() {
        return Vec::new();
    }
    let verbatim = || unmet.iter().map(|f| UnsolvedProblem { text: f.text.clone() }).collect();
    match mapper.restate(query, unmet) {
        Ok(texts) if texts.len() == unmet.len() && texts.iter().all(|t| !t.trim().is_empty()) => texts
            .into_iter()
            .map(|t| UnsolvedProblem {
                text: t.trim().to_string(),
            })
            .collect(),
        Ok(texts) => {
            if !texts.is_empty() {
                warn!(
                    "restatement returned {} problems for {} unmet functionalities",
                    texts.len(),
                    unmet.len()
                );
            }
            verbatim()
        }
        Err(e) => {
            warn!("restatement failed, keeping functionality text: {e}");
            verbatim()
        }
    }
}

/// The full stage: extract, match, assess, and restate unmet needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub assessment: CoverageAssessment,
    pub undecomposed: bool,
    pub warnings: Vec<String>,
}

pub fn map_coverage(
    query: &Query,
    bundle: &ToolSet,
    corpus: &ToolCorpus,
    mapper: &dyn CoverageMapper,
) -> CoverageReport {
    let extraction = extract_functionalities(query, mapper);
    let matched = match_tools(&extraction.functionalities, bundle, corpus, mapper);
    let mut assessment = assess_completeness(&extraction.functionalities, &matched.map, bundle);
    if assessment.scenario == Scenario::PartialSolving {
        assessment.unsolved = identify_unsolved(query, &assessment.unmet(), mapper);
    }
    CoverageReport {
        assessment,
        undecomposed: extraction.undecomposed,
        warnings: matched.warnings,
    }
}
