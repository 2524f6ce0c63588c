//! Set-precision and ranking metrics.
//!
//! TRACC rewards recommending exactly the ground-truth set:
//!
//! ```text
//! TRACC(A, B) = (1 - |n2 - n1| / |A ∪ B|) * |A ∩ B| / n1
//! ```
//!
//! with `A` the ground truth (`n1 = |A|`) and `B` the recommendation
//! (`n2 = |B|`). TRACC, recall and the length difference only need field
//! arithmetic and can be evaluated exactly over [`crate::scalar::Rational`].
//! NDCG uses binary gains and a `log2(i + 1)` discount.

use std::fmt::Write as _;

use serde::Serialize;

use crate::domain::{RecommendationResult, ToolId, ToolSet};
use crate::error::{Error, Result};
use crate::scalar::{Field, Real};

pub fn tracc<S: Field>(ground: &ToolSet, recommended: &ToolSet) -> Result<S> {
    if ground.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let n1 = ground.len();
    let n2 = recommended.len();
    let union = S::from_count(ground.union_size(recommended));
    let hits = S::from_count(ground.intersection_size(recommended));
    let size_penalty = S::from_count(n1.abs_diff(n2)) / union;
    Ok((S::one() - size_penalty) * (hits / S::from_count(n1)))
}

pub fn recall_at_k<S: Field>(ground: &ToolSet, ranked: &[ToolId], k: usize) -> Result<S> {
    if ground.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let hits = ranked.iter().take(k).filter(|id| ground.contains(id.as_str())).count();
    Ok(S::from_count(hits) / S::from_count(ground.len()))
}

pub fn ndcg_at_k<S: Real>(ground: &ToolSet, ranked: &[ToolId], k: usize) -> Result<S> {
    if ground.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let discount = |rank: usize| S::one() / S::from_count(rank + 1).log2();
    let dcg = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| ground.contains(id.as_str()))
        .fold(S::zero(), |acc, (i, _)| acc + discount(i + 1));
    let ideal = (1..=k.min(ground.len())).fold(S::zero(), |acc, rank| acc + discount(rank));
    if ideal == S::zero() {
        return Ok(S::zero());
    }
    Ok(dcg / ideal)
}

pub fn avg_length_diff<S: Field>(pairs: &[(ToolSet, ToolSet)]) -> Result<S> {
    if pairs.is_empty() {
        return Err(Error::Alignment("no (ground, recommended) pairs to average".into()));
    }
    let total: usize = pairs.iter().map(|(g, r)| g.len().abs_diff(r.len())).sum();
    Ok(S::from_count(total) / S::from_count(pairs.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryEvaluation<S> {
    pub k: usize,
    pub tracc: S,
    pub recall_at_k: S,
    pub ndcg_at_k: S,
    pub length_diff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates<S> {
    pub queries: usize,
    pub recall_at_k: S,
    pub ndcg_at_k: S,
    pub tracc: S,
    pub avg_length_diff: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport<S> {
    pub dataset: String,
    pub method: String,
    pub per_query: Vec<QueryEvaluation<S>>,
    pub aggregate: Aggregates<S>,
}

/// Scores one recommendation with `k = |ground|`.
pub fn evaluate_one<S: Real>(ground: &ToolSet, result: &RecommendationResult) -> Result<QueryEvaluation<S>> {
    let k = ground.len();
    Ok(QueryEvaluation {
        k,
        tracc: tracc(ground, &result.recommended)?,
        recall_at_k: recall_at_k(ground, &result.ranked_order, k)?,
        ndcg_at_k: ndcg_at_k(ground, &result.ranked_order, k)?,
        length_diff: ground.len().abs_diff(result.recommended.len()),
    })
}

/// Per-query metrics and their unweighted means.
pub fn evaluate<S: Real>(results: &[RecommendationResult], ground_truths: &[ToolSet]) -> Result<EvaluationReport<S>> {
    if results.len() != ground_truths.len() {
        return Err(Error::Alignment(format!(
            "{} results for {} ground truths",
            results.len(),
            ground_truths.len()
        )));
    }
    if results.is_empty() {
        return Err(Error::Alignment("nothing to evaluate".into()));
    }
    let per_query = ground_truths
        .iter()
        .zip(results)
        .map(|(g, r)| evaluate_one(g, r))
        .collect::<Result<Vec<QueryEvaluation<S>>>>()?;
    let n = S::from_count(per_query.len());
    let mean = |f: &dyn Fn(&QueryEvaluation<S>) -> S| per_query.iter().fold(S::zero(), |acc, q| acc + f(q)) / n;
    let pairs: Vec<(ToolSet, ToolSet)> = ground_truths
        .iter()
        .zip(results)
        .map(|(g, r)| (g.clone(), r.recommended.clone()))
        .collect();
    let aggregate = Aggregates {
        queries: per_query.len(),
        recall_at_k: mean(&|q| q.recall_at_k),
        ndcg_at_k: mean(&|q| q.ndcg_at_k),
        tracc: mean(&|q| q.tracc),
        avg_length_diff: avg_length_diff(&pairs)?,
    };
    Ok(EvaluationReport {
        dataset: String::new(),
        method: String::new(),
        per_query,
        aggregate,
    })
}

impl<S: Real> EvaluationReport<S> {
    /// Aligned text table: one row per method with Recall@K, NDCG@K, TRACC
    /// and the average length difference.
    pub fn render_table(&self) -> String {
        render_table(std::slice::from_ref(self))
    }
}

pub fn render_table<S: Real>(reports: &[EvaluationReport<S>]) -> String {
    let method_w = reports.iter().map(|r| r.method.len()).chain([6]).max().unwrap_or(6);
    let dataset_w = reports.iter().map(|r| r.dataset.len()).chain([7]).max().unwrap_or(7);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<dataset_w$}  {:<method_w$}  {:>7}  {:>8}  {:>8}  {:>6}  {:>12}",
        "dataset", "method", "queries", "Recall@K", "NDCG@K", "TRACC", "avg len diff"
    );
    for r in reports {
        let a = &r.aggregate;
        let f = |x: S| x.to_f64().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{:<dataset_w$}  {:<method_w$}  {:>7}  {:>8.3}  {:>8.3}  {:>6.3}  {:>12.3}",
            r.dataset,
            r.method,
            a.queries,
            f(a.recall_at_k),
            f(a.ndcg_at_k),
            f(a.tracc),
            f(a.avg_length_diff)
        );
    }
    out
}
