//! Stage 1: pick the single historical tool bundle most relevant to a query.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{History, Query, ToolCorpus, ToolSet};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::similarity::{random_select, select_k, Document, DocumentIndex, Probe, SimilarityScorer};

/// Which text stands in for a bundle when it is retrieved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    QueryOnly,
    ToolsOnly,
    #[default]
    QueryPlusTools,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    /// Uniform random choice; only meaningful for bundle acquisition.
    Random,
    #[default]
    Bm25,
    Dense,
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ScorerKind::Random),
            "bm25" => Ok(ScorerKind::Bm25),
            "dense" => Ok(ScorerKind::Dense),
            other => Err(Error::invalid("scorer", format!("unknown scorer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub representation: Representation,
    pub scorer: ScorerKind,
    /// Seed for the random baseline; ignored by the other scorers.
    pub random_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleDocument {
    pub key: String,
    pub bundle: ToolSet,
    pub source_queries: Vec<Query>,
    pub text: String,
}

enum Retriever<S> {
    Scored(Box<dyn DocumentIndex<S>>),
    Random { seed: u64 },
}

pub struct BundleIndex<S> {
    documents: Vec<BundleDocument>,
    retriever: Retriever<S>,
}

/// Outcome of a single acquisition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Acquisition<S> {
    pub bundle: ToolSet,
    pub document_key: String,
    pub score: Option<S>,
    /// Set when every bundle scored zero, i.e. the pick came from the tie-break.
    pub low_confidence: bool,
}

fn bundle_text(doc_queries: &[Query], bundle: &ToolSet, corpus: &ToolCorpus, mode: Representation) -> String {
    let mut parts: Vec<&str> = Vec::new();
    if mode != Representation::ToolsOnly {
        parts.extend(doc_queries.iter().map(Query::text));
    }
    let ordered = corpus.canonical_order(bundle);
    if mode != Representation::QueryOnly {
        for id in &ordered {
            if let Some(tool) = corpus.get(id.as_str()) {
                parts.push(&tool.name);
                parts.push(&tool.description);
            }
        }
    }
    parts.retain(|p| !p.trim().is_empty());
    parts.join("\n")
}

/// Builds one retrievable document per unique historical bundle, in order of
/// each bundle's first appearance in the history.
pub fn build_bundle_index<S: Real>(
    history: &History,
    corpus: &ToolCorpus,
    config: &AcquisitionConfig,
    scorer: &dyn SimilarityScorer<S>,
) -> Result<BundleIndex<S>> {
    if history.is_empty() {
        return Err(Error::ColdStart);
    }
    let documents: Vec<BundleDocument> = history
        .unique_bundles()
        .iter()
        .enumerate()
        .map(|(i, unique)| {
            let source_queries: Vec<Query> = unique
                .records
                .iter()
                .map(|&r| history.records()[r].query.clone())
                .collect();
            let text = bundle_text(&source_queries, &unique.bundle, corpus, config.representation);
            BundleDocument {
                key: format!("bundle-{i}"),
                bundle: unique.bundle.clone(),
                source_queries,
                text,
            }
        })
        .collect();
    if let Some(doc) = documents.iter().find(|d| d.text.trim().is_empty()) {
        return Err(Error::invalid("bundle document", format!("`{}` has no text", doc.key)));
    }

    let retriever = match config.scorer {
        ScorerKind::Random => Retriever::Random {
            seed: config.random_seed.unwrap_or_default(),
        },
        _ => Retriever::Scored(
            scorer.index(
                documents
                    .iter()
                    .map(|d| Document::new(d.key.clone(), d.text.clone()))
                    .collect(),
            )?,
        ),
    };
    Ok(BundleIndex { documents, retriever })
}

fn query_seed(seed: u64, query: &Query) -> u64 {
    let digest = Sha256::digest(query.text().as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(head)
}

impl<S: Real> BundleIndex<S> {
    pub fn documents(&self) -> &[BundleDocument] {
        &self.documents
    }

    /// Top-1 bundle for `query`. Exact score ties go to the bundle seen
    /// earliest in the history.
    pub fn acquire(&self, query: &Query) -> Result<Acquisition<S>> {
        match &self.retriever {
            Retriever::Random { seed } => {
                let keys: Vec<String> = self.documents.iter().map(|d| d.key.clone()).collect();
                let picked = random_select(&keys, 1, query_seed(*seed, query));
                let doc = self
                    .documents
                    .iter()
                    .find(|d| Some(&d.key) == picked.first())
                    .expect("random pick comes from the document keys");
                Ok(Acquisition {
                    bundle: doc.bundle.clone(),
                    document_key: doc.key.clone(),
                    score: None,
                    low_confidence: false,
                })
            }
            Retriever::Scored(index) => {
                let scores = index.score(Probe::text(query.text()))?;
                let top = select_k(&scores, 1);
                let key = top.first().ok_or(Error::EmptyIndex)?;
                let pos = self
                    .documents
                    .iter()
                    .position(|d| &d.key == key)
                    .expect("index keys match bundle documents");
                let score = scores[pos].score;
                let low_confidence = scores.iter().all(|c| c.score == S::zero());
                Ok(Acquisition {
                    bundle: self.documents[pos].bundle.clone(),
                    document_key: key.clone(),
                    score: Some(score),
                    low_confidence,
                })
            }
        }
    }
}

/// Convenience wrapper over [`BundleIndex::acquire`] returning only the set.
pub fn acquire_bundle<S: Real>(query: &Query, index: &BundleIndex<S>) -> Result<ToolSet> {
    index.acquire(query).map(|a| a.bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::{set, tool};
    use crate::domain::{HistoricalRecord, Tool};
    use crate::similarity::{tokenize, Bm25Params, Bm25Scorer};

    fn corpus() -> ToolCorpus {
        ToolCorpus::new(vec![
            Tool::new("a", "TranslateAPI", "translate text between languages").unwrap(),
            Tool::new("b", "MailAPI", "send an email message").unwrap(),
            Tool::new("c", "WeatherAPI", "weather forecast for a city").unwrap(),
        ])
        .unwrap()
    }

    fn history(corpus: &ToolCorpus, rows: &[(&str, &[&str])]) -> History {
        let records = rows
            .iter()
            .map(|(q, ids)| HistoricalRecord::new(Query::new(*q).unwrap(), set(ids)).unwrap())
            .collect();
        History::new(records, corpus).unwrap()
    }

    fn bm25() -> Bm25Scorer<f64> {
        Bm25Scorer::new(Bm25Params::default())
    }

    #[test]
    fn dedups_bundles_and_collects_source_queries() {
        let c = corpus();
        let h = history(&c, &[("q1", &["a", "b"]), ("q2", &["b", "a"]), ("q3", &["c"])]);
        let idx = build_bundle_index(&h, &c, &AcquisitionConfig::default(), &bm25()).unwrap();
        assert_eq!(idx.documents().len(), 2);
        let first = &idx.documents()[0];
        assert_eq!(first.bundle, set(&["a", "b"]));
        let qs: Vec<_> = first.source_queries.iter().map(Query::text).collect();
        assert_eq!(qs, ["q1", "q2"]);
        assert!(
            first.text.contains("q1") && first.text.contains("translate text") && first.text.contains("send an email")
        );
    }

    #[test]
    fn representation_modes() {
        let c = corpus();
        let h = history(&c, &[("my question", &["a"])]);
        let text = |mode| {
            let cfg = AcquisitionConfig {
                representation: mode,
                ..Default::default()
            };
            build_bundle_index(&h, &c, &cfg, &bm25()).unwrap().documents()[0]
                .text
                .clone()
        };
        assert_eq!(text(Representation::QueryOnly), "my question");
        assert_eq!(
            text(Representation::ToolsOnly),
            "TranslateAPI\ntranslate text between languages"
        );
        assert_eq!(
            text(Representation::QueryPlusTools),
            "my question\nTranslateAPI\ntranslate text between languages"
        );
    }

    #[test]
    fn single_record_and_cold_start() {
        let c = corpus();
        let h = history(&c, &[("q", &["c"])]);
        let idx = build_bundle_index(&h, &c, &AcquisitionConfig::default(), &bm25()).unwrap();
        assert_eq!(idx.documents().len(), 1);
        let empty = History::new(vec![], &c).unwrap();
        assert!(matches!(
            build_bundle_index(&empty, &c, &AcquisitionConfig::default(), &bm25()),
            Err(Error::ColdStart)
        ));
    }

    #[test]
    fn exact_query_match_wins() {
        let c = corpus();
        let h = history(
            &c,
            &[
                ("what is the weather in paris", &["c"]),
                ("translate this and mail it", &["a", "b"]),
            ],
        );
        let idx = build_bundle_index(&h, &c, &AcquisitionConfig::default(), &bm25()).unwrap();
        let q = Query::new("translate this and mail it").unwrap();
        assert_eq!(acquire_bundle(&q, &idx).unwrap(), set(&["a", "b"]));
    }

    #[test]
    fn random_baseline_is_reproducible() {
        let c = corpus();
        let h = history(
            &c,
            &[("q1", &["a"]), ("q2", &["b"]), ("q3", &["c"]), ("q4", &["a", "c"])],
        );
        let cfg = AcquisitionConfig {
            scorer: ScorerKind::Random,
            random_seed: Some(9),
            ..Default::default()
        };
        let idx = build_bundle_index(&h, &c, &cfg, &bm25()).unwrap();
        let q = Query::new("anything").unwrap();
        let first = idx.acquire(&q).unwrap();
        for _ in 0..5 {
            assert_eq!(idx.acquire(&q).unwrap(), first);
        }
        assert!(h.contains_bundle(&first.bundle));
    }

    /// BM25 over the three bundle documents, evaluated independently: only
    /// the currency document shares terms with the probe, so it alone has a
    /// positive score.
    #[test]
    fn currency_bundle_is_selected() {
        let c = ToolCorpus::new(vec![
            tool("solar", "solar panel sizing"),
            tool("fx", "currency exchange convert usd to eur"),
            tool("poem", "poem generator"),
        ])
        .unwrap();
        let h = history(
            &c,
            &[
                ("size my roof", &["solar"]),
                ("money rates", &["fx"]),
                ("write verse", &["poem"]),
            ],
        );
        let cfg = AcquisitionConfig {
            representation: Representation::ToolsOnly,
            ..Default::default()
        };
        let idx = build_bundle_index(&h, &c, &cfg, &bm25()).unwrap();

        let probe = tokenize("convert USD to EUR");
        let overlaps: Vec<usize> = idx
            .documents()
            .iter()
            .map(|d| tokenize(&d.text).iter().filter(|t| probe.contains(t)).count())
            .collect();
        assert_eq!(overlaps, [0, 4, 0]);

        let a = idx.acquire(&Query::new("convert USD to EUR").unwrap()).unwrap();
        assert_eq!(a.bundle, set(&["fx"]));
        assert!(!a.low_confidence);
    }

    #[test]
    fn zero_overlap_falls_back_to_earliest_bundle_with_flag() {
        let c = ToolCorpus::new(vec![
            tool("solar", "solar panel sizing"),
            tool("fx", "currency exchange"),
            tool("poem", "poem generator"),
        ])
        .unwrap();
        let h = history(&c, &[("roof", &["solar"]), ("money", &["fx"]), ("verse", &["poem"])]);
        let cfg = AcquisitionConfig {
            representation: Representation::ToolsOnly,
            ..Default::default()
        };
        let idx = build_bundle_index(&h, &c, &cfg, &bm25()).unwrap();
        let a = idx.acquire(&Query::new("convert USD to EUR").unwrap()).unwrap();
        assert_eq!(a.bundle, set(&["solar"]));
        assert!(a.low_confidence);
    }
}
