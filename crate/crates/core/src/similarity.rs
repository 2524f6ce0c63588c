//! Similarity scorers and the top-K selection primitive.
//!
//! A [`SimilarityScorer`] builds an immutable [`DocumentIndex`] over a list of
//! documents; the index scores a probe against every document, returning one
//! [`ScoredCandidate`] per document in insertion order. [`select_k`] turns
//! those scores into a ranking with a stable insertion-order tie-break.
//!
//! Two families are provided: Okapi BM25 over an inverted index, and cosine
//! similarity over externally supplied embeddings.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub key: String,
    pub text: String,
}

impl Document {
    pub fn new(key: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            key: key.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate<S> {
    pub key: String,
    pub score: S,
}

/// What gets scored against an index. Sparse scorers read `text`; dense
/// scorers look up an embedding for `text`, then for `key` if one is given.
#[derive(Debug, Clone, Copy)]
pub struct Probe<'a> {
    pub text: &'a str,
    pub key: Option<&'a str>,
}

impl<'a> Probe<'a> {
    pub fn text(text: &'a str) -> Self {
        Probe { text, key: None }
    }

    pub fn with_key(text: &'a str, key: &'a str) -> Self {
        Probe { text, key: Some(key) }
    }
}

pub trait DocumentIndex<S>: Send + Sync {
    /// Document keys in insertion order.
    fn keys(&self) -> &[String];

    /// One score per indexed document, in insertion order.
    fn score(&self, probe: Probe<'_>) -> Result<Vec<ScoredCandidate<S>>>;
}

pub trait SimilarityScorer<S>: Send + Sync {
    fn name(&self) -> &'static str;

    fn index(&self, documents: Vec<Document>) -> Result<Box<dyn DocumentIndex<S>>>;
}

fn check_unique_keys(documents: &[Document]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(documents.len());
    for d in documents {
        if !seen.insert(d.key.as_str()) {
            return Err(Error::invalid("document index", format!("duplicate key `{}`", d.key)));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// BM25
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params<S> {
    pub k1: S,
    pub b: S,
}

impl<S: Real> Default for Bm25Params<S> {
    fn default() -> Self {
        Bm25Params {
            k1: S::from_f64_lossy(1.2),
            b: S::from_f64_lossy(0.75),
        }
    }
}

/// Okapi BM25 over an inverted index.
///
/// `idf(t) = ln((N - n_t + 0.5) / (n_t + 0.5) + 1)`, which is never negative.
/// Each query token contributes once per occurrence.
#[derive(Debug, Clone)]
pub struct Bm25Index<S> {
    params: Bm25Params<S>,
    keys: Vec<String>,
    doc_lengths: Vec<usize>,
    avg_length: S,
    /// term -> (document, term frequency)
    postings: HashMap<String, Vec<(usize, usize)>>,
    idf: HashMap<String, S>,
}

impl<S: Real> Bm25Index<S> {
    pub fn build(documents: Vec<Document>, params: Bm25Params<S>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyIndex);
        }
        check_unique_keys(&documents)?;

        let mut postings: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            let tokens = tokenize(&doc.text);
            doc_lengths.push(tokens.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((i, count));
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable();
        }

        let n = S::from_count(documents.len());
        let half = S::from_f64_lossy(0.5);
        let idf = postings
            .iter()
            .map(|(term, list)| {
                let df = S::from_count(list.len());
                (term.clone(), ((n - df + half) / (df + half) + S::one()).ln())
            })
            .collect();

        let total: usize = doc_lengths.iter().sum();
        let avg_length = S::from_count(total) / n;

        Ok(Bm25Index {
            params,
            keys: documents.into_iter().map(|d| d.key).collect(),
            doc_lengths,
            avg_length,
            postings,
            idf,
        })
    }

    pub fn idf(&self, term: &str) -> Option<S> {
        self.idf.get(term).copied()
    }

    pub fn score_text(&self, text: &str) -> Result<Vec<ScoredCandidate<S>>> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::UnmatchableProbe(text.to_string()));
        }
        let Bm25Params { k1, b } = self.params;
        let mut scores = vec![S::zero(); self.keys.len()];
        for token in &tokens {
            let (Some(list), Some(&idf)) = (self.postings.get(token), self.idf.get(token)) else {
                continue;
            };
            for &(doc, tf) in list {
                let tf = S::from_count(tf);
                let dl = S::from_count(self.doc_lengths[doc]);
                let norm = if self.avg_length > S::zero() {
                    S::one() - b + b * dl / self.avg_length
                } else {
                    S::one()
                };
                scores[doc] = scores[doc] + idf * tf * (k1 + S::one()) / (tf + k1 * norm);
            }
        }
        Ok(self
            .keys
            .iter()
            .zip(scores)
            .map(|(key, score)| ScoredCandidate {
                key: key.clone(),
                score,
            })
            .collect())
    }
}

impl<S: Real> DocumentIndex<S> for Bm25Index<S> {
    fn keys(&self) -> &[String] {
        &self.keys
    }

    fn score(&self, probe: Probe<'_>) -> Result<Vec<ScoredCandidate<S>>> {
        self.score_text(probe.text)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Bm25Scorer<S> {
    pub params: Bm25Params<S>,
}

impl<S: Real> Default for Bm25Scorer<S> {
    fn default() -> Self {
        Bm25Scorer {
            params: Bm25Params::default(),
        }
    }
}

impl<S: Real> Bm25Scorer<S> {
    pub fn new(params: Bm25Params<S>) -> Self {
        Bm25Scorer { params }
    }
}

impl<S: Real> SimilarityScorer<S> for Bm25Scorer<S> {
    fn name(&self) -> &'static str {
        "bm25"
    }

    fn index(&self, documents: Vec<Document>) -> Result<Box<dyn DocumentIndex<S>>> {
        Ok(Box::new(Bm25Index::build(documents, self.params)?))
    }
}

/// Scores `query_text` against every document of a BM25 index.
pub fn bm25_score<S: Real>(query_text: &str, index: &Bm25Index<S>) -> Result<Vec<ScoredCandidate<S>>> {
    index.score_text(query_text)
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Externally supplied embeddings keyed by document key or by raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<S> {
    dim: usize,
    order: Vec<String>,
    vectors: HashMap<String, Vec<S>>,
}

impl<S: Real> EmbeddingTable<S> {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding table", "dimension must be positive"));
        }
        Ok(EmbeddingTable {
            dim,
            order: Vec::new(),
            vectors: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<S>) -> Result<()> {
        let key = key.into();
        if key.contains(['\t', '\n']) {
            return Err(Error::invalid(
                "embedding key",
                format!("`{key}` contains a tab or newline"),
            ));
        }
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                key,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(
                "embedding",
                format!("`{key}` has a non-finite component"),
            ));
        }
        if self.vectors.insert(key.clone(), vector).is_none() {
            self.order.push(key);
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[S]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    /// Parses the line format: a `dim <d>` header, then `key<TAB>x1 x2 ... xd`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let dim = loop {
            let Some((no, line)) = lines.next() else {
                return Err(Error::parse("line 1", "missing `dim <d>` header"));
            };
            if line.trim().is_empty() {
                continue;
            }
            let rest = line
                .trim()
                .strip_prefix("dim ")
                .ok_or_else(|| Error::parse(format!("line {}", no + 1), "expected `dim <d>` header"))?;
            break rest
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(format!("line {}", no + 1), e.to_string()))?;
        };
        let mut table = EmbeddingTable::new(dim)?;
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let locus = || format!("line {}", no + 1);
            let (key, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(locus(), "expected `key<TAB>values`"))?;
            let vector = values
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map(S::from_f64_lossy)
                        .map_err(|e| Error::parse(locus(), format!("`{v}`: {e}")))
                })
                .collect::<Result<Vec<S>>>()?;
            table
                .insert(key, vector)
                .map_err(|e| Error::parse(locus(), e.to_string()))?;
        }
        Ok(table)
    }

    pub fn render(&self) -> String {
        let mut out = format!("dim {}\n", self.dim);
        for key in &self.order {
            out.push_str(key);
            out.push('\t');
            for (i, x) in self.vectors[key].iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { locus, reason } => Error::Parse {
                locus: format!("{}: {locus}", path.display()),
                reason,
            },
            other => other,
        })
    }
}

fn normalized<S: Real>(key: &str, v: &[S]) -> Result<Vec<S>> {
    let norm = v.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt();
    if norm == S::zero() {
        return Err(Error::ZeroNorm(key.to_string()));
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// Cosine similarity between two vectors of equal length.
pub fn cosine<S: Real>(a: &[S], b: &[S]) -> Result<S> {
    let a = normalized("lhs", a)?;
    let b = normalized("rhs", b)?;
    let dot = a.iter().zip(&b).fold(S::zero(), |acc, (&x, &y)| acc + x * y);
    Ok(dot.max(-S::one()).min(S::one()))
}

pub struct DenseIndex<S> {
    table: Arc<EmbeddingTable<S>>,
    keys: Vec<String>,
    unit_vectors: Vec<Vec<S>>,
}

impl<S: Real> DenseIndex<S> {
    /// Each document's vector is looked up by key, then by text.
    pub fn build(documents: Vec<Document>, table: Arc<EmbeddingTable<S>>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyIndex);
        }
        check_unique_keys(&documents)?;
        let mut unit_vectors = Vec::with_capacity(documents.len());
        for doc in &documents {
            let v = table
                .get(&doc.key)
                .or_else(|| table.get(&doc.text))
                .ok_or_else(|| Error::MissingEmbedding(doc.key.clone()))?;
            unit_vectors.push(normalized(&doc.key, v)?);
        }
        Ok(DenseIndex {
            table,
            keys: documents.into_iter().map(|d| d.key).collect(),
            unit_vectors,
        })
    }

    fn probe_vector(&self, probe: Probe<'_>) -> Result<Vec<S>> {
        let (name, v) = match (self.table.get(probe.text), probe.key) {
            (Some(v), _) => (probe.text, v),
            (None, Some(key)) => (
                key,
                self.table
                    .get(key)
                    .ok_or_else(|| Error::MissingEmbedding(probe.text.to_string()))?,
            ),
            (None, None) => return Err(Error::MissingEmbedding(probe.text.to_string())),
        };
        normalized(name, v)
    }
}

impl<S: Real> DocumentIndex<S> for DenseIndex<S> {
    fn keys(&self) -> &[String] {
        &self.keys
    }

    fn score(&self, probe: Probe<'_>) -> Result<Vec<ScoredCandidate<S>>> {
        let p = self.probe_vector(probe)?;
        Ok(self
            .keys
            .iter()
            .zip(&self.unit_vectors)
            .map(|(key, v)| {
                let dot = p.iter().zip(v).fold(S::zero(), |acc, (&x, &y)| acc + x * y);
                ScoredCandidate {
                    key: key.clone(),
                    score: dot.max(-S::one()).min(S::one()),
                }
            })
            .collect())
    }
}

#[derive(Clone)]
pub struct DenseScorer<S> {
    pub table: Arc<EmbeddingTable<S>>,
}

impl<S: Real> SimilarityScorer<S> for DenseScorer<S> {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn index(&self, documents: Vec<Document>) -> Result<Box<dyn DocumentIndex<S>>> {
        Ok(Box::new(DenseIndex::build(documents, Arc::clone(&self.table))?))
    }
}

/// Cosine similarity between the probe's embedding and every document.
pub fn dense_score<S: Real>(query_text: &str, index: &DenseIndex<S>) -> Result<Vec<ScoredCandidate<S>>> {
    index.score(Probe::text(query_text))
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

/// Keys of the `k` highest-scoring candidates, best first.
///
/// Equal scores keep their input order, so candidates produced by an index
/// break ties by document insertion order.
pub fn select_k<S: Real>(candidates: &[ScoredCandidate<S>], k: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .score
            .partial_cmp(&candidates[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.into_iter().take(k).map(|i| candidates[i].key.clone()).collect()
}

/// Up to `k` keys sampled without replacement, reproducible for a seed.
pub fn random_select(candidates: &[String], k: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys = candidates.to_vec();
    keys.shuffle(&mut rng);
    keys.truncate(k);
    keys
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn docs(items: &[(&str, &str)]) -> Vec<Document> {
        items.iter().map(|(k, t)| Document::new(*k, *t)).collect()
    }

    fn cand(items: &[(&str, f64)]) -> Vec<ScoredCandidate<f64>> {
        items
            .iter()
            .map(|(k, s)| ScoredCandidate {
                key: k.to_string(),
                score: *s,
            })
            .collect()
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Convert USD->EUR, now!"), ["convert", "usd", "eur", "now"]);
        assert!(tokenize(" -- ").is_empty());
    }

    #[test]
    fn bm25_prefers_term_overlap() {
        let idx = Bm25Index::<f64>::build(
            docs(&[("d1", "weather forecast tool"), ("d2", "currency converter")]),
            Bm25Params::default(),
        )
        .unwrap();
        let s = bm25_score("weather forecast", &idx).unwrap();
        assert!(s[0].score > s[1].score);
        assert_eq!(s[1].score, 0.0);
    }

    #[test]
    fn bm25_single_document() {
        // N = 1, n_t = 1: idf = ln(0.5 / 1.5 + 1) = ln(4/3); dl = avgdl and
        // tf = 1 make the saturation factor exactly 1.
        let idx = Bm25Index::<f64>::build(docs(&[("d", "alpha")]), Bm25Params::default()).unwrap();
        let s = bm25_score("alpha", &idx).unwrap();
        assert_relative_eq!(s[0].score, (4.0f64 / 3.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn bm25_is_deterministic_and_rejects_empty_probe() {
        let idx = Bm25Index::<f64>::build(docs(&[("a", "x y z"), ("b", "y z")]), Bm25Params::default()).unwrap();
        assert_eq!(bm25_score("y", &idx).unwrap(), bm25_score("y", &idx).unwrap());
        assert!(matches!(bm25_score("?!", &idx), Err(Error::UnmatchableProbe(_))));
        assert!(matches!(
            Bm25Index::<f64>::build(vec![], Bm25Params::default()),
            Err(Error::EmptyIndex)
        ));
    }

    #[test]
    fn bm25_works_in_single_precision() {
        let idx = Bm25Index::<f32>::build(docs(&[("d", "alpha")]), Bm25Params::default()).unwrap();
        let s = idx.score_text("alpha").unwrap();
        assert_relative_eq!(s[0].score, (4.0f32 / 3.0).ln(), epsilon = 1e-6);
    }

    fn table(rows: &[(&str, &[f64])]) -> Arc<EmbeddingTable<f64>> {
        let mut t = EmbeddingTable::new(rows[0].1.len()).unwrap();
        for (k, v) in rows {
            t.insert(*k, v.to_vec()).unwrap();
        }
        Arc::new(t)
    }

    #[test]
    fn dense_cosine_examples() {
        let t = table(&[
            ("p", &[1.0, 0.0]),
            ("x", &[1.0, 0.0]),
            ("y", &[0.0, 1.0]),
            ("neg", &[-1.0, 0.0]),
            ("q", &[1.0, 1.0]),
            ("big", &[2.0, 2.0]),
        ]);
        let idx = DenseIndex::build(docs(&[("x", ""), ("y", ""), ("neg", "")]), Arc::clone(&t)).unwrap();
        let s = dense_score("p", &idx).unwrap();
        assert_relative_eq!(s[0].score, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s[1].score, 0.0, epsilon = 1e-12);
        assert_relative_eq!(s[2].score, -1.0, epsilon = 1e-12);
        let idx = DenseIndex::build(docs(&[("big", "")]), t).unwrap();
        assert_relative_eq!(dense_score("q", &idx).unwrap()[0].score, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dense_errors_name_the_key() {
        let t = table(&[("a", &[1.0, 0.0]), ("zero", &[0.0, 0.0])]);
        match DenseIndex::build(docs(&[("a", ""), ("b", "")]), Arc::clone(&t)) {
            Err(Error::MissingEmbedding(k)) => assert_eq!(k, "b"),
            other => panic!("unexpected {:?}", other.err()),
        }
        assert!(matches!(
            DenseIndex::build(docs(&[("zero", "")]), Arc::clone(&t)),
            Err(Error::ZeroNorm(_))
        ));
        let idx = DenseIndex::build(docs(&[("a", "")]), t).unwrap();
        assert!(matches!(dense_score("nope", &idx), Err(Error::MissingEmbedding(k)) if k == "nope"));
        assert!(matches!(dense_score("zero", &idx), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn embedding_file_round_trip_and_errors() {
        let text = "dim 2\nalpha\t1 0.5\nbeta gamma\t-2 3\n";
        let t = EmbeddingTable::<f64>::parse(text).unwrap();
        assert_eq!(t.get("beta gamma").unwrap(), &[-2.0, 3.0]);
        assert_eq!(EmbeddingTable::<f64>::parse(&t.render()).unwrap(), t);
        assert!(EmbeddingTable::<f64>::parse("alpha\t1 2\n").is_err());
        let err = EmbeddingTable::<f64>::parse("dim 2\na\t1 2 3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(EmbeddingTable::<f64>::parse("dim 1\na\tNaN\n").is_err());
    }

    #[test]
    fn select_k_examples() {
        assert_eq!(select_k(&cand(&[("a", 0.9), ("b", 0.5), ("c", 0.7)]), 2), ["a", "c"]);
        assert_eq!(select_k(&cand(&[("a", 0.5), ("b", 0.5)]), 1), ["a"]);
        assert_eq!(select_k(&cand(&[("a", 0.1), ("b", 0.5)]), 9), ["b", "a"]);
        assert!(select_k::<f64>(&[], 3).is_empty());
    }

    #[test]
    fn random_select_examples() {
        let keys: Vec<String> = (0..10).map(|i| format!("k{i}")).collect();
        let a = random_select(&keys, 3, 42);
        assert_eq!(a, random_select(&keys, 3, 42));
        let distinct: std::collections::HashSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), 3);
        let mut all = random_select(&keys, 10, 7);
        all.sort();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        assert_eq!(random_select(&keys, 20, 7).len(), 10);
    }

    proptest! {
        #[test]
        fn select_k_is_sorted_and_sized(scores in prop::collection::vec(-5.0f64..5.0, 0..30), k in 1usize..40) {
            let c: Vec<_> = scores.iter().enumerate().map(|(i, &s)| ScoredCandidate { key: format!("{i}"), score: s }).collect();
            let picked = select_k(&c, k);
            prop_assert_eq!(picked.len(), k.min(c.len()));
            let by_key: HashMap<_, _> = c.iter().map(|x| (x.key.clone(), x.score)).collect();
            for w in picked.windows(2) {
                prop_assert!(by_key[&w[0]] >= by_key[&w[1]]);
            }
            prop_assert_eq!(picked, select_k(&c, k));
        }

        #[test]
        fn cosine_bounds_and_self_similarity(v in prop::collection::vec(-10.0f64..10.0, 1..8),
                                             w in prop::collection::vec(-10.0f64..10.0, 1..8)) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
            prop_assert!((cosine(&v, &v).unwrap() - 1.0).abs() <= 1e-9);
            let n = v.len().min(w.len());
            if w[..n].iter().any(|x| x.abs() > 1e-6) && v[..n].iter().any(|x| x.abs() > 1e-6) {
                let c = cosine(&v[..n], &w[..n]).unwrap();
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }

        #[test]
        fn bm25_zero_overlap_scores_zero(words in prop::collection::vec("[a-m]{1,6}", 1..6)) {
            let d: Vec<Document> = words.iter().enumerate().map(|(i, w)| Document::new(format!("d{i}"), w.clone())).collect();
            let idx = Bm25Index::<f64>::build(d, Bm25Params::default()).unwrap();
            let s = idx.score_text("zzz yyy").unwrap();
            prop_assert!(s.iter().all(|c| c.score == 0.0));
        }
    }
}
