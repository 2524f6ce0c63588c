//! Catalog and dataset files, validation, and train/test splitting.
//!
//! * Catalog: one JSON document, `{"tools": [{"id", "name", "description"}, ...]}`.
//! * Dataset: JSON lines, one `{"query": "...", "tools": ["id", ...]}` per line.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{HistoricalRecord, History, Query, Tool, ToolCorpus, ToolId, ToolSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub query: String,
    pub tools: Vec<String>,
}

impl DatasetRecord {
    pub fn query(&self) -> Result<Query> {
        Query::new(self.query.clone())
    }

    pub fn toolset(&self) -> Result<ToolSet> {
        self.tools.iter().map(|t| ToolId::new(t.clone())).collect()
    }
}

/// Allowed number of tools per record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardinalityBound {
    pub min: usize,
    pub max: usize,
}

impl fmt::Display for CardinalityBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.min == self.max {
            write!(f, "{}", self.min)
        } else {
            write!(f, "{}-{}", self.min, self.max)
        }
    }
}

/// Per-benchmark tools-per-query bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetStyle {
    /// 1-3 tools per query.
    ToolLens,
    /// Exactly 2 tools per query.
    MetaTool,
    /// 1-10 tools per query.
    #[default]
    RecTools,
}

impl DatasetStyle {
    pub fn bound(self) -> CardinalityBound {
        match self {
            DatasetStyle::ToolLens => CardinalityBound { min: 1, max: 3 },
            DatasetStyle::MetaTool => CardinalityBound { min: 2, max: 2 },
            DatasetStyle::RecTools => CardinalityBound { min: 1, max: 10 },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetStyle::ToolLens => "toollens",
            DatasetStyle::MetaTool => "metatool",
            DatasetStyle::RecTools => "rectools",
        }
    }
}

impl std::str::FromStr for DatasetStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "toollens" => Ok(DatasetStyle::ToolLens),
            "metatool" => Ok(DatasetStyle::MetaTool),
            "rectools" => Ok(DatasetStyle::RecTools),
            other => Err(Error::invalid("dataset style", format!("unknown style `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    tools: Vec<Tool>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_catalog(text: &str) -> Result<ToolCorpus> {
    let file: CatalogFile = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    if file.tools.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    ToolCorpus::new(file.tools)
}

pub fn load_catalog(path: &Path) -> Result<ToolCorpus> {
    parse_catalog(&read(path)?).map_err(|e| match e {
        Error::Parse { locus, reason } => Error::Parse {
            locus: format!("{}: {locus}", path.display()),
            reason,
        },
        other => other,
    })
}

pub fn render_catalog(corpus: &ToolCorpus) -> String {
    let file = CatalogFile {
        tools: corpus.tools().to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("catalog serializes");
    s.push('\n');
    s
}

pub fn save_catalog(corpus: &ToolCorpus, path: &Path) -> Result<()> {
    std::fs::write(path, render_catalog(corpus)).map_err(|e| Error::io(path, e))
}

/// A problem with one dataset line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parses and validates every line, collecting all violations.
pub fn check_dataset(
    text: &str,
    catalog: &ToolCorpus,
    bound: CardinalityBound,
) -> (Vec<DatasetRecord>, Vec<Violation>) {
    let mut records = Vec::new();
    let mut violations = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut flag = |message: String| violations.push(Violation { line, message });
        let record: DatasetRecord = match serde_json::from_str(raw) {
            Ok(r) => r,
            Err(e) => {
                flag(format!("malformed record: {e}"));
                continue;
            }
        };
        let before = violations.len();
        let mut flag = |message: String| violations.push(Violation { line, message });
        if record.query.trim().is_empty() {
            flag("empty query".into());
        }
        let n = record.tools.len();
        if n < bound.min || n > bound.max {
            flag(format!("{n} tools outside the allowed {bound} tools per query"));
        }
        let mut seen = HashSet::new();
        for t in &record.tools {
            if !seen.insert(t.as_str()) {
                flag(format!("tool `{t}` listed twice"));
            } else if !catalog.contains(t) {
                flag(format!("unknown tool `{t}`"));
            }
        }
        if violations.len() == before {
            records.push(record);
        }
    }
    (records, violations)
}

pub fn parse_dataset(text: &str, catalog: &ToolCorpus, bound: CardinalityBound) -> Result<Vec<DatasetRecord>> {
    let (records, violations) = check_dataset(text, catalog, bound);
    if let Some(first) = violations.first() {
        return Err(Error::Violations {
            path: "<dataset>".into(),
            count: violations.len(),
            first: first.to_string(),
        });
    }
    Ok(records)
}

pub fn load_dataset(path: &Path, catalog: &ToolCorpus, bound: CardinalityBound) -> Result<Vec<DatasetRecord>> {
    parse_dataset(&read(path)?, catalog, bound).map_err(|e| match e {
        Error::Violations { count, first, .. } => Error::Violations {
            path: path.to_path_buf(),
            count,
            first,
        },
        other => other,
    })
}

pub fn render_dataset(records: &[DatasetRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

pub fn save_dataset(records: &[DatasetRecord], path: &Path) -> Result<()> {
    std::fs::write(path, render_dataset(records)).map_err(|e| Error::io(path, e))
}

pub fn to_history(records: &[DatasetRecord], catalog: &ToolCorpus) -> Result<History> {
    let history = records
        .iter()
        .map(|r| HistoricalRecord::new(r.query()?, r.toolset()?))
        .collect::<Result<Vec<_>>>()?;
    History::new(history, catalog)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub history: History,
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

/// Seeded shuffle; the first `floor(fraction * N)` records become the test
/// set and the rest the training history.
pub fn split(records: &[DatasetRecord], spec: SplitConfig, catalog: &ToolCorpus) -> Result<Split> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Split(format!(
            "test fraction {} outside (0, 1)",
            spec.test_fraction
        )));
    }
    let n = records.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 records, got {n}")));
    }
    // Absorb representation error such as 0.29 * 100 = 28.999...
    let n_test = (spec.test_fraction * n as f64 + 1e-9).floor() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::Split(format!(
            "fraction {} of {n} records leaves {n_test} test and {} train records",
            spec.test_fraction,
            n - n_test.min(n)
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let test: Vec<DatasetRecord> = order[..n_test].iter().map(|&i| records[i].clone()).collect();
    let mut train_idx = order[n_test..].to_vec();
    train_idx.sort_unstable();
    let train: Vec<DatasetRecord> = train_idx.iter().map(|&i| records[i].clone()).collect();
    let history = to_history(&train, catalog)?;
    Ok(Split { history, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CATALOG: &str = r#"{"tools": [
        {"id": "a", "name": "A", "description": "first"},
        {"id": "b", "name": "B", "description": "second"},
        {"id": "c", "name": "C", "description": "third"}
    ]}"#;

    fn catalog() -> ToolCorpus {
        parse_catalog(CATALOG).unwrap()
    }

    fn records(n: usize) -> Vec<DatasetRecord> {
        (0..n)
            .map(|i| DatasetRecord {
                query: format!("query {i}"),
                tools: vec!["a".into()],
            })
            .collect()
    }

    #[test]
    fn catalog_loading() {
        assert_eq!(catalog().len(), 3);
        let dup = r#"{"tools": [{"id": "a", "name": "A", "description": "x"}, {"id": "a", "name": "B", "description": "y"}]}"#;
        assert!(matches!(parse_catalog(dup), Err(Error::DuplicateTool(id)) if id == "a"));
        assert!(matches!(parse_catalog(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_catalog(r#"{"tools": []}"#), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn dataset_bounds() {
        let c = catalog();
        let two = r#"{"query": "q", "tools": ["a", "b"]}"#;
        assert_eq!(parse_dataset(two, &c, DatasetStyle::MetaTool.bound()).unwrap().len(), 1);
        let three = r#"{"query": "q", "tools": ["a", "b", "c"]}"#;
        let err = parse_dataset(three, &c, DatasetStyle::MetaTool.bound()).unwrap_err();
        assert!(err.to_string().contains("allowed 2 tools"), "{err}");
        let unknown = r#"{"query": "q", "tools": ["zz"]}"#;
        assert!(parse_dataset(unknown, &c, DatasetStyle::RecTools.bound()).is_err());
    }

    #[test]
    fn check_reports_every_violation() {
        let c = catalog();
        let text =
            "{\"query\": \"ok\", \"tools\": [\"a\"]}\nnot json\n{\"query\": \"q\", \"tools\": [\"x\", \"a\", \"a\"]}\n";
        let (ok, bad) = check_dataset(text, &c, DatasetStyle::RecTools.bound());
        assert_eq!(ok.len(), 1);
        let lines: Vec<usize> = bad.iter().map(|v| v.line).collect();
        assert_eq!(lines, [2, 3, 3]);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let c = catalog();
        let r = records(10);
        let s = split(
            &r,
            SplitConfig {
                test_fraction: 0.2,
                seed: 3,
            },
            &c,
        )
        .unwrap();
        assert_eq!((s.test.len(), s.train.len(), s.history.len()), (2, 8, 8));
        let again = split(
            &r,
            SplitConfig {
                test_fraction: 0.2,
                seed: 3,
            },
            &c,
        )
        .unwrap();
        assert_eq!(s.test, again.test);
        let mut all: Vec<_> = s.train.iter().chain(&s.test).map(|x| x.query.clone()).collect();
        all.sort();
        let mut expected: Vec<_> = r.iter().map(|x| x.query.clone()).collect();
        expected.sort();
        assert_eq!(all, expected);

        let s = split(
            &records(4),
            SplitConfig {
                test_fraction: 0.5,
                seed: 1,
            },
            &c,
        )
        .unwrap();
        assert_eq!((s.test.len(), s.train.len()), (2, 2));
        assert!(matches!(
            split(
                &records(2),
                SplitConfig {
                    test_fraction: 0.2,
                    seed: 1
                },
                &c
            ),
            Err(Error::Split(_))
        ));
        assert!(matches!(
            split(
                &records(5),
                SplitConfig {
                    test_fraction: 1.0,
                    seed: 1
                },
                &c
            ),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = catalog();
        let cat_path = dir.path().join("catalog.json");
        save_catalog(&c, &cat_path).unwrap();
        assert_eq!(load_catalog(&cat_path).unwrap(), c);
        let data_path = dir.path().join("data.jsonl");
        let r = records(3);
        save_dataset(&r, &data_path).unwrap();
        assert_eq!(load_dataset(&data_path, &c, DatasetStyle::RecTools.bound()).unwrap(), r);
    }
}
