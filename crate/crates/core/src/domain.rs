//! Shared domain types: tools, queries, tool sets and usage history.
//!
//! Everything here is immutable once constructed. Constructors validate the
//! invariants (non-empty identifiers and texts, unique ids, bundles that
//! resolve against the corpus) so downstream stages can rely on them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ToolId(String);

impl ToolId {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.trim().is_empty() {
            return Err(Error::invalid("tool id", "empty identifier"));
        }
        Ok(ToolId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ToolId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        ToolId::new(value)
    }
}

impl From<ToolId> for String {
    fn from(id: ToolId) -> Self {
        id.0
    }
}

impl fmt::Display for ToolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for ToolId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tool {
    pub id: ToolId,
    pub name: String,
    pub description: String,
}

impl Tool {
    pub fn new(id: impl Into<String>, name: impl Into<String>, description: impl Into<String>) -> Result<Self> {
        let tool = Tool {
            id: ToolId::new(id)?,
            name: name.into(),
            description: description.into(),
        };
        tool.validate()?;
        Ok(tool)
    }

    fn validate(&self) -> Result<()> {
        if self.description.trim().is_empty() {
            return Err(Error::invalid(
                "tool",
                format!("`{}` has an empty description", self.id),
            ));
        }
        Ok(())
    }

    /// Text a retriever indexes for this tool: name followed by description.
    pub fn matching_text(&self) -> String {
        if self.name.trim().is_empty() {
            self.description.clone()
        } else {
            format!("{}\n{}", self.name, self.description)
        }
    }
}

/// The tool catalog. Order of insertion is preserved and defines the
/// canonical member order used wherever a set must be listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tool>", into = "Vec<Tool>")]
pub struct ToolCorpus {
    tools: Vec<Tool>,
    #[serde(skip)]
    positions: HashMap<ToolId, usize>,
}

impl ToolCorpus {
    pub fn new(tools: Vec<Tool>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(tools.len());
        for (i, tool) in tools.iter().enumerate() {
            tool.validate()?;
            if positions.insert(tool.id.clone(), i).is_some() {
                return Err(Error::DuplicateTool(tool.id.to_string()));
            }
        }
        Ok(ToolCorpus { tools, positions })
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn tools(&self) -> &[Tool] {
        &self.tools
    }

    pub fn get(&self, id: &str) -> Option<&Tool> {
        self.positions.get(id).map(|&i| &self.tools[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    /// Members of `set` in corpus insertion order.
    ///
    /// Members unknown to the corpus sort last, by id.
    pub fn canonical_order(&self, set: &ToolSet) -> Vec<ToolId> {
        let mut members: Vec<ToolId> = set.iter().cloned().collect();
        members.sort_by_key(|id| (self.position(id.as_str()).unwrap_or(usize::MAX), id.clone()));
        members
    }
}

impl TryFrom<Vec<Tool>> for ToolCorpus {
    type Error = Error;
    fn try_from(tools: Vec<Tool>) -> Result<Self> {
        ToolCorpus::new(tools)
    }
}

impl From<ToolCorpus> for Vec<Tool> {
    fn from(corpus: ToolCorpus) -> Self {
        corpus.tools
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Query(String);

impl Query {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::invalid("query", "empty after trimming whitespace"));
        }
        Ok(Query(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Query {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Query::new(value)
    }
}

impl From<Query> for String {
    fn from(q: Query) -> Self {
        q.0
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An unordered set of tool ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToolSet(BTreeSet<ToolId>);

impl ToolSet {
    pub fn new() -> Self {
        ToolSet::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains(id)
    }

    pub fn insert(&mut self, id: ToolId) -> bool {
        self.0.insert(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolId> {
        self.0.iter()
    }

    pub fn union_size(&self, other: &ToolSet) -> usize {
        self.len() + other.len() - self.intersection_size(other)
    }

    pub fn intersection_size(&self, other: &ToolSet) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.0.iter().filter(|id| large.0.contains(*id)).count()
    }

    pub fn difference(&self, other: &ToolSet) -> ToolSet {
        ToolSet(self.0.difference(&other.0).cloned().collect())
    }

    pub fn union(&self, other: &ToolSet) -> ToolSet {
        ToolSet(self.0.union(&other.0).cloned().collect())
    }

    /// Every member must resolve in `corpus`.
    pub fn validate(&self, corpus: &ToolCorpus) -> Result<()> {
        match self.0.iter().find(|id| !corpus.contains(id.as_str())) {
            Some(id) => Err(Error::UnknownTool(id.to_string())),
            None => Ok(()),
        }
    }
}

impl FromIterator<ToolId> for ToolSet {
    fn from_iter<I: IntoIterator<Item = ToolId>>(iter: I) -> Self {
        ToolSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a ToolSet {
    type Item = &'a ToolId;
    type IntoIter = std::collections::btree_set::Iter<'a, ToolId>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// |a ∪ b|
pub fn toolset_union_size(a: &ToolSet, b: &ToolSet) -> usize {
    a.union_size(b)
}

/// |a ∩ b|
pub fn toolset_intersection_size(a: &ToolSet, b: &ToolSet) -> usize {
    a.intersection_size(b)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoricalRecord {
    pub query: Query,
    pub bundle: ToolSet,
}

impl HistoricalRecord {
    pub fn new(query: Query, bundle: ToolSet) -> Result<Self> {
        if bundle.is_empty() {
            return Err(Error::invalid(
                "historical record",
                format!("empty tool bundle for query `{query}`"),
            ));
        }
        Ok(HistoricalRecord { query, bundle })
    }
}

/// A distinct bundle in the history together with the records that used it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniqueBundle {
    pub bundle: ToolSet,
    /// Indices into [`History::records`], ascending.
    pub records: Vec<usize>,
}

/// Past (query, bundle) usage records, in their original order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    records: Vec<HistoricalRecord>,
    unique: Vec<UniqueBundle>,
}

impl History {
    pub fn new(records: Vec<HistoricalRecord>, corpus: &ToolCorpus) -> Result<Self> {
        let mut slots: BTreeMap<&ToolSet, usize> = BTreeMap::new();
        let mut unique: Vec<UniqueBundle> = Vec::new();
        for (i, record) in records.iter().enumerate() {
            if record.bundle.is_empty() {
                return Err(Error::invalid("history", format!("record {i} has an empty bundle")));
            }
            record.bundle.validate(corpus)?;
            match slots.get(&record.bundle) {
                Some(&slot) => unique[slot].records.push(i),
                None => {
                    slots.insert(&record.bundle, unique.len());
                    unique.push(UniqueBundle {
                        bundle: record.bundle.clone(),
                        records: vec![i],
                    });
                }
            }
        }
        Ok(History { records, unique })
    }

    pub fn records(&self) -> &[HistoricalRecord] {
        &self.records
    }

    /// Distinct bundles ordered by their first appearance.
    pub fn unique_bundles(&self) -> &[UniqueBundle] {
        &self.unique
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains_bundle(&self, bundle: &ToolSet) -> bool {
        self.unique.iter().any(|u| &u.bundle == bundle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    BundleRetained,
    RerankedAddition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResult {
    pub recommended: ToolSet,
    /// Permutation of `recommended` used for rank-based metrics.
    pub ranked_order: Vec<ToolId>,
    pub provenance: BTreeMap<ToolId, Provenance>,
    pub unsolved_remaining: Vec<String>,
}

impl RecommendationResult {
    pub fn empty() -> Self {
        RecommendationResult {
            recommended: ToolSet::new(),
            ranked_order: Vec::new(),
            provenance: BTreeMap::new(),
            unsolved_remaining: Vec::new(),
        }
    }

    /// Checks the ranked-order and provenance invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let ranked: ToolSet = self.ranked_order.iter().cloned().collect();
        if ranked.len() != self.ranked_order.len() || ranked != self.recommended {
            return Err(Error::invalid(
                "recommendation",
                "ranked order is not a permutation of the recommended set",
            ));
        }
        let tagged: ToolSet = self.provenance.keys().cloned().collect();
        if tagged != self.recommended {
            return Err(Error::invalid(
                "recommendation",
                "provenance tags do not cover the recommended set exactly",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn set(ids: &[&str]) -> ToolSet {
        ids.iter().map(|s| ToolId::new(*s).unwrap()).collect()
    }

    pub fn tool(id: &str, desc: &str) -> Tool {
        Tool::new(id, id, desc).unwrap()
    }
}
