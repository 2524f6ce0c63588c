//! Deterministic rule-table mapper for tests and offline runs.
//!
//! Rule file, one rule per line, `#` starts a comment:
//!
//! ```text
//! extract: translate => translate this text
//! match:   translate => tool_translate
//! restate: email     => email the translated text
//! ```
//!
//! Patterns match case-insensitively as substrings. Rules are tried in file
//! order.

use std::path::Path;

use super::LlmError;
use crate::coverage::{CoverageMapper, Functionality};
use crate::domain::{Query, Tool, ToolId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub pattern: String,
    pub output: String,
}

impl Rule {
    fn matches(&self, text: &str) -> bool {
        text.to_lowercase().contains(&self.pattern)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockRuleTable {
    pub extraction: Vec<Rule>,
    pub matching: Vec<Rule>,
    pub restatement: Vec<Rule>,
}

impl MockRuleTable {
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut table = MockRuleTable::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if content.is_empty() {
                continue;
            }
            let bad = |reason: &str| LlmError::Rules {
                line,
                reason: reason.to_string(),
            };
            let (kind, body) = content
                .split_once(':')
                .ok_or_else(|| bad("expected `<kind>: <pattern> => <output>`"))?;
            let (pattern, output) = body.split_once("=>").ok_or_else(|| bad("missing `=>`"))?;
            let (pattern, output) = (pattern.trim().to_lowercase(), output.trim().to_string());
            if pattern.is_empty() || output.is_empty() {
                return Err(bad("empty pattern or output"));
            }
            let rule = Rule { pattern, output };
            match kind.trim() {
                "extract" => table.extraction.push(rule),
                "match" => {
                    if rule.output.contains(char::is_whitespace) {
                        return Err(bad("tool id must not contain whitespace"));
                    }
                    table.matching.push(rule)
                }
                "restate" => table.restatement.push(rule),
                other => return Err(bad(&format!("unknown rule kind `{other}`"))),
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Rules {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Every extraction rule whose pattern occurs in `query`, in file order,
    /// without repeated outputs.
    pub fn extract(&self, query: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for rule in self.extraction.iter().filter(|r| r.matches(query)) {
            if !out.contains(&rule.output) {
                out.push(rule.output.clone());
            }
        }
        out
    }

    /// First matching rule whose tool is among `available`.
    pub fn match_one(&self, functionality: &str, available: &[&str]) -> Option<&str> {
        self.matching
            .iter()
            .find(|r| r.matches(functionality) && available.contains(&r.output.as_str()))
            .map(|r| r.output.as_str())
    }

    pub fn restate_one(&self, functionality: &str) -> Option<&str> {
        self.restatement
            .iter()
            .find(|r| r.matches(functionality))
            .map(|r| r.output.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct RuleMockMapper {
    table: MockRuleTable,
}

impl RuleMockMapper {
    pub fn new(table: MockRuleTable) -> Self {
        RuleMockMapper { table }
    }

    pub fn table(&self) -> &MockRuleTable {
        &self.table
    }
}

impl CoverageMapper for RuleMockMapper {
    fn extract(&self, query: &Query) -> Result<Vec<String>, LlmError> {
        Ok(self.table.extract(query.text()))
    }

    fn match_tools(&self, functionalities: &[Functionality], tools: &[Tool]) -> Result<Vec<(usize, ToolId)>, LlmError> {
        let available: Vec<&str> = tools.iter().map(|t| t.id.as_str()).collect();
        Ok(functionalities
            .iter()
            .filter_map(|f| {
                let id = self.table.match_one(&f.text, &available)?;
                Some((f.index, ToolId::new(id).ok()?))
            })
            .collect())
    }

    /// Empty when no rule matches any item; otherwise items without a rule
    /// keep their text.
    fn restate(&self, _query: &Query, unmet: &[Functionality]) -> Result<Vec<String>, LlmError> {
        let restated: Vec<Option<&str>> = unmet.iter().map(|f| self.table.restate_one(&f.text)).collect();
        if restated.iter().all(Option::is_none) {
            return Ok(Vec::new());
        }
        Ok(unmet
            .iter()
            .zip(restated)
            .map(|(f, r)| r.map_or_else(|| f.text.clone(), str::to_string))
            .collect())
    }
}
