//! Line-oriented record grammar for language-model replies.
//!
//! ```text
//! functionality / problem line:  <n>. <text>
//! assignment line:               <n> -> <tool id>
//! ```
//!
//! Numbered lists must count up from 1. Blank lines are ignored. An
//! assignment reply consisting of the single word `NONE` is an empty list.

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Functionalities,
    Assignments,
    Problems,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Records {
    /// Functionality or problem texts, in order.
    Items(Vec<String>),
    /// `(functionality index, tool id)` pairs, in order.
    Assignments(Vec<(usize, String)>),
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn err(line: usize, reason: impl Into<String>) -> LlmError {
    LlmError::Parse {
        line,
        reason: reason.into(),
    }
}

pub fn parse_numbered(text: &str) -> Result<Vec<String>, LlmError> {
    let mut items = Vec::new();
    for (line, content) in content_lines(text) {
        let (num, rest) = content
            .split_once(". ")
            .ok_or_else(|| err(line, format!("expected `<n>. <text>`, got `{content}`")))?;
        let n: usize = num
            .parse()
            .map_err(|_| err(line, format!("`{num}` is not a list number")))?;
        if n != items.len() + 1 {
            return Err(err(line, format!("expected item {}, got {n}", items.len() + 1)));
        }
        let rest = rest.trim();
        if rest.is_empty() {
            return Err(err(line, "empty item text"));
        }
        items.push(rest.to_string());
    }
    Ok(items)
}

pub fn parse_assignments(text: &str) -> Result<Vec<(usize, String)>, LlmError> {
    if text.trim() == "NONE" {
        return Ok(Vec::new());
    }
    let mut pairs = Vec::new();
    for (line, content) in content_lines(text) {
        let (lhs, rhs) = content
            .split_once(" -> ")
            .ok_or_else(|| err(line, format!("expected `<n> -> <tool id>`, got `{content}`")))?;
        let lhs = lhs.trim();
        let num = lhs.strip_prefix('F').unwrap_or(lhs);
        let n: usize = num
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| err(line, format!("`{lhs}` is not a functionality number")))?;
        let tool = rhs.trim();
        if tool.is_empty() || tool.contains(char::is_whitespace) {
            return Err(err(line, format!("`{tool}` is not a tool id")));
        }
        pairs.push((n, tool.to_string()));
    }
    Ok(pairs)
}

pub fn parse_structured(text: &str, schema: Schema) -> Result<Records, LlmError> {
    match schema {
        Schema::Functionalities | Schema::Problems => parse_numbered(text).map(Records::Items),
        Schema::Assignments => parse_assignments(text).map(Records::Assignments),
    }
}

pub fn render_numbered<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}\n", i + 1, t.as_ref()))
        .collect()
}

pub fn render_assignments(pairs: &[(usize, String)]) -> String {
    pairs.iter().map(|(n, t)| format!("{n} -> {t}\n")).collect()
}

pub fn render(records: &Records) -> String {
    match records {
        Records::Items(items) => render_numbered(items),
        Records::Assignments(pairs) => render_assignments(pairs),
    }
}
