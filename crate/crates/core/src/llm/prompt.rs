use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStage {
    Extract,
    Match,
    Restate,
}

impl PromptStage {
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            PromptStage::Extract => &["query"],
            PromptStage::Match => &["functionalities", "tool_catalog"],
            PromptStage::Restate => &["query", "functionalities"],
        }
    }

    fn file_name(self) -> &'static str {
        match self {
            PromptStage::Extract => "extract.txt",
            PromptStage::Match => "match.txt",
            PromptStage::Restate => "restate.txt",
        }
    }
}

/// Template text with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    stage: PromptStage,
    text: String,
}

impl PromptTemplate {
    pub fn new(stage: PromptStage, text: impl Into<String>) -> Result<Self, LlmError> {
        let text = text.into();
        for p in stage.placeholders() {
            if !text.contains(&format!("{{{p}}}")) {
                return Err(LlmError::Template(format!("{stage:?} template lacks {{{p}}}")));
            }
        }
        Ok(PromptTemplate { stage, text })
    }

    pub fn stage(&self) -> PromptStage {
        self.stage
    }

    /// Substitutes every placeholder in a single pass, so values containing
    /// braces are inserted literally.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}').map(|close| (&after[..close], close)) {
                Some((name, close)) if vars.contains_key(name) => {
                    out.push_str(&vars[name]);
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub system: String,
    pub extract: PromptTemplate,
    pub matching: PromptTemplate,
    pub restate: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            system: include_str!("../../templates/system.txt").trim().to_string(),
            extract: PromptTemplate::new(PromptStage::Extract, include_str!("../../templates/extract.txt"))
                .expect("bundled template"),
            matching: PromptTemplate::new(PromptStage::Match, include_str!("../../templates/match.txt"))
                .expect("bundled template"),
            restate: PromptTemplate::new(PromptStage::Restate, include_str!("../../templates/restate.txt"))
                .expect("bundled template"),
        }
    }
}

impl PromptSet {
    /// Loads templates from `dir`; any of `system.txt`, `extract.txt`,
    /// `match.txt`, `restate.txt` that is absent keeps its bundled default.
    pub fn load_dir(dir: &Path) -> Result<Self, LlmError> {
        let mut set = PromptSet::default();
        let read = |name: &str| -> Result<Option<String>, LlmError> {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(LlmError::Template(format!("{}: {e}", path.display()))),
            }
        };
        if let Some(s) = read("system.txt")? {
            set.system = s.trim().to_string();
        }
        for stage in [PromptStage::Extract, PromptStage::Match, PromptStage::Restate] {
            if let Some(text) = read(stage.file_name())? {
                let t = PromptTemplate::new(stage, text)?;
                match stage {
                    PromptStage::Extract => set.extract = t,
                    PromptStage::Match => set.matching = t,
                    PromptStage::Restate => set.restate = t,
                }
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_are_valid() {
        let set = PromptSet::default();
        assert_eq!(set.extract.stage(), PromptStage::Extract);
        assert!(!set.system.is_empty());
    }

    #[test]
    fn missing_placeholder_is_rejected() {
        assert!(PromptTemplate::new(PromptStage::Match, "only {functionalities}").is_err());
    }

    #[test]
    fn render_is_single_pass() {
        let t = PromptTemplate::new(PromptStage::Extract, "Q: {query} {other}").unwrap();
        let vars = BTreeMap::from([("query", "{query} in braces".to_string())]);
        assert_eq!(t.render(&vars), "Q: {query} in braces {other}");
    }
}
