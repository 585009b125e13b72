//! Issue-specific feedback templates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::FeedbackError;
use crate::corpus::LabelRegistry;

/// Where the reviewer's own words go in a template.
pub const PLACEHOLDER: &str = "[insert reviewer comment here]";
/// Key of the fallback template.
pub const GENERIC_TEMPLATE_KEY: &str = "generic";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TemplateFile {
    Wrapped {
        #[allow(dead_code)]
        format_version: String,
        templates: BTreeMap<String, String>,
    },
    Flat(BTreeMap<String, String>),
}

impl TemplateRegistry {
    pub fn new(templates: BTreeMap<String, String>) -> Result<Self, FeedbackError> {
        if let Some((key, _)) = templates.iter().find(|(_, body)| body.trim().is_empty()) {
            return Err(FeedbackError::Malformed(format!("template {key:?} is empty")));
        }
        Ok(Self { templates })
    }

    /// Accepts `{format_version, templates: {...}}` or a flat key → body map.
    pub fn from_json_str(text: &str) -> Result<Self, FeedbackError> {
        let file: TemplateFile = serde_json::from_str(text).map_err(|e| FeedbackError::Malformed(e.to_string()))?;
        match file {
            TemplateFile::Wrapped { templates, .. } | TemplateFile::Flat(templates) => Self::new(templates),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeedbackError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    /// The bundled templates plus the generic fallback.
    pub fn shipped() -> Self {
        Self::from_json_str(include_str!("../../assets/templates.json")).expect("bundled templates are valid")
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.templates.get(key).map(String::as_str)
    }

    /// The label's template, or the generic one when `allow_generic` is set.
    pub fn resolve(&self, key: &str, allow_generic: bool) -> Result<&str, FeedbackError> {
        self.get(key)
            .or_else(|| allow_generic.then(|| self.get(GENERIC_TEMPLATE_KEY)).flatten())
            .ok_or_else(|| FeedbackError::MissingTemplate(key.to_string()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Detectable labels without a template of their own.
    pub fn uncovered<'a>(&self, registry: &'a LabelRegistry) -> Vec<&'a str> {
        registry
            .detectable()
            .filter(|l| !self.templates.contains_key(&l.key))
            .map(|l| l.key.as_str())
            .collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.templates).expect("templates serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_templates() {
        let t = TemplateRegistry::shipped();
        assert_eq!(t.len(), 23);
        assert!(t.keys().all(|k| t.get(k).unwrap().contains(PLACEHOLDER)));
        let registry = LabelRegistry::shipped();
        assert_eq!(t.uncovered(&registry), vec!["s7-algorithm-dataset-interaction"]);
        assert_eq!(
            t.resolve("s7-algorithm-dataset-interaction", true).unwrap(),
            t.get(GENERIC_TEMPLATE_KEY).unwrap()
        );
        assert!(matches!(
            t.resolve("s7-algorithm-dataset-interaction", false),
            Err(FeedbackError::MissingTemplate(_))
        ));
    }

    #[test]
    fn flat_and_wrapped_files() {
        let flat = TemplateRegistry::from_json_str(r#"{"a": "body"}"#).unwrap();
        let wrapped = TemplateRegistry::from_json_str(r#"{"format_version":"1","templates":{"a":"body"}}"#).unwrap();
        assert_eq!(flat, wrapped);
        assert!(TemplateRegistry::from_json_str(r#"{"a": " "}"#).is_err());
    }
}
