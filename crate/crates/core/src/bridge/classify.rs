use serde::{Deserialize, Serialize};

use super::extract::handler_problem;
use crate::runtime::GuestLanguage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureCategory {
    NoCode,
    ImportError,
    DataHandling,
    MissingCode,
    Timeout,
    Other,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 6] = [
        FailureCategory::NoCode,
        FailureCategory::ImportError,
        FailureCategory::DataHandling,
        FailureCategory::MissingCode,
        FailureCategory::Timeout,
        FailureCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::NoCode => "NoCode",
            FailureCategory::ImportError => "ImportError",
            FailureCategory::DataHandling => "DataHandling",
            FailureCategory::MissingCode => "MissingCode",
            FailureCategory::Timeout => "Timeout",
            FailureCategory::Other => "Other",
        }
    }
}

impl std::fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified failure and the text it was classified from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureKind {
    pub category: FailureCategory,
    pub evidence: String,
}

/// Pipeline stage where the failure surfaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Generation,
    Extraction,
    Deployment,
    Invocation,
}

const IMPORT_SIGNATURES: &[&str] = &[
    "ModuleNotFoundError",
    "ImportError",
    "No module named",
    "Cannot find module",
    "MODULE_NOT_FOUND",
    "ERR_MODULE_NOT_FOUND",
    "No matching distribution",
    "Could not find a version",
    "npm ERR! 404",
    "npm error 404",
    "E404",
];

const MISSING_SIGNATURES: &[&str] = &["has no callable 'fn'", "has no function 'fn'"];

const DATA_SIGNATURES: &[&str] = &[
    "TypeError",
    "KeyError",
    "IndexError",
    "AttributeError",
    "ValueError",
    "JSONDecodeError",
    "is not valid JSON",
    "Unexpected end of JSON input",
    "in JSON at position",
    "HomeError",
    "RangeError",
    "Cannot read properties",
    "is not a function",
    "is not iterable",
];

const TIMEOUT_SIGNATURES: &[&str] = &["timed out", "timeout", "Timeout"];

fn matches_any(evidence: &str, signatures: &[&str]) -> Option<String> {
    signatures.iter().find(|s| evidence.contains(*s)).map(|s| s.to_string())
}

/// Assigns exactly one category, trying the rules in a fixed order: no code,
/// import error, missing code, data handling, timeout, other.
///
/// Generation-stage failures never reached code, so they are only `Timeout`
/// or `Other`. `code` is the code that was deployed or invoked, when any.
pub fn classify_failure(stage: FailureStage, evidence: &str, code: Option<&str>, language: GuestLanguage) -> FailureKind {
    let evidence_text = if evidence.trim().is_empty() { format!("{stage:?} failed without output") } else { evidence.to_string() };
    let kind = |category| FailureKind { category, evidence: evidence_text.clone() };

    if stage == FailureStage::Generation {
        return kind(if matches_any(evidence, TIMEOUT_SIGNATURES).is_some() {
            FailureCategory::Timeout
        } else {
            FailureCategory::Other
        });
    }
    let Some(code) = code else {
        return kind(FailureCategory::NoCode);
    };
    if matches_any(evidence, IMPORT_SIGNATURES).is_some() {
        return kind(FailureCategory::ImportError);
    }
    if matches_any(evidence, MISSING_SIGNATURES).is_some() || handler_problem(code, language).is_some() {
        return kind(FailureCategory::MissingCode);
    }
    if matches_any(evidence, DATA_SIGNATURES).is_some() {
        return kind(FailureCategory::DataHandling);
    }
    if matches_any(evidence, TIMEOUT_SIGNATURES).is_some() {
        return kind(FailureCategory::Timeout);
    }
    kind(FailureCategory::Other)
}
