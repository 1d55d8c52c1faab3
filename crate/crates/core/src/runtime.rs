//! Guest runtime identifiers and the language family behind each one.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const PYTHON3: &str = "python3";
pub const NODEJS: &str = "nodejs";

/// Language family of a guest runtime. Analysis (extraction, dependency
/// detection, metrics) is keyed on this rather than on the runtime id so that
/// additional adapters can reuse the built-in tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuestLanguage {
    Python,
    JavaScript,
}

impl GuestLanguage {
    pub fn from_runtime(runtime: &str) -> Option<Self> {
        match runtime {
            "python3" | "python" | "py" => Some(Self::Python),
            "nodejs" | "node" | "javascript" | "js" => Some(Self::JavaScript),
            _ => None,
        }
    }

    /// Fence info-string tags that identify a code block in this language.
    pub fn fence_tags(self) -> &'static [&'static str] {
        match self {
            Self::Python => &["python", "python3", "py", "py3"],
            Self::JavaScript => &["javascript", "js", "node", "nodejs", "mjs", "cjs"],
        }
    }

    /// Tag used when asking the model for a fenced block.
    pub fn primary_tag(self) -> &'static str {
        self.fence_tags()[0]
    }

    /// File name the handler source is stored under inside a bundle.
    pub fn handler_file(self) -> &'static str {
        match self {
            Self::Python => "handler.py",
            Self::JavaScript => "handler.js",
        }
    }

    /// File name of the injected device-API client module.
    pub fn client_file(self) -> &'static str {
        match self {
            Self::Python => "home.py",
            Self::JavaScript => "home.js",
        }
    }
}

impl fmt::Display for GuestLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Python => f.write_str("python"),
            Self::JavaScript => f.write_str("javascript"),
        }
    }
}
