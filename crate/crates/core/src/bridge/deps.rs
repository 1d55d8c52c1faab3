use std::collections::{BTreeSet, HashSet};
use std::sync::LazyLock;

use regex::Regex;

use crate::runtime::GuestLanguage;

/// Module name of the injected device API client.
pub const CLIENT_MODULE: &str = "home";

static PY_STDLIB: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| include_str!("../../assets/python3/stdlib.txt").lines().map(str::trim).filter(|l| !l.is_empty()).collect());
static NODE_BUILTINS: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| include_str!("../../assets/nodejs/builtins.txt").lines().map(str::trim).filter(|l| !l.is_empty()).collect());

static PY_IMPORT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*import\s+(.+)$").unwrap());
static PY_FROM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*from\s+([A-Za-z_][\w.]*)\s+import\b").unwrap());
static JS_REQUIRE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"\brequire\s*\(\s*['"]([^'"]+)['"]\s*\)"#).unwrap());
static JS_IMPORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?m)^\s*import\s+(?:[^'"]*?\s+from\s+)?['"]([^'"]+)['"]|\bimport\s*\(\s*['"]([^'"]+)['"]\s*\)"#).unwrap());

/// Import names whose installable distribution has a different name.
const PY_DISTRIBUTIONS: &[(&str, &str)] = &[
    ("yaml", "pyyaml"),
    ("cv2", "opencv-python"),
    ("PIL", "Pillow"),
    ("sklearn", "scikit-learn"),
    ("bs4", "beautifulsoup4"),
    ("dateutil", "python-dateutil"),
];

/// Third-party packages the code imports, sorted and de-duplicated.
/// Unknown runtimes yield no dependencies.
pub fn detect_dependencies(code: &str, runtime: &str) -> Vec<String> {
    GuestLanguage::from_runtime(runtime).map(|l| detect_dependencies_for(code, l)).unwrap_or_default()
}

pub fn detect_dependencies_for(code: &str, language: GuestLanguage) -> Vec<String> {
    let mut found = BTreeSet::new();
    match language {
        GuestLanguage::Python => {
            for line in code.lines() {
                let line = line.split('#').next().unwrap_or("");
                let mut roots = Vec::new();
                if let Some(c) = PY_FROM.captures(line) {
                    roots.push(c[1].to_string());
                } else if let Some(c) = PY_IMPORT.captures(line) {
                    for part in c[1].split(',') {
                        if let Some(module) = part.split_whitespace().next() {
                            roots.push(module.to_string());
                        }
                    }
                }
                for module in roots {
                    let root = module.split('.').next().unwrap_or("");
                    let valid = !root.is_empty() && root.chars().all(|c| c.is_alphanumeric() || c == '_');
                    if valid && root != CLIENT_MODULE && !PY_STDLIB.contains(root) && !root.starts_with("__") {
                        let dist = PY_DISTRIBUTIONS.iter().find(|(m, _)| *m == root).map(|(_, d)| *d).unwrap_or(root);
                        found.insert(dist.to_string());
                    }
                }
            }
        }
        GuestLanguage::JavaScript => {
            let specs = JS_REQUIRE
                .captures_iter(code)
                .map(|c| c[1].to_string())
                .chain(JS_IMPORT.captures_iter(code).filter_map(|c| c.get(1).or(c.get(2)).map(|m| m.as_str().to_string())));
            for spec in specs {
                if spec.starts_with('.') || spec.starts_with('/') || spec.starts_with("node:") {
                    continue;
                }
                let package = if spec.starts_with('@') {
                    spec.splitn(3, '/').take(2).collect::<Vec<_>>().join("/")
                } else {
                    spec.split('/').next().unwrap_or("").to_string()
                };
                if !package.is_empty() && package != CLIENT_MODULE && !NODE_BUILTINS.contains(package.as_str()) {
                    found.insert(package);
                }
            }
        }
    }
    found.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn python_imports() {
        assert_eq!(detect_dependencies("import requests\nimport json", "python3"), ["requests"]);
        assert!(detect_dependencies("def fn(x):\n    return x", "python3").is_empty());
        let code = "import os, yaml as y\nfrom PIL.Image import open\nfrom . import sibling\nimport home\nfrom home import set\nimport paho.mqtt.client as mqtt  # comment";
        assert_eq!(detect_dependencies(code, "python3"), ["Pillow", "paho", "pyyaml"]);
    }

    #[test]
    fn node_requires() {
        assert_eq!(detect_dependencies("const mqtt = require('mqtt')", "nodejs"), ["mqtt"]);
        let code = "const fs = require('fs');\nconst home = require('./home');\nconst p = require(\"node:path\");\nimport axios from 'axios';\nconst x = require('@scope/pkg/sub');\nconst y = require('lodash/fp');";
        assert_eq!(detect_dependencies(code, "nodejs"), ["@scope/pkg", "axios", "lodash"]);
    }

    #[test]
    fn detection_is_idempotent_on_its_input() {
        let code = "import requests\nimport numpy as np\n";
        assert_eq!(detect_dependencies(code, "python3"), detect_dependencies(code, "python3"));
    }
}
