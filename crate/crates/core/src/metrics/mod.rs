//! Code-quality metrics over guest source: cyclomatic complexity, Halstead
//! effort and the maintainability index.
//!
//! Analysis is lexical. Strings and comments are stripped first, then tokens
//! are classified with the per-language tables in `assets/metrics/`:
//!
//! - operands: identifiers, literals and value keywords (`None`, `true`, ...)
//! - operators: keywords and symbols with semantic force; closing brackets,
//!   commas, colons and semicolons are structural and not counted
//!
//! From the counts: `V = N log2 n`, `D = (n1 / 2)(N2 / n2)`, `E = D V`, and
//! `MI = max(0, 100 (171 - 5.2 ln V - 0.23 CC - 16.2 ln SLOC) / 171)` with V
//! and SLOC floored at 1 inside the logarithms.

pub mod lexer;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

pub use lexer::{tokenize, LexError, Token, TokenKind, TokenTable};

use crate::runtime::GuestLanguage;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("unknown runtime {0:?}")]
    UnknownRuntime(String),
    #[error("cannot lex source: {0}")]
    Lex(#[from] LexError),
    #[error("source contains no code lines")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halstead {
    pub n1: usize,
    pub n2: usize,
    #[serde(rename = "N1")]
    pub big_n1: usize,
    #[serde(rename = "N2")]
    pub big_n2: usize,
    pub vocabulary: usize,
    pub length: usize,
    pub volume: f64,
    pub difficulty: f64,
    pub effort: f64,
}

impl Halstead {
    /// Derives the Halstead measures from the four base counts. Returns
    /// `None` when there are no operands, where difficulty is undefined.
    pub fn from_counts(n1: usize, n2: usize, big_n1: usize, big_n2: usize) -> Option<Self> {
        if n2 == 0 {
            return None;
        }
        let vocabulary = n1 + n2;
        let length = big_n1 + big_n2;
        let volume = length as f64 * (vocabulary as f64).log2();
        let difficulty = (n1 as f64 / 2.0) * (big_n2 as f64 / n2 as f64);
        Some(Self {
            n1,
            n2,
            big_n1,
            big_n2,
            vocabulary,
            length,
            volume,
            difficulty,
            effort: difficulty * volume,
        })
    }
}

/// Module-level metrics for one piece of guest code. `halstead` and `mi` are
/// absent when the code has no operands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cc: u32,
    pub sloc: u32,
    pub halstead: Option<Halstead>,
    pub mi: Option<f64>,
}

impl MetricReport {
    pub fn effort(&self) -> Option<f64> {
        self.halstead.as_ref().map(|h| h.effort)
    }
}

pub fn maintainability_index(volume: f64, cc: u32, sloc: u32) -> f64 {
    let v = volume.max(1.0);
    let l = f64::from(sloc.max(1));
    let raw = 171.0 - 5.2 * v.ln() - 0.23 * f64::from(cc) - 16.2 * l.ln();
    (100.0 * raw / 171.0).clamp(0.0, 100.0)
}

pub fn analyze(code: &str, runtime: &str) -> Result<MetricReport, MetricsError> {
    let language = GuestLanguage::from_runtime(runtime).ok_or_else(|| MetricsError::UnknownRuntime(runtime.into()))?;
    analyze_language(code, language)
}

pub fn analyze_language(code: &str, language: GuestLanguage) -> Result<MetricReport, MetricsError> {
    let tokens = tokenize(code, language)?;
    if tokens.is_empty() {
        return Err(MetricsError::Empty);
    }
    let table = TokenTable::for_language(language);

    let mut lines = BTreeSet::new();
    for t in &tokens {
        lines.extend(t.line..=t.end_line);
    }
    let sloc = lines.len() as u32;

    let decisions = tokens
        .iter()
        .filter(|t| matches!(t.kind, TokenKind::Keyword | TokenKind::Operator) && table.branch_tokens.contains(&t.text))
        .count() as u32;
    let cc = 1 + decisions;

    let mut operators = HashSet::new();
    let mut operands = HashSet::new();
    let (mut big_n1, mut big_n2) = (0usize, 0usize);
    for t in &tokens {
        match t.kind {
            TokenKind::Keyword | TokenKind::Operator => {
                big_n1 += 1;
                operators.insert(t.text.as_str());
            }
            TokenKind::Ident | TokenKind::Number | TokenKind::Str | TokenKind::ValueKeyword => {
                big_n2 += 1;
                operands.insert(t.text.as_str());
            }
            TokenKind::Punct => {}
        }
    }

    let halstead = Halstead::from_counts(operators.len(), operands.len(), big_n1, big_n2);
    let mi = halstead.as_ref().map(|h| maintainability_index(h.volume, cc, sloc));
    Ok(MetricReport { cc, sloc, halstead, mi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population mean and standard deviation; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) { (sorted[mid - 1] + sorted[mid]) / 2.0 } else { sorted[mid] })
}

/// Average ± std for CC and MI, median for Halstead effort (its distribution
/// is heavily skewed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub count: usize,
    pub cc: Option<MeanStd>,
    pub mi: Option<MeanStd>,
    pub effort_median: Option<f64>,
}

pub fn aggregate(reports: &[MetricReport]) -> MetricAggregate {
    let cc: Vec<f64> = reports.iter().map(|r| f64::from(r.cc)).collect();
    let mi: Vec<f64> = reports.iter().filter_map(|r| r.mi).collect();
    let effort: Vec<f64> = reports.iter().filter_map(MetricReport::effort).collect();
    MetricAggregate { count: reports.len(), cc: MeanStd::of(&cc), mi: MeanStd::of(&mi), effort_median: median(&effort) }
}
