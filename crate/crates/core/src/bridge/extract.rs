//! Pulling the handler source out of a model response.

use serde::{Deserialize, Serialize};

use super::classify::{classify_failure, FailureKind, FailureStage};
use super::deps::detect_dependencies_for;
use super::prompt::ENTRY_POINT;
use crate::metrics::lexer::{tokenize, Token, TokenKind};
use crate::runtime::GuestLanguage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    /// Lower-cased first word of the info string; empty when untagged.
    pub language_tag: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedArtifact {
    pub raw_text: String,
    pub code_blocks: Vec<CodeBlock>,
    pub selected_code: Option<String>,
    pub dependencies: Vec<String>,
    pub failure: Option<FailureKind>,
}

impl GeneratedArtifact {
    /// A compact view without the raw response, for service replies.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "code_blocks": self.code_blocks.len(),
            "selected_code": self.selected_code,
            "dependencies": self.dependencies,
            "failure": self.failure,
        })
    }
}

/// Parses backtick and tilde fences in document order. An opening fence is
/// at least three fence characters indented by at most three spaces; the
/// block closes on a fence of the same character that is at least as long.
/// An unclosed block runs to the end of the text.
pub fn parse_fences(text: &str) -> Vec<CodeBlock> {
    let mut blocks = Vec::new();
    let mut open: Option<(char, usize, usize, String, Vec<&str>)> = None;
    for line in text.split('\n') {
        let line = line.strip_suffix('\r').unwrap_or(line);
        match open.as_mut() {
            None => {
                if let Some((ch, len, indent, info)) = fence_open(line) {
                    let tag = info.split_whitespace().next().unwrap_or("").trim_matches(['{', '}', '.']).to_lowercase();
                    open = Some((ch, len, indent, tag, Vec::new()));
                }
            }
            Some((ch, len, indent, _, lines)) => {
                if is_fence_close(line, *ch, *len) {
                    let (_, _, _, tag, lines) = open.take().unwrap();
                    blocks.push(CodeBlock { language_tag: tag, body: lines.join("\n") });
                } else {
                    lines.push(strip_indent(line, *indent));
                }
            }
        }
    }
    if let Some((_, _, _, tag, lines)) = open {
        blocks.push(CodeBlock { language_tag: tag, body: lines.join("\n") });
    }
    blocks
}

fn leading_spaces(line: &str) -> usize {
    line.bytes().take_while(|&b| b == b' ').count()
}

fn fence_open(line: &str) -> Option<(char, usize, usize, &str)> {
    let indent = leading_spaces(line);
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let ch = rest.chars().next().filter(|c| *c == '`' || *c == '~')?;
    let len = rest.chars().take_while(|c| *c == ch).count();
    if len < 3 {
        return None;
    }
    let info = rest[len..].trim();
    if ch == '`' && info.contains('`') {
        return None;
    }
    Some((ch, len, indent, info))
}

fn is_fence_close(line: &str, ch: char, min_len: usize) -> bool {
    let indent = leading_spaces(line);
    if indent > 3 {
        return false;
    }
    let rest = &line[indent..];
    let len = rest.chars().take_while(|c| *c == ch).count();
    len >= min_len && rest[len..].trim().is_empty()
}

fn strip_indent(line: &str, indent: usize) -> &str {
    let n = leading_spaces(line).min(indent);
    &line[n..]
}

/// Wraps code in a fence that its own content cannot close.
pub fn fence(code: &str, tag: &str) -> String {
    let longest = code
        .split('\n')
        .map(|l| l.trim_start().chars().take_while(|c| *c == '`').count())
        .max()
        .unwrap_or(0);
    let ticks = "`".repeat(longest.max(2) + 1);
    format!("{ticks}{tag}\n{code}\n{ticks}")
}

/// Parses the response and selects the handler code.
///
/// Selection: the first block tagged for the runtime, else the first
/// untagged block. A response with no fences at all is taken whole when it
/// defines the handler and lexes for the runtime.
pub fn extract_function(raw_text: &str, language: GuestLanguage) -> GeneratedArtifact {
    let code_blocks = parse_fences(raw_text);
    let tags = language.fence_tags();
    let chosen = code_blocks
        .iter()
        .find(|b| tags.contains(&b.language_tag.as_str()))
        .or_else(|| code_blocks.iter().find(|b| b.language_tag.is_empty()))
        .map(|b| b.body.clone());

    let (candidate, no_code_evidence) = match chosen {
        Some(body) if !body.trim().is_empty() => (Some(body), String::new()),
        Some(_) => (None, "the selected code block is empty".to_string()),
        None if code_blocks.is_empty() => {
            if sniff(raw_text, language) {
                (Some(raw_text.trim_matches('\n').to_string()), String::new())
            } else {
                (None, format!("no code block in response: {}", excerpt(raw_text)))
            }
        }
        None => {
            let found: Vec<&str> = code_blocks.iter().map(|b| b.language_tag.as_str()).collect();
            (None, format!("no {} code block; found blocks tagged {found:?}", language.primary_tag()))
        }
    };

    let failure = match &candidate {
        None => Some(classify_failure(FailureStage::Extraction, &no_code_evidence, None, language)),
        Some(code) => handler_problem(code, language)
            .map(|evidence| classify_failure(FailureStage::Extraction, &evidence, Some(code), language)),
    };
    let selected_code = if failure.is_none() { candidate } else { None };
    let dependencies = selected_code.as_deref().map(|c| detect_dependencies_for(c, language)).unwrap_or_default();
    GeneratedArtifact { raw_text: raw_text.to_string(), code_blocks, selected_code, dependencies, failure }
}

fn excerpt(text: &str) -> String {
    let t = text.trim();
    if t.is_empty() {
        return "<empty>".into();
    }
    let mut s: String = t.chars().take(160).collect();
    if s.len() < t.len() {
        s.push('…');
    }
    format!("{s:?}")
}

fn sniff(text: &str, language: GuestLanguage) -> bool {
    match tokenize(text, language) {
        Ok(tokens) => find_handler(&tokens, language).is_some(),
        Err(_) => false,
    }
}

/// Why `code` cannot serve as the handler, if it cannot.
pub fn handler_problem(code: &str, language: GuestLanguage) -> Option<String> {
    let tokens = match tokenize(code, language) {
        Ok(t) => t,
        // Unlexable code is deployed anyway; the guest reports the error.
        Err(_) => return None,
    };
    let Some(def) = find_handler(&tokens, language) else {
        return Some(format!("handler `{ENTRY_POINT}` is not defined"));
    };
    let body = match language {
        GuestLanguage::Python => python_body(code, &tokens, def),
        GuestLanguage::JavaScript => js_body(&tokens, def),
    };
    match body {
        Some(body) if is_stub(&body, language) => Some(format!("handler `{ENTRY_POINT}` has a placeholder body")),
        _ => None,
    }
}

fn is(t: &Token, text: &str) -> bool {
    t.text == text
}

/// Index of the token naming the handler in its definition.
fn find_handler(tokens: &[Token], language: GuestLanguage) -> Option<usize> {
    let named = |i: usize| tokens.get(i).is_some_and(|t| t.kind == TokenKind::Ident && is(t, ENTRY_POINT));
    (0..tokens.len()).find(|&i| {
        if !named(i) {
            return false;
        }
        let prev = i.checked_sub(1).map(|p| tokens[p].text.as_str());
        let next = tokens.get(i + 1).map(|t| t.text.as_str());
        match language {
            GuestLanguage::Python => prev == Some("def") && next == Some("("),
            GuestLanguage::JavaScript => {
                let declared = matches!(prev, Some("function") | Some("*")) && next == Some("(");
                let bound = matches!(prev, Some("const") | Some("let") | Some("var") | Some(".")) && next == Some("=");
                declared || bound
            }
        }
    })
}

fn line_indent(code: &str, line: usize) -> usize {
    code.split('\n').nth(line.saturating_sub(1)).map(|l| l.len() - l.trim_start().len()).unwrap_or(0)
}

fn python_body(code: &str, tokens: &[Token], name: usize) -> Option<Vec<Token>> {
    let def_indent = line_indent(code, tokens[name].line);
    let mut depth = 0i32;
    let mut colon = None;
    for (j, t) in tokens.iter().enumerate().skip(name + 1) {
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            ":" if depth == 0 => {
                colon = Some(j);
                break;
            }
            _ => {}
        }
    }
    let colon = colon?;
    let header_line = tokens[colon].line;
    let mut body = Vec::new();
    let mut last_line = header_line;
    for t in &tokens[colon + 1..] {
        if t.line != last_line && t.line != header_line && line_indent(code, t.line) <= def_indent {
            break;
        }
        last_line = t.end_line;
        body.push(t.clone());
    }
    Some(body)
}

fn js_body(tokens: &[Token], name: usize) -> Option<Vec<Token>> {
    let start = tokens[name..].iter().position(|t| is(t, "{")).map(|p| p + name)?;
    // An arrow function with an expression body has no braces to inspect.
    if let Some(arrow) = tokens[name..start].iter().position(|t| is(t, "=>")) {
        if name + arrow + 1 != start {
            return None;
        }
    }
    let mut depth = 0i32;
    for (j, t) in tokens.iter().enumerate().skip(start) {
        match t.text.as_str() {
            "{" | "${" => depth += 1,
            "}" => {
                depth -= 1;
                if depth == 0 {
                    return Some(tokens[start + 1..j].to_vec());
                }
            }
            _ => {}
        }
    }
    Some(tokens[start + 1..].to_vec())
}

fn is_stub(body: &[Token], language: GuestLanguage) -> bool {
    let mut body = body;
    if language == GuestLanguage::Python && body.first().is_some_and(|t| t.kind == TokenKind::Str) {
        let doc_line = body[0].end_line;
        if body.get(1).is_none_or(|t| t.line > doc_line) {
            body = &body[1..];
        }
    }
    if body.is_empty() {
        return true;
    }
    let texts: Vec<&str> = body.iter().map(|t| t.text.as_str()).filter(|t| *t != ";").collect();
    let placeholder_msg = body.iter().any(|t| {
        t.kind == TokenKind::Str && {
            let s = t.text.to_lowercase();
            s.contains("not implemented") || s.contains("todo")
        }
    });
    match language {
        GuestLanguage::Python => {
            let mut statements: Vec<Vec<&Token>> = Vec::new();
            let mut line = 0;
            for t in body {
                if t.line != line {
                    statements.push(Vec::new());
                    line = t.end_line;
                }
                statements.last_mut().unwrap().push(t);
            }
            statements.iter().all(|s| {
                let first = s[0].text.as_str();
                first == "pass"
                    || (s.len() == 1 && first == "...")
                    || (first == "raise" && s.get(1).is_some_and(|t| t.text == "NotImplementedError"))
                    || (s.len() == 1 && s[0].kind == TokenKind::Str)
            })
        }
        GuestLanguage::JavaScript => texts.first() == Some(&"throw") && placeholder_msg && !texts[1..].contains(&"throw"),
    }
}
