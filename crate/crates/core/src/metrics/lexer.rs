use std::collections::HashSet;
use std::sync::LazyLock;

use serde::Deserialize;

use crate::runtime::GuestLanguage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    ValueKeyword,
    Ident,
    Number,
    Str,
    Operator,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
    /// Last line the token touches (multi-line strings).
    pub end_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct LexError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Deserialize)]
struct RawTable {
    line_comment: String,
    #[serde(default)]
    block_comment: Option<(String, String)>,
    #[serde(default)]
    ident_extra: String,
    keywords: Vec<String>,
    value_keywords: Vec<String>,
    value_symbols: Vec<String>,
    branch_tokens: Vec<String>,
    operators: Vec<String>,
    punctuation: Vec<String>,
}

/// Per-language token classification, loaded from the shipped tables.
#[derive(Debug)]
pub struct TokenTable {
    pub language: GuestLanguage,
    line_comment: String,
    block_comment: Option<(String, String)>,
    ident_extra: Vec<char>,
    keywords: HashSet<String>,
    value_keywords: HashSet<String>,
    /// (text, is_value) sorted longest first.
    symbols: Vec<(String, SymbolClass)>,
    pub branch_tokens: HashSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SymbolClass {
    Operator,
    Punct,
    Value,
}

impl TokenTable {
    fn load(language: GuestLanguage, src: &str) -> Self {
        let raw: RawTable = toml::from_str(src).expect("shipped token table is valid TOML");
        let mut symbols: Vec<(String, SymbolClass)> = raw
            .operators
            .into_iter()
            .map(|s| (s, SymbolClass::Operator))
            .chain(raw.punctuation.into_iter().map(|s| (s, SymbolClass::Punct)))
            .chain(raw.value_symbols.into_iter().map(|s| (s, SymbolClass::Value)))
            .collect();
        symbols.sort_by_key(|s| std::cmp::Reverse(s.0.len()));
        Self {
            language,
            line_comment: raw.line_comment,
            block_comment: raw.block_comment,
            ident_extra: raw.ident_extra.chars().collect(),
            keywords: raw.keywords.into_iter().collect(),
            value_keywords: raw.value_keywords.into_iter().collect(),
            symbols,
            branch_tokens: raw.branch_tokens.into_iter().collect(),
        }
    }

    pub fn for_language(language: GuestLanguage) -> &'static TokenTable {
        static PYTHON: LazyLock<TokenTable> = LazyLock::new(|| {
            TokenTable::load(GuestLanguage::Python, include_str!("../../assets/metrics/python3.toml"))
        });
        static JS: LazyLock<TokenTable> = LazyLock::new(|| {
            TokenTable::load(GuestLanguage::JavaScript, include_str!("../../assets/metrics/nodejs.toml"))
        });
        match language {
            GuestLanguage::Python => &PYTHON,
            GuestLanguage::JavaScript => &JS,
        }
    }
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    table: &'a TokenTable,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.chars.get(self.pos + i) == Some(&c))
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn bump_n(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }

    fn err(&self, message: impl Into<String>) -> LexError {
        LexError { line: self.line, column: self.col, message: message.into() }
    }

    fn is_ident_start(&self, c: char) -> bool {
        c == '_' || c.is_alphabetic() || self.table.ident_extra.contains(&c)
    }

    fn is_ident_continue(&self, c: char) -> bool {
        c == '_' || c.is_alphanumeric() || self.table.ident_extra.contains(&c)
    }
}

/// Tokenizes guest source. Comments and whitespace are dropped; string
/// literals are kept whole as single operand tokens.
pub fn tokenize(src: &str, language: GuestLanguage) -> Result<Vec<Token>, LexError> {
    let table = TokenTable::for_language(language);
    let mut cur = Cursor { chars: src.chars().collect(), pos: 0, line: 1, col: 1, table };
    let mut tokens: Vec<Token> = Vec::new();
    let mut brackets: Vec<(char, usize, usize)> = Vec::new();

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.starts_with(&table.line_comment) {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if let Some((open, close)) = &table.block_comment {
            if cur.starts_with(open) {
                let (line, col) = (cur.line, cur.col);
                cur.bump_n(open.chars().count());
                loop {
                    if cur.peek().is_none() {
                        return Err(LexError { line, column: col, message: "unterminated block comment".into() });
                    }
                    if cur.starts_with(close) {
                        cur.bump_n(close.chars().count());
                        break;
                    }
                    cur.bump();
                }
                continue;
            }
        }

        let line = cur.line;
        let start = cur.pos;

        if let Some(prefix_len) = string_start(&cur, language) {
            lex_string(&mut cur, prefix_len, language)?;
            push(&mut tokens, TokenKind::Str, &cur, start, line);
            continue;
        }
        if language == GuestLanguage::JavaScript && c == '/' && regex_allowed(tokens.last()) {
            lex_regex(&mut cur)?;
            push(&mut tokens, TokenKind::Str, &cur, start, line);
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
            lex_number(&mut cur);
            push(&mut tokens, TokenKind::Number, &cur, start, line);
            continue;
        }
        if cur.is_ident_start(c) {
            while cur.peek().is_some_and(|c| cur.is_ident_continue(c)) {
                cur.bump();
            }
            let text: String = cur.chars[start..cur.pos].iter().collect();
            let kind = if table.keywords.contains(&text) {
                TokenKind::Keyword
            } else if table.value_keywords.contains(&text) {
                TokenKind::ValueKeyword
            } else {
                TokenKind::Ident
            };
            tokens.push(Token { kind, text, line, end_line: line });
            continue;
        }

        let Some((sym, class)) = table.symbols.iter().find(|(s, _)| cur.starts_with(s)) else {
            return Err(cur.err(format!("unexpected character {c:?}")));
        };
        let (col, sym_line) = (cur.col, cur.line);
        cur.bump_n(sym.chars().count());
        match sym.as_str() {
            "(" | "[" | "{" => brackets.push((sym.chars().next().unwrap(), sym_line, col)),
            ")" | "]" | "}" => {
                let want = match sym.as_str() {
                    ")" => '(',
                    "]" => '[',
                    _ => '{',
                };
                match brackets.pop() {
                    Some((open, _, _)) if open == want => {}
                    _ => {
                        return Err(LexError { line: sym_line, column: col, message: format!("unbalanced {sym:?}") })
                    }
                }
            }
            _ => {}
        }
        // Python line continuation carries no token.
        if sym == "\\" {
            continue;
        }
        let kind = match class {
            SymbolClass::Operator => TokenKind::Operator,
            SymbolClass::Punct => TokenKind::Punct,
            SymbolClass::Value => TokenKind::ValueKeyword,
        };
        tokens.push(Token { kind, text: sym.clone(), line, end_line: line });
    }

    if let Some((open, line, column)) = brackets.pop() {
        return Err(LexError { line, column, message: format!("unclosed {open:?}") });
    }
    Ok(tokens)
}

fn push(tokens: &mut Vec<Token>, kind: TokenKind, cur: &Cursor<'_>, start: usize, line: usize) {
    let text: String = cur.chars[start..cur.pos].iter().collect();
    tokens.push(Token { kind, text, line, end_line: cur.line });
}

/// Returns the length of the string prefix (letters before the quote) when a
/// string literal starts at the cursor.
fn string_start(cur: &Cursor<'_>, language: GuestLanguage) -> Option<usize> {
    let c = cur.peek()?;
    match language {
        GuestLanguage::JavaScript => matches!(c, '"' | '\'' | '`').then_some(0),
        GuestLanguage::Python => {
            if matches!(c, '"' | '\'') {
                return Some(0);
            }
            // String prefixes: r, b, u, f and two-letter combinations.
            let mut n = 0;
            while n < 2 && cur.peek_at(n).is_some_and(|p| "rRbBuUfF".contains(p)) {
                n += 1;
            }
            if n > 0 && matches!(cur.peek_at(n), Some('"' | '\'')) {
                // Make sure the prefix is not the tail of a longer identifier.
                if cur.pos > 0 && cur.is_ident_continue(cur.chars[cur.pos - 1]) {
                    return None;
                }
                Some(n)
            } else {
                None
            }
        }
    }
}

fn lex_string(cur: &mut Cursor<'_>, prefix_len: usize, language: GuestLanguage) -> Result<(), LexError> {
    let (line, column) = (cur.line, cur.col);
    let unterminated = || LexError { line, column, message: "unterminated string literal".into() };
    let raw = language == GuestLanguage::Python
        && cur.chars[cur.pos..cur.pos + prefix_len].iter().any(|c| *c == 'r' || *c == 'R');
    cur.bump_n(prefix_len);
    let quote = cur.bump().ok_or_else(unterminated)?;

    if quote == '`' {
        // Template literal: `${ ... }` substitutions may nest braces and strings.
        let mut depth = 0usize;
        loop {
            let c = cur.bump().ok_or_else(unterminated)?;
            match c {
                '\\' => {
                    cur.bump().ok_or_else(unterminated)?;
                }
                '`' if depth == 0 => return Ok(()),
                '$' if depth == 0 && cur.peek() == Some('{') => {
                    cur.bump();
                    depth = 1;
                }
                '{' if depth > 0 => depth += 1,
                '}' if depth > 0 => depth -= 1,
                '"' | '\'' if depth > 0 => {
                    while let Some(n) = cur.bump() {
                        if n == '\\' {
                            cur.bump();
                        } else if n == c {
                            break;
                        }
                    }
                }
                _ => {}
            }
        }
    }

    let triple = language == GuestLanguage::Python && cur.peek() == Some(quote) && cur.peek_at(1) == Some(quote);
    if triple {
        cur.bump_n(2);
        loop {
            let c = cur.bump().ok_or_else(unterminated)?;
            if c == '\\' {
                cur.bump().ok_or_else(unterminated)?;
            } else if c == quote && cur.peek() == Some(quote) && cur.peek_at(1) == Some(quote) {
                cur.bump_n(2);
                return Ok(());
            }
        }
    }

    loop {
        let c = cur.bump().ok_or_else(unterminated)?;
        match c {
            '\\' => {
                // A backslash-newline continues the literal in both languages.
                let escaped = cur.bump().ok_or_else(unterminated)?;
                if raw && escaped == quote {
                    continue;
                }
            }
            '\n' => return Err(unterminated()),
            c if c == quote => return Ok(()),
            _ => {}
        }
    }
}

fn regex_allowed(prev: Option<&Token>) -> bool {
    match prev {
        None => true,
        Some(t) => match t.kind {
            TokenKind::Ident | TokenKind::Number | TokenKind::Str | TokenKind::ValueKeyword => false,
            TokenKind::Punct => !matches!(t.text.as_str(), ")" | "]" | "}"),
            TokenKind::Keyword | TokenKind::Operator => true,
        },
    }
}

fn lex_regex(cur: &mut Cursor<'_>) -> Result<(), LexError> {
    let (line, column) = (cur.line, cur.col);
    let unterminated = || LexError { line, column, message: "unterminated regular expression".into() };
    cur.bump();
    let mut in_class = false;
    loop {
        let c = cur.bump().ok_or_else(unterminated)?;
        match c {
            '\\' => {
                cur.bump().ok_or_else(unterminated)?;
            }
            '\n' => return Err(unterminated()),
            '[' => in_class = true,
            ']' => in_class = false,
            '/' if !in_class => break,
            _ => {}
        }
    }
    while cur.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
        cur.bump();
    }
    Ok(())
}

fn lex_number(cur: &mut Cursor<'_>) {
    if cur.peek() == Some('0') && cur.peek_at(1).is_some_and(|c| "xXoObB".contains(c)) {
        cur.bump_n(2);
        while cur.peek().is_some_and(|c| c.is_ascii_hexdigit() || c == '_') {
            cur.bump();
        }
    } else {
        while cur.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
            cur.bump();
        }
        if cur.peek() == Some('.') && !cur.peek_at(1).is_some_and(|c| c == '.') {
            cur.bump();
            while cur.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
                cur.bump();
            }
        }
        if cur.peek().is_some_and(|c| c == 'e' || c == 'E')
            && (cur.peek_at(1).is_some_and(|c| c.is_ascii_digit())
                || (cur.peek_at(1).is_some_and(|c| c == '+' || c == '-')
                    && cur.peek_at(2).is_some_and(|c| c.is_ascii_digit())))
        {
            cur.bump_n(2);
            while cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                cur.bump();
            }
        }
    }
    // Imaginary (Python) and BigInt (JS) suffixes.
    if cur.peek().is_some_and(|c| c == 'j' || c == 'J' || c == 'n') {
        cur.bump();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str, lang: GuestLanguage) -> Vec<String> {
        tokenize(src, lang).unwrap().into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn python_strings_and_comments_are_stripped() {
        let toks = texts("x = 'if a or b'  # if while\ny = r\"\\d\"", GuestLanguage::Python);
        assert_eq!(toks, vec!["x", "=", "'if a or b'", "y", "=", "r\"\\d\""]);
    }

    #[test]
    fn python_triple_quoted_spans_lines() {
        let toks = tokenize("s = \"\"\"a\nif\nb\"\"\"\n", GuestLanguage::Python).unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[2].line, 1);
        assert_eq!(toks[2].end_line, 3);
    }

    #[test]
    fn longest_operator_wins() {
        assert_eq!(texts("a **= 2", GuestLanguage::Python), vec!["a", "**=", "2"]);
        assert_eq!(texts("a === b?.c", GuestLanguage::JavaScript), vec!["a", "===", "b", "?.", "c"]);
    }

    #[test]
    fn js_regex_vs_division() {
        let toks = texts("const r = /a\\/b[/]/g; const q = a / b;", GuestLanguage::JavaScript);
        assert!(toks.contains(&"/a\\/b[/]/g".to_string()));
        assert!(toks.contains(&"/".to_string()));
    }

    #[test]
    fn js_template_literal_is_one_token() {
        let toks = texts("const s = `x ${a + `y`} z`;", GuestLanguage::JavaScript);
        assert_eq!(toks, vec!["const", "s", "=", "`x ${a + `y`} z`", ";"]);
    }

    #[test]
    fn unbalanced_and_unterminated_fail() {
        assert!(tokenize("f(a", GuestLanguage::Python).is_err());
        assert!(tokenize("f(a]", GuestLanguage::Python).is_err());
        assert!(tokenize("x = 'abc", GuestLanguage::Python).is_err());
        assert!(tokenize("/* open", GuestLanguage::JavaScript).is_err());
        assert!(tokenize("x = $y", GuestLanguage::Python).is_err());
    }

    #[test]
    fn numbers() {
        assert_eq!(texts("x = 0x1F + 1.5e-3 + .5 + 10n", GuestLanguage::JavaScript), vec![
            "x", "=", "0x1F", "+", "1.5e-3", "+", ".5", "+", "10n"
        ]);
    }
}
