//! Tokenizer for the array language.
//!
//! Comments start with `!` and run to end of line. The sentinels `!$omp` and
//! `!$ad` open directive lines when OpenMP handling is enabled; otherwise
//! they are comments like any other.

use crate::error::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    LParen,
    RParen,
    Comma,
    Colon,
    DColon,
    Assign,
    PlusAssign,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    And,
    Or,
    Not,
    Newline,
    /// `!$omp` at the start of a directive line.
    Omp,
    /// `!$ad` at the start of a directive line.
    Ad,
    Eof,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn tokenize(src: &str, omp_enabled: bool) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut line_start = 0;

    while i < chars.len() {
        let c = chars[i];
        let col = i - line_start + 1;
        let push = |out: &mut Vec<Token>, tok: Tok| out.push(Token { tok, line, col });

        if c == '\n' {
            push(&mut out, Tok::Newline);
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '!' {
            let rest: String = chars[i..].iter().take_while(|&&c| c != '\n').collect();
            if omp_enabled {
                if let Some(tok) = sentinel(&rest, "!$omp", Tok::Omp) {
                    push(&mut out, tok);
                    i += 5;
                    continue;
                }
                if let Some(tok) = sentinel(&rest, "!$ad", Tok::Ad) {
                    push(&mut out, tok);
                    i += 4;
                    continue;
                }
            }
            i += rest.chars().count();
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let (tok, len) = number(&chars[i..]).map_err(|m| ParseError::syntax(line, col, m))?;
            push(&mut out, tok);
            i += len;
            continue;
        }
        if c == '.' {
            let word: String = chars[i + 1..]
                .iter()
                .take_while(|c| c.is_ascii_alphabetic())
                .collect();
            let closed = chars.get(i + 1 + word.len()) == Some(&'.');
            let tok = match (word.as_str(), closed) {
                ("and", true) => Tok::And,
                ("or", true) => Tok::Or,
                ("not", true) => Tok::Not,
                _ => return Err(ParseError::syntax(line, col, "unknown dotted operator")),
            };
            push(&mut out, tok);
            i += word.len() + 2;
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            (':', Some(':')) => (Tok::DColon, 2),
            (':', _) => (Tok::Colon, 1),
            ('+', Some('=')) => (Tok::PlusAssign, 2),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', Some('=')) => (Tok::Ne, 2),
            ('/', _) => (Tok::Slash, 1),
            ('<', Some('=')) => (Tok::Le, 2),
            ('<', _) => (Tok::Lt, 1),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('>', _) => (Tok::Gt, 1),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('=', _) => (Tok::Assign, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            _ => {
                return Err(ParseError::syntax(
                    line,
                    col,
                    format!("unexpected character `{c}`"),
                ))
            }
        };
        push(&mut out, tok);
        i += len;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col: i - line_start + 1,
    });
    Ok(out)
}

fn sentinel(rest: &str, prefix: &str, tok: Tok) -> Option<Tok> {
    let tail = rest.strip_prefix(prefix)?;
    match tail.chars().next() {
        None => Some(tok),
        Some(c) if c.is_whitespace() => Some(tok),
        _ => None,
    }
}

/// Lexes an integer or real literal; returns the token and its length.
fn number(chars: &[char]) -> Result<(Tok, usize), String> {
    let mut i = 0;
    let mut is_real = false;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    // A dot starts a fraction unless it opens a dotted operator such as `.and.`.
    if i < chars.len()
        && chars[i] == '.'
        && !chars.get(i + 1).is_some_and(|c| c.is_ascii_alphabetic())
    {
        is_real = true;
        i += 1;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
        let mut j = i + 1;
        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
            j += 1;
        }
        if j < chars.len() && chars[j].is_ascii_digit() {
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            is_real = true;
            i = j;
        }
    }
    let text: String = chars[..i].iter().collect();
    if is_real {
        text.parse::<f64>()
            .map(|v| (Tok::Real(v), i))
            .map_err(|e| format!("bad real literal `{text}`: {e}"))
    } else {
        text.parse::<i64>()
            .map(|v| (Tok::Int(v), i))
            .map_err(|e| format!("bad integer literal `{text}`: {e}"))
    }
}
