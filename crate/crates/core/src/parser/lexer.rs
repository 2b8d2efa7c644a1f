//! Byte-offset tokenizer for the supported C subset.
//!
//! Comments and whitespace are skipped; every token keeps its half-open byte
//! span into the original text so the parser can anchor nodes exactly.

use super::{ParseError, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Char,
    Str,
    Punct,
    /// A whole preprocessor line, continuation lines included.
    Directive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

const PUNCTS: &[&str] = &[
    "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "*=",
    "/=", "%=", "+=", "-=", "&=", "^=", "|=", "##",
];

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    // true while only whitespace has been seen on the current line
    let mut line_start = true;

    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'\\' && matches!(bytes.get(i + 1), Some(b'\n')) {
            i += 2;
            continue;
        }
        if c == b'\\' && bytes.get(i + 1) == Some(&b'\r') && bytes.get(i + 2) == Some(&b'\n') {
            i += 3;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let end = text[i + 2..]
                .find("*/")
                .ok_or(ParseError::UnbalancedDelimiters { offset: i })?;
            i = i + 2 + end + 2;
            continue;
        }
        if c == b'#' && line_start {
            let start = i;
            while i < bytes.len() {
                if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
                    i += 2;
                    continue;
                }
                if bytes[i] == b'\n' {
                    break;
                }
                i += 1;
            }
            out.push(Token { kind: TokenKind::Directive, span: Span::new(start, i) });
            continue;
        }
        line_start = false;

        if c.is_ascii_alphabetic() || c == b'_' || c == b'$' || c >= 0x80 {
            let start = i;
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$' || bytes[i] >= 0x80)
            {
                i += 1;
            }
            let word = &text[start..i];
            let prefixed_literal = matches!(word, "L" | "u" | "U" | "u8")
                && matches!(bytes.get(i), Some(b'\'') | Some(b'"'));
            if prefixed_literal {
                let quote = bytes[i];
                i = scan_quoted(bytes, i, quote)?;
                let kind = if quote == b'"' { TokenKind::Str } else { TokenKind::Char };
                out.push(Token { kind, span: Span::new(start, i) });
            } else {
                out.push(Token { kind: TokenKind::Ident, span: Span::new(start, i) });
            }
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < bytes.len() {
                let b = bytes[i];
                let exponent_sign = matches!(b, b'+' | b'-') && matches!(bytes[i - 1], b'e' | b'E' | b'p' | b'P');
                let separator = b == b'\'' && bytes.get(i + 1).is_some_and(|n| n.is_ascii_hexdigit());
                if !(exponent_sign || separator || b.is_ascii_alphanumeric() || b == b'_' || b == b'.') {
                    break;
                }
                i += 1;
            }
            out.push(Token { kind: TokenKind::Number, span: Span::new(start, i) });
            continue;
        }
        if c == b'"' || c == b'\'' {
            let start = i;
            i = scan_quoted(bytes, i, c)?;
            let kind = if c == b'"' { TokenKind::Str } else { TokenKind::Char };
            out.push(Token { kind, span: Span::new(start, i) });
            continue;
        }
        let start = i;
        let rest = &text[i..];
        let len = PUNCTS.iter().find(|p| rest.starts_with(**p)).map_or_else(
            || rest.chars().next().map_or(1, char::len_utf8),
            |p| p.len(),
        );
        i += len;
        out.push(Token { kind: TokenKind::Punct, span: Span::new(start, i) });
    }
    Ok(out)
}

fn scan_quoted(bytes: &[u8], open: usize, quote: u8) -> Result<usize, ParseError> {
    let mut i = open + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => break,
            b if b == quote => return Ok(i + 1),
            _ => i += 1,
        }
    }
    Err(ParseError::UnbalancedDelimiters { offset: open })
}

/// Position of the first byte at or after `pos` that is neither whitespace
/// nor part of a comment.
pub fn skip_trivia(text: &str, mut pos: usize) -> usize {
    let bytes = text.as_bytes();
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if text[pos..].starts_with("//") {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else if text[pos..].starts_with("/*") {
            match text[pos + 2..].find("*/") {
                Some(e) => pos = pos + 2 + e + 2,
                None => return bytes.len(),
            }
        } else {
            return pos;
        }
    }
}
