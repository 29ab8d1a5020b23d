// Copyright 2026 The Skylite Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Tokenizer. Keywords and identifiers are lowercased.

use super::SqlError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    /// Lowercased word; keywords are words too.
    Word(String),
    Number(String),
    String(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spanned {
    pub token: Token,
    pub offset: usize,
}

pub fn tokenize(sql: &str) -> Result<Vec<Spanned>, SqlError> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let token = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Token::Word(sql[start..i].to_ascii_lowercase())
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut seen_dot = false;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || (bytes[i] == b'.' && !seen_dot)) {
                seen_dot |= bytes[i] == b'.';
                i += 1;
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                return Err(SqlError::syntax(i, "malformed number"));
            }
            Token::Number(sql[start..i].to_string())
        } else if c == b'\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match bytes.get(i) {
                    None => return Err(SqlError::syntax(start, "unterminated string literal")),
                    Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(_) => {
                        let ch = sql[i..].chars().next().expect("in bounds");
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            Token::String(s)
        } else {
            i += 1;
            match c {
                b',' => Token::Comma,
                b'.' => Token::Dot,
                b'(' => Token::LParen,
                b')' => Token::RParen,
                b'*' => Token::Star,
                b'+' => Token::Plus,
                b'-' => Token::Minus,
                b'/' => Token::Slash,
                b';' => Token::Semicolon,
                b'=' => Token::Eq,
                b'<' => match bytes.get(i) {
                    Some(b'=') => {
                        i += 1;
                        Token::LtEq
                    }
                    Some(b'>') => {
                        i += 1;
                        Token::NotEq
                    }
                    _ => Token::Lt,
                },
                b'>' => {
                    if bytes.get(i) == Some(&b'=') {
                        i += 1;
                        Token::GtEq
                    } else {
                        Token::Gt
                    }
                }
                b'!' if bytes.get(i) == Some(&b'=') => {
                    i += 1;
                    Token::NotEq
                }
                _ => {
                    let ch = sql[start..].chars().next().expect("in bounds");
                    return Err(SqlError::syntax(start, format!("unexpected character {ch:?}")));
                }
            }
        };
        out.push(Spanned {
            token,
            offset: start,
        });
    }
    out.push(Spanned {
        token: Token::Eof,
        offset: sql.len(),
    });
    Ok(out)
}
