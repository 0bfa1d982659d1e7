//! Tokenizer with exact line/column positions.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    /// Decimal literal; the raw text is kept for exact re-parsing.
    Num(f64, String),
    Str(String),
    Feed,     // ->
    SyncOp,   // |>
    AsyncOp,  // ~>
    Define,   // :=
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Equals,   // =
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Gt,
    Le,
    Ge,
    EqEq,
    Ne,
    Newline,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Int(i) => format!("integer `{i}`"),
            TokenKind::Num(_, raw) => format!("number `{raw}`"),
            TokenKind::Str(_) => "string".to_string(),
            TokenKind::Feed => "`->`".to_string(),
            TokenKind::SyncOp => "`|>`".to_string(),
            TokenKind::AsyncOp => "`~>`".to_string(),
            TokenKind::Define => "`:=`".to_string(),
            TokenKind::LParen => "`(`".to_string(),
            TokenKind::RParen => "`)`".to_string(),
            TokenKind::LBrace => "`{`".to_string(),
            TokenKind::RBrace => "`}`".to_string(),
            TokenKind::Comma => "`,`".to_string(),
            TokenKind::Equals => "`=`".to_string(),
            TokenKind::Plus => "`+`".to_string(),
            TokenKind::Minus => "`-`".to_string(),
            TokenKind::Star => "`*`".to_string(),
            TokenKind::Slash => "`/`".to_string(),
            TokenKind::Lt => "`<`".to_string(),
            TokenKind::Gt => "`>`".to_string(),
            TokenKind::Le => "`<=`".to_string(),
            TokenKind::Ge => "`>=`".to_string(),
            TokenKind::EqEq => "`==`".to_string(),
            TokenKind::Ne => "`!=`".to_string(),
            TokenKind::Newline => "end of line".to_string(),
            TokenKind::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! push {
        ($kind:expr, $pos:expr) => {
            tokens.push(Token { kind: $kind, pos: $pos })
        };
    }

    while i < bytes.len() {
        let pos = Pos { line, col };
        let b = bytes[i];
        match b {
            b'\n' => {
                // collapse runs of newlines into one separator
                if !matches!(tokens.last().map(|t| &t.kind), Some(TokenKind::Newline) | None) {
                    push!(TokenKind::Newline, pos);
                }
                i += 1;
                line += 1;
                col = 1;
            }
            b' ' | b'\t' | b'\r' => {
                i += 1;
                col += 1;
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                    col += 1;
                }
            }
            b'"' => {
                let start = i;
                i += 1;
                col += 1;
                let mut value = String::new();
                let mut closed = false;
                while i < bytes.len() {
                    let c = bytes[i];
                    if c == b'\n' {
                        break;
                    }
                    i += 1;
                    col += 1;
                    if c == b'"' {
                        closed = true;
                        break;
                    }
                    if c == b'\\' && i < bytes.len() {
                        let esc = bytes[i];
                        i += 1;
                        col += 1;
                        match esc {
                            b'"' => value.push('"'),
                            b'\\' => value.push('\\'),
                            b'n' => value.push('\n'),
                            b't' => value.push('\t'),
                            b'r' => value.push('\r'),
                            other => {
                                return Err(LexError {
                                    pos,
                                    message: format!(
                                        "unknown escape `\\{}` in string",
                                        other as char
                                    ),
                                })
                            }
                        }
                    } else {
                        // multi-byte chars advance by full width
                        let ch_len = utf8_len(c);
                        value.push_str(std::str::from_utf8(&bytes[i - 1..i - 1 + ch_len]).map_err(
                            |_| LexError {
                                pos,
                                message: "invalid utf-8 in string".to_string(),
                            },
                        )?);
                        i += ch_len - 1;
                    }
                }
                if !closed {
                    return Err(LexError {
                        pos,
                        message: format!("unterminated string starting at byte {start}"),
                    });
                }
                push!(TokenKind::Str(value), pos);
            }
            b'-' if i + 1 < bytes.len() && bytes[i + 1] == b'>' => {
                push!(TokenKind::Feed, pos);
                i += 2;
                col += 2;
            }
            b'|' if i + 1 < bytes.len() && bytes[i + 1] == b'>' => {
                push!(TokenKind::SyncOp, pos);
                i += 2;
                col += 2;
            }
            b'~' if i + 1 < bytes.len() && bytes[i + 1] == b'>' => {
                push!(TokenKind::AsyncOp, pos);
                i += 2;
                col += 2;
            }
            b':' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => {
                push!(TokenKind::Define, pos);
                i += 2;
                col += 2;
            }
            b'<' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => {
                push!(TokenKind::Le, pos);
                i += 2;
                col += 2;
            }
            b'>' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => {
                push!(TokenKind::Ge, pos);
                i += 2;
                col += 2;
            }
            b'=' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => {
                push!(TokenKind::EqEq, pos);
                i += 2;
                col += 2;
            }
            b'!' if i + 1 < bytes.len() && bytes[i + 1] == b'=' => {
                push!(TokenKind::Ne, pos);
                i += 2;
                col += 2;
            }
            b'(' => {
                push!(TokenKind::LParen, pos);
                i += 1;
                col += 1;
            }
            b')' => {
                push!(TokenKind::RParen, pos);
                i += 1;
                col += 1;
            }
            b'{' => {
                push!(TokenKind::LBrace, pos);
                i += 1;
                col += 1;
            }
            b'}' => {
                push!(TokenKind::RBrace, pos);
                i += 1;
                col += 1;
            }
            b',' => {
                push!(TokenKind::Comma, pos);
                i += 1;
                col += 1;
            }
            b'=' => {
                push!(TokenKind::Equals, pos);
                i += 1;
                col += 1;
            }
            b'+' => {
                push!(TokenKind::Plus, pos);
                i += 1;
                col += 1;
            }
            b'-' => {
                push!(TokenKind::Minus, pos);
                i += 1;
                col += 1;
            }
            b'*' => {
                push!(TokenKind::Star, pos);
                i += 1;
                col += 1;
            }
            b'/' => {
                push!(TokenKind::Slash, pos);
                i += 1;
                col += 1;
            }
            b'<' => {
                push!(TokenKind::Lt, pos);
                i += 1;
                col += 1;
            }
            b'>' => {
                push!(TokenKind::Gt, pos);
                i += 1;
                col += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                let mut has_dot = false;
                let mut has_exp = false;
                while i < bytes.len() {
                    match bytes[i] {
                        b'0'..=b'9' => i += 1,
                        b'.' if !has_dot && !has_exp => {
                            has_dot = true;
                            i += 1;
                        }
                        b'e' | b'E' if !has_exp => {
                            has_exp = true;
                            i += 1;
                            if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                                i += 1;
                            }
                        }
                        _ => break,
                    }
                }
                let raw = &text[start..i];
                col += (i - start) as u32;
                if has_dot || has_exp {
                    let value = raw.parse::<f64>().map_err(|_| LexError {
                        pos,
                        message: format!("malformed number `{raw}`"),
                    })?;
                    push!(TokenKind::Num(value, raw.to_string()), pos);
                } else {
                    let value = raw.parse::<i64>().map_err(|_| LexError {
                        pos,
                        message: format!("integer out of range `{raw}`"),
                    })?;
                    push!(TokenKind::Int(value), pos);
                }
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let raw = &text[start..i];
                col += (i - start) as u32;
                push!(TokenKind::Ident(raw.to_string()), pos);
            }
            other => {
                return Err(LexError {
                    pos,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        }
    }
    // strip a trailing newline separator
    if matches!(tokens.last().map(|t| &t.kind), Some(TokenKind::Newline)) {
        tokens.pop();
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        pos: Pos { line, col },
    });
    Ok(tokens)
}

fn utf8_len(first: u8) -> usize {
    match first {
        0x00..=0x7f => 1,
        0xc0..=0xdf => 2,
        0xe0..=0xef => 3,
        _ => 4,
    }
}
