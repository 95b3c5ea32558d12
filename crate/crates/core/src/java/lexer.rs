use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Identifiers and keywords.
    Word,
    /// Numeric, string, text-block and character literals.
    Literal,
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    /// Byte offset of the first character.
    pub start: usize,
    pub line: u32,
    pub col: u32,
}

impl Token<'_> {
    pub fn end(&self) -> usize {
        self.start + self.text.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn starts_with(&self, s: &str) -> bool {
        self.src[self.pos..].starts_with(s)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error(&self, line: u32, col: u32, message: impl Into<String>) -> LexError {
        LexError {
            line,
            col,
            message: message.into(),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_part(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

const MULTI_PUNCT: [&str; 3] = ["...", "::", "->"];

/// Splits Java source into tokens, dropping whitespace and comments.
pub fn tokenize(src: &str) -> Result<Vec<Token<'_>>, LexError> {
    let mut cur = Cursor {
        src,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        let (start, line, col) = (cur.pos, cur.line, cur.col);
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.starts_with("//") {
            while cur.peek().is_some_and(|c| c != '\n') {
                cur.bump();
            }
            continue;
        }
        if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            loop {
                if cur.starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(cur.error(line, col, "unterminated comment"));
                }
            }
            continue;
        }
        let kind = if cur.starts_with("\"\"\"") {
            for _ in 0..3 {
                cur.bump();
            }
            loop {
                if cur.starts_with("\"\"\"") {
                    for _ in 0..3 {
                        cur.bump();
                    }
                    break;
                }
                match cur.bump() {
                    Some('\\') => {
                        cur.bump();
                    }
                    Some(_) => {}
                    None => return Err(cur.error(line, col, "unterminated text block")),
                }
            }
            TokenKind::Literal
        } else if c == '"' || c == '\'' {
            cur.bump();
            loop {
                match cur.bump() {
                    Some('\\') => {
                        cur.bump();
                    }
                    Some(q) if q == c => break,
                    Some('\n') | None => {
                        let what = if c == '"' { "string" } else { "character" };
                        return Err(cur.error(line, col, format!("unterminated {what} literal")));
                    }
                    Some(_) => {}
                }
            }
            TokenKind::Literal
        } else if c.is_ascii_digit()
            || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit()))
        {
            let hex = cur.starts_with("0x") || cur.starts_with("0X");
            while let Some(d) = cur.peek() {
                if d.is_ascii_alphanumeric() || d == '_' || d == '.' {
                    cur.bump();
                    let exp = if hex {
                        matches!(d, 'p' | 'P')
                    } else {
                        matches!(d, 'e' | 'E')
                    };
                    if exp && matches!(cur.peek(), Some('+' | '-')) {
                        cur.bump();
                    }
                } else {
                    break;
                }
            }
            TokenKind::Literal
        } else if is_ident_start(c) {
            while cur.peek().is_some_and(is_ident_part) {
                cur.bump();
            }
            TokenKind::Word
        } else if let Some(p) = MULTI_PUNCT.iter().find(|p| cur.starts_with(p)) {
            for _ in 0..p.len() {
                cur.bump();
            }
            TokenKind::Punct
        } else if "{}()[];,.@=<>!~?:+-*/&|^%".contains(c) {
            cur.bump();
            TokenKind::Punct
        } else {
            return Err(cur.error(line, col, format!("unexpected character {c:?}")));
        };
        out.push(Token {
            kind,
            text: &src[start..cur.pos],
            start,
            line,
            col,
        });
    }
    Ok(out)
}
