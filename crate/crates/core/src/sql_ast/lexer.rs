use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Bare word; keywords are recognized by the parser, not the lexer.
    Word(String),
    /// Identifier written with `"..."`, `` `...` `` or `[...]`.
    QuotedIdent { value: String, quote: char },
    String(String),
    Number(String),
    Blob(String),
    Param(String),
    Symbol(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub offset: usize,
}

impl Token {
    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Word(w) => format!("`{w}`"),
            TokenKind::QuotedIdent { value, .. } => format!("identifier \"{value}\""),
            TokenKind::String(s) => format!("string '{s}'"),
            TokenKind::Number(n) => format!("number {n}"),
            TokenKind::Blob(b) => format!("blob x'{b}'"),
            TokenKind::Param(p) => format!("parameter {p}"),
            TokenKind::Symbol(s) => format!("`{s}`"),
            TokenKind::Eof => "end of input".to_string(),
        }
    }
}

const SYMBOLS: &[&str] = &[
    "->>", "<<", ">>", "<=", ">=", "==", "!=", "<>", "||", "->", "(", ")", ",", ".", ";", "+",
    "-", "*", "/", "%", "<", ">", "=", "&", "|", "~",
];

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
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
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let start = i;
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(ParseError::new(start, "end of block comment `*/`"));
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
            continue;
        }
        let start = i;
        match c {
            b'\'' => {
                let (value, next) = read_quoted(text, i, '\'')?;
                tokens.push(Token { kind: TokenKind::String(value), offset: start });
                i = next;
            }
            b'"' | b'`' => {
                let quote = c as char;
                let (value, next) = read_quoted(text, i, quote)?;
                tokens.push(Token { kind: TokenKind::QuotedIdent { value, quote }, offset: start });
                i = next;
            }
            b'[' => {
                let end = text[i + 1..]
                    .find(']')
                    .ok_or_else(|| ParseError::new(start, "closing `]`"))?;
                let value = text[i + 1..i + 1 + end].to_string();
                tokens.push(Token { kind: TokenKind::QuotedIdent { value, quote: '[' }, offset: start });
                i = i + end + 2;
            }
            b'x' | b'X' if bytes.get(i + 1) == Some(&b'\'') => {
                let (value, next) = read_quoted(text, i + 1, '\'')?;
                if value.len() % 2 != 0 || !value.chars().all(|c| c.is_ascii_hexdigit()) {
                    return Err(ParseError::new(start, "even-length hexadecimal blob literal"));
                }
                tokens.push(Token { kind: TokenKind::Blob(value), offset: start });
                i = next;
            }
            b'0'..=b'9' => {
                i = read_number(bytes, i);
                if i < bytes.len() && is_ident_char(bytes[i]) {
                    return Err(ParseError::new(i, "operator or separator after number"));
                }
                tokens.push(Token { kind: TokenKind::Number(text[start..i].to_string()), offset: start });
            }
            b'.' if bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()) => {
                i = read_number(bytes, i);
                tokens.push(Token { kind: TokenKind::Number(text[start..i].to_string()), offset: start });
            }
            b'?' => {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                tokens.push(Token { kind: TokenKind::Param(text[start..i].to_string()), offset: start });
            }
            b':' | b'@' | b'$' => {
                if bytes.get(i + 1) == Some(&b':') {
                    return Err(ParseError::new(start, "SQLite expression (`::` casts are not SQLite)"));
                }
                i += 1;
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                if i == start + 1 {
                    return Err(ParseError::new(start, "parameter name"));
                }
                tokens.push(Token { kind: TokenKind::Param(text[start..i].to_string()), offset: start });
            }
            _ if is_ident_start(c) => {
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                tokens.push(Token { kind: TokenKind::Word(text[start..i].to_string()), offset: start });
            }
            _ => {
                let rest = &text[i..];
                let sym = SYMBOLS
                    .iter()
                    .find(|s| rest.starts_with(**s))
                    .ok_or_else(|| ParseError::new(start, "a valid SQL token"))?;
                tokens.push(Token { kind: TokenKind::Symbol(sym), offset: start });
                i += sym.len();
            }
        }
    }
    tokens.push(Token { kind: TokenKind::Eof, offset: text.len() });
    Ok(tokens)
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c >= 0x80
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$' || c >= 0x80
}

fn read_number(bytes: &[u8], mut i: usize) -> usize {
    if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x') | Some(b'X')) {
        i += 2;
        while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
            i += 1;
        }
        return i;
    }
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}

/// Reads a quoted run starting at `start` (which holds the opening quote).
/// A doubled quote inside the run stands for one literal quote.
fn read_quoted(text: &str, start: usize, quote: char) -> Result<(String, usize), ParseError> {
    let mut value = String::new();
    let mut chars = text[start + 1..].char_indices().peekable();
    while let Some((idx, ch)) = chars.next() {
        if ch == quote {
            if let Some(&(_, next)) = chars.peek() {
                if next == quote {
                    value.push(quote);
                    chars.next();
                    continue;
                }
            }
            return Ok((value, start + 1 + idx + ch.len_utf8()));
        }
        value.push(ch);
    }
    Err(ParseError::new(start, &format!("closing {quote}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn doubled_quotes_unescape() {
        assert_eq!(
            kinds("'Men''s'"),
            vec![TokenKind::String("Men's".into()), TokenKind::Eof]
        );
    }

    #[test]
    fn quoted_identifiers_keep_style() {
        let k = kinds("`order id` \"x\" [y z]");
        assert_eq!(k[0], TokenKind::QuotedIdent { value: "order id".into(), quote: '`' });
        assert_eq!(k[1], TokenKind::QuotedIdent { value: "x".into(), quote: '"' });
        assert_eq!(k[2], TokenKind::QuotedIdent { value: "y z".into(), quote: '[' });
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(kinds("1 -- c\n/* d */ 2").len(), 3);
    }

    #[test]
    fn numbers() {
        assert_eq!(
            kinds("1.5e3 .5 0x1F"),
            vec![
                TokenKind::Number("1.5e3".into()),
                TokenKind::Number(".5".into()),
                TokenKind::Number("0x1F".into()),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn postgres_cast_is_rejected() {
        let err = tokenize("a::int").unwrap_err();
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn unterminated_string_reports_offset() {
        assert_eq!(tokenize("SELECT 'abc").unwrap_err().offset, 7);
    }
}
