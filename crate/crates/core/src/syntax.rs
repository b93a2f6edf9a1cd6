//! Line-level lexing shared by the protocol and counter-machine formats.
//!
//! Names may contain brackets, commas and `#` (compilers produce names like
//! `(x1,x1,0)` and `q#inc#3`), so separators only count outside brackets and
//! `#` only opens a comment at the start of a line or after whitespace.

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Token {
    Word(String),
    Arrow,
    Semi,
    Comma,
}

/// A non-blank source line with its 1-based number, comment stripped.
pub(crate) struct Line<'a> {
    pub number: usize,
    pub text: &'a str,
}

pub(crate) fn lines(source: &str) -> impl Iterator<Item = Line<'_>> {
    source.lines().enumerate().filter_map(|(i, raw)| {
        let text = strip_comment(raw).trim();
        (!text.is_empty()).then_some(Line { number: i + 1, text })
    })
}

fn strip_comment(line: &str) -> &str {
    let mut prev_ws = true;
    for (i, ch) in line.char_indices() {
        if ch == '#' && prev_ws {
            return &line[..i];
        }
        prev_ws = ch.is_whitespace();
    }
    line
}

/// Splits `key: rest` at the first top-level colon. Returns `None` when the
/// line has no such colon.
pub(crate) fn split_key(text: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ':' if depth == 0 => return Some((text[..i].trim(), text[i + 1..].trim())),
            ch if ch.is_whitespace() && depth == 0 => return None,
            _ => {}
        }
    }
    None
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut depth = 0i32;
    let mut chars = text.chars().peekable();
    let flush = |word: &mut String, tokens: &mut Vec<Token>| {
        if !word.is_empty() {
            tokens.push(Token::Word(std::mem::take(word)));
        }
    };
    while let Some(ch) = chars.next() {
        if depth > 0 {
            match ch {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth -= 1,
                _ => {}
            }
            word.push(ch);
            continue;
        }
        match ch {
            '(' | '[' | '{' => {
                depth += 1;
                word.push(ch);
            }
            ')' | ']' | '}' => return Err(format!("unbalanced `{ch}`")),
            ';' => {
                flush(&mut word, &mut tokens);
                tokens.push(Token::Semi);
            }
            ',' => {
                flush(&mut word, &mut tokens);
                tokens.push(Token::Comma);
            }
            '-' if chars.peek() == Some(&'>') => {
                chars.next();
                flush(&mut word, &mut tokens);
                tokens.push(Token::Arrow);
            }
            ch if ch.is_whitespace() => flush(&mut word, &mut tokens),
            _ => word.push(ch),
        }
    }
    if depth != 0 {
        return Err("unbalanced brackets".to_string());
    }
    flush(&mut word, &mut tokens);
    Ok(tokens)
}

/// Splits a token list into groups separated by `sep`.
pub(crate) fn split_on(tokens: &[Token], sep: &Token) -> Vec<Vec<Token>> {
    tokens.split(|t| t == sep).map(<[Token]>::to_vec).collect()
}

pub(crate) fn words(tokens: &[Token]) -> Result<Vec<String>, String> {
    tokens
        .iter()
        .map(|t| match t {
            Token::Word(w) => Ok(w.clone()),
            other => Err(format!("unexpected {}", describe(other))),
        })
        .collect()
}

pub(crate) fn describe(t: &Token) -> String {
    match t {
        Token::Word(w) => format!("`{w}`"),
        Token::Arrow => "`->`".to_string(),
        Token::Semi => "`;`".to_string(),
        Token::Comma => "`,`".to_string(),
    }
}

/// Checks that a name survives a round trip through the tokenizer.
pub(crate) fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.contains(':')
        && !name.starts_with('#')
        && matches!(tokenize(name).as_deref(), Ok([Token::Word(w)]) if w == name)
}
