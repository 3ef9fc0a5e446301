//! Code and text preprocessing: identifier splitting, tokenization with
//! language keyword stop-lists, and heuristic extraction of method names and
//! API call sequences from raw snippets.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const JAVA_KEYWORDS: &str = include_str!("../data/java_keywords.txt");
const SQL_KEYWORDS: &str = include_str!("../data/sql_keywords.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Java,
    Sql,
    Generic,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Java => "java",
            Language::Sql => "sql",
            Language::Generic => "generic",
        })
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "java" => Ok(Language::Java),
            "sql" => Ok(Language::Sql),
            "generic" => Ok(Language::Generic),
            other => Err(Error::InvalidArgument(format!("unknown language {other:?}"))),
        }
    }
}

/// Keyword stop-list and punctuation set for one source language.
#[derive(Clone, Debug)]
pub struct LanguageProfile {
    pub language: Language,
    /// Lowercase keywords, removed from token streams.
    pub keywords: HashSet<String>,
    pub punctuation: BTreeSet<char>,
}

fn ascii_punctuation() -> BTreeSet<char> {
    (0u8..128)
        .map(char::from)
        .filter(|c| c.is_ascii_punctuation() && *c != '_')
        .collect()
}

fn parse_keyword_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

impl LanguageProfile {
    pub fn java() -> Self {
        LanguageProfile {
            language: Language::Java,
            keywords: parse_keyword_list(JAVA_KEYWORDS),
            punctuation: ascii_punctuation(),
        }
    }

    pub fn sql() -> Self {
        LanguageProfile {
            language: Language::Sql,
            keywords: parse_keyword_list(SQL_KEYWORDS),
            punctuation: ascii_punctuation(),
        }
    }

    pub fn generic() -> Self {
        LanguageProfile {
            language: Language::Generic,
            keywords: HashSet::new(),
            punctuation: ascii_punctuation(),
        }
    }

    pub fn for_language(language: Language) -> Self {
        match language {
            Language::Java => Self::java(),
            Language::Sql => Self::sql(),
            Language::Generic => Self::generic(),
        }
    }

    /// Replaces the keyword list with one read from a plain-text file
    /// (one keyword per line, `#` comments allowed).
    pub fn with_keyword_file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.keywords = parse_keyword_list(&text);
        Ok(self)
    }

    pub fn is_keyword(&self, token: &str) -> bool {
        self.keywords.contains(token)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Upper,
    Lower,
    Digit,
}

fn class_of(c: char) -> Option<CharClass> {
    if c.is_uppercase() && c.to_lowercase().ne(std::iter::once(c)) {
        Some(CharClass::Upper)
    } else if c.is_numeric() {
        Some(CharClass::Digit)
    } else if c.is_alphanumeric() {
        Some(CharClass::Lower)
    } else {
        None
    }
}

/// Splits an identifier on underscores (and any other non-alphanumeric
/// character), camel-case humps and uppercase-run boundaries.
///
/// Uppercase runs stay together (`HTTPServer` gives `http`, `server`) and
/// digits stay attached to the segment before them.
pub fn split_identifier(identifier: &str) -> Vec<String> {
    let chars: Vec<char> = identifier.chars().collect();
    let mut out = Vec::new();
    let mut current = String::new();

    let flush = |current: &mut String, out: &mut Vec<String>| {
        if !current.is_empty() {
            let lowered: String = current
                .chars()
                .flat_map(char::to_lowercase)
                .filter(|c| c.is_alphanumeric())
                .collect();
            if !lowered.is_empty() {
                out.push(lowered);
            }
            current.clear();
        }
    };

    for (i, &c) in chars.iter().enumerate() {
        let Some(class) = class_of(c) else {
            flush(&mut current, &mut out);
            continue;
        };
        if class == CharClass::Upper && !current.is_empty() {
            let prev = class_of(chars[i - 1]);
            let next = chars.get(i + 1).copied().and_then(class_of);
            let boundary = match prev {
                Some(CharClass::Lower) | Some(CharClass::Digit) => true,
                Some(CharClass::Upper) => next == Some(CharClass::Lower),
                None => false,
            };
            if boundary {
                flush(&mut current, &mut out);
            }
        }
        current.push(c);
    }
    flush(&mut current, &mut out);
    out
}

/// Lowercases a description, turns punctuation into spaces and splits on
/// whitespace.
pub fn tokenize_text(description: &str) -> Vec<String> {
    let normalized: String = description
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    normalized.split_whitespace().map(str::to_owned).collect()
}

/// Blanks out comments and string/char literal contents.
fn strip_literals_and_comments(snippet: &str, language: Language) -> String {
    let chars: Vec<char> = snippet.chars().collect();
    let mut out = String::with_capacity(snippet.len());
    let mut i = 0;
    let n = chars.len();
    let sql = language == Language::Sql;

    while i < n {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if c == '/' && next == Some('*') {
            i += 2;
            while i < n && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i = (i + 2).min(n);
            out.push(' ');
        } else if (!sql && c == '/' && next == Some('/')) || (sql && c == '-' && next == Some('-'))
        {
            while i < n && chars[i] != '\n' {
                i += 1;
            }
            out.push(' ');
        } else if c == '\'' || (c == '"' && !sql) {
            let quote = c;
            i += 1;
            while i < n {
                if !sql && chars[i] == '\\' {
                    i += 2;
                    continue;
                }
                if chars[i] == quote {
                    // SQL doubles the quote to escape it.
                    if sql && chars.get(i + 1) == Some(&quote) {
                        i += 2;
                        continue;
                    }
                    break;
                }
                i += 1;
            }
            i = (i + 1).min(n);
            out.push(' ');
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

/// Tokenizes a code snippet: literals and comments removed, punctuation
/// turned into whitespace, pieces split as identifiers, keywords dropped.
pub fn tokenize_code(snippet: &str, profile: &LanguageProfile) -> Vec<String> {
    let stripped = strip_literals_and_comments(snippet, profile.language);
    let spaced: String = stripped
        .chars()
        .map(|c| {
            if profile.punctuation.contains(&c) || !(c.is_alphanumeric() || c == '_') {
                ' '
            } else {
                c
            }
        })
        .collect();
    spaced
        .split_whitespace()
        .flat_map(split_identifier)
        .filter(|t| !profile.is_keyword(t))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Lexeme {
    Ident(String),
    Number,
    Punct(char),
}

fn lex(snippet: &str, language: Language) -> Vec<Lexeme> {
    let stripped = strip_literals_and_comments(snippet, language);
    let chars: Vec<char> = stripped.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Lexeme::Ident(chars[start..i].iter().collect()));
        } else if c.is_numeric() {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.')
            {
                i += 1;
            }
            out.push(Lexeme::Number);
        } else {
            out.push(Lexeme::Punct(c));
            i += 1;
        }
    }
    out
}

const NON_DECLARATION_PREFIX: &[&str] = &["new", "return", "throw", "else", "case", "assert", "do"];

/// Finds the declared method name: the identifier right before the first
/// parameter list that sits in declaration position (`Type name(`).
pub fn extract_method_name(snippet: &str, profile: &LanguageProfile) -> Result<Vec<String>> {
    if profile.language == Language::Sql {
        return Err(Error::Unsupported(
            "method names are not available for SQL snippets".into(),
        ));
    }
    let lexemes = lex(snippet, profile.language);
    for k in 2..lexemes.len() {
        if lexemes[k] != Lexeme::Punct('(') {
            continue;
        }
        let Lexeme::Ident(name) = &lexemes[k - 1] else {
            continue;
        };
        if profile.is_keyword(&name.to_lowercase()) {
            continue;
        }
        let declaration = match &lexemes[k - 2] {
            Lexeme::Ident(prev) => !NON_DECLARATION_PREFIX.contains(&prev.as_str()),
            Lexeme::Punct('>') | Lexeme::Punct(']') => true,
            _ => false,
        };
        if declaration {
            return Ok(split_identifier(name));
        }
    }
    Err(Error::NotFound("no method declaration found".into()))
}

/// Collects `receiver.method(` call names and `new Type(` constructor names
/// in textual order, each split into subtokens.
pub fn extract_api_sequence(snippet: &str, profile: &LanguageProfile) -> Vec<String> {
    let lexemes = lex(snippet, profile.language);
    let mut out = Vec::new();
    let mut k = 0;
    while k < lexemes.len() {
        match &lexemes[k] {
            Lexeme::Ident(word) if word == "new" => {
                // new a.b.Type<...>(
                let mut j = k + 1;
                let mut last = None;
                while let Some(Lexeme::Ident(part)) = lexemes.get(j) {
                    last = Some(part.clone());
                    if lexemes.get(j + 1) == Some(&Lexeme::Punct('.')) {
                        j += 2;
                    } else {
                        j += 1;
                        break;
                    }
                }
                if lexemes.get(j) == Some(&Lexeme::Punct('<')) {
                    let mut depth = 0usize;
                    while j < lexemes.len() {
                        match lexemes[j] {
                            Lexeme::Punct('<') => depth += 1,
                            Lexeme::Punct('>') => {
                                depth -= 1;
                                if depth == 0 {
                                    j += 1;
                                    break;
                                }
                            }
                            _ => {}
                        }
                        j += 1;
                    }
                }
                match (last, lexemes.get(j)) {
                    (Some(name), Some(Lexeme::Punct('('))) => {
                        out.extend(split_identifier(&name));
                        k = j + 1;
                    }
                    _ => k += 1,
                }
            }
            Lexeme::Ident(name)
                if k > 0
                    && lexemes[k - 1] == Lexeme::Punct('.')
                    && lexemes.get(k + 1) == Some(&Lexeme::Punct('(')) =>
            {
                out.extend(split_identifier(name));
                k += 1;
            }
            _ => k += 1,
        }
    }
    out
}
