//! Phonemic orthography: grapheme inventory, longest-match tokenization,
//! suprasegmental stripping and transliteration into alternate schemes.
//!
//! The inventory is entirely config-driven. A config is UTF-8 text with one
//! grapheme per line:
//!
//! ```text
//! # symbol<TAB>class<TAB>simplified
//! orthography urmi-demo
//! a	vowel	a
//! š	consonant	sh
//! =	boundary
//! ˈ	suprasegmental
//! \s	separator	\s
//! ```
//!
//! `\s`, `\t` and `\\` are recognised as escapes in the symbol and simplified
//! fields so the word separator can be written explicitly. A missing
//! simplified field means the grapheme renders as itself, except for
//! boundary markers and suprasegmentals which render empty. When no separator
//! is declared a plain space is added.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::ctc::Vocab;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrthographyError {
    #[error("line {line}: duplicate symbol {symbol:?}")]
    DuplicateSymbol { line: usize, symbol: String },
    #[error("line {line}: empty symbol")]
    EmptySymbol { line: usize },
    #[error("line {line}: unknown grapheme class {class:?}")]
    UnknownClass { line: usize, class: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown symbol {codepoint:?} at char {char_offset} (byte {byte_offset})")]
    UnknownSymbol {
        char_offset: usize,
        byte_offset: usize,
        codepoint: char,
    },
    #[error("scheme {scheme:?} has no rendering for {symbol:?}")]
    SchemeNotTotal { scheme: String, symbol: String },
    #[error("line {line}: symbol {symbol:?} is not in the orthography")]
    SchemeUnknownSymbol { line: usize, symbol: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphemeClass {
    Consonant,
    Vowel,
    BoundaryMarker,
    Suprasegmental,
    Separator,
}

impl GraphemeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphemeClass::Consonant => "consonant",
            GraphemeClass::Vowel => "vowel",
            GraphemeClass::BoundaryMarker => "boundary",
            GraphemeClass::Suprasegmental => "suprasegmental",
            GraphemeClass::Separator => "separator",
        }
    }
}

impl FromStr for GraphemeClass {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "consonant" => Ok(GraphemeClass::Consonant),
            "vowel" => Ok(GraphemeClass::Vowel),
            "boundary" | "boundary-marker" => Ok(GraphemeClass::BoundaryMarker),
            "suprasegmental" => Ok(GraphemeClass::Suprasegmental),
            "separator" => Ok(GraphemeClass::Separator),
            _ => Err(()),
        }
    }
}

impl fmt::Display for GraphemeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grapheme {
    pub symbol: String,
    pub class: GraphemeClass,
    /// Rendering in the simplified (keyboard-friendly) scheme.
    pub simplified: String,
}

/// A validated grapheme inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orthography {
    name: String,
    graphemes: Vec<Grapheme>,
    separator: usize,
    index: HashMap<String, usize>,
    max_symbol_chars: usize,
}

pub(crate) fn nfc(text: &str) -> String {
    text.nfc().collect()
}

fn unescape(field: &str, line: usize) -> Result<String, OrthographyError> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('s') => out.push(' '),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            other => {
                return Err(OrthographyError::Syntax {
                    line,
                    message: format!(
                        "bad escape \\{}",
                        other.map(String::from).unwrap_or_default()
                    ),
                })
            }
        }
    }
    Ok(nfc(&out))
}

impl Orthography {
    /// Builds an orthography from graphemes, checking every inventory invariant.
    pub fn new(
        name: impl Into<String>,
        mut graphemes: Vec<Grapheme>,
    ) -> Result<Self, OrthographyError> {
        for g in graphemes.iter_mut() {
            g.symbol = nfc(&g.symbol);
            g.simplified = nfc(&g.simplified);
        }
        let mut index = HashMap::new();
        for (i, g) in graphemes.iter().enumerate() {
            if g.symbol.is_empty() {
                return Err(OrthographyError::EmptySymbol { line: i + 1 });
            }
            if g.class == GraphemeClass::Suprasegmental && !g.simplified.is_empty() {
                return Err(OrthographyError::Syntax {
                    line: i + 1,
                    message: format!(
                        "suprasegmental {:?} must render empty in the simplified scheme",
                        g.symbol
                    ),
                });
            }
            if index.insert(g.symbol.clone(), i).is_some() {
                return Err(OrthographyError::DuplicateSymbol {
                    line: i + 1,
                    symbol: g.symbol.clone(),
                });
            }
        }
        let separators: Vec<usize> = graphemes
            .iter()
            .enumerate()
            .filter(|(_, g)| g.class == GraphemeClass::Separator)
            .map(|(i, _)| i)
            .collect();
        let separator = match separators.as_slice() {
            [] => {
                if index.contains_key(" ") {
                    return Err(OrthographyError::Syntax {
                        line: 0,
                        message: "space is declared but not as the separator".into(),
                    });
                }
                graphemes.push(Grapheme {
                    symbol: " ".into(),
                    class: GraphemeClass::Separator,
                    simplified: " ".into(),
                });
                index.insert(" ".into(), graphemes.len() - 1);
                graphemes.len() - 1
            }
            [one] => *one,
            [_, second, ..] => {
                return Err(OrthographyError::Syntax {
                    line: second + 1,
                    message: "more than one separator declared".into(),
                })
            }
        };
        let max_symbol_chars = graphemes
            .iter()
            .map(|g| g.symbol.chars().count())
            .max()
            .unwrap_or(1);
        Ok(Orthography {
            name: name.into(),
            graphemes,
            separator,
            index,
            max_symbol_chars,
        })
    }

    /// Parses the tab-separated config format; errors carry 1-based line numbers.
    pub fn parse(config_text: &str) -> Result<Self, OrthographyError> {
        let mut name = String::from("unnamed");
        let mut graphemes: Vec<Grapheme> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, raw) in config_text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            if let Some(rest) = raw.strip_prefix("orthography ") {
                name = rest.trim().to_string();
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(OrthographyError::Syntax {
                    line,
                    message: format!(
                        "expected 2 or 3 tab-separated fields, found {}",
                        fields.len()
                    ),
                });
            }
            let symbol = unescape(fields[0], line)?;
            if symbol.is_empty() {
                return Err(OrthographyError::EmptySymbol { line });
            }
            let class: GraphemeClass =
                fields[1]
                    .trim()
                    .parse()
                    .map_err(|_| OrthographyError::UnknownClass {
                        line,
                        class: fields[1].trim().to_string(),
                    })?;
            let simplified = match fields.get(2) {
                Some(s) => unescape(s, line)?,
                None => match class {
                    GraphemeClass::BoundaryMarker | GraphemeClass::Suprasegmental => String::new(),
                    _ => symbol.clone(),
                },
            };
            if class == GraphemeClass::Suprasegmental && !simplified.is_empty() {
                return Err(OrthographyError::Syntax {
                    line,
                    message: format!(
                        "suprasegmental {symbol:?} must render empty in the simplified scheme"
                    ),
                });
            }
            if seen.insert(symbol.clone(), line).is_some() {
                return Err(OrthographyError::DuplicateSymbol { line, symbol });
            }
            if class == GraphemeClass::Separator
                && graphemes
                    .iter()
                    .any(|g| g.class == GraphemeClass::Separator)
            {
                return Err(OrthographyError::Syntax {
                    line,
                    message: "more than one separator declared".into(),
                });
            }
            graphemes.push(Grapheme {
                symbol,
                class,
                simplified,
            });
        }
        Orthography::new(name, graphemes)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graphemes(&self) -> &[Grapheme] {
        &self.graphemes
    }

    pub fn separator(&self) -> &Grapheme {
        &self.graphemes[self.separator]
    }

    pub fn get(&self, symbol: &str) -> Option<&Grapheme> {
        self.index.get(symbol).map(|&i| &self.graphemes[i])
    }

    /// Greedy longest-match decomposition of `text` (after NFC) into graphemes.
    pub fn tokenize(&self, text: &str) -> Result<Vec<&Grapheme>, OrthographyError> {
        let text = nfc(text);
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let longest = self.max_symbol_chars.min(chars.len() - pos);
            let found = (1..=longest).rev().find_map(|len| {
                let start = chars[pos].0;
                let end = chars.get(pos + len).map_or(text.len(), |c| c.0);
                self.index.get(&text[start..end]).map(|&g| (g, len))
            });
            match found {
                Some((g, len)) => {
                    out.push(&self.graphemes[g]);
                    pos += len;
                }
                None => {
                    return Err(OrthographyError::UnknownSymbol {
                        char_offset: pos,
                        byte_offset: chars[pos].0,
                        codepoint: chars[pos].1,
                    })
                }
            }
        }
        Ok(out)
    }

    /// Checks that `text` tokenizes; returns the NFC form on success.
    pub fn validate(&self, text: &str) -> Result<String, OrthographyError> {
        self.tokenize(text)?;
        Ok(nfc(text))
    }

    /// Strips suprasegmental markers, keeping every other grapheme in order.
    pub fn normalize(&self, text: &str) -> Result<String, OrthographyError> {
        Ok(self
            .tokenize(text)?
            .into_iter()
            .filter(|g| g.class != GraphemeClass::Suprasegmental)
            .map(|g| g.symbol.as_str())
            .collect())
    }

    pub fn transliterate(
        &self,
        text: &str,
        scheme: &TransliterationScheme,
    ) -> Result<String, OrthographyError> {
        let graphemes = self.tokenize(text)?;
        let mut out = String::new();
        for g in graphemes {
            let rendering =
                scheme
                    .render(&g.symbol)
                    .ok_or_else(|| OrthographyError::SchemeNotTotal {
                        scheme: scheme.name.clone(),
                        symbol: g.symbol.clone(),
                    })?;
            out.push_str(rendering);
        }
        Ok(out)
    }

    /// CTC alphabet: blank, then the separator, then every non-suprasegmental
    /// grapheme in inventory order.
    pub fn build_vocab(&self) -> Vocab {
        let mut symbols = vec![self.separator().symbol.clone()];
        symbols.extend(
            self.graphemes
                .iter()
                .filter(|g| {
                    !matches!(
                        g.class,
                        GraphemeClass::Suprasegmental | GraphemeClass::Separator
                    )
                })
                .map(|g| g.symbol.clone()),
        );
        Vocab::with_blank(symbols)
            .expect("orthography symbols are unique and never equal the blank")
    }

    /// The scheme that renders every grapheme as itself.
    pub fn phonemic_scheme(&self) -> TransliterationScheme {
        TransliterationScheme {
            name: "phonemic".into(),
            map: self
                .graphemes
                .iter()
                .map(|g| (g.symbol.clone(), g.symbol.clone()))
                .collect(),
        }
    }

    /// The scheme built from each grapheme's `simplified` field.
    pub fn simplified_scheme(&self) -> TransliterationScheme {
        TransliterationScheme {
            name: "simplified".into(),
            map: self
                .graphemes
                .iter()
                .map(|g| (g.symbol.clone(), g.simplified.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransliterationScheme {
    pub name: String,
    map: HashMap<String, String>,
}

impl TransliterationScheme {
    /// Parses a scheme file (`scheme <name>` header then `symbol<TAB>rendering`
    /// lines) and checks it covers every grapheme of `orth`.
    pub fn parse(text: &str, orth: &Orthography) -> Result<Self, OrthographyError> {
        let mut name: Option<String> = None;
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            if name.is_none() {
                let rest = raw
                    .strip_prefix("scheme ")
                    .ok_or_else(|| OrthographyError::Syntax {
                        line,
                        message: "expected `scheme <name>` header".into(),
                    })?;
                name = Some(rest.trim().to_string());
                continue;
            }
            let (symbol, rendering) = match raw.split_once('\t') {
                Some((s, r)) => (unescape(s, line)?, unescape(r, line)?),
                None => (unescape(raw, line)?, String::new()),
            };
            if orth.get(&symbol).is_none() {
                return Err(OrthographyError::SchemeUnknownSymbol { line, symbol });
            }
            if map.insert(symbol.clone(), rendering).is_some() {
                return Err(OrthographyError::DuplicateSymbol { line, symbol });
            }
        }
        let name = name.ok_or(OrthographyError::Syntax {
            line: 0,
            message: "missing `scheme <name>` header".into(),
        })?;
        Self::from_map(name, map, orth)
    }

    pub fn from_map(
        name: impl Into<String>,
        map: HashMap<String, String>,
        orth: &Orthography,
    ) -> Result<Self, OrthographyError> {
        let name = name.into();
        let map: HashMap<String, String> =
            map.into_iter().map(|(k, v)| (nfc(&k), nfc(&v))).collect();
        if let Some(missing) = orth
            .graphemes()
            .iter()
            .find(|g| !map.contains_key(&g.symbol))
        {
            return Err(OrthographyError::SchemeNotTotal {
                scheme: name,
                symbol: missing.symbol.clone(),
            });
        }
        Ok(TransliterationScheme { name, map })
    }

    pub fn render(&self, symbol: &str) -> Option<&str> {
        self.map.get(symbol).map(String::as_str)
    }
}
