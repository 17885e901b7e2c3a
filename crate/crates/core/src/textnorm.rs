//! Tokenization and normalization of dictated text.
//!
//! Dictation output is lowercased, contractions are expanded to full words,
//! digits and symbols are removed, and chat short forms ("gn") are expanded.
//! Punctuation never becomes a token, but the punctuation that followed a
//! word is kept on the token so that written corpora can be turned into
//! boundary labels.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::{Error, Result};

const DEFAULT_CONTRACTIONS: &str = include_str!("../data/contractions.tsv");
const DEFAULT_SHORTFORMS: &str = include_str!("../data/shortforms.tsv");

/// A single normalized word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Character offsets `[start, end)` into [`TokenSeq::original`].
    pub source_span: (usize, usize),
    /// Punctuation characters that directly followed the word.
    pub trailing: String,
}

impl Token {
    /// True when the word was followed by `.`, `?` or `!`.
    pub fn ends_sentence(&self) -> bool {
        self.trailing.chars().any(|c| matches!(c, '.' | '?' | '!'))
    }
}

/// Ordered tokens together with the text they came from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
    pub original: String,
}

impl TokenSeq {
    /// Builds a sequence from already split words, as if they had been
    /// typed separated by single spaces.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        let original = words
            .iter()
            .map(|w| w.as_ref())
            .collect::<Vec<_>>()
            .join(" ");
        tokenize(&original)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surfaces().join(" "))
    }
}

/// Whole-token replacement table (contractions or chat short forms).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExpansionTable {
    entries: BTreeMap<String, Vec<String>>,
}

impl ExpansionTable {
    /// Parses `short<TAB>expansion words` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                what: "expansion table",
                line: n + 1,
                msg: msg.to_string(),
            };
            let (key, expansion) = line.split_once('\t').ok_or_else(|| err("missing tab"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err("empty key"));
            }
            if key.chars().any(char::is_uppercase) {
                return Err(err("key must be lowercase"));
            }
            let words: Vec<String> = expansion
                .split_whitespace()
                .map(str::to_lowercase)
                .collect();
            if words.is_empty() {
                return Err(err("empty expansion"));
            }
            if words.len() == 1 && words[0] == key {
                return Err(err("key maps to itself"));
            }
            if entries.insert(key.to_string(), words).is_some() {
                return Err(err("duplicate key"));
            }
        }
        let table = Self { entries };
        // A produced word that is itself a key would break the fixed point.
        for words in table.entries.values() {
            if let Some(w) = words
                .iter()
                .find(|w| table.entries.contains_key(w.as_str()))
            {
                return Err(Error::Parse {
                    what: "expansion table",
                    line: 0,
                    msg: format!("expansion word `{w}` is also a key"),
                });
            }
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn default_contractions() -> Self {
        Self::parse(DEFAULT_CONTRACTIONS).expect("bundled contraction table is valid")
    }

    pub fn default_shortforms() -> Self {
        Self::parse(DEFAULT_SHORTFORMS).expect("bundled short-form table is valid")
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && c != '\''
}

/// Splits on whitespace and lowercases. Leading and trailing punctuation is
/// trimmed from every chunk; trailing punctuation is recorded on the token.
pub fn tokenize(text: &str) -> TokenSeq {
    let chars: Vec<char> = text
        .chars()
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .collect();
    let mut tokens: Vec<Token> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let chunk = &chars[start..i];
        let lead = chunk.iter().take_while(|&&c| is_punct(c)).count();
        if lead == chunk.len() {
            // Bare punctuation attaches to the previous word.
            if let Some(prev) = tokens.last_mut() {
                prev.trailing.extend(chunk.iter());
            }
            continue;
        }
        let trail = chunk.iter().rev().take_while(|&&c| is_punct(c)).count();
        let core = &chunk[lead..chunk.len() - trail];
        tokens.push(Token {
            surface: core.iter().collect::<String>().to_lowercase(),
            source_span: (start + lead, start + chunk.len() - trail),
            trailing: chunk[chunk.len() - trail..].iter().collect(),
        });
    }
    TokenSeq {
        tokens,
        original: text.to_string(),
    }
}

/// Replaces every whole-token match with its expansion in a single
/// left-to-right pass. Produced words keep the source span of the word they
/// replace; trailing punctuation moves to the last produced word.
fn expand(seq: &TokenSeq, table: &ExpansionTable) -> TokenSeq {
    let mut tokens = Vec::with_capacity(seq.tokens.len());
    for tok in &seq.tokens {
        match table.get(&tok.surface) {
            Some(words) => {
                let last = words.len() - 1;
                tokens.extend(words.iter().enumerate().map(|(k, w)| Token {
                    surface: w.clone(),
                    source_span: tok.source_span,
                    trailing: if k == last {
                        tok.trailing.clone()
                    } else {
                        String::new()
                    },
                }));
            }
            None => tokens.push(tok.clone()),
        }
    }
    TokenSeq {
        tokens,
        original: seq.original.clone(),
    }
}

/// Expands contractions, then strips digits and symbols. Tokens left empty
/// are dropped and hand their trailing punctuation to the previous token.
pub fn normalize(seq: &TokenSeq, contractions: &ExpansionTable) -> TokenSeq {
    strip(expand(seq, contractions))
}

fn strip(expanded: TokenSeq) -> TokenSeq {
    let mut tokens: Vec<Token> = Vec::with_capacity(expanded.tokens.len());
    for tok in expanded.tokens {
        let surface: String = tok
            .surface
            .chars()
            .flat_map(char::to_lowercase)
            .filter(|c| c.is_alphabetic())
            .collect();
        if surface.is_empty() {
            if let Some(prev) = tokens.last_mut() {
                prev.trailing.push_str(&tok.trailing);
            }
            continue;
        }
        tokens.push(Token { surface, ..tok });
    }
    TokenSeq {
        tokens,
        original: expanded.original,
    }
}

/// Expands chat short forms such as `gn` → `good night`.
pub fn expand_shortforms(seq: &TokenSeq, table: &ExpansionTable) -> TokenSeq {
    expand(seq, table)
}

const MAX_EXPANSION_ROUNDS: usize = 8;

/// The full text-preparation chain used for both training and inference:
/// tokenize, short-form expansion, then [`normalize`].
#[derive(Clone, Debug)]
pub struct Normalizer {
    pub contractions: ExpansionTable,
    pub shortforms: ExpansionTable,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            contractions: ExpansionTable::default_contractions(),
            shortforms: ExpansionTable::default_shortforms(),
        }
    }
}

impl Normalizer {
    pub fn new(contractions: ExpansionTable, shortforms: ExpansionTable) -> Self {
        Self {
            contractions,
            shortforms,
        }
    }

    /// Short forms run before symbol stripping so that `b4` or `2day` are
    /// still recognisable. Stripping can expose new keys (`u2` → `u`), so
    /// both tables are re-applied until nothing changes.
    pub fn apply(&self, text: &str) -> TokenSeq {
        let seq = expand_shortforms(&tokenize(text), &self.shortforms);
        let mut seq = normalize(&seq, &self.contractions);
        for _ in 0..MAX_EXPANSION_ROUNDS {
            let next = strip(expand(&expand(&seq, &self.contractions), &self.shortforms));
            if next == seq {
                break;
            }
            seq = next;
        }
        seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(seq: &TokenSeq) -> Vec<&str> {
        seq.surfaces()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(words(&tokenize("Hello world")), ["hello", "world"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            words(&tokenize("I saw one amazing dress today")),
            ["i", "saw", "one", "amazing", "dress", "today"]
        );
    }

    #[test]
    fn tokenize_keeps_punctuation_as_attribute() {
        let seq = tokenize("It rained. We stayed home !");
        assert_eq!(words(&seq), ["it", "rained", "we", "stayed", "home"]);
        assert!(seq.tokens[1].ends_sentence());
        assert!(!seq.tokens[0].ends_sentence());
        assert!(seq.tokens[4].ends_sentence());
        assert_eq!(seq.tokens[1].source_span, (3, 9));
    }

    #[test]
    fn tokenize_handles_typographic_apostrophe() {
        assert_eq!(words(&tokenize("It\u{2019}s fine")), ["it's", "fine"]);
    }

    #[test]
    fn normalize_examples() {
        let c = ExpansionTable::default_contractions();
        assert_eq!(
            words(&normalize(&TokenSeq::from_words(&["it's", "fine"]), &c)),
            ["it", "is", "fine"]
        );
        assert_eq!(
            words(&normalize(&TokenSeq::from_words(&["costs", "$5"]), &c)),
            ["costs"]
        );
        assert_eq!(
            words(&normalize(&TokenSeq::from_words(&["hello"]), &c)),
            ["hello"]
        );
        assert_eq!(
            words(&normalize(&TokenSeq::from_words(&["won't", "we're"]), &c)),
            ["will", "not", "we", "are"]
        );
    }

    #[test]
    fn dropped_token_passes_punctuation_back() {
        let c = ExpansionTable::default_contractions();
        let seq = normalize(&tokenize("it costs $5. ok"), &c);
        assert_eq!(words(&seq), ["it", "costs", "ok"]);
        assert!(seq.tokens[1].ends_sentence());
    }

    #[test]
    fn shortform_examples() {
        let t = ExpansionTable::default_shortforms();
        let run = |w: &[&str]| {
            expand_shortforms(&TokenSeq::from_words(w), &t)
                .surfaces()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(&["gn"]), ["good", "night"]);
        assert_eq!(run(&["good", "night"]), ["good", "night"]);
        assert_eq!(run(&["gn", "gn"]), ["good", "night", "good", "night"]);
    }

    #[test]
    fn table_rejects_bad_lines() {
        assert!(ExpansionTable::parse("gn\n").is_err());
        assert!(ExpansionTable::parse("GN\tgood night\n").is_err());
        assert!(ExpansionTable::parse("gn\t \n").is_err());
        assert!(ExpansionTable::parse("ok\tok\n").is_err());
        assert!(ExpansionTable::parse("a\tb\nb\tc\n").is_err());
        let t = ExpansionTable::parse("# comment\n\ngn\tgood night # trailing\n").unwrap();
        assert_eq!(t.get("gn").unwrap(), ["good", "night"]);
    }

    #[test]
    fn normalizer_chain() {
        let n = Normalizer::default();
        assert_eq!(
            words(&n.apply("GN, see u 2day!")),
            ["good", "night", "see", "you", "today"]
        );
        assert!(n.apply("").is_empty());
    }
}
