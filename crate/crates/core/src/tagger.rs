//! Closed-class trigger tagging.
//!
//! Only five Penn Treebank tags matter for splitting a sentence into
//! sub-parts: CC, IN, WP, WP$ and WDT. All five are closed word classes, so a
//! word list with a couple of ordered disambiguation rules stands in for a
//! statistical tagger.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::textnorm::TokenSeq;
use crate::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../data/triggers.tsv");

/// Words that are never "noun-like" when deciding how to read `that`.
const FUNCTION_WORDS: &[&str] = &[
    "a", "about", "above", "across", "against", "all", "am", "an", "any", "are", "as", "at", "be",
    "been", "being", "between", "both", "by", "can", "could", "did", "do", "does", "down",
    "during", "each", "every", "few", "for", "from", "had", "has", "have", "he", "her", "here",
    "him", "his", "how", "i", "in", "into", "is", "it", "its", "just", "many", "may", "me",
    "might", "more", "most", "much", "must", "my", "no", "not", "of", "off", "on", "only", "our",
    "out", "over", "said", "say", "says", "shall", "she", "should", "so", "some", "such", "than",
    "the", "their", "them", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "up", "us", "very", "was", "we", "were", "when", "where", "why", "will",
    "with", "would", "you", "your",
];

/// Trigger kind of a single token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TriggerTag {
    Cc,
    In,
    Wp,
    Wps,
    Wdt,
    None,
}

impl TriggerTag {
    pub fn is_trigger(self) -> bool {
        self != TriggerTag::None
    }
}

impl FromStr for TriggerTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "CC" => Ok(Self::Cc),
            "IN" => Ok(Self::In),
            "WP" => Ok(Self::Wp),
            "WPS" | "WP$" => Ok(Self::Wps),
            "WDT" => Ok(Self::Wdt),
            "NONE" => Ok(Self::None),
            other => Err(format!("unknown trigger kind `{other}`")),
        }
    }
}

impl fmt::Display for TriggerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cc => "CC",
            Self::In => "IN",
            Self::Wp => "WP",
            Self::Wps => "WPS",
            Self::Wdt => "WDT",
            Self::None => "NONE",
        })
    }
}

/// Word → possible trigger kinds, plus the function-word list used by the
/// `that` rule.
#[derive(Clone, Debug)]
pub struct TriggerLexicon {
    word_to_kinds: BTreeMap<String, BTreeSet<TriggerTag>>,
    function_words: BTreeSet<String>,
}

impl Default for TriggerLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled trigger lexicon is valid")
    }
}

impl TriggerLexicon {
    /// Parses `word<TAB>KIND[,KIND...]` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut word_to_kinds = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                what: "trigger lexicon",
                line: n + 1,
                msg,
            };
            let (word, kinds) = line
                .split_once('\t')
                .ok_or_else(|| err("missing tab".into()))?;
            let kinds = kinds
                .split(',')
                .map(str::parse::<TriggerTag>)
                .collect::<Result<BTreeSet<_>, _>>()
                .map_err(err)?;
            if kinds.is_empty() || kinds.contains(&TriggerTag::None) {
                return Err(err("kind set must be non-empty and exclude NONE".into()));
            }
            word_to_kinds.insert(word.trim().to_lowercase(), kinds);
        }
        Ok(Self {
            word_to_kinds,
            function_words: FUNCTION_WORDS.iter().map(|w| w.to_string()).collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn kinds(&self, word: &str) -> Option<&BTreeSet<TriggerTag>> {
        self.word_to_kinds.get(word)
    }

    fn is_noun_like(&self, word: &str) -> bool {
        !self.word_to_kinds.contains_key(word) && !self.function_words.contains(word)
    }

    /// Resolves the tag of `words[i]`.
    fn resolve(&self, words: &[&str], i: usize) -> TriggerTag {
        let word = words[i];
        let Some(kinds) = self.word_to_kinds.get(word) else {
            return TriggerTag::None;
        };
        match word {
            "that" => {
                if i > 0 && self.is_noun_like(words[i - 1]) {
                    TriggerTag::Wdt
                } else {
                    TriggerTag::In
                }
            }
            "which" => TriggerTag::Wdt,
            _ if kinds.len() == 1 => *kinds.iter().next().unwrap(),
            _ if kinds.contains(&TriggerTag::In) => TriggerTag::In,
            _ => *kinds.iter().next().unwrap(),
        }
    }
}

/// Sorted, duplicate-free after-token positions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct BoundarySet {
    positions: BTreeSet<usize>,
}

impl BoundarySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set, rejecting positions outside `0..len`.
    pub fn from_positions(positions: impl IntoIterator<Item = usize>, len: usize) -> Result<Self> {
        let mut set = Self::new();
        for p in positions {
            if p >= len {
                return Err(Error::InvalidConfig(format!(
                    "boundary position {p} outside sequence of length {len}"
                )));
            }
            set.positions.insert(p);
        }
        Ok(set)
    }

    pub fn insert(&mut self, position: usize) -> bool {
        self.positions.insert(position)
    }

    pub fn contains(&self, position: usize) -> bool {
        self.positions.contains(&position)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.positions.iter().copied()
    }

    pub fn union(&self, other: &BoundarySet) -> BoundarySet {
        BoundarySet {
            positions: self.positions.union(&other.positions).copied().collect(),
        }
    }
}

impl FromIterator<usize> for BoundarySet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self {
            positions: iter.into_iter().collect(),
        }
    }
}

/// One tag per token; words outside the lexicon are `None`.
pub fn tag(seq: &TokenSeq, lex: &TriggerLexicon) -> Vec<TriggerTag> {
    let words = seq.surfaces();
    (0..words.len()).map(|i| lex.resolve(&words, i)).collect()
}

/// A trigger at index `i > 0` licenses a boundary after token `i - 1`.
pub fn mark_subpart_boundaries(seq: &TokenSeq, tags: &[TriggerTag]) -> Result<BoundarySet> {
    if tags.len() != seq.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} tags for {} tokens",
            tags.len(),
            seq.len()
        )));
    }
    Ok(tags
        .iter()
        .enumerate()
        .filter(|&(i, t)| i > 0 && t.is_trigger())
        .map(|(i, _)| i - 1)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use TriggerTag::*;

    fn seq(text: &str) -> TokenSeq {
        crate::textnorm::tokenize(text)
    }

    #[test]
    fn tag_examples() {
        let lex = TriggerLexicon::default();
        assert_eq!(
            tag(&seq("i came late because it rained"), &lex),
            [None, None, None, In, None, None]
        );
        assert_eq!(tag(&seq("and"), &lex), [Cc]);
        assert_eq!(
            tag(&seq("whose bag is this"), &lex),
            [Wps, None, None, None]
        );
    }

    #[test]
    fn that_and_which_rules() {
        let lex = TriggerLexicon::default();
        assert_eq!(tag(&seq("the dress that i saw"), &lex)[2], Wdt);
        assert_eq!(tag(&seq("i think so that we go"), &lex)[3], In);
        assert_eq!(tag(&seq("that is it"), &lex)[0], In);
        assert_eq!(tag(&seq("which one"), &lex)[0], Wdt);
        assert_eq!(tag(&seq("whatever happens"), &lex)[0], Wp);
    }

    #[test]
    fn boundary_examples() {
        let lex = TriggerLexicon::default();
        let s = seq("i came late to office because its was raining");
        let b = mark_subpart_boundaries(&s, &tag(&s, &lex)).unwrap();
        assert_eq!(b.iter().collect::<Vec<_>>(), [4]);

        let s = seq("because it was raining i came late");
        let b = mark_subpart_boundaries(&s, &tag(&s, &lex)).unwrap();
        assert!(b.is_empty());

        let s = seq("hello");
        assert!(mark_subpart_boundaries(&s, &tag(&s, &lex))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn adjacent_triggers_emit_both_positions() {
        let lex = TriggerLexicon::default();
        let s = seq("i stayed but because it rained");
        let b = mark_subpart_boundaries(&s, &tag(&s, &lex)).unwrap();
        assert_eq!(b.iter().collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(mark_subpart_boundaries(&seq("a b"), &[None]).is_err());
    }

    #[test]
    fn lexicon_parse_errors() {
        assert!(TriggerLexicon::parse("and\tXX\n").is_err());
        assert!(TriggerLexicon::parse("and\n").is_err());
        assert!(TriggerLexicon::parse("and\tNONE\n").is_err());
        let lex = TriggerLexicon::parse("plus\tCC\nwhich\tWDT,WP\n").unwrap();
        assert_eq!(lex.kinds("which").unwrap().len(), 2);
    }

    #[test]
    fn boundary_set_bounds() {
        assert!(BoundarySet::from_positions([0, 3], 3).is_err());
        let b = BoundarySet::from_positions([2, 0, 2], 3).unwrap();
        assert_eq!(b.iter().collect::<Vec<_>>(), [0, 2]);
    }
}
