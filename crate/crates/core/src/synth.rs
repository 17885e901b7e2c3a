//! Small deterministic corpora for smoke training and fixtures.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::artifact::{BoundaryBundle, EmojiBundle};
use crate::boundary::{BoundaryConfig, BoundaryModel};
use crate::dataset::{class_stats, corpus_samples, label_corpus, Vocabulary, DEFAULT_VOCAB_SIZE};
use crate::emoji::{
    encode_examples, normalize_examples, EmojiConfig, EmojiExample, EmojiLabelSet, EmojiModel,
};
use crate::nn::{History, TrainConfig};
use crate::tagger::TriggerLexicon;
use crate::textnorm::Normalizer;
use crate::{Error, Result};

const SUBJECTS: &[&str] = &[
    "i",
    "we",
    "they",
    "she",
    "he",
    "it",
    "its",
    "yesterday",
    "today",
    "everyone",
];

const PREDICATES: &[&str] = &[
    "came late to office",
    "was raining",
    "was my birthday",
    "is mine birthday",
    "went to the market",
    "stayed home",
    "missed the bus",
    "cooked dinner",
    "watched a movie",
    "felt very tired",
    "played football",
    "ate a big cake",
    "worked all night",
    "lost the keys",
    "called the doctor",
    "read a book",
    "visited the museum",
    "fixed the car",
    "slept early",
    "bought new shoes",
    "cleaned the kitchen",
    "was snowing",
    "looked happy",
    "won the match",
];

const JOINERS: &[&str] = &["because", "but", "and", "although", "while"];

const FIXED_SENTENCES: &[&str] = &[
    "I came late to office because it was raining.",
    "Yesterday was my birthday!",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Written sentences of the form `subject predicate (joiner subject
/// predicate){0,2}` with final punctuation, grouped `per_doc` to a line.
/// Subjects only ever open a clause, so every boundary is visible from the
/// decision word and its right neighbour.
pub fn trigger_grammar_corpus(sentences: usize, per_doc: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<String> = FIXED_SENTENCES
        .iter()
        .take(sentences)
        .map(|s| s.to_string())
        .collect();
    while all.len() < sentences {
        let clauses = match rng.random_range(0..20) {
            0..=5 => 1,
            6..=14 => 2,
            _ => 3,
        };
        let mut words = Vec::new();
        for k in 0..clauses {
            if k > 0 {
                let j = *JOINERS.choose(&mut rng).unwrap();
                if j == "but" && rng.random_bool(0.5) {
                    if let Some(last) = words.last_mut() {
                        *last = format!("{last},");
                    }
                }
                words.push(j.to_string());
            }
            words.push(SUBJECTS.choose(&mut rng).unwrap().to_string());
            words.push(PREDICATES.choose(&mut rng).unwrap().to_string());
        }
        let end = match rng.random_range(0..10) {
            0 => "!",
            1 => "?",
            _ => ".",
        };
        all.push(capitalize(&words.join(" ")) + end);
    }
    all.chunks(per_doc.max(1)).map(|c| c.join(" ")).collect()
}

/// Emoji glyph and the keywords that select it in the toy corpus.
pub const KEYWORD_FAMILIES: &[(&str, &[&str])] = &[
    (
        "🏢",
        &["office", "meeting", "boss", "deadline", "work", "project"],
    ),
    (
        "🌧",
        &["rain", "raining", "storm", "umbrella", "cloudy", "wet"],
    ),
    (
        "🎂",
        &["birthday", "cake", "party", "celebrate", "candles", "gift"],
    ),
    (
        "🍕",
        &["pizza", "lunch", "dinner", "hungry", "burger", "pasta"],
    ),
    (
        "❤",
        &["love", "miss", "darling", "hug", "sweetheart", "kiss"],
    ),
    ("😴", &["sleep", "tired", "bed", "nap", "sleepy", "dream"]),
    (
        "✈",
        &["flight", "trip", "airport", "vacation", "travel", "beach"],
    ),
    ("⚽", &["football", "match", "goal", "gym", "score", "team"]),
];

const FILLERS: &[&str] = &[
    "i",
    "am",
    "the",
    "so",
    "going",
    "to",
    "now",
    "really",
    "we",
    "my",
    "it",
    "is",
    "was",
    "this",
    "very",
    "just",
    "at",
    "came",
    "late",
    "because",
    "its",
    "yesterday",
    "mine",
    "a",
    "our",
    "again",
    "soon",
    "with",
    "you",
];

/// `n` short texts, each holding one or two keywords of a single family
/// among neutral filler words. Labels cycle through the families.
pub fn keyword_family_corpus(
    labels: &EmojiLabelSet,
    n: usize,
    seed: u64,
) -> Result<Vec<EmojiExample>> {
    let ids = KEYWORD_FAMILIES
        .iter()
        .map(|(g, _)| {
            labels
                .index_of(g)
                .ok_or_else(|| Error::InvalidConfig(format!("label set lacks {g}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let fam = i % KEYWORD_FAMILIES.len();
        let keywords = KEYWORD_FAMILIES[fam].1;
        let len = rng.random_range(2..=6);
        let mut words: Vec<&str> = (0..len)
            .map(|_| *FILLERS.choose(&mut rng).unwrap())
            .collect();
        let hits = if rng.random_bool(0.25) { 2 } else { 1 };
        for _ in 0..hits {
            let at = rng.random_range(0..=words.len());
            words.insert(at, keywords.choose(&mut rng).unwrap());
        }
        out.push(EmojiExample {
            label: ids[fam],
            text: words.join(" "),
        });
    }
    Ok(out)
}

/// Boundary CNN trained on [`trigger_grammar_corpus`] (200 sentences).
/// Stops as soon as training accuracy reaches 99%, at most 50 epochs.
pub fn fixture_boundary(seed: u64) -> Result<(BoundaryBundle, History)> {
    let (lex, norm) = (TriggerLexicon::default(), Normalizer::default());
    let docs = trigger_grammar_corpus(200, 4, seed);
    let labeled = label_corpus(&docs, &lex, &norm);
    let words = labeled
        .iter()
        .flat_map(|l| l.tokens.tokens.iter().map(|t| t.surface.as_str()));
    let vocab = Vocabulary::build(words, DEFAULT_VOCAB_SIZE)?;
    let config = BoundaryConfig::default();
    let samples = corpus_samples(&labeled, &vocab, config.window_spec());
    let mut model = BoundaryModel::build(config, seed)?;
    let hyper = TrainConfig {
        epochs: 50,
        batch_size: 64,
        seed,
        target_accuracy: Some(99.0),
        ..TrainConfig::default()
    };
    let history = model.train(&samples, &class_stats(&samples), &hyper)?;
    Ok((BoundaryBundle { model, vocab }, history))
}

/// ACA model with a corpus-sized vocabulary trained on 500
/// [`keyword_family_corpus`] texts until 95% top-1, at most 100 epochs.
pub fn fixture_emoji(seed: u64) -> Result<(EmojiBundle, History)> {
    let labels = EmojiLabelSet::default();
    let norm = Normalizer::default();
    let seqs = normalize_examples(&keyword_family_corpus(&labels, 500, seed)?, &norm);
    let vocab = Vocabulary::build(
        seqs.iter()
            .flat_map(|(s, _)| s.tokens.iter().map(|t| t.surface.as_str())),
        1000,
    )?;
    let config = EmojiConfig {
        vocab_size: vocab.len(),
        ..EmojiConfig::default()
    };
    let mut model = EmojiModel::build(config, seed)?;
    let data = encode_examples(&model, &seqs, &vocab);
    let hyper = TrainConfig {
        epochs: 100,
        batch_size: 32,
        seed,
        target_accuracy: Some(95.0),
        ..TrainConfig::default()
    };
    let history = model.train(&data, &hyper)?;
    Ok((
        EmojiBundle {
            model,
            vocab,
            labels,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::derive_labels;
    use crate::tagger::TriggerLexicon;
    use crate::textnorm::Normalizer;

    #[test]
    fn grammar_corpus_shape() {
        let docs = trigger_grammar_corpus(200, 4, 7);
        assert_eq!(docs.len(), 50);
        assert!(docs[0].starts_with(
            "I came late to office because it was raining. Yesterday was my birthday!"
        ));
        assert_eq!(docs, trigger_grammar_corpus(200, 4, 7));
        assert_ne!(docs, trigger_grammar_corpus(200, 4, 8));
    }

    #[test]
    fn grammar_labels_follow_the_right_neighbour() {
        let (lex, norm) = (TriggerLexicon::default(), Normalizer::default());
        for doc in trigger_grammar_corpus(200, 4, 3) {
            let l = derive_labels(&doc, &lex, &norm);
            let words = l.tokens.surfaces();
            for i in 0..words.len() {
                let next = words.get(i + 1).copied();
                let opens_clause =
                    next.is_none_or(|w| JOINERS.contains(&w) || SUBJECTS.contains(&w));
                let expected = opens_clause && !JOINERS.contains(&words[i]);
                assert_eq!(l.boundary_after[i], expected, "{doc} @ {i}");
            }
        }
    }

    #[test]
    fn toy_corpus_is_balanced_and_keyed() {
        let labels = EmojiLabelSet::default();
        let ex = keyword_family_corpus(&labels, 500, 1).unwrap();
        assert_eq!(ex.len(), 500);
        for e in &ex {
            let fam = KEYWORD_FAMILIES
                .iter()
                .find(|(g, _)| labels.index_of(g) == Some(e.label))
                .unwrap();
            assert!(e.text.split(' ').any(|w| fam.1.contains(&w)), "{}", e.text);
        }
        let first = ex.iter().filter(|e| e.label == ex[0].label).count();
        assert!((62..=63).contains(&first));
    }
}
