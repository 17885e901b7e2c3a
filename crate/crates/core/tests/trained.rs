use std::sync::OnceLock;

use emojiscribe::artifact::{BoundaryBundle, EmojiBundle};
use emojiscribe::boundary::{BoundaryConfig, BoundaryModel};
use emojiscribe::dataset::{class_stats, corpus_samples, label_corpus, Vocabulary, WindowSpec};
use emojiscribe::emoji::{EmojiModel, EncodedText};
use emojiscribe::nn::{dequantize8, quantize8, TrainConfig};
use emojiscribe::pipeline::{render, Pipeline, PipelineConfig};
use emojiscribe::synth::{fixture_boundary, fixture_emoji, trigger_grammar_corpus};
use emojiscribe::tagger::TriggerLexicon;
use emojiscribe::textnorm::{Normalizer, TokenSeq};

fn models() -> &'static (BoundaryBundle, EmojiBundle) {
    static M: OnceLock<(BoundaryBundle, EmojiBundle)> = OnceLock::new();
    M.get_or_init(|| {
        (
            fixture_boundary(42).unwrap().0,
            fixture_emoji(42).unwrap().0,
        )
    })
}

fn pipeline(emoji_threshold: f64) -> Pipeline {
    let (b, e) = models().clone();
    Pipeline::new(PipelineConfig {
        emoji_threshold,
        boundary_threshold: None,
    })
    .unwrap()
    .with_boundary(b)
    .unwrap()
    .with_emoji(e)
}

fn words(s: &str) -> TokenSeq {
    TokenSeq::from_words(&s.split(' ').collect::<Vec<_>>())
}

#[test]
fn overfit_period_fixture() {
    let docs = [
        "It rained. We left.",
        "It snowed. We stayed.",
        "We left. It rained.",
        "We stayed. It snowed.",
    ];
    let (lex, norm) = (TriggerLexicon::default(), Normalizer::default());
    let labeled = label_corpus(&docs, &lex, &norm);
    let vocab = Vocabulary::build(
        labeled
            .iter()
            .flat_map(|l| l.tokens.tokens.iter().map(|t| t.surface.as_str())),
        50,
    )
    .unwrap();
    let config = BoundaryConfig {
        vocab_size: 50,
        emb_dim: 16,
        filters: 32,
        ..BoundaryConfig::default()
    };
    let samples = corpus_samples(&labeled, &vocab, WindowSpec::default());
    let mut m = BoundaryModel::build(config, 1).unwrap();
    let hyper = TrainConfig {
        epochs: 200,
        batch_size: 4,
        target_accuracy: Some(100.0),
        ..TrainConfig::default()
    };
    m.train(&samples, &class_stats(&samples), &hyper).unwrap();
    let seq = words("it rained we left");
    let p = m.probabilities(&seq, &vocab);
    assert!(p[1] as f64 > m.config().threshold, "{p:?}");
    assert!(m.predict_boundaries(&seq, &vocab).contains(1));
}

#[test]
fn predict_boundaries_reads_dataset_windows() {
    let (b, _) = models();
    let seq = words("i came late to office because it was raining");
    let ids = b.vocab.encode(&seq);
    let direct: Vec<f32> = b
        .model
        .config()
        .window_spec()
        .all(&ids)
        .iter()
        .map(|w| b.model.predict_window(w).unwrap())
        .collect();
    assert_eq!(b.model.probabilities(&seq, &b.vocab), direct);
}

#[test]
fn quantized_boundary_decisions_agree() {
    let (b, _) = models();
    let (lex, norm) = (TriggerLexicon::default(), Normalizer::default());
    let probe = label_corpus(&trigger_grammar_corpus(120, 4, 1234), &lex, &norm);
    let samples = corpus_samples(&probe, &b.vocab, b.model.config().window_spec());
    let q = BoundaryModel::from_store(
        b.model.config().clone(),
        &dequantize8(&quantize8(&b.model.store)).unwrap(),
    )
    .unwrap();
    let t = b.model.config().threshold;
    let agree = samples
        .iter()
        .filter(|s| {
            (b.model.predict_window(&s.window).unwrap() as f64 >= t)
                == (q.predict_window(&s.window).unwrap() as f64 >= t)
        })
        .count();
    assert!(
        agree as f64 >= 0.98 * samples.len() as f64,
        "{agree}/{}",
        samples.len()
    );
}

#[test]
fn oov_words_go_through_the_char_path() {
    let (_, e) = models();
    let d = e.model.predict(&words("birthdayyyy"), &e.vocab).unwrap();
    let uniform = 1.0 / d.probabilities.len() as f32;
    assert!(d.probabilities.iter().any(|&p| (p - uniform).abs() > 1e-3));
    let top5 = e
        .model
        .predict_topk(&words("birthdayyyy"), &e.vocab, 5)
        .unwrap();
    assert_eq!(top5[0].0, d.ranked[0]);
    let all = e.model.predict_topk(&words("rain"), &e.vocab, 64).unwrap();
    let mut ids: Vec<usize> = all.iter().map(|x| x.0).collect();
    ids.sort();
    assert_eq!(ids, (0..64).collect::<Vec<_>>());
    assert!(e.model.predict_topk(&words("rain"), &e.vocab, 0).is_err());
}

#[test]
fn char_path_carries_signal() {
    let (_, e) = models();
    let seq = words("so much rain at the office");
    let real = e.model.encode(&seq, &e.vocab);
    let unk = EncodedText {
        words: vec![1; real.len()],
        chars: real.chars.clone(),
    };
    let (a, b) = (
        e.model.distribution(&real).unwrap(),
        e.model.distribution(&unk).unwrap(),
    );
    let dist: f32 = a
        .probabilities
        .iter()
        .zip(&b.probabilities)
        .map(|(x, y)| (x - y).abs())
        .sum();
    assert!(dist > 0.0);

    // with the character filters zeroed, OOV-only inputs all look alike
    let mut store = e.model.store.clone();
    for name in store.names().to_vec() {
        if name.starts_with("emoji.chars.w") {
            let id = store.id(&name).unwrap();
            store.value_mut(id).fill(0.0);
        }
    }
    let blind = EmojiModel::from_store(e.model.config().clone(), &store).unwrap();
    let oov = |w: &str| EncodedText {
        words: vec![1],
        chars: vec![emojiscribe::emoji::encode_chars(w, 24)],
    };
    let d1 = blind.distribution(&oov("birthdayyyy")).unwrap();
    let d2 = blind.distribution(&oov("zzqx")).unwrap();
    assert_eq!(d1.probabilities, d2.probabilities);
    let d3 = blind
        .distribution(&oov("qqqqqqqqqqqqqqqqqqqqqqqqqqqqqq"))
        .unwrap();
    assert_eq!(d1.probabilities, d3.probabilities);
}

#[test]
fn worked_examples_annotate_at_gold_positions() {
    let p = pipeline(0.3);
    let labels = &models().1.labels;
    let a = p
        .annotate("i came late to office because its was raining")
        .unwrap();
    let got: Vec<(usize, &str)> = a
        .insertions
        .iter()
        .map(|i| (i.after, labels.category_of_glyph(&i.emoji).unwrap()))
        .collect();
    assert_eq!(got, [(4, "work"), (8, "weather")]);

    let a = p.annotate("yesterday is mine birthday").unwrap();
    let got: Vec<(usize, &str)> = a
        .insertions
        .iter()
        .map(|i| (i.after, labels.category_of_glyph(&i.emoji).unwrap()))
        .collect();
    assert_eq!(got, [(3, "celebration")]);
    assert!(p.annotate("").unwrap().insertions.is_empty());
}

#[test]
fn pipeline_invariants() {
    let p = pipeline(0.3);
    let b = &models().0;
    for text in [
        "I came late to office, because it's raining!",
        "we stayed home and she cooked dinner",
        "gn u2",
        "yesterday was my birthday but i worked all night",
    ] {
        let a = p.annotate(text).unwrap();
        let norm = Normalizer::default().apply(text);
        let labels = &models().1.labels;
        let rendered = render(&a);
        let stripped: Vec<&str> = rendered
            .split(' ')
            .filter(|w| labels.index_of(w).is_none())
            .collect();
        assert_eq!(stripped, norm.surfaces());
        let mut allowed = b.model.predict_boundaries(&a.tokens, &b.vocab);
        allowed.insert(a.tokens.len() - 1);
        assert!(a.insertions.windows(2).all(|w| w[0].after < w[1].after));
        assert!(a.insertions.iter().all(|i| allowed.contains(i.after)));
        assert_eq!(p.annotate(text).unwrap(), a);

        let all = pipeline(0.0).annotate(text).unwrap();
        let parts = emojiscribe::pipeline::subparts(
            a.tokens.len(),
            &b.model.predict_boundaries(&a.tokens, &b.vocab),
        );
        assert_eq!(all.insertions.len(), parts.len());
        let none = pipeline(1.0).annotate(text).unwrap();
        let max_p = all
            .insertions
            .iter()
            .map(|i| i.probability)
            .fold(0.0f32, f32::max);
        if max_p < 1.0 {
            assert!(none.insertions.is_empty());
        }
    }
}

#[test]
fn concurrent_annotation_is_consistent() {
    use rayon::prelude::*;
    let p = pipeline(0.3);
    let texts: Vec<String> = (0..32)
        .map(|i| format!("i missed the bus {i} because it was raining"))
        .collect();
    let par: Vec<_> = texts.par_iter().map(|t| p.annotate(t).unwrap()).collect();
    let seq: Vec<_> = texts.iter().map(|t| p.annotate(t).unwrap()).collect();
    assert_eq!(par, seq);
}
