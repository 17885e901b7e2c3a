use emojiscribe::boundary::evaluate_predictions;
use emojiscribe::dataset::{
    derive_labels, make_windows, read_samples, write_samples, EvalSequence, Sample, Vocabulary,
    WindowSpec, PAD,
};
use emojiscribe::tagger::{BoundarySet, TriggerLexicon};
use emojiscribe::textnorm::{Normalizer, TokenSeq};
use proptest::prelude::*;

/// Pads the id list on both sides and slices; shares no code with the
/// library's window extraction.
fn brute_force_windows(ids: &[u32], width: usize, offset: usize) -> Vec<Vec<u32>> {
    let mut padded = vec![PAD; offset - 1];
    padded.extend_from_slice(ids);
    padded.extend(std::iter::repeat_n(PAD, width - offset));
    (0..ids.len())
        .map(|i| padded[i..i + width].to_vec())
        .collect()
}

fn chunk() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("it's".to_string()),
        Just("don't".to_string()),
        Just("u2".to_string()),
        Just("cannot2".to_string()),
        Just("İstanbul".to_string()),
        Just("gn".to_string()),
        Just("b4!".to_string()),
        Just("Hello,".to_string()),
        Just("...".to_string()),
        Just("because".to_string()),
        Just("that".to_string()),
        "[a-zA-Z0-9'.,!?]{1,8}",
    ]
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(chunk(), 0..14).prop_map(|v| v.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn windows_match_brute_force(
        ids in prop::collection::vec(0u32..50, 0..=12),
        width in 2usize..=10,
        offset_frac in 0.0f64..1.0,
    ) {
        let offset = 1 + ((width - 1) as f64 * offset_frac).round() as usize;
        let spec = WindowSpec::new(width, offset).unwrap();
        prop_assert_eq!(spec.all(&ids), brute_force_windows(&ids, width, offset));
    }

    #[test]
    fn normalization_is_idempotent(t in text()) {
        let norm = Normalizer::default();
        let once = norm.apply(&t);
        let twice = norm.apply(&once.to_string());
        prop_assert_eq!(once.surfaces(), twice.surfaces());
        for w in once.surfaces() {
            prop_assert!(!w.is_empty() && w.chars().all(char::is_alphabetic));
        }
    }

    #[test]
    fn one_label_and_one_window_per_token(t in text()) {
        let (lex, norm) = (TriggerLexicon::default(), Normalizer::default());
        let labeled = derive_labels(&t, &lex, &norm);
        prop_assert_eq!(labeled.boundary_after.len(), labeled.tokens.len());
        let vocab = Vocabulary::build(["because", "that"], 10).unwrap();
        let samples = make_windows(&labeled, &vocab, 6, 4).unwrap();
        prop_assert_eq!(samples.len(), labeled.tokens.len());
        for (s, &b) in samples.iter().zip(&labeled.boundary_after) {
            prop_assert_eq!(s.label, b);
        }
    }

    #[test]
    fn raising_the_threshold_never_raises_recall(
        probs in prop::collection::vec(0.0f64..1.0, 1..40),
        gold_mask in prop::collection::vec(any::<bool>(), 40),
        t1 in 0.01f64..0.99,
        t2 in 0.01f64..0.99,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let n = probs.len();
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let gold = vec![EvalSequence {
            tokens: TokenSeq::from_words(&words),
            gold: (0..n).filter(|&i| gold_mask[i]).collect(),
        }];
        let at = |t: f64| -> BoundarySet { (0..n).filter(|&i| probs[i] >= t).collect() };
        let (p_lo, p_hi) = (at(lo), at(hi));
        prop_assert!(p_hi.len() <= p_lo.len());
        let (m_lo, m_hi) = (
            evaluate_predictions(&[p_lo], &gold).unwrap(),
            evaluate_predictions(&[p_hi], &gold).unwrap(),
        );
        if !gold[0].gold.is_empty() {
            prop_assert!(m_hi.recall <= m_lo.recall + 1e-12);
        }
    }

    #[test]
    fn samples_cache_round_trips(
        rows in prop::collection::vec((prop::collection::vec(0u32..20_000, 6), any::<bool>()), 0..30),
    ) {
        let samples: Vec<Sample> = rows.into_iter().map(|(window, label)| Sample { window, label }).collect();
        let mut buf = Vec::new();
        write_samples(&mut buf, WindowSpec::default(), &samples).unwrap();
        let (spec, back) = read_samples(&buf[..]).unwrap();
        prop_assert_eq!(spec, WindowSpec::default());
        prop_assert_eq!(back, samples);
    }
}

/// Raising the threshold can lower precision when a true boundary scores
/// between two false ones, so only recall is monotone in general.
#[test]
fn precision_is_not_monotone_in_general() {
    let words = ["a", "b", "c"];
    let gold = vec![EvalSequence {
        tokens: TokenSeq::from_words(&words),
        gold: [1].into_iter().collect(),
    }];
    let probs = [0.9, 0.6, 0.3];
    let at = |t: f64| -> BoundarySet { (0..3).filter(|&i| probs[i] >= t).collect() };
    let low = evaluate_predictions(&[at(0.5)], &gold).unwrap();
    let high = evaluate_predictions(&[at(0.7)], &gold).unwrap();
    assert_eq!(low.precision, 50.0);
    assert_eq!(high.precision, 0.0);
}

#[test]
fn normalizer_examples_after_the_fixpoint() {
    let norm = Normalizer::default();
    assert_eq!(norm.apply("u2").surfaces(), ["you"]);
    assert_eq!(norm.apply("cannot2 go").surfaces(), ["can", "not", "go"]);
}
