use chrono::NaiveDate;
use crimecast_core::detector::{classify_corpus, evaluate, f1_score, train_baseline, ConfusionCounts, Split};
use crimecast_core::event_signals::{ArticleRecord, Label};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 40] = [
    "police", "said", "city", "man", "woman", "school", "church", "mosque", "council", "report", "night", "street",
    "attack", "crowd", "vote", "market", "weather", "team", "court", "judge", "rally", "family", "officer", "local",
    "state", "bill", "fire", "park", "group", "sign", "video", "post", "student", "teacher", "store", "driver", "home",
    "event", "leader", "news",
];

fn random_corpus(seed: u64, n: usize, positive_rate: f64) -> Vec<ArticleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(8..20);
            let body: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            let mut r =
                ArticleRecord::new(format!("n{i}"), NaiveDate::from_ymd_opt(2014, 3, 1).unwrap(), "", body.join(" "));
            r.gold_label = Some(Label::from_positive(rng.random::<f64>() < positive_rate));
            r
        })
        .collect()
}

/// With labels independent of text the classifier can only do as well as
/// chance: precision sits at the positive rate. A max-F1 threshold may drift
/// towards predicting everything positive, whose F1 is 2π/(1+π), so F1 is
/// bounded by that rather than by π itself.
#[test]
fn shuffled_labels_give_chance_level() {
    let rate = 0.3;
    let corpus = random_corpus(11, 600, rate);
    let positives = corpus.iter().filter(|r| r.gold_label == Some(Label::HateCrime)).count();
    let pi = positives as f64 / corpus.len() as f64;
    let (model, split) = train_baseline(&corpus, &Split::Fractions { train: 0.6, validation: 0.2 }, 11).unwrap();
    let test: Vec<ArticleRecord> = corpus.iter().filter(|r| split.test.contains(&r.id)).cloned().collect();
    let m = evaluate(&classify_corpus(&model, &test), &test).unwrap();
    assert!((m.precision - pi).abs() <= 0.1, "precision {} vs rate {pi}", m.precision);
    assert!(m.f1 <= 2.0 * pi / (1.0 + pi) + 0.1, "f1 {}", m.f1);
}

fn counts() -> impl Strategy<Value = ConfusionCounts> {
    (0u64..200, 0u64..200, 0u64..200, 0u64..200).prop_map(|(tp, fp, tn, fn_)| ConfusionCounts { tp, fp, tn, fn_ })
}

proptest! {
    #[test]
    fn f1_identity_and_bounds(c in counts()) {
        let m = c.metrics();
        if c.tp > 0 {
            prop_assert!((m.f1 - f1_score(m.precision, m.recall)).abs() < 1e-12);
        }
        prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        prop_assert_eq!(m.counts.total(), c.tp + c.fp + c.tn + c.fn_);
    }

    #[test]
    fn raising_threshold_never_raises_recall(scores in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..80)) {
        let mut thresholds: Vec<f64> = scores.iter().map(|s| s.0).collect();
        thresholds.sort_by(f64::total_cmp);
        let mut last = f64::INFINITY;
        for t in thresholds {
            let mut c = ConfusionCounts::default();
            for &(s, y) in &scores {
                c.add(s >= t, y);
            }
            let r = c.metrics().recall;
            prop_assert!(r <= last + 1e-15);
            last = r;
        }
    }
}

#[test]
fn classification_is_deterministic() {
    let corpus = random_corpus(3, 200, 0.4);
    let split = Split::Fractions { train: 0.6, validation: 0.2 };
    let (a, _) = train_baseline(&corpus, &split, 5).unwrap();
    let (b, _) = train_baseline(&corpus, &split, 5).unwrap();
    assert_eq!(classify_corpus(&a, &corpus), classify_corpus(&b, &corpus));
    for r in classify_corpus(&a, &corpus) {
        let s = r.score.unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert_eq!(r.predicted_label == Some(Label::HateCrime), s >= a.threshold);
    }
}
