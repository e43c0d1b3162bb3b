use std::collections::HashMap;

use chrono::NaiveDate;
use crimecast_core::event_signals::{aggregate_by_state, aggregate_quarterly, ArticleRecord, Label, UNKNOWN_STATE};
use crimecast_core::QuarterIndex;
use proptest::prelude::*;

const STATES: [&str; 4] = ["CA", "NY", "TX", UNKNOWN_STATE];

fn records() -> impl Strategy<Value = Vec<ArticleRecord>> {
    prop::collection::vec((0u32..730, any::<bool>(), 0usize..4), 0..120).prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (day, pos, s))| {
                let date = NaiveDate::from_ymd_opt(2012, 1, 1).unwrap() + chrono::Days::new(day as u64);
                let mut r = ArticleRecord::new(format!("r{i}"), date, "t", "b");
                r.predicted_label = Some(Label::from_positive(pos));
                r.state = Some(STATES[s].to_string());
                r
            })
            .collect()
    })
}

/// Independent tally keyed by (year, quarter from month) and state.
fn tally(recs: &[ArticleRecord]) -> HashMap<(Option<String>, i32, u32), (u64, u64)> {
    use chrono::Datelike;
    let mut m: HashMap<_, (u64, u64)> = HashMap::new();
    for r in recs {
        let q = r.date.month().div_ceil(3);
        let pos = u64::from(r.predicted_label == Some(Label::HateCrime));
        let mut keys = vec![None];
        if let Some(state) = r.state.clone().filter(|s| s != UNKNOWN_STATE) {
            keys.push(Some(state));
        }
        for key in keys {
            let e = m.entry((key, r.date.year(), q)).or_default();
            e.0 += 1;
            e.1 += pos;
        }
    }
    m
}

proptest! {
    #[test]
    fn counts_match_tally(recs in records()) {
        prop_assume!(!recs.is_empty());
        let s = aggregate_by_state(&recs, None).unwrap();
        let oracle = tally(&recs);
        for row in &s.national.rows {
            let key = (None, row.quarter.year(), row.quarter.quarter() as u32);
            let (n, e) = oracle.get(&key).copied().unwrap_or((0, 0));
            prop_assert_eq!((row.news_num, row.event_detected_num), (n, e));
            prop_assert!(row.event_detected_num <= row.news_num);
            prop_assert!((0.0..=1.0).contains(&row.hate_reported_index));
        }
        for (state, sig) in &s.states {
            for row in &sig.rows {
                let key = (Some(state.clone()), row.quarter.year(), row.quarter.quarter() as u32);
                let (n, e) = oracle.get(&key).copied().unwrap_or((0, 0));
                prop_assert_eq!((row.news_num, row.event_detected_num), (n, e));
            }
        }
    }

    #[test]
    fn states_plus_unknown_reconcile(recs in records()) {
        prop_assume!(!recs.is_empty());
        let s = aggregate_by_state(&recs, None).unwrap();
        for row in &s.national.rows {
            let states: u64 = s.states.values().map(|sig| sig.get(row.quarter).unwrap().news_num).sum();
            let unknown = recs
                .iter()
                .filter(|r| r.quarter() == row.quarter && r.state.as_deref() == Some(UNKNOWN_STATE))
                .count() as u64;
            prop_assert_eq!(states + unknown, row.news_num);
        }
    }

    #[test]
    fn order_does_not_matter(recs in records(), seed in any::<u64>()) {
        prop_assume!(!recs.is_empty());
        let mut shuffled = recs.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed as usize).wrapping_mul(i + 7) % (i + 1));
        }
        prop_assert_eq!(aggregate_by_state(&recs, None).unwrap(), aggregate_by_state(&shuffled, None).unwrap());
    }
}

#[test]
fn hundred_records_four_quarters() {
    let recs: Vec<ArticleRecord> = (0..100)
        .map(|i| {
            let date = NaiveDate::from_ymd_opt(2016, 1 + (i % 12) as u32, 1 + (i % 28) as u32).unwrap();
            let mut r = ArticleRecord::new(format!("a{i}"), date, "", "");
            r.predicted_label = Some(Label::from_positive(i % 7 == 0));
            r
        })
        .collect();
    let s = aggregate_quarterly(&recs, None).unwrap();
    assert_eq!(s.rows.len(), 4);
    let oracle = tally(&recs);
    for row in &s.rows {
        let key = (None, 2016, row.quarter.quarter() as u32);
        assert_eq!((row.news_num, row.event_detected_num), oracle[&key]);
    }
    assert_eq!(s.span.start, QuarterIndex::new(2016, 1).unwrap());
}
