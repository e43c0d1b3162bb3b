//! Article records and their quarterly aggregation into event signals.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{QuarterIndex, QuarterSpan, TimeSeries};

pub const UNKNOWN_STATE: &str = "UNKNOWN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    HateCrime,
    NotHateCrime,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::HateCrime
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::HateCrime
        } else {
            Label::NotHateCrime
        }
    }
}

/// One news item. `state` is the resolved state code or `UNKNOWN`;
/// `gold_state` is an annotator's state when available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub id: String,
    pub date: NaiveDate,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_state: Option<String>,
}

impl ArticleRecord {
    pub fn new(id: impl Into<String>, date: NaiveDate, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            date,
            title: title.into(),
            body: body.into(),
            gold_label: None,
            predicted_label: None,
            score: None,
            state: None,
            gold_state: None,
        }
    }

    pub fn quarter(&self) -> QuarterIndex {
        QuarterIndex::from_date(self.date)
    }

    /// Title and body joined for text models.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.title, self.body)
    }
}

/// Reads JSON-lines records. Blank lines are skipped; duplicate ids are
/// rejected.
pub fn read_articles_jsonl<R: BufRead>(reader: R) -> Result<Vec<ArticleRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<articles>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArticleRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(format!("articles line {}", i + 1), e.to_string()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::parse(format!("articles line {}", i + 1), format!("duplicate id {:?}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_articles_jsonl<W: Write>(mut writer: W, records: &[ArticleRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<articles>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<articles>", e))
}

/// Detected-event share of all articles. Zero articles gives 0 (with a
/// warning) so the quarter stays usable downstream.
pub fn hate_reported_index(event_detected_num: u64, news_num: u64) -> Result<f64> {
    if event_detected_num > news_num {
        return Err(Error::invalid(format!("event_detected_num {event_detected_num} exceeds news_num {news_num}")));
    }
    if news_num == 0 {
        log::warn!("no articles in quarter; hate_reported_index set to 0");
        return Ok(0.0);
    }
    Ok(event_detected_num as f64 / news_num as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalRow {
    pub quarter: QuarterIndex,
    pub news_num: u64,
    pub event_detected_num: u64,
    pub hate_reported_index: f64,
}

/// Consecutive quarterly signal rows over a span; quarters without
/// articles hold zeros.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuarterlySignals {
    pub span: QuarterSpan,
    pub rows: Vec<SignalRow>,
}

impl QuarterlySignals {
    fn from_counts(span: QuarterSpan, counts: &BTreeMap<QuarterIndex, (u64, u64)>) -> Result<Self> {
        let rows = span
            .iter()
            .map(|q| {
                let (news, events) = counts.get(&q).copied().unwrap_or((0, 0));
                let index = if news == 0 { 0.0 } else { hate_reported_index(events, news)? };
                Ok(SignalRow { quarter: q, news_num: news, event_detected_num: events, hate_reported_index: index })
            })
            .collect::<Result<_>>()?;
        Ok(Self { span, rows })
    }

    pub fn get(&self, q: QuarterIndex) -> Option<&SignalRow> {
        let off = self.span.start.quarters_until(q);
        (off >= 0).then(|| self.rows.get(off as usize)).flatten()
    }

    /// Quarters with zero articles.
    pub fn empty_quarters(&self) -> Vec<QuarterIndex> {
        self.rows.iter().filter(|r| r.news_num == 0).map(|r| r.quarter).collect()
    }

    /// `news_num`, `event_detected_num` and `hate_reported_index` series,
    /// each name prefixed by `prefix`.
    pub fn to_series(&self, prefix: &str) -> Result<Vec<TimeSeries>> {
        let col = |name: &str, f: &dyn Fn(&SignalRow) -> f64| {
            TimeSeries::from_values(format!("{prefix}{name}"), self.span.start, self.rows.iter().map(f).collect())
        };
        Ok(vec![
            col("news_num", &|r| r.news_num as f64)?,
            col("event_detected_num", &|r| r.event_detected_num as f64)?,
            col("hate_reported_index", &|r| r.hate_reported_index)?,
        ])
    }
}

fn predicted(rec: &ArticleRecord) -> Result<bool> {
    rec.predicted_label
        .map(Label::is_positive)
        .ok_or_else(|| Error::invalid(format!("article {:?} has no predicted label", rec.id)))
}

fn record_span(records: &[ArticleRecord]) -> Option<QuarterSpan> {
    let start = records.iter().map(ArticleRecord::quarter).min()?;
    let end = records.iter().map(ArticleRecord::quarter).max()?;
    Some(QuarterSpan { start, end })
}

/// Counts articles and detected events per quarter over `span` (default:
/// the records' own range). Records outside the span are ignored.
pub fn aggregate_quarterly(records: &[ArticleRecord], span: Option<QuarterSpan>) -> Result<QuarterlySignals> {
    let span = span
        .or_else(|| record_span(records))
        .ok_or_else(|| Error::invalid("no records and no span to aggregate over"))?;
    let mut counts: BTreeMap<QuarterIndex, (u64, u64)> = BTreeMap::new();
    for rec in records {
        let positive = predicted(rec)?;
        let q = rec.quarter();
        if span.contains(q) {
            let c = counts.entry(q).or_default();
            c.0 += 1;
            c.1 += u64::from(positive);
        }
    }
    QuarterlySignals::from_counts(span, &counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSignals {
    pub national: QuarterlySignals,
    pub states: BTreeMap<String, QuarterlySignals>,
    /// Articles in the span with state `UNKNOWN`.
    pub unknown_count: u64,
    /// `unknown_count` over all articles in the span (0 when there are none).
    pub unknown_share: f64,
}

/// Per-state aggregation. `UNKNOWN` articles count towards national totals
/// only. Every state series covers the full span.
pub fn aggregate_by_state(records: &[ArticleRecord], span: Option<QuarterSpan>) -> Result<StateSignals> {
    let national = aggregate_quarterly(records, span)?;
    let span = national.span;
    let mut per_state: BTreeMap<String, BTreeMap<QuarterIndex, (u64, u64)>> = BTreeMap::new();
    let mut unknown = 0u64;
    let mut total = 0u64;
    for rec in records {
        let positive = predicted(rec)?;
        let state = rec
            .state
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("article {:?} has no resolved state", rec.id)))?;
        let q = rec.quarter();
        if !span.contains(q) {
            continue;
        }
        total += 1;
        if state == UNKNOWN_STATE {
            unknown += 1;
            continue;
        }
        let c = per_state.entry(state.to_string()).or_default().entry(q).or_default();
        c.0 += 1;
        c.1 += u64::from(positive);
    }
    let states = per_state
        .iter()
        .map(|(s, counts)| Ok((s.clone(), QuarterlySignals::from_counts(span, counts)?)))
        .collect::<Result<_>>()?;
    Ok(StateSignals {
        national,
        states,
        unknown_count: unknown,
        unknown_share: if total == 0 { 0.0 } else { unknown as f64 / total as f64 },
    })
}

const SIGNAL_COLUMNS: [&str; 3] = ["news_num", "event_detected_num", "hate_reported_index"];

fn signal_fields(r: &SignalRow) -> [String; 3] {
    [r.news_num.to_string(), r.event_detected_num.to_string(), r.hate_reported_index.to_string()]
}

/// `year,quarter,news_num,event_detected_num,hate_reported_index`.
pub fn write_signals_csv<W: Write>(writer: W, signals: &QuarterlySignals) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["year", "quarter"];
    header.extend(SIGNAL_COLUMNS);
    w.write_record(&header)?;
    for r in &signals.rows {
        let mut rec = vec![r.quarter.year().to_string(), r.quarter.quarter().to_string()];
        rec.extend(signal_fields(r));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<signals csv>", e))
}

/// `year,quarter,state,...` with rows ordered by state, then quarter.
pub fn write_state_signals_csv<W: Write>(writer: W, signals: &StateSignals) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["year", "quarter", "state"];
    header.extend(SIGNAL_COLUMNS);
    w.write_record(&header)?;
    for (state, s) in &signals.states {
        for r in &s.rows {
            let mut rec = vec![r.quarter.year().to_string(), r.quarter.quarter().to_string(), state.clone()];
            rec.extend(signal_fields(r));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<signals csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, date: &str, positive: bool, state: &str) -> ArticleRecord {
        let mut r = ArticleRecord::new(id, date.parse().unwrap(), "", "");
        r.predicted_label = Some(Label::from_positive(positive));
        r.state = Some(state.to_string());
        r
    }

    #[test]
    fn index_examples() {
        assert_eq!(hate_reported_index(50, 1000).unwrap(), 0.05);
        assert_eq!(hate_reported_index(0, 0).unwrap(), 0.0);
        assert_eq!(hate_reported_index(7, 7).unwrap(), 1.0);
        assert!(hate_reported_index(8, 7).is_err());
    }

    #[test]
    fn quarterly_counts_and_gap_fill() {
        let mut records: Vec<_> = (0..10).map(|i| rec(&format!("a{i}"), "2010-02-01", i < 3, "CA")).collect();
        records.push(rec("late", "2010-12-31", false, "NY"));
        let s = aggregate_quarterly(&records, None).unwrap();
        let q1 = s.rows[0];
        assert_eq!((q1.news_num, q1.event_detected_num), (10, 3));
        assert!((q1.hate_reported_index - 0.3).abs() < 1e-15);
        let q2 = s.rows[1];
        assert_eq!((q2.news_num, q2.event_detected_num, q2.hate_reported_index), (0, 0, 0.0));
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.empty_quarters().len(), 2);
    }

    #[test]
    fn unlabeled_record_named() {
        let mut r = rec("x9", "2010-01-01", true, "CA");
        r.predicted_label = None;
        let err = aggregate_quarterly(&[r], None).unwrap_err().to_string();
        assert!(err.contains("x9"));
    }

    #[test]
    fn state_example() {
        let records = vec![
            rec("1", "2015-04-02", true, "CA"),
            rec("2", "2015-05-02", true, "CA"),
            rec("3", "2015-06-02", false, "NY"),
        ];
        let s = aggregate_by_state(&records, None).unwrap();
        let ca = s.states["CA"].rows[0];
        let ny = s.states["NY"].rows[0];
        assert_eq!((ca.news_num, ca.event_detected_num, ca.hate_reported_index), (2, 2, 1.0));
        assert_eq!((ny.news_num, ny.event_detected_num, ny.hate_reported_index), (1, 0, 0.0));
    }

    #[test]
    fn all_unknown() {
        let records = vec![rec("1", "2015-04-02", true, UNKNOWN_STATE), rec("2", "2015-07-02", false, UNKNOWN_STATE)];
        let s = aggregate_by_state(&records, None).unwrap();
        assert!(s.states.is_empty());
        assert_eq!(s.national.rows.iter().map(|r| r.news_num).sum::<u64>(), 2);
        assert_eq!(s.unknown_share, 1.0);
    }

    #[test]
    fn jsonl_round_trip_and_duplicates() {
        let records = vec![rec("1", "2015-04-02", true, "CA"), rec("2", "2016-01-09", false, UNKNOWN_STATE)];
        let mut buf = Vec::new();
        write_articles_jsonl(&mut buf, &records).unwrap();
        assert_eq!(read_articles_jsonl(buf.as_slice()).unwrap(), records);
        let dup = "{\"id\":\"a\",\"date\":\"2010-01-01\"}\n\n{\"id\":\"a\",\"date\":\"2010-02-01\"}\n";
        let err = read_articles_jsonl(dup.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("duplicate"), "{err}");
        assert!(read_articles_jsonl("{\"id\":\"a\",\"date\":\"2010-13-01\"}".as_bytes()).is_err());
    }

    #[test]
    fn csv_output() {
        let records = vec![rec("1", "2015-04-02", true, "CA"), rec("2", "2015-04-03", false, "CA")];
        let s = aggregate_by_state(&records, None).unwrap();
        let mut out = Vec::new();
        write_signals_csv(&mut out, &s.national).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "year,quarter,news_num,event_detected_num,hate_reported_index\n2015,2,2,1,0.5\n"
        );
        let mut out = Vec::new();
        write_state_signals_csv(&mut out, &s).unwrap();
        assert!(String::from_utf8(out).unwrap().ends_with("2015,2,CA,2,1,0.5\n"));
    }
}
