//! Quarterly time-series container, lag/difference algebra, autocorrelation
//! functions and classical additive decomposition.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A calendar quarter. Ordered by `(year, quarter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuarterIndex {
    year: i32,
    quarter: u8,
}

impl QuarterIndex {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::invalid(format!("quarter {quarter} outside 1..4")));
        }
        Ok(Self { year, quarter })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn quarter(self) -> u8 {
        self.quarter
    }

    /// Number of quarters since year 0 Q1. Consecutive quarters differ by one.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.quarter) - 1
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        let year = ordinal.div_euclid(4) as i32;
        let quarter = ordinal.rem_euclid(4) as u8 + 1;
        Self { year, quarter }
    }

    pub fn succ(self) -> Self {
        self.offset(1)
    }

    pub fn offset(self, quarters: i64) -> Self {
        Self::from_ordinal(self.ordinal() + quarters)
    }

    /// Signed number of quarters from `self` to `other`.
    pub fn quarters_until(self, other: QuarterIndex) -> i64 {
        other.ordinal() - self.ordinal()
    }

    /// Quarter containing a calendar date.
    pub fn from_date(date: chrono::NaiveDate) -> Self {
        use chrono::Datelike;
        Self { year: date.year(), quarter: (date.month0() / 3) as u8 + 1 }
    }
}

impl fmt::Display for QuarterIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

impl FromStr for QuarterIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::parse("quarter", format!("expected YYYYQn, got {s:?}"));
        let (year, quarter) = s.trim().split_once(['Q', 'q']).ok_or_else(bad)?;
        let year = year.parse().map_err(|_| bad())?;
        let quarter = quarter.parse().map_err(|_| bad())?;
        QuarterIndex::new(year, quarter)
    }
}

impl Serialize for QuarterIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QuarterIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive range of quarters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarterSpan {
    pub start: QuarterIndex,
    pub end: QuarterIndex,
}

impl QuarterSpan {
    pub fn new(start: QuarterIndex, end: QuarterIndex) -> Result<Self> {
        if end < start {
            return Err(Error::invalid(format!("span end {end} precedes start {start}")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        (self.start.quarters_until(self.end) + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, q: QuarterIndex) -> bool {
        self.start <= q && q <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = QuarterIndex> {
        let start = self.start;
        (0..self.len() as i64).map(move |i| start.offset(i))
    }
}

impl fmt::Display for QuarterSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// A named, quarterly indexed sequence of values.
///
/// Missing values (`None`) may only appear as leading or trailing runs; they
/// arise from lagging and from the undefined edges of a centered moving
/// average.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    name: String,
    start: QuarterIndex,
    values: Vec<Option<f64>>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, start: QuarterIndex, values: Vec<Option<f64>>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::invalid(format!("series {name:?} is empty")));
        }
        if let Some(i) = values.iter().position(|v| matches!(v, Some(x) if !x.is_finite())) {
            return Err(Error::invalid(format!(
                "series {name:?} has a non-finite value at {}",
                start.offset(i as i64)
            )));
        }
        let first = values.iter().position(Option::is_some);
        let last = values.iter().rposition(Option::is_some);
        if let (Some(first), Some(last)) = (first, last) {
            if let Some(gap) = values[first..=last].iter().position(Option::is_none) {
                return Err(Error::invalid(format!(
                    "series {name:?} has an interior gap at {}",
                    start.offset((first + gap) as i64)
                )));
            }
        }
        Ok(Self { name, start, values })
    }

    pub fn from_values(name: impl Into<String>, start: QuarterIndex, values: Vec<f64>) -> Result<Self> {
        Self::new(name, start, values.into_iter().map(Some).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn start(&self) -> QuarterIndex {
        self.start
    }

    pub fn end(&self) -> QuarterIndex {
        self.start.offset(self.values.len() as i64 - 1)
    }

    pub fn span(&self) -> QuarterSpan {
        QuarterSpan { start: self.start, end: self.end() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn quarter_at(&self, position: usize) -> QuarterIndex {
        self.start.offset(position as i64)
    }

    pub fn position_of(&self, q: QuarterIndex) -> Option<usize> {
        let offset = self.start.quarters_until(q);
        (offset >= 0 && (offset as usize) < self.values.len()).then_some(offset as usize)
    }

    /// Value at a quarter; `None` when outside the index range or missing.
    pub fn get(&self, q: QuarterIndex) -> Option<f64> {
        self.position_of(q).and_then(|i| self.values[i])
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(Option::is_none)
    }

    /// All values, failing if any is missing.
    pub fn dense(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    Error::invalid(format!("series {:?} is missing a value at {}", self.name, self.quarter_at(i)))
                })
            })
            .collect()
    }

    /// The defined sub-range with leading and trailing missing values removed.
    pub fn trimmed(&self) -> Option<TimeSeries> {
        let first = self.values.iter().position(Option::is_some)?;
        let last = self.values.iter().rposition(Option::is_some)?;
        Some(TimeSeries {
            name: self.name.clone(),
            start: self.quarter_at(first),
            values: self.values[first..=last].to_vec(),
        })
    }

    /// Values re-indexed onto another frame; positions outside this series are missing.
    pub fn align(&self, span: QuarterSpan) -> Vec<Option<f64>> {
        span.iter().map(|q| self.get(q)).collect()
    }

    /// Sub-series over `span`, which must lie within the index range.
    pub fn slice(&self, span: QuarterSpan) -> Result<TimeSeries> {
        let (Some(a), Some(b)) = (self.position_of(span.start), self.position_of(span.end)) else {
            return Err(Error::invalid(format!("span {span} not within series {:?} ({})", self.name, self.span())));
        };
        TimeSeries::new(self.name.clone(), span.start, self.values[a..=b].to_vec())
    }
}

/// `order`-th difference. Position `i` of the result holds the difference
/// ending at input position `i + order`, so the start advances by `order`.
pub fn difference(series: &TimeSeries, order: usize) -> Result<TimeSeries> {
    let n = series.len();
    if n <= order {
        return Err(Error::invalid(format!("cannot take difference of order {order} on {n} values")));
    }
    let weights = difference_weights(order);
    let values = (order..n)
        .map(|t| weights.iter().enumerate().try_fold(0.0, |acc, (j, w)| series.values[t - j].map(|v| acc + w * v)))
        .collect();
    TimeSeries::new(series.name.clone(), series.start.offset(order as i64), values)
}

/// Coefficients of `(1 - L)^order`: entry `j` multiplies `y[t - j]`.
pub(crate) fn difference_weights(order: usize) -> Vec<f64> {
    let mut w = vec![1.0];
    for _ in 0..order {
        let mut next = vec![0.0; w.len() + 1];
        for (j, c) in w.iter().enumerate() {
            next[j] += c;
            next[j + 1] -= c;
        }
        w = next;
    }
    w
}

/// Back-shift by `k` quarters: the same values indexed `k` quarters later.
pub fn lag(series: &TimeSeries, k: usize) -> Result<TimeSeries> {
    if k >= series.len() {
        return Err(Error::invalid(format!("lag {k} is not shorter than series length {}", series.len())));
    }
    if k == 0 {
        return Ok(series.clone());
    }
    Ok(TimeSeries {
        name: format!("{}(-{k})", series.name),
        start: series.start.offset(k as i64),
        values: series.values.clone(),
    })
}

fn autocorr_input(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let x = series.dense()?;
    if max_lag < 1 || x.len() <= max_lag {
        return Err(Error::invalid(format!(
            "need series length > max_lag >= 1, got length {} and max_lag {max_lag}",
            x.len()
        )));
    }
    Ok(x)
}

/// Sample autocorrelations for lags `0..=max_lag` with the biased (divide by n)
/// autocovariance.
pub fn acf(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let x = autocorr_input(series, max_lag)?;
    acf_values(&x, max_lag)
}

pub(crate) fn acf_values(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>();
    let scale = x.iter().map(|v| v * v).sum::<f64>();
    if c0 <= 1e-20 * scale || c0 == 0.0 {
        return Err(Error::degenerate("series has zero variance"));
    }
    Ok((0..=max_lag)
        .map(|k| if k == 0 { 1.0 } else { dev[k..].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / c0 })
        .collect())
}

/// Partial autocorrelations for lags `0..=max_lag` by Durbin-Levinson
/// recursion on the sample autocorrelations. Element 0 is 1.
pub fn pacf(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let r = acf(series, max_lag)?;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = r[k] - phi.iter().enumerate().map(|(j, p)| p * r[k - 1 - j]).sum::<f64>();
        let den = 1.0 - phi.iter().enumerate().map(|(j, p)| p * r[j + 1]).sum::<f64>();
        if den.abs() < 1e-14 {
            return Err(Error::degenerate(format!("Durbin-Levinson recursion breaks down at lag {k}")));
        }
        let kk = num / den;
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - kk * prev[prev.len() - 1 - j];
        }
        phi.push(kk);
        out.push(kk);
    }
    Ok(out)
}

/// Trend, seasonal and irregular components of an additive decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub observed: TimeSeries,
    pub trend: TimeSeries,
    pub seasonal: TimeSeries,
    pub irregular: TimeSeries,
    pub period: usize,
    /// Zero-sum seasonal effect for each phase, indexed by `ordinal mod period`.
    pub pattern: Vec<f64>,
}

impl DecompositionResult {
    /// Seasonal effect at any quarter, tiling the estimated pattern.
    pub fn seasonal_at(&self, q: QuarterIndex) -> f64 {
        self.pattern[q.ordinal().rem_euclid(self.period as i64) as usize]
    }
}

/// Classical additive decomposition by centered moving average.
///
/// For even periods the trend is the 2×m moving average (two adjacent
/// m-windows averaged). Trend and irregular are missing on the first and
/// last `period / 2` positions.
pub fn decompose_additive(series: &TimeSeries, period: usize) -> Result<DecompositionResult> {
    if period < 2 {
        return Err(Error::invalid(format!("period must be >= 2, got {period}")));
    }
    let y = series.dense()?;
    let n = y.len();
    if n < 2 * period {
        return Err(Error::invalid(format!("decomposition needs at least {} values, got {n}", 2 * period)));
    }

    let half = period / 2;
    let mut trend = vec![None; n];
    for (t, slot) in trend.iter_mut().enumerate().take(n - half).skip(half) {
        let value = if period % 2 == 0 {
            let inner: f64 = y[t + 1 - half..t + half].iter().sum();
            (0.5 * y[t - half] + inner + 0.5 * y[t + half]) / period as f64
        } else {
            y[t - half..=t + half].iter().sum::<f64>() / period as f64
        };
        *slot = Some(value);
    }

    let phase_of = |t: usize| series.quarter_at(t).ordinal().rem_euclid(period as i64) as usize;
    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for t in 0..n {
        if let Some(tr) = trend[t] {
            sums[phase_of(t)] += y[t] - tr;
            counts[phase_of(t)] += 1;
        }
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let centre = means.iter().sum::<f64>() / period as f64;
    let pattern: Vec<f64> = means.iter().map(|m| m - centre).collect();

    let seasonal: Vec<f64> = (0..n).map(|t| pattern[phase_of(t)]).collect();
    let irregular: Vec<Option<f64>> = (0..n).map(|t| trend[t].map(|tr| y[t] - tr - seasonal[t])).collect();

    let name = series.name();
    Ok(DecompositionResult {
        observed: series.clone(),
        trend: TimeSeries::new(format!("{name}_trend"), series.start(), trend)?,
        seasonal: TimeSeries::from_values(format!("{name}_seasonal"), series.start(), seasonal)?,
        irregular: TimeSeries::new(format!("{name}_irregular"), series.start(), irregular)?,
        period,
        pattern,
    })
}

/// Removes the seasonal component: `series - seasonal` at every index.
pub fn deseasonalize(series: &TimeSeries, decomp: &DecompositionResult) -> Result<TimeSeries> {
    if decomp.seasonal.start() != series.start() || decomp.seasonal.len() != series.len() {
        return Err(Error::invalid(format!(
            "decomposition covers {} but series {:?} covers {}",
            decomp.seasonal.span(),
            series.name(),
            series.span()
        )));
    }
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(t, v)| v.map(|v| v - decomp.seasonal.values()[t].unwrap_or(0.0)))
        .collect();
    TimeSeries::new(format!("{}_noseasonal", series.name()), series.start(), values)
}

fn parse_field<T: FromStr>(field: &str, what: &str, line: u64) -> Result<T> {
    field.trim().parse().map_err(|_| Error::parse(format!("line {line}"), format!("bad {what} {field:?}")))
}

/// Reads a `year,quarter,value` CSV. Rows must be consecutive quarters;
/// an empty value field marks a missing observation.
pub fn read_series_csv<R: Read>(reader: R, name: &str) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 3 || &headers[0] != "year" || &headers[1] != "quarter" {
        return Err(Error::parse(
            "series csv header",
            format!("expected year,quarter,value, got {:?}", headers.iter().collect::<Vec<_>>()),
        ));
    }
    let mut start = None;
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let q = QuarterIndex::new(parse_field(&record[0], "year", line)?, parse_field(&record[1], "quarter", line)?)?;
        let expected = start.map(|s: QuarterIndex| s.offset(values.len() as i64));
        match expected {
            None => start = Some(q),
            Some(e) if e != q => {
                return Err(Error::parse(format!("line {line}"), format!("expected quarter {e}, found {q}")))
            }
            _ => {}
        }
        let raw = record[2].trim();
        values.push(if raw.is_empty() { None } else { Some(parse_field(raw, "value", line)?) });
    }
    let start = start.ok_or_else(|| Error::parse("series csv", "no rows"))?;
    TimeSeries::new(name, start, values)
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_series_csv<W: Write>(writer: W, series: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["year", "quarter", "value"])?;
    for (i, v) in series.values().iter().enumerate() {
        let q = series.quarter_at(i);
        w.write_record([q.year().to_string(), q.quarter().to_string(), fmt_opt(*v)])?;
    }
    w.flush().map_err(|e| Error::io("<series csv>", e))?;
    Ok(())
}

/// `year,quarter,observed,trend,seasonal,irregular` export.
pub fn write_decomposition_csv<W: Write>(writer: W, decomp: &DecompositionResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["year", "quarter", "observed", "trend", "seasonal", "irregular"])?;
    for i in 0..decomp.observed.len() {
        let q = decomp.observed.quarter_at(i);
        w.write_record([
            q.year().to_string(),
            q.quarter().to_string(),
            fmt_opt(decomp.observed.values()[i]),
            fmt_opt(decomp.trend.values()[i]),
            fmt_opt(decomp.seasonal.values()[i]),
            fmt_opt(decomp.irregular.values()[i]),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<decomposition csv>", e))?;
    Ok(())
}
