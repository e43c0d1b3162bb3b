//! Lagged-regressor OLS on national quarterly data (Models 2-5), with fit
//! statistics and out-of-sample forecasting.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::arima::{Forecast, ForecastMode};
use crate::error::{Error, Result};
use crate::linalg::{self, LeastSquares};
use crate::series::{fmt_opt, QuarterIndex, QuarterSpan, TimeSeries};
use crate::stat_tests::durbin_watson;

/// Dependent variable of the national models: the deseasonalized FBI count.
pub const DEPENDENT: &str = "fbi_num_noseasonnal";

/// Crime covariates entering Models 2-5 (population at lag 0, the rest at lag 1).
/// `population` is the one unlagged covariate.
pub const CRIME_COVARIATES: [(&str, usize); 11] = [
    ("aggravated_assault_rate", 1),
    ("arrests_drug_abuse_violations", 1),
    ("arrests_weapons", 1),
    ("burglary_rate", 1),
    ("homicide_victims_black", 1),
    ("murder_nonnegligent_manslaughter_rate", 1),
    ("population", 0),
    ("rape_rate", 1),
    ("robbery_rate", 1),
    ("total_law_enforcement_employees", 1),
    ("uner_quar", 1),
];

pub const EVENT_COUNTS: [&str; 2] = ["event_detected_num", "news_num"];
pub const EVENT_INDEX: &str = "hate_reported_index";

/// Named quarterly series sharing one index frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    start: QuarterIndex,
    len: usize,
    columns: IndexMap<String, Vec<Option<f64>>>,
}

impl Dataset {
    pub fn new(span: QuarterSpan) -> Self {
        Self { start: span.start, len: span.len(), columns: IndexMap::new() }
    }

    /// Frame covering the union of the series' ranges.
    pub fn from_series<'a>(series: impl IntoIterator<Item = &'a TimeSeries>) -> Result<Self> {
        let series: Vec<&TimeSeries> = series.into_iter().collect();
        let start = series
            .iter()
            .map(|s| s.start())
            .min()
            .ok_or_else(|| Error::invalid("dataset needs at least one series"))?;
        let end = series.iter().map(|s| s.end()).max().expect("nonempty");
        let mut ds = Dataset::new(QuarterSpan::new(start, end)?);
        for s in series {
            ds.insert(s)?;
        }
        Ok(ds)
    }

    pub fn span(&self) -> QuarterSpan {
        QuarterSpan { start: self.start, end: self.start.offset(self.len as i64 - 1) }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    /// Adds or replaces a column, re-indexed onto the frame. Values outside
    /// the frame are dropped.
    pub fn insert(&mut self, series: &TimeSeries) -> Result<()> {
        let values = series.align(self.span());
        TimeSeries::new(series.name(), self.start, values.clone())?;
        self.columns.insert(series.name().to_string(), values);
        Ok(())
    }

    pub fn series(&self, name: &str) -> Result<TimeSeries> {
        let values =
            self.columns.get(name).ok_or_else(|| Error::invalid(format!("dataset has no variable {name:?}")))?;
        TimeSeries::new(name, self.start, values.clone())
    }

    pub fn get(&self, name: &str, q: QuarterIndex) -> Option<f64> {
        let offset = self.start.quarters_until(q);
        if offset < 0 || offset as usize >= self.len {
            return None;
        }
        self.columns.get(name)?[offset as usize]
    }

    pub fn slice(&self, span: QuarterSpan) -> Result<Dataset> {
        let own = self.span();
        if !own.contains(span.start) || !own.contains(span.end) {
            return Err(Error::invalid(format!("span {span} not within dataset {own}")));
        }
        let a = self.start.quarters_until(span.start) as usize;
        let columns = self.columns.iter().map(|(k, v)| (k.clone(), v[a..a + span.len()].to_vec())).collect();
        Ok(Dataset { start: span.start, len: span.len(), columns })
    }

    /// Reads a wide `year,quarter,<variable>...` CSV of consecutive quarters.
    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "year" || &headers[1] != "quarter" {
            return Err(Error::parse("dataset csv header", "expected year,quarter,<variables>"));
        }
        let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut start = None;
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |what: &str, v: &str| Error::parse(format!("line {line}"), format!("bad {what} {v:?}"));
            let year: i32 = record[0].parse().map_err(|_| bad("year", &record[0]))?;
            let quarter: u8 = record[1].parse().map_err(|_| bad("quarter", &record[1]))?;
            let q = QuarterIndex::new(year, quarter)?;
            match start {
                None => start = Some(q),
                Some(s) if s.offset(rows.len() as i64) != q => {
                    return Err(Error::parse(
                        format!("line {line}"),
                        format!("expected quarter {}, found {q}", s.offset(rows.len() as i64)),
                    ))
                }
                _ => {}
            }
            let row = (2..headers.len())
                .map(|i| {
                    let raw = record.get(i).unwrap_or("").trim();
                    if raw.is_empty() {
                        Ok(None)
                    } else {
                        raw.parse().map(Some).map_err(|_| bad(&headers[i], raw))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let start = start.ok_or_else(|| Error::parse("dataset csv", "no rows"))?;
        let mut ds = Dataset { start, len: rows.len(), columns: IndexMap::new() };
        for (j, name) in names.iter().enumerate() {
            let values: Vec<Option<f64>> = rows.iter().map(|r| r[j]).collect();
            TimeSeries::new(name.clone(), start, values.clone())?;
            ds.columns.insert(name.clone(), values);
        }
        Ok(ds)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["year".to_string(), "quarter".to_string()];
        header.extend(self.columns.keys().cloned());
        w.write_record(&header)?;
        for (i, q) in self.span().iter().enumerate() {
            let mut row = vec![q.year().to_string(), q.quarter().to_string()];
            row.extend(self.columns.values().map(|v| fmt_opt(v[i])));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub lag: usize,
}

impl Term {
    pub fn new(name: impl Into<String>, lag: usize) -> Self {
        Self { name: name.into(), lag }
    }

    pub fn label(&self) -> String {
        if self.lag == 0 {
            self.name.clone()
        } else {
            format!("{}(-{})", self.name, self.lag)
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub dependent: String,
    pub terms: Vec<Term>,
    pub include_intercept: bool,
    /// 1 estimates the regression with AR(1) errors.
    pub ar_error_order: usize,
}

impl RegressionSpec {
    pub fn new(
        dependent: impl Into<String>,
        terms: Vec<Term>,
        include_intercept: bool,
        ar_error_order: usize,
    ) -> Result<Self> {
        let spec = Self { dependent: dependent.into(), terms, include_intercept, ar_error_order };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.ar_error_order > 1 {
            return Err(Error::invalid(format!("AR error order must be 0 or 1, got {}", self.ar_error_order)));
        }
        let mut seen = HashSet::new();
        for t in &self.terms {
            if t.lag > 1 {
                return Err(Error::invalid(format!("term {t}: lag must be 0 or 1")));
            }
            if !seen.insert((t.name.as_str(), t.lag)) {
                return Err(Error::invalid(format!("duplicate term {t}")));
            }
        }
        if self.terms.is_empty() && !self.include_intercept {
            return Err(Error::invalid("regression has no terms"));
        }
        Ok(())
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.terms.len() + 1);
        if self.include_intercept {
            names.push("const".to_string());
        }
        names.extend(self.terms.iter().map(Term::label));
        names
    }

    pub fn n_coefficients(&self) -> usize {
        self.terms.len() + usize::from(self.include_intercept)
    }

    /// Replaces the dependent variable, keeping terms.
    pub fn with_dependent(mut self, dependent: impl Into<String>) -> Self {
        self.dependent = dependent.into();
        self
    }
}

/// Term lists of the national models. Model 5 is Model 4 with AR(1) errors.
pub fn build_model_spec(model_id: u8) -> Result<RegressionSpec> {
    let mut terms: Vec<Term> = CRIME_COVARIATES.iter().map(|(name, lag)| Term::new(*name, *lag)).collect();
    if !(2..=5).contains(&model_id) {
        return Err(Error::invalid(format!("regression models are 2 to 5, got {model_id}")));
    }
    if model_id >= 3 {
        terms.extend(EVENT_COUNTS.iter().map(|n| Term::new(*n, 0)));
    }
    if model_id >= 4 {
        terms.push(Term::new(EVENT_INDEX, 0));
    }
    RegressionSpec::new(DEPENDENT, terms, true, usize::from(model_id == 5))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    pub spec: RegressionSpec,
    pub coefficients: Vec<Coefficient>,
    /// One-step residuals: OLS residuals, or AR(1) innovations when the
    /// errors are autoregressive.
    #[serde(skip)]
    pub residuals: TimeSeries,
    /// `y - Xβ` over the estimation rows.
    #[serde(skip)]
    pub structural_residuals: TimeSeries,
    pub sigma2: f64,
    pub log_likelihood: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub durbin_watson: f64,
    pub n_used: usize,
    pub ar_rho: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl RegressionFit {
    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    /// Last quarter used in estimation.
    pub fn last_quarter(&self) -> QuarterIndex {
        self.structural_residuals.end()
    }
}

/// Estimation rows: `(quarter, y, x)` for every quarter where the dependent
/// and every lagged term are observed.
pub(crate) fn design_rows(dataset: &Dataset, spec: &RegressionSpec) -> Result<Vec<(QuarterIndex, f64, Vec<f64>)>> {
    spec.validate()?;
    for name in std::iter::once(&spec.dependent).chain(spec.terms.iter().map(|t| &t.name)) {
        if !dataset.contains(name) {
            return Err(Error::invalid(format!("dataset has no variable {name:?}")));
        }
    }
    let mut rows = Vec::new();
    for q in dataset.span().iter() {
        let Some(y) = dataset.get(&spec.dependent, q) else {
            continue;
        };
        if let Some(x) = regressor_row(dataset, spec, q) {
            rows.push((q, y, x));
        }
    }
    Ok(rows)
}

fn regressor_row(dataset: &Dataset, spec: &RegressionSpec, q: QuarterIndex) -> Option<Vec<f64>> {
    let mut x = Vec::with_capacity(spec.n_coefficients());
    if spec.include_intercept {
        x.push(1.0);
    }
    for t in &spec.terms {
        x.push(dataset.get(&t.name, q.offset(-(t.lag as i64)))?);
    }
    Some(x)
}

fn gaussian_loglik(ssr: f64, n: usize) -> f64 {
    let n = n as f64;
    -0.5 * n * ((2.0 * std::f64::consts::PI * ssr / n).ln() + 1.0)
}

fn total_ss(y: &[f64], centred: bool) -> f64 {
    let mean = if centred { y.iter().sum::<f64>() / y.len() as f64 } else { 0.0 };
    y.iter().map(|v| (v - mean).powi(2)).sum()
}

const CO_TOL: f64 = 1e-8;
const CO_MAX_ROUNDS: usize = 50;

/// Least squares of `dependent` on the spec's terms.
///
/// Rows with any missing value are dropped. With `ar_error_order = 1` the
/// model `y = Xβ + u`, `u_t = ρ u_{t-1} + ε_t` is estimated by iterated
/// Cochrane-Orcutt until ρ moves less than 1e-8 (at most 50 rounds).
pub fn fit_ols(dataset: &Dataset, spec: &RegressionSpec) -> Result<RegressionFit> {
    let rows = design_rows(dataset, spec)?;
    let k = spec.n_coefficients();
    let n = rows.len();
    if n <= k + 2 {
        return Err(Error::invalid(format!("{n} usable rows for {k} coefficients; need more than {}", k + 2)));
    }
    let names = spec.coefficient_names();
    let quarters: Vec<QuarterIndex> = rows.iter().map(|r| r.0).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let xrows: Vec<Vec<f64>> = rows.iter().map(|r| r.2.clone()).collect();
    let x = linalg::design(&xrows, k);
    let ols = linalg::least_squares_qr(&x, &y, &names, None)?;
    let first = quarters[0];

    if spec.ar_error_order == 0 {
        let sigma2 = ols.ssr / (n - k) as f64;
        let r2 = 1.0 - ols.ssr / total_ss(&y, spec.include_intercept);
        let dof_total = if spec.include_intercept { n - 1 } else { n } as f64;
        let adj = 1.0 - (1.0 - r2) * dof_total / (n - k) as f64;
        let residuals = TimeSeries::from_values(format!("{}_residual", spec.dependent), first, ols.residuals.clone())?;
        return Ok(RegressionFit {
            spec: spec.clone(),
            coefficients: coefficients(&names, &ols, sigma2),
            structural_residuals: residuals.clone(),
            residuals,
            sigma2,
            log_likelihood: gaussian_loglik(ols.ssr, n),
            r_squared: r2,
            adj_r_squared: adj,
            durbin_watson: dw_or_nan(&ols.residuals)?,
            n_used: n,
            ar_rho: None,
            iterations: 0,
            converged: true,
        });
    }

    // Cochrane-Orcutt iterations.
    let mut beta = ols.coef.clone();
    let mut rho = 0.0;
    let mut transformed = ols;
    let mut converged = false;
    let mut rounds = 0;
    let intercept_norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    while rounds < CO_MAX_ROUNDS {
        rounds += 1;
        let u = structural(&xrows, &y, &beta);
        let num: f64 = u.windows(2).map(|w| w[1] * w[0]).sum();
        let den: f64 = u[..n - 1].iter().map(|v| v * v).sum();
        let new_rho = if den > 0.0 { num / den } else { 0.0 };
        let ys: Vec<f64> = (1..n).map(|t| y[t] - new_rho * y[t - 1]).collect();
        let xs: Vec<Vec<f64>> =
            (1..n).map(|t| xrows[t].iter().zip(&xrows[t - 1]).map(|(a, b)| a - new_rho * b).collect()).collect();
        transformed = linalg::least_squares_qr(&linalg::design(&xs, k), &ys, &names, Some(&intercept_norms))?;
        beta = transformed.coef.clone();
        let delta = (new_rho - rho).abs();
        rho = new_rho;
        if delta < CO_TOL {
            converged = true;
            break;
        }
    }
    let u = structural(&xrows, &y, &beta);
    let innovations: Vec<f64> = (1..n).map(|t| u[t] - rho * u[t - 1]).collect();
    let ssr: f64 = innovations.iter().map(|e| e * e).sum();
    let neff = n - 1;
    let sigma2 = ssr / (neff - k) as f64;
    let sst = total_ss(&y[1..], true);
    let r2 = 1.0 - ssr / sst;
    let adj = 1.0 - (ssr / (neff - k - 1) as f64) / (sst / (neff - 1) as f64);
    Ok(RegressionFit {
        spec: spec.clone(),
        coefficients: coefficients(&names, &transformed, sigma2),
        residuals: TimeSeries::from_values(format!("{}_innovation", spec.dependent), quarters[1], innovations.clone())?,
        structural_residuals: TimeSeries::from_values(format!("{}_residual", spec.dependent), first, u)?,
        sigma2,
        log_likelihood: gaussian_loglik(ssr, neff),
        r_squared: r2,
        adj_r_squared: adj,
        durbin_watson: dw_or_nan(&innovations)?,
        n_used: n,
        ar_rho: Some(rho),
        iterations: rounds,
        converged,
    })
}

/// Durbin-Watson is 0/0 on an exact fit; reported as NaN there.
fn dw_or_nan(residuals: &[f64]) -> Result<f64> {
    if residuals.iter().all(|e| *e == 0.0) {
        return Ok(f64::NAN);
    }
    durbin_watson(residuals)
}

fn structural(xrows: &[Vec<f64>], y: &[f64], beta: &[f64]) -> Vec<f64> {
    xrows.iter().zip(y).map(|(x, yv)| yv - x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()).collect()
}

fn coefficients(names: &[String], ls: &LeastSquares, sigma2: f64) -> Vec<Coefficient> {
    let cov = ls.covariance(sigma2);
    names
        .iter()
        .zip(&ls.coef)
        .enumerate()
        .map(|(j, (name, est))| Coefficient {
            name: name.clone(),
            estimate: *est,
            std_error: cov[(j, j)].max(0.0).sqrt(),
        })
        .collect()
}

/// Linear predictions over `span`. With AR(1) errors, adds `ρ·u_{t-1}` where
/// `u_{t-1}` is the estimation residual when `t-1` was in the estimation
/// sample and `ρ^h u_T` beyond it.
pub fn forecast_regression(fit: &RegressionFit, dataset: &Dataset, span: QuarterSpan) -> Result<Forecast> {
    let spec = &fit.spec;
    let beta = fit.estimates();
    let last = fit.last_quarter();
    let u_last = fit.structural_residuals.get(last).expect("structural residuals end at the last estimation quarter");
    let mut out = Vec::with_capacity(span.len());
    for q in span.iter() {
        let x = match regressor_row(dataset, spec, q) {
            Some(x) => x,
            None => {
                let missing = spec
                    .terms
                    .iter()
                    .find(|t| dataset.get(&t.name, q.offset(-(t.lag as i64))).is_none())
                    .expect("some term is missing");
                return Err(Error::invalid(format!(
                    "variable {:?} is not available for {q} (needs {})",
                    missing.name,
                    q.offset(-(missing.lag as i64))
                )));
            }
        };
        let mut pred: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        if let Some(rho) = fit.ar_rho {
            let prev = q.offset(-1);
            let u_prev = match fit.structural_residuals.get(prev) {
                Some(u) => u,
                None if prev > last => rho.powi(last.quarters_until(prev) as i32) * u_last,
                None => 0.0,
            };
            pred += rho * u_prev;
        }
        out.push(pred);
    }
    Ok(Forecast { origin: span.start.offset(-1), horizon: span.len(), point_values: out, mode: ForecastMode::Dynamic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn q0() -> QuarterIndex {
        QuarterIndex::new(2000, 1).unwrap()
    }

    fn dataset(cols: &[(&str, Vec<f64>)]) -> Dataset {
        let series: Vec<TimeSeries> =
            cols.iter().map(|(n, v)| TimeSeries::from_values(*n, q0(), v.clone()).unwrap()).collect();
        Dataset::from_series(&series).unwrap()
    }

    #[test]
    fn model_specs_have_expected_term_counts() {
        assert_eq!(build_model_spec(2).unwrap().n_coefficients(), 12);
        assert_eq!(build_model_spec(4).unwrap().n_coefficients(), 15);
        let m2: HashSet<Term> = build_model_spec(2).unwrap().terms.into_iter().collect();
        let m3: HashSet<Term> = build_model_spec(3).unwrap().terms.into_iter().collect();
        let m4: HashSet<Term> = build_model_spec(4).unwrap().terms.into_iter().collect();
        let diff: HashSet<String> = m3.difference(&m2).map(|t| t.name.clone()).collect();
        assert_eq!(diff, HashSet::from(["event_detected_num".to_string(), "news_num".to_string()]));
        assert!(m2.is_subset(&m3) && m3.is_subset(&m4));
        let m5 = build_model_spec(5).unwrap();
        assert_eq!(m5.ar_error_order, 1);
        assert!(m5.terms.contains(&Term::new("population", 0)));
        assert!(m5.terms.contains(&Term::new("uner_quar", 1)));
        assert!(build_model_spec(6).is_err());
        assert!(build_model_spec(1).is_err());
    }

    #[test]
    fn spec_rejects_duplicates_and_long_lags() {
        let dup = RegressionSpec::new("y", vec![Term::new("x", 1), Term::new("x", 1)], true, 0);
        assert!(dup.is_err());
        assert!(RegressionSpec::new("y", vec![Term::new("x", 2)], true, 0).is_err());
        assert!(RegressionSpec::new("y", vec![Term::new("x", 0), Term::new("x", 1)], true, 0).is_ok());
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 2.0 * v).collect();
        let ds = dataset(&[("y", y), ("x", x)]);
        let spec = RegressionSpec::new("y", vec![Term::new("x", 0)], true, 0).unwrap();
        let fit = fit_ols(&ds, &spec).unwrap();
        assert!((fit.coefficients[0].estimate - 3.0).abs() < 1e-12);
        assert!((fit.coefficients[1].estimate - 2.0).abs() < 1e-12);
        assert!(fit.residuals.dense().unwrap().iter().all(|e| e.abs() < 1e-12));
        assert!((fit.adj_r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_exact_line_recovers_coefficients() {
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> =
            x.iter().enumerate().map(|(i, v)| 3.0 + 2.0 * v + if i % 2 == 0 { 1e-9 } else { -1e-9 }).collect();
        let ds = dataset(&[("y", y), ("x", x)]);
        let spec = RegressionSpec::new("y", vec![Term::new("x", 0)], true, 0).unwrap();
        let fit = fit_ols(&ds, &spec).unwrap();
        assert!((fit.coefficients[0].estimate - 3.0).abs() < 1e-8);
        assert!((fit.coefficients[1].estimate - 2.0).abs() < 1e-8);
        assert!((fit.adj_r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_column_named() {
        let x1: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let x2: Vec<f64> = x1.iter().map(|v| 2.0 * v).collect();
        let y: Vec<f64> = x1.iter().map(|v| 1.0 + v).collect();
        let ds = dataset(&[("y", y), ("x1", x1), ("x2", x2)]);
        let spec = RegressionSpec::new("y", vec![Term::new("x1", 0), Term::new("x2", 0)], true, 0).unwrap();
        match fit_ols(&ds, &spec) {
            Err(Error::Collinearity { columns }) => assert_eq!(columns, vec!["x2".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let ds = dataset(&[("y", vec![1.0, 2.0, 3.0, 5.0]), ("x", vec![0.0, 1.0, 4.0, 2.0])]);
        let spec = RegressionSpec::new("y", vec![Term::new("x", 1)], true, 0).unwrap();
        assert!(matches!(fit_ols(&ds, &spec), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn lag_trimming_and_residual_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..30)
            .map(|t| if t == 0 { 0.0 } else { 1.0 + 3.0 * x[t - 1] } + 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let ds = dataset(&[("y", y), ("x", x)]);
        let spec = RegressionSpec::new("y", vec![Term::new("x", 1)], true, 0).unwrap();
        let fit = fit_ols(&ds, &spec).unwrap();
        assert_eq!(fit.n_used, 29);
        assert_eq!(fit.residuals.start(), q0().succ());
        let e = fit.residuals.dense().unwrap();
        assert!((e.iter().sum::<f64>() / e.len() as f64).abs() < 1e-8);
        assert!((fit.coefficients[1].estimate - 3.0).abs() < 0.2);
    }

    #[test]
    fn forecast_examples() {
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| if i < 8 { 3.0 + 2.0 * v + [1e-9, -1e-9][i % 2] } else { 3.0 + 2.0 * v })
            .collect();
        let mut ds = dataset(&[("y", y.clone()), ("x", x)]);
        let spec = RegressionSpec::new("y", vec![Term::new("x", 0)], true, 0).unwrap();
        let fit = fit_ols(&ds.slice(QuarterSpan::new(q0(), q0().offset(7)).unwrap()).unwrap(), &spec).unwrap();
        let span = QuarterSpan::new(q0().offset(8), q0().offset(11)).unwrap();
        let f = forecast_regression(&fit, &ds, span).unwrap();
        for (p, a) in f.point_values.iter().zip(&y[8..]) {
            assert!((p - a).abs() < 1e-7);
        }

        let mut zero = fit.clone();
        for c in zero.coefficients.iter_mut().skip(1) {
            c.estimate = 0.0;
        }
        let f = forecast_regression(&zero, &ds, span).unwrap();
        assert!(f.point_values.iter().all(|p| *p == zero.coefficients[0].estimate));

        let mut short = x_series(10);
        short = short.renamed("x");
        ds.insert(&short).unwrap();
        let err = forecast_regression(&fit, &ds, span).unwrap_err().to_string();
        assert!(err.contains("\"x\"") && err.contains("2002Q3"), "{err}");
    }

    fn x_series(n: usize) -> TimeSeries {
        TimeSeries::from_values("x", q0(), (0..n).map(|i| i as f64).collect()).unwrap()
    }

    /// Two-stage AR(1)-error estimation written out with plain loops.
    fn hand_cochrane_orcutt(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let ols = |xs: &[f64], ys: &[f64], w: f64| {
            // y = a·w + b·x, w is the transformed intercept column
            let (mut sww, mut swx, mut sxx, mut swy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (xv, yv) in xs.iter().zip(ys) {
                sww += w * w;
                swx += w * xv;
                sxx += xv * xv;
                swy += w * yv;
                sxy += xv * yv;
            }
            let det = sww * sxx - swx * swx;
            ((sxx * swy - swx * sxy) / det, (sww * sxy - swx * swy) / det)
        };
        let (mut a, mut b) = ols(x, y, 1.0);
        let mut rho = 0.0;
        for _ in 0..50 {
            let u: Vec<f64> = x.iter().zip(y).map(|(xv, yv)| yv - a - b * xv).collect();
            let new_rho =
                (1..u.len()).map(|t| u[t] * u[t - 1]).sum::<f64>() / (0..u.len() - 1).map(|t| u[t] * u[t]).sum::<f64>();
            let xs: Vec<f64> = (1..x.len()).map(|t| x[t] - new_rho * x[t - 1]).collect();
            let ys: Vec<f64> = (1..y.len()).map(|t| y[t] - new_rho * y[t - 1]).collect();
            (a, b) = ols(&xs, &ys, 1.0 - new_rho);
            let done = (new_rho - rho).abs() < 1e-8;
            rho = new_rho;
            if done {
                break;
            }
        }
        (a, b, rho)
    }

    #[test]
    fn ar1_error_forecast_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 24;
        let x: Vec<f64> = (0..n).map(|_| 10.0 * rng.random::<f64>()).collect();
        let mut u = 0.0;
        let y: Vec<f64> = x
            .iter()
            .map(|xv| {
                u = 0.6 * u + Distribution::<f64>::sample(&StandardNormal, &mut rng);
                2.0 + 1.5 * xv + u
            })
            .collect();
        let ds = dataset(&[("y", y.clone()), ("x", x.clone())]);
        let spec = RegressionSpec::new("y", vec![Term::new("x", 0)], true, 1).unwrap();
        let train = ds.slice(QuarterSpan::new(q0(), q0().offset(19)).unwrap()).unwrap();
        let fit = fit_ols(&train, &spec).unwrap();
        assert!(fit.converged);

        let (a, b, rho) = hand_cochrane_orcutt(&x[..20], &y[..20]);
        assert!((fit.coefficients[0].estimate - a).abs() < 1e-8);
        assert!((fit.coefficients[1].estimate - b).abs() < 1e-8);
        assert!((fit.ar_rho.unwrap() - rho).abs() < 1e-8);

        let span = QuarterSpan::new(q0().offset(20), q0().offset(23)).unwrap();
        let f = forecast_regression(&fit, &ds, span).unwrap();
        let mut u_prev = y[19] - a - b * x[19];
        for (h, p) in f.point_values.iter().enumerate() {
            let expected = a + b * x[20 + h] + rho * u_prev;
            assert!((p - expected).abs() < 1e-7, "step {h}: {p} vs {expected}");
            u_prev *= rho;
        }
    }

    #[test]
    fn dataset_csv_round_trip() {
        let text = "year,quarter,y,x\n2007,4,1.5,\n2008,1,2,3\n2008,2,,4\n";
        let ds = Dataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.get("x", QuarterIndex::new(2008, 2).unwrap()), Some(4.0));
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
        let gap = "year,quarter,y\n2007,4,1\n2008,1,\n2008,2,3\n";
        assert!(Dataset::read_csv(gap.as_bytes()).is_err());
    }
}
