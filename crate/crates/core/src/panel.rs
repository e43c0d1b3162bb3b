//! State-level panel models: balancing, fixed effects (within estimator),
//! random effects (Swamy-Arora GLS) and per-unit forecasting.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::arima::{Forecast, ForecastMode};
use crate::error::{Error, Result};
use crate::linalg::{self, LeastSquares};
use crate::regression::{build_model_spec, Coefficient, RegressionSpec};
use crate::series::{fmt_opt, QuarterIndex, QuarterSpan};
use crate::stat_tests::{hausman_test, TestResult};

/// Observations keyed by `(unit, quarter)`; each row holds one value per
/// variable. Units may have gaps until balanced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelDataset {
    variables: Vec<String>,
    rows: BTreeMap<String, BTreeMap<QuarterIndex, Vec<Option<f64>>>>,
}

impl PanelDataset {
    pub fn new(variables: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = variables.iter().collect();
        if unique.len() != variables.len() {
            return Err(Error::invalid("duplicate panel variable names"));
        }
        Ok(Self { variables, rows: BTreeMap::new() })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn units(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn n_units(&self) -> usize {
        self.rows.len()
    }

    pub fn contains_unit(&self, unit: &str) -> bool {
        self.rows.contains_key(unit)
    }

    pub fn insert(&mut self, unit: &str, q: QuarterIndex, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.variables.len() {
            return Err(Error::invalid(format!(
                "{unit} {q}: {} values for {} variables",
                values.len(),
                self.variables.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{unit} {q}: non-finite value")));
        }
        let unit_rows = self.rows.entry(unit.to_string()).or_default();
        if unit_rows.insert(q, values).is_some() {
            return Err(Error::invalid(format!("duplicate observation for {unit} {q}")));
        }
        Ok(())
    }

    /// Appends a variable, or overwrites an existing one, using `value` for
    /// every existing `(unit, quarter)` row.
    pub fn set_variable(&mut self, name: &str, value: impl Fn(&str, QuarterIndex) -> Option<f64>) {
        let j = match self.variables.iter().position(|v| v == name) {
            Some(j) => j,
            None => {
                self.variables.push(name.to_string());
                for rows in self.rows.values_mut() {
                    for v in rows.values_mut() {
                        v.push(None);
                    }
                }
                self.variables.len() - 1
            }
        };
        for (unit, rows) in self.rows.iter_mut() {
            for (q, v) in rows.iter_mut() {
                v[j] = value(unit, *q).filter(|x| x.is_finite());
            }
        }
    }

    fn var_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::invalid(format!("panel has no variable {name:?}")))
    }

    pub fn get(&self, unit: &str, name: &str, q: QuarterIndex) -> Option<f64> {
        let j = self.variables.iter().position(|v| v == name)?;
        self.rows.get(unit)?.get(&q)?[j]
    }

    /// Earliest to latest quarter over all units.
    pub fn time_range(&self) -> Option<QuarterSpan> {
        let start = self.rows.values().filter_map(|r| r.keys().next()).min()?;
        let end = self.rows.values().filter_map(|r| r.keys().next_back()).max()?;
        Some(QuarterSpan { start: *start, end: *end })
    }

    /// Rows within `span` only; units left without rows disappear.
    pub fn restrict(&self, span: QuarterSpan) -> PanelDataset {
        let rows = self
            .rows
            .iter()
            .filter_map(|(unit, r)| {
                let kept: BTreeMap<_, _> = r.range(span.start..=span.end).map(|(q, v)| (*q, v.clone())).collect();
                (!kept.is_empty()).then(|| (unit.clone(), kept))
            })
            .collect();
        PanelDataset { variables: self.variables.clone(), rows }
    }

    /// Reads a long `state,year,quarter,<variable>...` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<PanelDataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "state" || &headers[1] != "year" || &headers[2] != "quarter" {
            return Err(Error::parse("panel csv header", "expected state,year,quarter,<variables>"));
        }
        let mut panel = PanelDataset::new(headers.iter().skip(3).map(str::to_string).collect())?;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |what: &str, v: &str| Error::parse(format!("line {line}"), format!("bad {what} {v:?}"));
            let year: i32 = record[1].parse().map_err(|_| bad("year", &record[1]))?;
            let quarter: u8 = record[2].parse().map_err(|_| bad("quarter", &record[2]))?;
            let q = QuarterIndex::new(year, quarter)?;
            let values = (3..headers.len())
                .map(|i| {
                    let raw = record.get(i).unwrap_or("");
                    if raw.is_empty() {
                        Ok(None)
                    } else {
                        raw.parse().map(Some).map_err(|_| bad(&headers[i], raw))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            panel.insert(&record[0], q, values).map_err(|e| Error::parse(format!("line {line}"), e.to_string()))?;
        }
        Ok(panel)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["state".to_string(), "year".to_string(), "quarter".to_string()];
        header.extend(self.variables.iter().cloned());
        w.write_record(&header)?;
        for (unit, rows) in &self.rows {
            for (q, values) in rows {
                let mut rec = vec![unit.clone(), q.year().to_string(), q.quarter().to_string()];
                rec.extend(values.iter().map(|v| fmt_opt(*v)));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<panel csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub retained_units: Vec<String>,
    pub dropped_units: Vec<String>,
    /// Share of the dependent variable's total held by retained units;
    /// `None` when the total is zero.
    pub retained_share: Option<f64>,
    pub range: QuarterSpan,
}

/// Drops units whose complete observations (every variable present) cover
/// less than `min_coverage` of the panel's time range.
pub fn balance_panel(
    panel: &PanelDataset,
    min_coverage: f64,
    dependent: &str,
) -> Result<(PanelDataset, BalanceReport)> {
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::invalid(format!("min_coverage {min_coverage} outside [0, 1]")));
    }
    let dep = panel.var_index(dependent)?;
    let range = panel.time_range().ok_or(Error::EmptyPanel)?;
    let total_quarters = range.len() as f64;
    let mut kept = panel.clone();
    let mut dropped = Vec::new();
    let (mut total, mut retained) = (0.0, 0.0);
    for (unit, rows) in &panel.rows {
        let complete = rows.values().filter(|v| v.iter().all(Option::is_some)).count();
        let unit_total: f64 = rows.values().filter_map(|v| v[dep]).sum();
        total += unit_total;
        if (complete as f64) < min_coverage * total_quarters {
            kept.rows.remove(unit);
            dropped.push(unit.clone());
        } else {
            retained += unit_total;
        }
    }
    if kept.rows.is_empty() {
        return Err(Error::EmptyPanel);
    }
    if !dropped.is_empty() {
        log::info!("balancing dropped {} of {} units", dropped.len(), panel.n_units());
    }
    let report = BalanceReport {
        retained_units: kept.rows.keys().cloned().collect(),
        dropped_units: dropped,
        retained_share: (total != 0.0).then(|| retained / total),
        range,
    };
    Ok((kept, report))
}

/// Model 6 mirrors Model 2's terms and Model 7 mirrors Model 4's, with the
/// event signals read per state. The dependent is the state-level count.
pub fn panel_model_spec(model_id: u8, dependent: &str) -> Result<RegressionSpec> {
    let base = match model_id {
        6 => 2,
        7 => 4,
        other => return Err(Error::invalid(format!("panel models are 6 and 7, got {other}"))),
    };
    let mut spec = build_model_spec(base)?.with_dependent(dependent);
    spec.include_intercept = true;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelMethod {
    Fixed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelResidual {
    pub unit: String,
    pub quarter: QuarterIndex,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelFit {
    pub method: PanelMethod,
    pub spec: RegressionSpec,
    /// Common intercept: the average unit intercept for fixed effects, the
    /// GLS constant for random effects.
    pub intercept: f64,
    /// Slopes, in term order.
    pub slopes: Vec<Coefficient>,
    #[serde(skip)]
    pub slope_covariance: DMatrix<f64>,
    /// Per-unit intercepts. For random effects these are the common
    /// intercept plus each unit's predicted effect.
    pub unit_intercepts: BTreeMap<String, f64>,
    pub sigma2_e: f64,
    pub sigma2_u: Option<f64>,
    pub theta: Option<f64>,
    pub r_squared_within: f64,
    pub r_squared_overall: f64,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub n_units: usize,
    pub dof: usize,
    #[serde(skip)]
    pub residuals: Vec<PanelResidual>,
    pub warnings: Vec<String>,
}

impl PanelFit {
    pub fn slope_estimates(&self) -> Vec<f64> {
        self.slopes.iter().map(|c| c.estimate).collect()
    }
}

struct UnitRows {
    unit: String,
    quarters: Vec<QuarterIndex>,
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
}

impl UnitRows {
    fn means(&self, k: usize) -> (f64, Vec<f64>) {
        let t = self.y.len() as f64;
        let ybar = self.y.iter().sum::<f64>() / t;
        let xbar = (0..k).map(|j| self.x.iter().map(|r| r[j]).sum::<f64>() / t).collect();
        (ybar, xbar)
    }
}

/// Per-unit estimation rows after lag trimming; slopes only, no intercept.
fn unit_rows(panel: &PanelDataset, spec: &RegressionSpec) -> Result<Vec<UnitRows>> {
    let dep = panel.var_index(&spec.dependent)?;
    let cols: Vec<(usize, usize)> =
        spec.terms.iter().map(|t| Ok((panel.var_index(&t.name)?, t.lag))).collect::<Result<_>>()?;
    if cols.is_empty() {
        return Err(Error::invalid("panel model needs at least one regressor"));
    }
    let k = cols.len();
    let mut out = Vec::new();
    for (unit, rows) in &panel.rows {
        let mut u = UnitRows { unit: unit.clone(), quarters: Vec::new(), y: Vec::new(), x: Vec::new() };
        for (q, values) in rows {
            let Some(y) = values[dep] else { continue };
            let x: Option<Vec<f64>> = cols.iter().map(|&(j, lag)| rows.get(&q.offset(-(lag as i64)))?[j]).collect();
            if let Some(x) = x {
                u.quarters.push(*q);
                u.y.push(y);
                u.x.push(x);
            }
        }
        if u.y.len() < k + 2 {
            return Err(Error::invalid(format!("unit {unit} has {} usable rows; need at least {}", u.y.len(), k + 2)));
        }
        out.push(u);
    }
    if out.len() < 2 {
        return Err(Error::invalid(format!("panel models need at least 2 units, got {}", out.len())));
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn squared_corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab * sab / (saa * sbb)
}

fn slope_coefficients(
    names: &[String],
    ls: &LeastSquares,
    sigma2: f64,
    offset: usize,
) -> (Vec<Coefficient>, DMatrix<f64>) {
    let cov = ls.covariance(sigma2);
    let k = names.len();
    let coefs = names
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient {
            name: name.clone(),
            estimate: ls.coef[j + offset],
            std_error: cov[(j + offset, j + offset)].max(0.0).sqrt(),
        })
        .collect();
    (coefs, cov.view((offset, offset), (k, k)).into_owned())
}

struct Within {
    units: Vec<UnitRows>,
    ls: LeastSquares,
    ytilde: Vec<f64>,
    xtilde: Vec<Vec<f64>>,
}

fn within_regression(panel: &PanelDataset, spec: &RegressionSpec) -> Result<Within> {
    let units = unit_rows(panel, spec)?;
    let k = spec.terms.len();
    let mut ytilde = Vec::new();
    let mut xtilde = Vec::new();
    let mut raw_norms = vec![0.0; k];
    for u in &units {
        let (ybar, xbar) = u.means(k);
        for (y, x) in u.y.iter().zip(&u.x) {
            ytilde.push(y - ybar);
            xtilde.push(x.iter().zip(&xbar).map(|(a, b)| a - b).collect::<Vec<f64>>());
            for j in 0..k {
                raw_norms[j] += x[j] * x[j];
            }
        }
    }
    let raw_norms: Vec<f64> = raw_norms.iter().map(|v| v.sqrt()).collect();
    let names: Vec<String> = spec.terms.iter().map(|t| t.label()).collect();
    let ls = linalg::least_squares_qr(&linalg::design(&xtilde, k), &ytilde, &names, Some(&raw_norms))?;
    Ok(Within { units, ls, ytilde, xtilde })
}

/// Within estimator: unit-demeaned pooled OLS with recovered unit intercepts.
/// Standard errors use `NT - N - k` degrees of freedom.
pub fn fit_fixed_effects(panel: &PanelDataset, spec: &RegressionSpec) -> Result<PanelFit> {
    let Within { units, ls, ytilde, xtilde } = within_regression(panel, spec)?;
    let k = spec.terms.len();
    let nt = ytilde.len();
    let n = units.len();
    if nt <= n + k {
        return Err(Error::invalid(format!("{nt} observations leave no within degrees of freedom")));
    }
    let dof = nt - n - k;
    let sigma2 = ls.ssr / dof as f64;
    let names: Vec<String> = spec.terms.iter().map(|t| t.label()).collect();
    let (slopes, slope_cov) = slope_coefficients(&names, &ls, sigma2, 0);
    let beta = &ls.coef;

    let mut unit_intercepts = BTreeMap::new();
    let mut residuals = Vec::with_capacity(nt);
    let mut y_all = Vec::with_capacity(nt);
    let mut xb_all = Vec::with_capacity(nt);
    for u in &units {
        let (ybar, xbar) = u.means(k);
        let alpha = ybar - dot(&xbar, beta);
        unit_intercepts.insert(u.unit.clone(), alpha);
        for ((q, y), x) in u.quarters.iter().zip(&u.y).zip(&u.x) {
            let xb = dot(x, beta);
            residuals.push(PanelResidual { unit: u.unit.clone(), quarter: *q, value: y - alpha - xb });
            y_all.push(*y);
            xb_all.push(xb);
        }
    }
    let fitted_within: Vec<f64> = xtilde.iter().map(|x| dot(x, beta)).collect();
    let intercept = unit_intercepts.values().sum::<f64>() / n as f64;
    Ok(PanelFit {
        method: PanelMethod::Fixed,
        spec: spec.clone(),
        intercept,
        slopes,
        slope_covariance: slope_cov,
        unit_intercepts,
        sigma2_e: sigma2,
        sigma2_u: None,
        theta: None,
        r_squared_within: squared_corr(&ytilde, &fitted_within),
        r_squared_overall: squared_corr(&y_all, &xb_all),
        log_likelihood: -0.5 * nt as f64 * ((2.0 * std::f64::consts::PI * ls.ssr / nt as f64).ln() + 1.0),
        n_obs: nt,
        n_units: n,
        dof,
        residuals,
        warnings: Vec::new(),
    })
}

/// Variance components of the Swamy-Arora estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceComponents {
    pub sigma2_e: f64,
    pub sigma2_u: f64,
    pub periods: usize,
    /// True when the between-regression estimate was negative and set to 0.
    pub truncated: bool,
}

impl VarianceComponents {
    pub fn theta(&self) -> f64 {
        let denom = self.sigma2_e + self.periods as f64 * self.sigma2_u;
        if denom <= 0.0 {
            return 0.0;
        }
        (1.0 - (self.sigma2_e / denom).sqrt()).clamp(0.0, 1.0)
    }
}

fn require_balanced(units: &[UnitRows]) -> Result<usize> {
    let first = &units[0].quarters;
    for u in &units[1..] {
        if &u.quarters != first {
            return Err(Error::invalid(format!(
                "random effects needs a balanced panel; unit {} differs from {} in its usable quarters",
                u.unit, units[0].unit
            )));
        }
    }
    Ok(first.len())
}

/// Swamy-Arora components: `σ²_e` from the within regression, `σ²_u` from
/// the between regression of unit means.
pub fn swamy_arora(panel: &PanelDataset, spec: &RegressionSpec) -> Result<VarianceComponents> {
    let within = within_regression(panel, spec)?;
    let t = require_balanced(&within.units)?;
    let k = spec.terms.len();
    let n = within.units.len();
    let nt = within.ytilde.len();
    if n <= k + 1 {
        return Err(Error::invalid(format!("between regression needs more than {} units, got {n}", k + 1)));
    }
    let sigma2_e = within.ls.ssr / (nt - n - k) as f64;
    let mut by = Vec::with_capacity(n);
    let mut bx = Vec::with_capacity(n);
    for u in &within.units {
        let (ybar, xbar) = u.means(k);
        by.push(ybar);
        bx.push(std::iter::once(1.0).chain(xbar).collect::<Vec<f64>>());
    }
    let mut names = vec!["const".to_string()];
    names.extend(spec.terms.iter().map(|t| t.label()));
    let between = linalg::least_squares_qr(&linalg::design(&bx, k + 1), &by, &names, None)?;
    let sigma2_b = between.ssr / (n - k - 1) as f64;
    let raw = sigma2_b - sigma2_e / t as f64;
    Ok(VarianceComponents { sigma2_e, sigma2_u: raw.max(0.0), periods: t, truncated: raw < 0.0 })
}

/// Random effects by Swamy-Arora feasible GLS. A negative `σ²_u` estimate
/// is truncated at 0 and reported in `warnings`.
pub fn fit_random_effects(panel: &PanelDataset, spec: &RegressionSpec) -> Result<PanelFit> {
    let vc = swamy_arora(panel, spec)?;
    let mut fit = fit_quasi_demeaned(panel, spec, vc)?;
    if vc.truncated {
        let msg = "negative between-unit variance estimate truncated at 0".to_string();
        log::warn!("{msg}");
        fit.warnings.push(msg);
    }
    Ok(fit)
}

/// GLS on quasi-demeaned data `y - θ·ȳ_i` for given variance components.
/// `σ²_u = 0` gives pooled OLS; θ → 1 approaches the within estimator.
pub fn fit_quasi_demeaned(panel: &PanelDataset, spec: &RegressionSpec, vc: VarianceComponents) -> Result<PanelFit> {
    let units = unit_rows(panel, spec)?;
    require_balanced(&units)?;
    let k = spec.terms.len();
    let n = units.len();
    let theta = vc.theta();
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    let mut raw_norms = vec![0.0; k + 1];
    let mut means = Vec::with_capacity(n);
    for u in &units {
        let (ybar, xbar) = u.means(k);
        for (y, x) in u.y.iter().zip(&u.x) {
            ys.push(y - theta * ybar);
            let mut row = vec![1.0 - theta];
            row.extend(x.iter().zip(&xbar).map(|(a, b)| a - theta * b));
            raw_norms[0] += 1.0;
            for j in 0..k {
                raw_norms[j + 1] += x[j] * x[j];
            }
            xs.push(row);
        }
        means.push((ybar, xbar));
    }
    let raw_norms: Vec<f64> = raw_norms.iter().map(|v| v.sqrt()).collect();
    let mut names = vec!["const".to_string()];
    names.extend(spec.terms.iter().map(|t| t.label()));
    let ls = linalg::least_squares_qr(&linalg::design(&xs, k + 1), &ys, &names, Some(&raw_norms))?;
    let nt = ys.len();
    let t = vc.periods;
    let sigma2 = if vc.sigma2_e > 0.0 { vc.sigma2_e } else { ls.ssr / (nt - k - 1) as f64 };
    let (slopes, slope_cov) = slope_coefficients(&names[1..], &ls, sigma2, 1);
    let intercept = ls.coef[0];
    let beta = &ls.coef[1..];

    // Predicted unit effects from mean composite residuals.
    let shrink = if vc.sigma2_u > 0.0 { t as f64 * vc.sigma2_u / (t as f64 * vc.sigma2_u + vc.sigma2_e) } else { 0.0 };
    let mut unit_intercepts = BTreeMap::new();
    let mut residuals = Vec::with_capacity(nt);
    let (mut y_all, mut xb_all, mut yw, mut xbw) = (vec![], vec![], vec![], vec![]);
    for (u, (ybar, xbar)) in units.iter().zip(&means) {
        let mean_resid = ybar - intercept - dot(xbar, beta);
        unit_intercepts.insert(u.unit.clone(), intercept + shrink * mean_resid);
        for ((q, y), x) in u.quarters.iter().zip(&u.y).zip(&u.x) {
            let xb = dot(x, beta);
            residuals.push(PanelResidual { unit: u.unit.clone(), quarter: *q, value: y - intercept - xb });
            y_all.push(*y);
            xb_all.push(xb);
            yw.push(y - ybar);
            xbw.push(xb - dot(xbar, beta));
        }
    }

    // Exact Gaussian log-likelihood of the balanced one-way error components model.
    let s2e = sigma2;
    let s2_1 = s2e + t as f64 * vc.sigma2_u;
    let log_det = (t as f64 - 1.0) * s2e.ln() + s2_1.ln();
    let quad = ls.ssr / s2e;
    let log_likelihood = -0.5 * (nt as f64 * (2.0 * std::f64::consts::PI).ln() + n as f64 * log_det + quad);

    Ok(PanelFit {
        method: PanelMethod::Random,
        spec: spec.clone(),
        intercept,
        slopes,
        slope_covariance: slope_cov,
        unit_intercepts,
        sigma2_e: s2e,
        sigma2_u: Some(vc.sigma2_u),
        theta: Some(theta),
        r_squared_within: squared_corr(&yw, &xbw),
        r_squared_overall: squared_corr(&y_all, &xb_all),
        log_likelihood,
        n_obs: nt,
        n_units: n,
        dof: nt - k - 1,
        residuals,
        warnings: Vec::new(),
    })
}

/// Hausman test of a fixed-effects fit against a random-effects fit on the
/// common slopes.
pub fn panel_hausman(fe: &PanelFit, re: &PanelFit) -> Result<TestResult> {
    hausman_test(&fe.slope_estimates(), &fe.slope_covariance, &re.slope_estimates(), &re.slope_covariance)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelForecast {
    pub forecasts: BTreeMap<String, Forecast>,
    pub warnings: Vec<String>,
}

/// Unit intercept plus common slopes for every unit in `panel` over `span`.
/// Units unseen in estimation use the average intercept.
pub fn forecast_panel(fit: &PanelFit, panel: &PanelDataset, span: QuarterSpan) -> Result<PanelForecast> {
    let cols: Vec<(usize, usize, &str)> = fit
        .spec
        .terms
        .iter()
        .map(|t| Ok((panel.var_index(&t.name)?, t.lag, t.name.as_str())))
        .collect::<Result<_>>()?;
    let beta = fit.slope_estimates();
    let mut forecasts = BTreeMap::new();
    let mut warnings = Vec::new();
    for (unit, rows) in &panel.rows {
        let alpha = match fit.unit_intercepts.get(unit) {
            Some(a) => *a,
            None => {
                let msg = format!("unit {unit} was not in the estimation sample; using the average intercept");
                log::warn!("{msg}");
                warnings.push(msg);
                fit.intercept
            }
        };
        let mut values = Vec::with_capacity(span.len());
        for q in span.iter() {
            let mut pred = alpha;
            for (&(j, lag, name), b) in cols.iter().zip(&beta) {
                let at = q.offset(-(lag as i64));
                let v = rows.get(&at).and_then(|r| r[j]).ok_or_else(|| {
                    Error::invalid(format!("unit {unit}, quarter {q}: variable {name:?} missing at {at}"))
                })?;
                pred += b * v;
            }
            values.push(pred);
        }
        forecasts.insert(
            unit.clone(),
            Forecast {
                origin: span.start.offset(-1),
                horizon: span.len(),
                point_values: values,
                mode: ForecastMode::Dynamic,
            },
        );
    }
    Ok(PanelForecast { forecasts, warnings })
}
