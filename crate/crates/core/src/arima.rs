//! ARIMA(p,d,q) estimation by conditional sum of squares, AIC order
//! selection and static/dynamic forecasting.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{acf_values, difference, difference_weights, pacf, QuarterIndex, TimeSeries};

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub include_constant: bool,
}

impl ArimaSpec {
    pub fn new(p: usize, d: usize, q: usize, include_constant: bool) -> Result<Self> {
        if p + q + usize::from(include_constant) == 0 && d == 0 {
            return Err(Error::invalid("ARIMA(0,0,0) without a constant has nothing to estimate"));
        }
        Ok(Self { p, d, q, include_constant })
    }

    fn n_params(&self) -> usize {
        self.p + self.q + usize::from(self.include_constant)
    }
}

impl fmt::Display for ArimaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ARIMA({},{},{})", self.p, self.d, self.q)?;
        if self.include_constant {
            f.write_str("+c")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArimaFit {
    pub spec: ArimaSpec,
    pub constant: f64,
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    pub sigma2: f64,
    pub log_likelihood: f64,
    pub adj_r_squared: f64,
    #[serde(skip)]
    pub residuals: TimeSeries,
    pub converged: bool,
    pub iterations: usize,
    pub notes: Vec<String>,
}

impl ArimaFit {
    pub fn aic(&self) -> f64 {
        -2.0 * self.log_likelihood + 2.0 * (self.spec.p + self.spec.q + 1) as f64
    }

    /// Mean of the differenced process, `c / (1 - Σα)`.
    pub fn process_mean(&self) -> Option<f64> {
        let denom = 1.0 - self.ar_coeffs.iter().sum::<f64>();
        (denom.abs() > 1e-12).then(|| self.constant / denom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forecast {
    /// Last observed quarter; the first prediction is for `origin.succ()`.
    pub origin: QuarterIndex,
    pub horizon: usize,
    pub point_values: Vec<f64>,
    pub mode: ForecastMode,
}

impl Forecast {
    pub fn quarters(&self) -> impl Iterator<Item = QuarterIndex> + '_ {
        (1..=self.horizon as i64).map(|h| self.origin.offset(h))
    }

    pub fn to_series(&self, name: &str) -> Result<TimeSeries> {
        TimeSeries::from_values(name, self.origin.succ(), self.point_values.clone())
    }
}

/// Parameter vector layout: `[c?, α_1..α_p, θ_1..θ_q]`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    constant: bool,
    p: usize,
    q: usize,
}

impl Layout {
    fn of(spec: &ArimaSpec) -> Self {
        Self { constant: spec.include_constant, p: spec.p, q: spec.q }
    }

    fn len(&self) -> usize {
        usize::from(self.constant) + self.p + self.q
    }

    fn split<'a>(&self, params: &'a [f64]) -> (f64, &'a [f64], &'a [f64]) {
        let off = usize::from(self.constant);
        let c = if self.constant { params[0] } else { 0.0 };
        (c, &params[off..off + self.p], &params[off + self.p..])
    }
}

/// Innovations of the CSS recursion: zero before `start`, then
/// `e_t = w_t - c - Σα_i w_{t-i} - Σθ_j e_{t-j}`.
fn innovations(w: &[f64], c: f64, ar: &[f64], ma: &[f64], start: usize) -> Vec<f64> {
    let mut e = vec![0.0; w.len()];
    for t in start..w.len() {
        let mut v = w[t] - c;
        for (i, a) in ar.iter().enumerate() {
            v -= a * w[t - 1 - i];
        }
        for (j, th) in ma.iter().enumerate() {
            if t > j {
                v -= th * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

/// Objective `0.5 ln(SSR / n)` and its gradient.
fn css_objective(w: &[f64], layout: Layout, start: usize, params: &[f64]) -> (f64, Vec<f64>) {
    let (c, ar, ma) = layout.split(params);
    let e = innovations(w, c, ar, ma, start);
    let k = layout.len();
    let n = w.len();
    // de[t][i] = ∂e_t / ∂param_i
    let mut de = vec![vec![0.0; k]; n];
    let off = usize::from(layout.constant);
    for t in start..n {
        let mut row = vec![0.0; k];
        if layout.constant {
            row[0] = -1.0;
        }
        for i in 0..layout.p {
            row[off + i] = -w[t - 1 - i];
        }
        for j in 0..layout.q {
            if t > j {
                row[off + layout.p + j] -= e[t - 1 - j];
            }
        }
        for (j, th) in ma.iter().enumerate() {
            if t > j {
                for (r, d) in row.iter_mut().zip(&de[t - 1 - j]) {
                    *r -= th * d;
                }
            }
        }
        de[t] = row;
    }
    let ssr: f64 = e[start..].iter().map(|v| v * v).sum();
    let neff = (n - start) as f64;
    let ssr = ssr.max(f64::MIN_POSITIVE);
    let mut grad = vec![0.0; k];
    for t in start..n {
        for (g, d) in grad.iter_mut().zip(&de[t]) {
            *g += e[t] * d;
        }
    }
    for g in &mut grad {
        *g /= ssr;
    }
    (0.5 * (ssr / neff).ln(), grad)
}

struct Minimum {
    x: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// BFGS with Armijo backtracking on the inverse-Hessian approximation.
fn bfgs<F: Fn(&[f64]) -> (f64, Vec<f64>)>(f: F, x0: Vec<f64>) -> Minimum {
    let k = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    if k == 0 {
        return Minimum { x, converged: true, iterations: 0 };
    }
    let identity = |k: usize| {
        let mut h = vec![vec![0.0; k]; k];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        h
    };
    let mut h = identity(k);
    for iter in 0..MAX_ITER {
        if !fx.is_finite() {
            break;
        }
        if inf_norm(&g) < GRAD_TOL {
            return Minimum { x, converged: true, iterations: iter };
        }
        let mut dir: Vec<f64> = h.iter().map(|row| -row.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            h = identity(k);
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn, gn)) = accepted else {
            // No decrease possible at machine precision.
            let converged = inf_norm(&g) < GRAD_TOL;
            return Minimum { x, converged, iterations: iter };
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-300 {
            let hy: Vec<f64> = h.iter().map(|row| row.iter().zip(&yv).map(|(a, b)| a * b).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..k {
                for j in 0..k {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = xn;
        fx = fxn;
        g = gn;
    }
    let converged = fx.is_finite() && inf_norm(&g) < GRAD_TOL;
    Minimum { x, converged, iterations: MAX_ITER }
}

/// Roots of `c_0 + c_1 z + ... + c_n z^n` by Durand-Kerner iteration.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let mut deg = coeffs.len().saturating_sub(1);
    while deg > 0 && coeffs[deg].abs() < 1e-14 {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let monic: Vec<f64> = coeffs[..=deg].iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| monic.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
    let radius = 1.0 + monic[..deg].iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..deg).map(|i| seed.powu(i as u32) * radius * 0.5).collect();
    for _ in 0..1000 {
        let mut delta = 0.0f64;
        for i in 0..deg {
            let zi = roots[i];
            let denom = roots
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, (_, zj)| acc * (zi - zj));
            if denom.norm() == 0.0 {
                continue;
            }
            let step = eval(zi) / denom;
            roots[i] = zi - step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-14 {
            break;
        }
    }
    roots
}

/// `Π (1 - z / r_i)` expanded to real coefficients `[1, a_1, ..]`.
fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let inv = -1.0 / r;
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] += c * inv;
        }
        coeffs = next;
    }
    coeffs.iter().map(|c| c.re).collect()
}

/// True when all roots of `1 - Σ α_i z^i` lie outside the unit circle.
pub fn is_stationary(ar: &[f64]) -> bool {
    let mut poly = vec![1.0];
    poly.extend(ar.iter().map(|a| -a));
    poly_roots(&poly).iter().all(|r| r.norm() > 1.0 + 1e-10)
}

/// True when all roots of `1 + Σ θ_j z^j` lie outside the unit circle.
pub fn is_invertible(ma: &[f64]) -> bool {
    let mut poly = vec![1.0];
    poly.extend_from_slice(ma);
    poly_roots(&poly).iter().all(|r| r.norm() > 1.0 + 1e-10)
}

/// Reflects MA roots inside the unit circle to their reciprocals.
fn reflect_ma(ma: &[f64]) -> Vec<f64> {
    let mut poly = vec![1.0];
    poly.extend_from_slice(ma);
    let roots: Vec<Complex64> =
        poly_roots(&poly).into_iter().map(|r| if r.norm() < 1.0 { 1.0 / r.conj() } else { r }).collect();
    let mut out = poly_from_roots(&roots);
    out.remove(0);
    out.resize(ma.len(), 0.0);
    out
}

/// OLS of `w_t` on `[1?, w_{t-1}..w_{t-p}]` for the starting AR values.
fn ar_start(w: &[f64], layout: Layout, start: usize) -> Vec<f64> {
    let mut params = vec![0.0; layout.len()];
    let ncols = usize::from(layout.constant) + layout.p;
    if ncols == 0 {
        return params;
    }
    let rows: Vec<Vec<f64>> = (start..w.len())
        .map(|t| {
            let mut row = Vec::with_capacity(ncols);
            if layout.constant {
                row.push(1.0);
            }
            row.extend((1..=layout.p).map(|i| w[t - i]));
            row
        })
        .collect();
    let y: Vec<f64> = w[start..].to_vec();
    if let Ok(ls) = crate::linalg::least_squares_pinv(&crate::linalg::design(&rows, ncols), &y) {
        params[..ncols].copy_from_slice(&ls.coef);
    }
    params
}

/// Fits an ARIMA model by conditional least squares.
pub fn fit_arima(series: &TimeSeries, spec: ArimaSpec) -> Result<ArimaFit> {
    fit_arima_conditioned(series, spec, spec.p)
}

/// CSS fit conditioning on the first `condition` differenced observations
/// (at least `p`), so fits of different orders can share a sample.
fn fit_arima_conditioned(series: &TimeSeries, spec: ArimaSpec, condition: usize) -> Result<ArimaFit> {
    let spec = ArimaSpec::new(spec.p, spec.d, spec.q, spec.include_constant)?;
    let y = series.dense()?;
    if y.len() <= spec.d {
        return Err(Error::invalid(format!("{spec} needs more than {} observations", spec.d)));
    }
    let wseries = difference(series, spec.d)?;
    let w = wseries.dense()?;
    if w.len() < spec.p + spec.q + 5 || w.len() < condition + 2 {
        return Err(Error::invalid(format!(
            "{spec} needs at least {} differenced observations, got {}",
            (spec.p + spec.q + 5).max(condition + 2),
            w.len()
        )));
    }
    let start = condition.max(spec.p);
    let layout = Layout::of(&spec);
    let objective = |x: &[f64]| css_objective(&w, layout, start, x);

    let mut notes = Vec::new();
    let mut min = bfgs(objective, ar_start(&w, layout, start));
    let off = usize::from(layout.constant) + layout.p;
    if spec.q > 0 && !is_invertible(&min.x[off..]) {
        let reflected = reflect_ma(&min.x[off..]);
        min.x[off..].copy_from_slice(&reflected);
        let polished = bfgs(objective, min.x.clone());
        let iterations = min.iterations + polished.iterations;
        min = Minimum { iterations, ..polished };
        if !is_invertible(&min.x[off..]) {
            let reflected = reflect_ma(&min.x[off..]);
            min.x[off..].copy_from_slice(&reflected);
            min.converged = false;
            notes.push("MA polynomial reflected into the invertible region".to_string());
        } else {
            notes.push("MA start reflected into the invertible region and re-optimised".to_string());
        }
    }

    let (c, ar, ma) = layout.split(&min.x);
    let (c, ar, ma) = (c, ar.to_vec(), ma.to_vec());
    let mut converged = min.converged;
    if !converged {
        notes.push(format!(
            "optimiser stopped after {} iterations without meeting the gradient tolerance",
            min.iterations
        ));
    }
    if spec.p > 0 && !is_stationary(&ar) {
        converged = false;
        notes.push("AR polynomial has a root on or inside the unit circle".to_string());
    }

    let e = innovations(&w, c, &ar, &ma, start);
    let resid = &e[start..];
    let neff = resid.len() as f64;
    let ssr: f64 = resid.iter().map(|v| v * v).sum();
    let sigma2 = ssr / neff;
    if sigma2 <= 0.0 {
        return Err(Error::degenerate(format!("{spec} fits the series exactly")));
    }
    let log_likelihood = -0.5 * neff * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);

    // One-step fitted values on the original scale share the innovations.
    let level_offset = spec.d + start;
    let levels = &y[level_offset..];
    let mean = levels.iter().sum::<f64>() / neff;
    let sst: f64 = levels.iter().map(|v| (v - mean).powi(2)).sum();
    let k = spec.n_params() as f64;
    let adj_r_squared =
        if sst > 0.0 && neff - k > 0.0 { 1.0 - (ssr / (neff - k)) / (sst / (neff - 1.0)) } else { f64::NAN };

    let residuals =
        TimeSeries::from_values(format!("{}_residual", series.name()), wseries.quarter_at(start), resid.to_vec())?;
    Ok(ArimaFit {
        spec,
        constant: c,
        ar_coeffs: ar,
        ma_coeffs: ma,
        sigma2,
        log_likelihood,
        adj_r_squared,
        residuals,
        converged,
        iterations: min.iterations,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderCandidate {
    pub p: usize,
    pub q: usize,
    pub aic: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderSelection {
    pub spec: ArimaSpec,
    pub candidates: Vec<OrderCandidate>,
    /// ACF/PACF cutoff reading: leading significant lags at the 95% band.
    pub heuristic: String,
}

fn leading_significant(values: &[f64], band: f64) -> usize {
    values[1..].iter().take_while(|v| v.abs() > band).count()
}

/// Order identification for an already stationary series.
///
/// A series whose Ljung-Box test does not reject whiteness at 5% is
/// identified as `(0, 0)`. Otherwise the ACF and PACF cutoffs (leading lags
/// outside the ±1.96/√n band) bound the candidate orders; within that grid the minimum-AIC model wins, ties
/// going to smaller `p + q`, then smaller `p`. Every candidate is fitted with
/// a constant on a common conditioning sample.
pub fn select_orders(series: &TimeSeries, max_p: usize, max_q: usize) -> Result<OrderSelection> {
    if max_p > 5 || max_q > 5 {
        return Err(Error::invalid(format!("order search is limited to 5, got max_p={max_p}, max_q={max_q}")));
    }
    let x = series.dense()?;
    let n = x.len();
    let max_lag = 10.min(n / 4).max(1);
    let band = 1.96 / (n as f64).sqrt();
    let r = acf_values(&x, max_lag)?;
    let pc = pacf(series, max_lag)?;
    let acf_cut = leading_significant(&r, band);
    let pacf_cut = leading_significant(&pc, band);
    let whiteness = crate::stat_tests::ljung_box(series, max_lag)?;
    let white = whiteness.p_value >= 0.05;
    let (grid_p, grid_q) = if white { (0, 0) } else { (max_p.min(pacf_cut), max_q.min(acf_cut)) };
    let heuristic = format!(
        "Ljung-Box Q={:.4} p={:.4} ({max_lag} lags){}; ACF cuts off after lag {acf_cut}, \
         PACF after lag {pacf_cut} (band ±{band:.4}); AIC grid p<={grid_p}, q<={grid_q}",
        whiteness.statistic,
        whiteness.p_value,
        if white { ", white noise not rejected" } else { "" },
    );

    let mut candidates = Vec::new();
    let mut best: Option<(f64, usize, usize)> = None;
    for p in 0..=grid_p {
        for q in 0..=grid_q {
            let fit = fit_arima_conditioned(series, ArimaSpec::new(p, 0, q, true)?, grid_p)?;
            let aic = fit.aic();
            candidates.push(OrderCandidate { p, q, aic, converged: fit.converged });
            let better = match best {
                None => true,
                Some((b, bp, bq)) => aic < b - 1e-9 || ((aic - b).abs() <= 1e-9 && (p + q, p) < (bp + bq, bp)),
            };
            if better && aic.is_finite() {
                best = Some((aic, p, q));
            }
        }
    }
    let (_, p, q) = best.ok_or_else(|| Error::degenerate("no candidate order produced a finite AIC"))?;
    Ok(OrderSelection { spec: ArimaSpec::new(p, 0, q, true)?, candidates, heuristic })
}

/// Forecasts `horizon` quarters past the end of `history`.
///
/// Dynamic mode feeds predictions back as lagged values. Static mode uses
/// `actuals` for the lags whenever the quarter is observed there, so each
/// step is a one-step-ahead forecast.
pub fn forecast_arima(
    fit: &ArimaFit,
    history: &TimeSeries,
    horizon: usize,
    mode: ForecastMode,
    actuals: Option<&TimeSeries>,
) -> Result<Forecast> {
    if horizon == 0 {
        return Err(Error::invalid("forecast horizon must be at least 1"));
    }
    let spec = fit.spec;
    let mut y = history.dense()?;
    if y.len() < (spec.d + spec.p).max(1) {
        return Err(Error::invalid(format!(
            "{spec} needs at least {} history values to forecast, got {}",
            (spec.d + spec.p).max(1),
            y.len()
        )));
    }
    let weights = difference_weights(spec.d);
    let origin = history.end();
    let mut out = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        let n = y.len();
        let w: Vec<f64> = (spec.d..n).map(|t| weights.iter().enumerate().map(|(j, c)| c * y[t - j]).sum()).collect();
        let e = innovations(&w, fit.constant, &fit.ar_coeffs, &fit.ma_coeffs, spec.p);
        let m = w.len();
        let mut next_w = fit.constant;
        for (i, a) in fit.ar_coeffs.iter().enumerate() {
            next_w += a * w[m - 1 - i];
        }
        for (j, th) in fit.ma_coeffs.iter().enumerate() {
            if m > j {
                next_w += th * e[m - 1 - j];
            }
        }
        let level = next_w - weights[1..].iter().enumerate().map(|(j, c)| c * y[n - 1 - j]).sum::<f64>();
        out.push(level);
        let observed = match mode {
            ForecastMode::Static => actuals.and_then(|a| a.get(origin.offset(h as i64))),
            ForecastMode::Dynamic => None,
        };
        y.push(observed.unwrap_or(level));
    }
    Ok(Forecast { origin, horizon, point_values: out, mode })
}
