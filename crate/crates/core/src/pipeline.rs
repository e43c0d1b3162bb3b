//! Batch stages driven by a JSON configuration: detection, signal
//! aggregation, decomposition, diagnostics, model fitting/forecasting and
//! detector evaluation. Every stage writes its outputs under `output_dir`
//! and is deterministic for a given configuration and seed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arima::{fit_arima, forecast_arima, select_orders, ArimaFit, ArimaSpec, ForecastMode, OrderSelection};
use crate::detector::{classify_corpus, evaluate, train_baseline, BaselineModel, Metrics, Split};
use crate::error::{Error, Result};
use crate::evaluation::{compare_models, ForecastReport, Holdout, ModelPredictions};
use crate::event_signals::{
    aggregate_by_state, aggregate_quarterly, read_articles_jsonl, write_articles_jsonl, write_signals_csv,
    write_state_signals_csv, ArticleRecord, QuarterlySignals, StateSignals,
};
use crate::geo::{load_gazetteer_path, resolve_state, Gazetteer};
use crate::panel::{
    balance_panel, fit_fixed_effects, fit_random_effects, forecast_panel, panel_hausman, panel_model_spec,
    BalanceReport, PanelDataset, PanelFit, PanelMethod,
};
use crate::regression::{
    build_model_spec, fit_ols, forecast_regression, Coefficient, Dataset, RegressionFit, DEPENDENT,
};
use crate::series::{
    acf, decompose_additive, difference, pacf, read_series_csv, write_decomposition_csv, write_series_csv,
    DecompositionResult, QuarterSpan, TimeSeries,
};
use crate::stat_tests::{
    adf_test, cohens_kappa, durbin_watson, levene_test, ljung_box, paired_t_test, Deterministic, TestResult,
};

pub const LABELED_ARTICLES: &str = "labeled_articles.jsonl";
pub const SIGNAL_NAMES: [&str; 3] = ["news_num", "event_detected_num", "hate_reported_index"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub articles: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub fbi_series: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub detector_model: Option<PathBuf>,
    pub output_dir: PathBuf,
}

/// How Model 1 is read when no explicit ARIMA spec is given: a random walk
/// with drift on the differenced series, or AR(1) in levels with intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Model1Reading {
    #[default]
    Drift,
    Ar1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetectorSource {
    /// Bag-of-words model, loaded from `paths.detector_model` or trained.
    #[default]
    Baseline,
    /// Articles already carry `predicted_label`.
    Precomputed,
}

fn default_models() -> Vec<u8> {
    vec![1, 2, 3, 4, 5]
}
fn default_max_order() -> usize {
    3
}
fn default_coverage() -> f64 {
    1.0
}
fn default_panel_dependent() -> String {
    "hate_crimes".to_string()
}
fn default_split() -> (f64, f64) {
    (0.7, 0.15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub fit_range: QuarterSpan,
    pub holdout_range: QuarterSpan,
    #[serde(default = "default_models")]
    pub models: Vec<u8>,
    /// Explicit Model 1 spec; `None` selects orders automatically.
    #[serde(default)]
    pub arima: Option<ArimaSpec>,
    #[serde(default = "default_max_order")]
    pub arima_max_order: usize,
    #[serde(default)]
    pub model1_reading: Model1Reading,
    #[serde(default)]
    pub detector: DetectorSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_coverage")]
    pub panel_min_coverage: f64,
    #[serde(default = "default_panel_dependent")]
    pub panel_dependent: String,
    /// Train and validation fractions for the baseline detector.
    #[serde(default = "default_split")]
    pub detector_split: (f64, f64),
}

impl PipelineConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_relative(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.articles,
            &mut paths.gazetteer,
            &mut paths.covariates,
            &mut paths.fbi_series,
            &mut paths.panel,
            &mut paths.detector_model,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut paths.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.holdout_range.start <= self.fit_range.end {
            return Err(Error::config(format!(
                "holdout {} must start after the fit range {}",
                self.holdout_range, self.fit_range
            )));
        }
        let mut seen = Vec::new();
        for &m in &self.models {
            if !(1..=7).contains(&m) {
                return Err(Error::config(format!("unknown model {m}; models are 1 to 7")));
            }
            if seen.contains(&m) {
                return Err(Error::config(format!("model {m} listed twice")));
            }
            seen.push(m);
        }
        if !(0.0..=1.0).contains(&self.panel_min_coverage) {
            return Err(Error::config("panel_min_coverage must lie in [0, 1]"));
        }
        if self.arima_max_order > 5 {
            return Err(Error::config("arima_max_order must be at most 5"));
        }
        if let Some(spec) = self.arima {
            ArimaSpec::new(spec.p, spec.d, spec.q, spec.include_constant).map_err(|e| Error::config(e.to_string()))?;
        }
        let (tr, va) = self.detector_split;
        if !(tr > 0.0 && va > 0.0 && tr + va <= 1.0) {
            return Err(Error::config("detector_split fractions must be positive and sum to at most 1"));
        }
        let p = &self.paths;
        for path in
            [&p.articles, &p.gazetteer, &p.covariates, &p.fbi_series, &p.panel, &p.detector_model].into_iter().flatten()
        {
            if !path.exists() {
                return Err(Error::config(format!("{}: file not found", path.display())));
            }
        }
        Ok(())
    }

    /// Fit start through holdout end.
    pub fn full_span(&self) -> QuarterSpan {
        QuarterSpan { start: self.fit_range.start, end: self.holdout_range.end }
    }

    fn require<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        path.as_deref().ok_or_else(|| Error::config(format!("paths.{what} is required for this command")))
    }

    fn output(&self, name: &str) -> PathBuf {
        self.paths.output_dir.join(name)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn read_articles(path: &Path) -> Result<Vec<ArticleRecord>> {
    read_articles_jsonl(open(path)?).map_err(|e| match e {
        Error::Parse { context, message } => {
            Error::Parse { context: format!("{}: {context}", path.display()), message }
        }
        other => other,
    })
}

// ---------------------------------------------------------------- detect

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectSummary {
    pub records: usize,
    pub positives: usize,
    pub negatives: usize,
    pub detector: DetectorSource,
    pub threshold: Option<f64>,
    pub states_resolved: usize,
    pub unknown_states: usize,
    /// Resolver agreement with annotated states, where present.
    pub state_kappa: Option<f64>,
}

/// Labels records with the configured detector and resolves states with the
/// gazetteer (records that already carry a state keep it).
pub fn detect_records(
    cfg: &PipelineConfig,
    mut records: Vec<ArticleRecord>,
) -> Result<(Vec<ArticleRecord>, DetectSummary)> {
    let mut threshold = None;
    match cfg.detector {
        DetectorSource::Precomputed => {
            if let Some(r) = records.iter().find(|r| r.predicted_label.is_none()) {
                return Err(Error::parse(
                    "articles",
                    format!("record {:?} has no predicted_label but the detector is precomputed", r.id),
                ));
            }
        }
        DetectorSource::Baseline => {
            let model = match &cfg.paths.detector_model {
                Some(path) => BaselineModel::read_json(open(path)?)?,
                None => {
                    let (tr, va) = cfg.detector_split;
                    let (model, _) =
                        train_baseline(&records, &Split::Fractions { train: tr, validation: va }, cfg.seed)?;
                    write_with(&cfg.output("detector_model.json"), |w| model.write_json(w))?;
                    model
                }
            };
            threshold = Some(model.threshold);
            records = classify_corpus(&model, &records);
        }
    }
    let mut resolved = 0;
    if let Some(path) = &cfg.paths.gazetteer {
        let (gaz, _) = load_gazetteer_path(path)?;
        for r in records.iter_mut().filter(|r| r.state.is_none()) {
            r.state = Some(resolve_state(&r.text(), &gaz).state);
            resolved += 1;
        }
    }
    let positives = records.iter().filter(|r| r.predicted_label.is_some_and(|l| l.is_positive())).count();
    let unknown = records.iter().filter(|r| r.state.as_deref() == Some(crate::event_signals::UNKNOWN_STATE)).count();
    let summary = DetectSummary {
        records: records.len(),
        positives,
        negatives: records.len() - positives,
        detector: cfg.detector,
        threshold,
        states_resolved: resolved,
        unknown_states: unknown,
        state_kappa: state_agreement(&records)?,
    };
    Ok((records, summary))
}

/// Cohen's kappa between resolved and annotated states over records that
/// have both.
pub fn state_agreement(records: &[ArticleRecord]) -> Result<Option<f64>> {
    let (resolved, gold): (Vec<&str>, Vec<&str>) =
        records.iter().filter_map(|r| Some((r.state.as_deref()?, r.gold_state.as_deref()?))).unzip();
    if resolved.is_empty() {
        return Ok(None);
    }
    cohens_kappa(&resolved, &gold).map(Some)
}

pub fn run_detect(cfg: &PipelineConfig) -> Result<DetectSummary> {
    let records = read_articles(cfg.require(&cfg.paths.articles, "articles")?)?;
    let (labeled, summary) = detect_records(cfg, records)?;
    write_with(&cfg.output(LABELED_ARTICLES), |w| write_articles_jsonl(w, &labeled))?;
    write_json(&cfg.output("detection_summary.json"), &summary)?;
    log::info!("labeled {} records, {} positive", summary.records, summary.positives);
    Ok(summary)
}

// ---------------------------------------------------------------- signals

fn labeled_articles(cfg: &PipelineConfig) -> Result<Vec<ArticleRecord>> {
    let path = cfg.output(LABELED_ARTICLES);
    if !path.exists() {
        return Err(Error::config(format!("{} not found; run the detect command first", path.display())));
    }
    read_articles(&path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalsSummary {
    pub span: QuarterSpan,
    pub records: usize,
    pub states: usize,
    pub unknown_share: Option<f64>,
    pub empty_quarters: Vec<String>,
    pub reconciled: bool,
}

/// National and (when every record has a state) per-state signals over the
/// configured fit-through-holdout span.
pub fn signals_for(
    cfg: &PipelineConfig,
    records: &[ArticleRecord],
) -> Result<(QuarterlySignals, Option<StateSignals>)> {
    let span = Some(cfg.full_span());
    if records.iter().all(|r| r.state.is_some()) {
        let s = aggregate_by_state(records, span)?;
        Ok((s.national.clone(), Some(s)))
    } else {
        log::warn!("some records have no state; per-state signals skipped");
        Ok((aggregate_quarterly(records, span)?, None))
    }
}

fn reconciles(state: &StateSignals, records: &[ArticleRecord]) -> bool {
    state.national.rows.iter().all(|row| {
        let states: u64 = state.states.values().filter_map(|s| s.get(row.quarter)).map(|r| r.news_num).sum();
        let unknown = records
            .iter()
            .filter(|r| r.quarter() == row.quarter && r.state.as_deref() == Some(crate::event_signals::UNKNOWN_STATE))
            .count() as u64;
        states + unknown == row.news_num
    })
}

pub fn run_signals(cfg: &PipelineConfig) -> Result<SignalsSummary> {
    let records = labeled_articles(cfg)?;
    let national_path = cfg.output("signals_national.csv");
    let state_path = cfg.output("signals_state.csv");
    let span = cfg.full_span();
    if !records.iter().any(|r| span.contains(r.quarter())) {
        write_with(&national_path, |w| {
            w.write_all(b"year,quarter,news_num,event_detected_num,hate_reported_index\n")
                .map_err(|e| Error::io(&national_path, e))
        })?;
        write_with(&state_path, |w| {
            w.write_all(b"year,quarter,state,news_num,event_detected_num,hate_reported_index\n")
                .map_err(|e| Error::io(&state_path, e))
        })?;
        let summary = SignalsSummary {
            span,
            records: 0,
            states: 0,
            unknown_share: None,
            empty_quarters: Vec::new(),
            reconciled: true,
        };
        write_json(&cfg.output("signals_summary.json"), &summary)?;
        return Ok(summary);
    }
    let (national, by_state) = signals_for(cfg, &records)?;
    write_with(&national_path, |w| write_signals_csv(w, &national))?;
    let mut reconciled = true;
    if let Some(s) = &by_state {
        write_with(&state_path, |w| write_state_signals_csv(w, s))?;
        reconciled = reconciles(s, &records);
        if !reconciled {
            return Err(Error::degenerate("state and UNKNOWN counts do not add up to national totals"));
        }
    }
    let summary = SignalsSummary {
        span: national.span,
        records: records.iter().filter(|r| span.contains(r.quarter())).count(),
        states: by_state.as_ref().map_or(0, |s| s.states.len()),
        unknown_share: by_state.as_ref().map(|s| s.unknown_share),
        empty_quarters: national.empty_quarters().iter().map(ToString::to_string).collect(),
        reconciled,
    };
    write_json(&cfg.output("signals_summary.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- decompose

/// Decomposes the fit span and subtracts the tiled seasonal pattern from the
/// whole series, so holdout quarters are adjusted with fit-span seasonality.
pub fn deseasonalize_with_fit_pattern(
    series: &TimeSeries,
    fit_range: QuarterSpan,
) -> Result<(DecompositionResult, TimeSeries)> {
    let decomp = decompose_additive(&series.slice(fit_range)?, 4)?;
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v.map(|x| x - decomp.seasonal_at(series.quarter_at(i))))
        .collect();
    let adjusted = TimeSeries::new(DEPENDENT, series.start(), values)?;
    Ok((decomp, adjusted))
}

fn read_fbi(cfg: &PipelineConfig) -> Result<TimeSeries> {
    let path = cfg.require(&cfg.paths.fbi_series, "fbi_series")?;
    read_series_csv(open(path)?, "fbi_num")
}

pub fn run_decompose(cfg: &PipelineConfig) -> Result<DecompositionResult> {
    let fbi = read_fbi(cfg)?;
    let (decomp, adjusted) = deseasonalize_with_fit_pattern(&fbi, cfg.fit_range)?;
    write_with(&cfg.output("decomposition.csv"), |w| write_decomposition_csv(w, &decomp))?;
    write_with(&cfg.output("deseasonalized.csv"), |w| write_series_csv(w, &adjusted))?;
    Ok(decomp)
}

// ---------------------------------------------------------------- diagnose

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub series: String,
    pub span: QuarterSpan,
    pub adf_levels: TestResult,
    pub adf_differenced: TestResult,
    pub ljung_box_differenced: TestResult,
    pub acf_differenced: Vec<f64>,
    pub pacf_differenced: Vec<f64>,
    pub order_selection: OrderSelection,
}

fn adf_lags(n: usize) -> usize {
    let schwert = (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
    schwert.min(n.saturating_sub(12))
}

/// Unit-root and autocorrelation diagnostics of a series and its first
/// difference, plus ARIMA order selection on the difference.
pub fn diagnose_series(series: &TimeSeries, max_order: usize) -> Result<Diagnostics> {
    let diff = difference(series, 1)?;
    let n = diff.len();
    let max_lag = 8.min(n.saturating_sub(1));
    Ok(Diagnostics {
        series: series.name().to_string(),
        span: series.span(),
        adf_levels: adf_test(series, adf_lags(series.len()), Deterministic::ConstantTrend)?,
        adf_differenced: adf_test(&diff, adf_lags(n), Deterministic::Constant)?,
        ljung_box_differenced: ljung_box(&diff, 10.min(n / 4).max(1))?,
        acf_differenced: acf(&diff, max_lag)?,
        pacf_differenced: pacf(&diff, max_lag)?,
        order_selection: select_orders(&diff, max_order, max_order)?,
    })
}

pub fn run_diagnose(cfg: &PipelineConfig) -> Result<Diagnostics> {
    let fbi = read_fbi(cfg)?;
    let (_, adjusted) = deseasonalize_with_fit_pattern(&fbi, cfg.fit_range)?;
    let diag = diagnose_series(&adjusted.slice(cfg.fit_range)?, cfg.arima_max_order)?;
    write_json(&cfg.output("diagnostics.json"), &diag)?;
    Ok(diag)
}

// ---------------------------------------------------------------- fit-forecast

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

impl From<&Coefficient> for NamedEstimate {
    fn from(c: &Coefficient) -> Self {
        Self { name: c.name.clone(), estimate: c.estimate, std_error: Some(c.std_error) }
    }
}

/// Estimation summary of one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub kind: String,
    pub coefficients: Vec<NamedEstimate>,
    pub sigma2: f64,
    pub log_likelihood: f64,
    pub adj_r_squared: f64,
    pub durbin_watson: Option<f64>,
    pub n_used: usize,
    pub converged: bool,
    pub notes: Vec<String>,
}

fn arima_summary(name: &str, fit: &ArimaFit) -> Result<ModelSummary> {
    let mut coefficients = Vec::new();
    if fit.spec.include_constant {
        coefficients.push(NamedEstimate { name: "const".into(), estimate: fit.constant, std_error: None });
    }
    for (i, a) in fit.ar_coeffs.iter().enumerate() {
        coefficients.push(NamedEstimate { name: format!("ar{}", i + 1), estimate: *a, std_error: None });
    }
    for (i, t) in fit.ma_coeffs.iter().enumerate() {
        coefficients.push(NamedEstimate { name: format!("ma{}", i + 1), estimate: *t, std_error: None });
    }
    let resid = fit.residuals.dense()?;
    Ok(ModelSummary {
        model: name.to_string(),
        kind: fit.spec.to_string(),
        coefficients,
        sigma2: fit.sigma2,
        log_likelihood: fit.log_likelihood,
        adj_r_squared: fit.adj_r_squared,
        durbin_watson: durbin_watson(&resid).ok(),
        n_used: resid.len(),
        converged: fit.converged,
        notes: fit.notes.clone(),
    })
}

fn regression_summary(name: &str, fit: &RegressionFit) -> ModelSummary {
    let mut notes = Vec::new();
    if let Some(rho) = fit.ar_rho {
        notes.push(format!("AR(1) errors, rho = {rho}, {} Cochrane-Orcutt rounds", fit.iterations));
    }
    ModelSummary {
        model: name.to_string(),
        kind: if fit.ar_rho.is_some() { "OLS with AR(1) errors" } else { "OLS" }.to_string(),
        coefficients: fit.coefficients.iter().map(NamedEstimate::from).collect(),
        sigma2: fit.sigma2,
        log_likelihood: fit.log_likelihood,
        adj_r_squared: fit.adj_r_squared,
        durbin_watson: fit.durbin_watson.is_finite().then_some(fit.durbin_watson),
        n_used: fit.n_used,
        converged: fit.converged,
        notes,
    }
}

fn panel_summary(name: &str, fit: &PanelFit) -> ModelSummary {
    let mut coefficients = vec![NamedEstimate { name: "const".into(), estimate: fit.intercept, std_error: None }];
    coefficients.extend(fit.slopes.iter().map(NamedEstimate::from));
    let mut notes = fit.warnings.clone();
    if let Some(theta) = fit.theta {
        notes.push(format!("theta = {theta}"));
    }
    ModelSummary {
        model: name.to_string(),
        kind: match fit.method {
            PanelMethod::Fixed => "fixed effects",
            PanelMethod::Random => "random effects",
        }
        .to_string(),
        coefficients,
        sigma2: fit.sigma2_e,
        log_likelihood: fit.log_likelihood,
        adj_r_squared: panel_r_squared(fit),
        durbin_watson: None,
        n_used: fit.n_obs,
        converged: true,
        notes,
    }
}

/// R² shown in the report: within R² for fixed effects, overall for random.
fn panel_r_squared(fit: &PanelFit) -> f64 {
    match fit.method {
        PanelMethod::Fixed => fit.r_squared_within,
        PanelMethod::Random => fit.r_squared_overall,
    }
}

#[derive(Debug, Clone)]
pub struct NationalInputs<'a> {
    /// Must hold `fbi_num_noseasonnal` and the terms of the requested models.
    pub dataset: &'a Dataset,
    pub fit_range: QuarterSpan,
    pub holdout_range: QuarterSpan,
    pub models: &'a [u8],
    pub arima: Option<ArimaSpec>,
    pub arima_max_order: usize,
    pub model1_reading: Model1Reading,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NationalRun {
    pub report: ForecastReport,
    pub fits: Vec<ModelSummary>,
}

fn model1_spec(inputs: &NationalInputs, y: &TimeSeries) -> Result<ArimaSpec> {
    if let Some(spec) = inputs.arima {
        return Ok(spec);
    }
    match inputs.model1_reading {
        Model1Reading::Ar1 => ArimaSpec::new(1, 0, 0, true),
        Model1Reading::Drift => {
            let sel = select_orders(&difference(y, 1)?, inputs.arima_max_order, inputs.arima_max_order)?;
            ArimaSpec::new(sel.spec.p, 1, sel.spec.q, true)
        }
    }
}

/// Fits Models 1-5 on the fit range and forecasts the holdout.
pub fn national_models(inputs: &NationalInputs) -> Result<NationalRun> {
    let dep = inputs.dataset.series(DEPENDENT)?;
    let holdout = Holdout::national(&dep.slice(inputs.holdout_range)?)?;
    let train = inputs.dataset.slice(inputs.fit_range)?;
    let mut predictions = Vec::new();
    let mut fits = Vec::new();
    for &m in inputs.models.iter().filter(|m| (1..=5).contains(*m)) {
        let name = format!("Model {m}");
        if m == 1 {
            let y = dep.slice(inputs.fit_range)?;
            let spec = model1_spec(inputs, &y)?;
            let fit = fit_arima(&y, spec)?;
            let horizon = inputs.fit_range.end.quarters_until(inputs.holdout_range.end) as usize;
            let mut f = forecast_arima(&fit, &y, horizon, ForecastMode::Dynamic, None)?;
            let skip = horizon - inputs.holdout_range.len();
            f.point_values.drain(..skip);
            f.origin = inputs.holdout_range.start.offset(-1);
            f.horizon = inputs.holdout_range.len();
            predictions.push(ModelPredictions::from_forecast(&name, fit.adj_r_squared, fit.log_likelihood, &f));
            fits.push(arima_summary(&name, &fit)?);
        } else {
            let spec = build_model_spec(m)?;
            let fit = fit_ols(&train, &spec)?;
            let f = forecast_regression(&fit, inputs.dataset, inputs.holdout_range)?;
            predictions.push(ModelPredictions::from_forecast(&name, fit.adj_r_squared, fit.log_likelihood, &f));
            fits.push(regression_summary(&name, &fit));
        }
    }
    Ok(NationalRun { report: compare_models(&predictions, &holdout)?, fits })
}

#[derive(Debug, Clone)]
pub struct PanelInputs<'a> {
    pub panel: &'a PanelDataset,
    pub dependent: &'a str,
    pub fit_range: QuarterSpan,
    pub holdout_range: QuarterSpan,
    pub models: &'a [u8],
    pub min_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelModelTests {
    pub model: String,
    pub hausman: TestResult,
    pub method: PanelMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelComparison {
    pub levene: TestResult,
    pub paired_t: TestResult,
    pub actual_mean: f64,
    pub prediction_means: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelRun {
    pub report: ForecastReport,
    pub fits: Vec<ModelSummary>,
    pub balance: BalanceReport,
    pub tests: Vec<PanelModelTests>,
    /// Model 6 against Model 7 predictions, when both ran.
    pub comparison: Option<PanelComparison>,
}

/// Balances the panel over fit-through-holdout, fits fixed and random
/// effects for Models 6/7, keeps fixed effects when the Hausman test
/// rejects at 5% (random effects otherwise), and forecasts the holdout.
pub fn panel_models(inputs: &PanelInputs) -> Result<PanelRun> {
    let span = QuarterSpan { start: inputs.fit_range.start, end: inputs.holdout_range.end };
    let (balanced, balance) = balance_panel(&inputs.panel.restrict(span), inputs.min_coverage, inputs.dependent)?;
    // keep the quarter before the fit range so lag-1 terms have a value
    let with_lags =
        inputs.panel.restrict(QuarterSpan { start: inputs.fit_range.start.offset(-1), end: inputs.holdout_range.end });
    let mut kept = PanelDataset::new(with_lags.variables().to_vec())?;
    for unit in balance.retained_units.iter() {
        for q in QuarterSpan::new(inputs.fit_range.start.offset(-1), inputs.holdout_range.end)?.iter() {
            let row: Vec<Option<f64>> = with_lags.variables().iter().map(|v| with_lags.get(unit, v, q)).collect();
            if row.iter().any(Option::is_some) {
                kept.insert(unit, q, row)?;
            }
        }
    }
    debug_assert_eq!(kept.n_units(), balanced.n_units());
    let train = kept.restrict(QuarterSpan { start: inputs.fit_range.start.offset(-1), end: inputs.fit_range.end });

    let mut points = Vec::new();
    for unit in kept.units() {
        for q in inputs.holdout_range.iter() {
            let y = kept
                .get(unit, inputs.dependent, q)
                .ok_or_else(|| Error::invalid(format!("unit {unit} has no {} value for {q}", inputs.dependent)))?;
            points.push((unit.to_string(), q, y));
        }
    }
    let holdout = Holdout::panel(points)?;

    let mut predictions = Vec::new();
    let mut fits = Vec::new();
    let mut tests = Vec::new();
    for &m in inputs.models.iter().filter(|m| (6..=7).contains(*m)) {
        let name = format!("Model {m}");
        let spec = panel_model_spec(m, inputs.dependent)?;
        let fe = fit_fixed_effects(&train, &spec)?;
        let re = fit_random_effects(&train, &spec)?;
        let hausman = panel_hausman(&fe, &re)?;
        let chosen = if hausman.p_value < 0.05 { fe } else { re };
        let forecast = forecast_panel(&chosen, &kept, inputs.holdout_range)?;
        predictions.push(ModelPredictions::from_panel(
            &name,
            panel_r_squared(&chosen),
            chosen.log_likelihood,
            &forecast,
        ));
        tests.push(PanelModelTests { model: name.clone(), hausman, method: chosen.method });
        fits.push(panel_summary(&name, &chosen));
    }
    let report = compare_models(&predictions, &holdout)?;
    let comparison = match report.predictions.as_slice() {
        [a, b] => {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            Some(PanelComparison {
                levene: levene_test(&a.predicted, &b.predicted)?,
                paired_t: paired_t_test(&a.predicted, &b.predicted)?,
                actual_mean: mean(&holdout.actual),
                prediction_means: report.predictions.iter().map(|p| (p.name.clone(), mean(&p.predicted))).collect(),
            })
        }
        _ => None,
    };
    Ok(PanelRun { report, fits, balance, tests, comparison })
}

/// Adds per-state signal columns to a panel. States without articles get
/// zero counts inside the signal span.
pub fn attach_state_signals(panel: &mut PanelDataset, signals: &StateSignals) {
    let span = signals.national.span;
    for (j, name) in SIGNAL_NAMES.iter().enumerate() {
        panel.set_variable(name, |unit, q| {
            if !span.contains(q) {
                return None;
            }
            let row = signals.states.get(unit).and_then(|s| s.get(q));
            Some(match (row, j) {
                (None, _) => 0.0,
                (Some(r), 0) => r.news_num as f64,
                (Some(r), 1) => r.event_detected_num as f64,
                (Some(r), _) => r.hate_reported_index,
            })
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitForecastSummary {
    pub national: Option<Vec<crate::evaluation::ReportRow>>,
    pub panel: Option<Vec<crate::evaluation::ReportRow>>,
}

fn national_dataset(
    cfg: &PipelineConfig,
    signals: &mut Option<(QuarterlySignals, Option<StateSignals>)>,
) -> Result<Dataset> {
    let fbi = read_fbi(cfg)?;
    let (decomp, adjusted) = deseasonalize_with_fit_pattern(&fbi, cfg.fit_range)?;
    write_with(&cfg.output("decomposition.csv"), |w| write_decomposition_csv(w, &decomp))?;
    let mut ds = match &cfg.paths.covariates {
        Some(path) => Dataset::read_csv(open(path)?)?,
        None => Dataset::new(adjusted.span()),
    };
    ds.insert(&adjusted)?;
    let needs_signals = cfg.models.iter().any(|m| (3..=5).contains(m));
    if needs_signals && SIGNAL_NAMES.iter().any(|n| !ds.contains(n)) {
        let (national, _) = load_signals(cfg, signals)?;
        for s in national.to_series("")? {
            ds.insert(&s)?;
        }
    }
    Ok(ds)
}

fn load_signals<'a>(
    cfg: &PipelineConfig,
    cache: &'a mut Option<(QuarterlySignals, Option<StateSignals>)>,
) -> Result<&'a (QuarterlySignals, Option<StateSignals>)> {
    if cache.is_none() {
        let records = labeled_articles(cfg)?;
        *cache = Some(signals_for(cfg, &records)?);
    }
    Ok(cache.as_ref().expect("filled above"))
}

pub fn run_fit_forecast(cfg: &PipelineConfig) -> Result<FitForecastSummary> {
    let mut signals = None;
    let mut summary = FitForecastSummary { national: None, panel: None };
    if cfg.models.iter().any(|m| (1..=5).contains(m)) {
        let ds = national_dataset(cfg, &mut signals)?;
        let run = national_models(&NationalInputs {
            dataset: &ds,
            fit_range: cfg.fit_range,
            holdout_range: cfg.holdout_range,
            models: &cfg.models,
            arima: cfg.arima,
            arima_max_order: cfg.arima_max_order,
            model1_reading: cfg.model1_reading,
        })?;
        write_with(&cfg.output("report_national.csv"), |w| run.report.write_table_csv(w))?;
        write_with(&cfg.output("report_national.json"), |w| run.report.write_json(w))?;
        write_with(&cfg.output("predictions_national.csv"), |w| run.report.write_predictions_csv(w))?;
        write_json(&cfg.output("fits_national.json"), &run.fits)?;
        summary.national = Some(run.report.rows);
    }
    if cfg.models.iter().any(|m| (6..=7).contains(m)) {
        let path = cfg.require(&cfg.paths.panel, "panel")?;
        let mut panel = PanelDataset::read_csv(open(path)?)?;
        if SIGNAL_NAMES.iter().any(|n| !panel.variables().iter().any(|v| v == n)) {
            let (_, by_state) = load_signals(cfg, &mut signals)?;
            let by_state = by_state.as_ref().ok_or_else(|| {
                Error::config("panel models need state-resolved articles or signal columns in the panel")
            })?;
            attach_state_signals(&mut panel, by_state);
        }
        let run = panel_models(&PanelInputs {
            panel: &panel,
            dependent: &cfg.panel_dependent,
            fit_range: cfg.fit_range,
            holdout_range: cfg.holdout_range,
            models: &cfg.models,
            min_coverage: cfg.panel_min_coverage,
        })?;
        write_with(&cfg.output("report_panel.csv"), |w| run.report.write_table_csv(w))?;
        write_with(&cfg.output("report_panel.json"), |w| run.report.write_json(w))?;
        write_with(&cfg.output("predictions_panel.csv"), |w| run.report.write_predictions_csv(w))?;
        write_json(&cfg.output("fits_panel.json"), &run.fits)?;
        #[derive(Serialize)]
        struct PanelTestsOut<'a> {
            balance: &'a BalanceReport,
            models: &'a [PanelModelTests],
            comparison: &'a Option<PanelComparison>,
        }
        write_json(
            &cfg.output("panel_tests.json"),
            &PanelTestsOut { balance: &run.balance, models: &run.tests, comparison: &run.comparison },
        )?;
        summary.panel = Some(run.report.rows);
    }
    Ok(summary)
}

// ---------------------------------------------------------------- evaluate-detector

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorEvaluation {
    pub metrics: Metrics,
    pub evaluated: usize,
    pub threshold: f64,
    pub trained_here: bool,
    pub state_kappa: Option<f64>,
}

/// Scores the baseline on held-out labeled records: the test split of a
/// fresh training run, or every labeled record when a model file is given.
pub fn evaluate_detector_records(
    cfg: &PipelineConfig,
    records: &[ArticleRecord],
    gazetteer: Option<&Gazetteer>,
) -> Result<DetectorEvaluation> {
    let labeled: Vec<ArticleRecord> = records.iter().filter(|r| r.gold_label.is_some()).cloned().collect();
    let (model, test, trained_here) = match &cfg.paths.detector_model {
        Some(path) => (BaselineModel::read_json(open(path)?)?, labeled.clone(), false),
        None => {
            let (tr, va) = cfg.detector_split;
            let (model, split) = train_baseline(&labeled, &Split::Fractions { train: tr, validation: va }, cfg.seed)?;
            let test: Vec<ArticleRecord> = labeled.iter().filter(|r| split.test.contains(&r.id)).cloned().collect();
            (model, test, true)
        }
    };
    if test.is_empty() {
        return Err(Error::invalid("no labeled records to evaluate"));
    }
    let metrics = evaluate(&classify_corpus(&model, &test), &test)?;
    let state_kappa = match gazetteer {
        Some(g) => {
            let resolved: Vec<ArticleRecord> = records
                .iter()
                .filter(|r| r.gold_state.is_some())
                .map(|r| {
                    let mut r = r.clone();
                    r.state = Some(resolve_state(&r.text(), g).state);
                    r
                })
                .collect();
            state_agreement(&resolved)?
        }
        None => None,
    };
    Ok(DetectorEvaluation { metrics, evaluated: test.len(), threshold: model.threshold, trained_here, state_kappa })
}

pub fn run_evaluate_detector(cfg: &PipelineConfig) -> Result<DetectorEvaluation> {
    let records = read_articles(cfg.require(&cfg.paths.articles, "articles")?)?;
    let gaz = match &cfg.paths.gazetteer {
        Some(p) => Some(load_gazetteer_path(p)?.0),
        None => None,
    };
    let eval = evaluate_detector_records(cfg, &records, gaz.as_ref())?;
    write_json(&cfg.output("detector_metrics.json"), &eval)?;
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::QuarterIndex;

    fn span(a: (i32, u8), b: (i32, u8)) -> QuarterSpan {
        QuarterSpan::new(QuarterIndex::new(a.0, a.1).unwrap(), QuarterIndex::new(b.0, b.1).unwrap()).unwrap()
    }

    fn config() -> PipelineConfig {
        PipelineConfig {
            paths: Paths { output_dir: "out".into(), ..Default::default() },
            fit_range: span((2007, 1), (2018, 4)),
            holdout_range: span((2019, 1), (2019, 4)),
            models: default_models(),
            arima: None,
            arima_max_order: 3,
            model1_reading: Model1Reading::Drift,
            detector: DetectorSource::Baseline,
            seed: 0,
            panel_min_coverage: 1.0,
            panel_dependent: default_panel_dependent(),
            detector_split: default_split(),
        }
    }

    #[test]
    fn config_validation() {
        assert!(config().validate().is_ok());
        let mut c = config();
        c.holdout_range = span((2018, 4), (2019, 4));
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = config();
        c.models = vec![1, 8];
        assert!(c.validate().is_err());
        let mut c = config();
        c.paths.articles = Some("/definitely/not/here.jsonl".into());
        let err = c.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/definitely/not/here.jsonl"));
    }

    #[test]
    fn config_json_defaults() {
        let text = r#"{"paths": {"output_dir": "o"}, "fit_range": {"start": "2007Q1", "end": "2018Q4"},
                       "holdout_range": {"start": "2019Q1", "end": "2019Q4"}}"#;
        let c: PipelineConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.models, vec![1, 2, 3, 4, 5]);
        assert_eq!(c.model1_reading, Model1Reading::Drift);
        assert_eq!(c.panel_min_coverage, 1.0);
        assert!(serde_json::from_str::<PipelineConfig>(&text.replace("\"paths\"", "\"bogus\": 1, \"paths\"")).is_err());
    }

    #[test]
    fn fit_pattern_tiles_into_holdout() {
        let start = QuarterIndex::new(2007, 1).unwrap();
        let season = [5.0, -3.0, 1.0, -3.0];
        let values: Vec<f64> = (0..52).map(|i| 100.0 + 2.0 * i as f64 + season[i % 4]).collect();
        let s = TimeSeries::from_values("fbi_num", start, values).unwrap();
        let (_, adj) = deseasonalize_with_fit_pattern(&s, span((2007, 1), (2018, 4))).unwrap();
        for (i, v) in adj.dense().unwrap().iter().enumerate() {
            assert!((v - (100.0 + 2.0 * i as f64)).abs() < 1e-9);
        }
        assert_eq!(adj.name(), DEPENDENT);
    }
}
