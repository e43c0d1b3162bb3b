//! Forecast accuracy metrics and model comparison reports.

use std::io::Write;

use serde::Serialize;

use crate::arima::Forecast;
use crate::error::{Error, Result};
use crate::panel::PanelForecast;
use crate::series::{QuarterIndex, TimeSeries};

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::invalid(format!("{} actual values against {} predictions", actual.len(), predicted.len())));
    }
    if actual.is_empty() {
        return Err(Error::invalid("no values to compare"));
    }
    Ok(())
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let mse = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / actual.len() as f64;
    Ok(mse.sqrt())
}

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    if let Some(i) = actual.iter().position(|a| *a == 0.0) {
        return Err(Error::invalid(format!("actual value at index {i} is 0; MAPE undefined")));
    }
    let m = actual.iter().zip(predicted).map(|(a, p)| ((a - p) / a).abs()).sum::<f64>() / actual.len() as f64;
    Ok(100.0 * m)
}

/// One evaluated point: a quarter, optionally within a unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct HoldoutKey {
    pub unit: Option<String>,
    pub quarter: QuarterIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Holdout {
    pub keys: Vec<HoldoutKey>,
    pub actual: Vec<f64>,
}

impl Holdout {
    pub fn national(actual: &TimeSeries) -> Result<Self> {
        let values = actual.dense()?;
        Ok(Self {
            keys: (0..values.len()).map(|i| HoldoutKey { unit: None, quarter: actual.quarter_at(i) }).collect(),
            actual: values,
        })
    }

    /// Builds from `(unit, quarter, actual)` triples, sorted by unit then quarter.
    pub fn panel(mut points: Vec<(String, QuarterIndex, f64)>) -> Result<Self> {
        points.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        if points.windows(2).any(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(Error::invalid("duplicate holdout observation"));
        }
        Ok(Self {
            keys: points.iter().map(|(u, q, _)| HoldoutKey { unit: Some(u.clone()), quarter: *q }).collect(),
            actual: points.iter().map(|p| p.2).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelPredictions {
    pub name: String,
    pub adj_r_squared: f64,
    pub log_likelihood: f64,
    pub keys: Vec<HoldoutKey>,
    pub predicted: Vec<f64>,
}

impl ModelPredictions {
    pub fn from_forecast(
        name: impl Into<String>,
        adj_r_squared: f64,
        log_likelihood: f64,
        forecast: &Forecast,
    ) -> Self {
        Self {
            name: name.into(),
            adj_r_squared,
            log_likelihood,
            keys: forecast.quarters().map(|quarter| HoldoutKey { unit: None, quarter }).collect(),
            predicted: forecast.point_values.clone(),
        }
    }

    /// Flattens per-unit forecasts in unit, then quarter order.
    pub fn from_panel(
        name: impl Into<String>,
        adj_r_squared: f64,
        log_likelihood: f64,
        forecast: &PanelForecast,
    ) -> Self {
        let mut keys = Vec::new();
        let mut predicted = Vec::new();
        for (unit, f) in &forecast.forecasts {
            for (quarter, v) in f.quarters().zip(&f.point_values) {
                keys.push(HoldoutKey { unit: Some(unit.clone()), quarter });
                predicted.push(*v);
            }
        }
        Self { name: name.into(), adj_r_squared, log_likelihood, keys, predicted }
    }

    /// Keeps only the points present in `holdout`, in its order.
    pub fn restricted_to(&self, holdout: &Holdout) -> Result<Self> {
        let predicted = holdout
            .keys
            .iter()
            .map(|k| {
                self.keys
                    .iter()
                    .position(|mk| mk == k)
                    .map(|i| self.predicted[i])
                    .ok_or_else(|| Error::invalid(format!("model {} has no prediction for {k:?}", self.name)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { keys: holdout.keys.clone(), predicted, ..self.clone() })
    }
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    #[serde(rename = "Model")]
    pub model: String,
    /// Adjusted R² of the estimation fit.
    #[serde(rename = "R-Squared")]
    pub r_squared: f64,
    #[serde(rename = "Log Likelihood")]
    pub log_likelihood: f64,
    #[serde(rename = "RMSE")]
    pub rmse: f64,
    #[serde(rename = "MAPE")]
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastReport {
    pub rows: Vec<ReportRow>,
    pub holdout: Holdout,
    pub predictions: Vec<ModelPredictions>,
}

pub const REPORT_COLUMNS: [&str; 5] = ["Model", "R-Squared", "Log Likelihood", "RMSE", "MAPE"];

/// Scores every model on the same holdout; each model must predict exactly
/// the holdout's points in order.
pub fn compare_models(models: &[ModelPredictions], holdout: &Holdout) -> Result<ForecastReport> {
    if models.is_empty() {
        return Err(Error::invalid("no models to compare"));
    }
    let rows = models
        .iter()
        .map(|m| {
            if m.keys != holdout.keys {
                return Err(Error::invalid(format!("model {} is not aligned with the holdout range", m.name)));
            }
            Ok(ReportRow {
                model: m.name.clone(),
                r_squared: m.adj_r_squared,
                log_likelihood: m.log_likelihood,
                rmse: rmse(&holdout.actual, &m.predicted)?,
                mape: mape(&holdout.actual, &m.predicted)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ForecastReport { rows, holdout: holdout.clone(), predictions: models.to_vec() })
}

impl ForecastReport {
    /// Table-shaped CSV with four decimals.
    pub fn write_table_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(REPORT_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                format!("{:.4}", r.r_squared),
                format!("{:.4}", r.log_likelihood),
                format!("{:.4}", r.rmse),
                format!("{:.4}", r.mape),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<report csv>", e))
    }

    /// Rows only, as a JSON array.
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.rows)?;
        Ok(())
    }

    /// Long-format plot data: `quarter,[unit,]model,predicted,actual`.
    pub fn write_predictions_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let with_unit = self.holdout.keys.iter().any(|k| k.unit.is_some());
        let mut header = vec!["quarter"];
        if with_unit {
            header.push("unit");
        }
        header.extend(["model", "predicted", "actual"]);
        w.write_record(&header)?;
        for m in &self.predictions {
            for ((k, p), a) in m.keys.iter().zip(&m.predicted).zip(&self.holdout.actual) {
                let mut rec = vec![k.quarter.to_string()];
                if with_unit {
                    rec.push(k.unit.clone().unwrap_or_default());
                }
                rec.extend([m.name.clone(), p.to_string(), a.to_string()]);
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<predictions csv>", e))
    }
}
