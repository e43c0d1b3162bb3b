pub mod arima;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod event_signals;
pub mod geo;
mod linalg;
pub mod panel;
pub mod pipeline;
pub mod regression;
pub mod series;

pub use error::{Error, Result};
pub use series::{QuarterIndex, QuarterSpan, TimeSeries};
