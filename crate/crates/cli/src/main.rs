use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crimecast_core::arima::ArimaSpec;
use crimecast_core::pipeline::{self, DetectorSource, Model1Reading, PipelineConfig};
use crimecast_core::{Error, QuarterIndex, QuarterSpan, Result};

#[derive(Parser)]
#[command(name = "crimecast", version, about = "Quarterly hate-crime trend forecasting with news event signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label articles and resolve their states.
    Detect(Overrides),
    /// Aggregate labeled articles into national and per-state quarterly signals.
    Signals(Overrides),
    /// Seasonal decomposition of the crime series.
    Decompose(Overrides),
    /// Unit-root, autocorrelation and ARIMA order diagnostics.
    Diagnose(Overrides),
    /// Fit the selected models and score holdout forecasts.
    FitForecast(Overrides),
    /// Precision, recall and F1 of the baseline detector.
    EvaluateDetector(Overrides),
}

#[derive(Clone, Copy, ValueEnum)]
enum ReadingArg {
    Drift,
    Ar1,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Baseline,
    Precomputed,
}

#[derive(Args)]
struct Overrides {
    /// JSON pipeline configuration.
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated model numbers, e.g. 1,2,4.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<u8>>,
    /// START:END, e.g. 2007Q1:2018Q4.
    #[arg(long, value_parser = parse_span)]
    fit_range: Option<QuarterSpan>,
    #[arg(long, value_parser = parse_span)]
    holdout_range: Option<QuarterSpan>,
    /// `auto` or p,d,q with an optional trailing `+c` for a constant.
    #[arg(long, value_parser = parse_arima)]
    arima: Option<ArimaChoice>,
    #[arg(long, value_enum)]
    model1_reading: Option<ReadingArg>,
    #[arg(long, value_enum)]
    detector: Option<DetectorArg>,
    #[arg(long)]
    detector_model: Option<PathBuf>,
    #[arg(long)]
    articles: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum ArimaChoice {
    Auto,
    Fixed(ArimaSpec),
}

fn parse_span(s: &str) -> std::result::Result<QuarterSpan, String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let start: QuarterIndex = a.trim().parse().map_err(|e: Error| e.to_string())?;
    let end: QuarterIndex = b.trim().parse().map_err(|e: Error| e.to_string())?;
    QuarterSpan::new(start, end).map_err(|e| e.to_string())
}

fn parse_arima(s: &str) -> std::result::Result<ArimaChoice, String> {
    if s == "auto" {
        return Ok(ArimaChoice::Auto);
    }
    let (orders, constant) = match s.strip_suffix("+c") {
        Some(rest) => (rest, true),
        None => (s, false),
    };
    let parts: Vec<usize> = orders
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad order {p:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let [p, d, q] = parts[..] else {
        return Err("expected p,d,q".into());
    };
    ArimaSpec::new(p, d, q, constant).map(ArimaChoice::Fixed).map_err(|e| e.to_string())
}

impl Overrides {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
        let abs = |p: &PathBuf| if p.is_relative() { cwd.join(p) } else { p.clone() };
        if let Some(dir) = &self.output_dir {
            cfg.paths.output_dir = abs(dir);
        }
        if let Some(p) = &self.detector_model {
            cfg.paths.detector_model = Some(abs(p));
        }
        if let Some(p) = &self.articles {
            cfg.paths.articles = Some(abs(p));
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(models) = &self.models {
            cfg.models = models.clone();
        }
        if let Some(span) = self.fit_range {
            cfg.fit_range = span;
        }
        if let Some(span) = self.holdout_range {
            cfg.holdout_range = span;
        }
        match self.arima {
            Some(ArimaChoice::Auto) => cfg.arima = None,
            Some(ArimaChoice::Fixed(spec)) => cfg.arima = Some(spec),
            None => {}
        }
        if let Some(r) = self.model1_reading {
            cfg.model1_reading = match r {
                ReadingArg::Drift => Model1Reading::Drift,
                ReadingArg::Ar1 => Model1Reading::Ar1,
            };
        }
        if let Some(d) = self.detector {
            cfg.detector = match d {
                DetectorArg::Baseline => DetectorSource::Baseline,
                DetectorArg::Precomputed => DetectorSource::Precomputed,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    // a closed pipe (e.g. `| head`) is not a failure
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Detect(o) => print_json(&pipeline::run_detect(&o.load()?)?),
        Command::Signals(o) => print_json(&pipeline::run_signals(&o.load()?)?),
        Command::Decompose(o) => {
            let d = pipeline::run_decompose(&o.load()?)?;
            print_json(&d.pattern)
        }
        Command::Diagnose(o) => print_json(&pipeline::run_diagnose(&o.load()?)?),
        Command::FitForecast(o) => print_json(&pipeline::run_fit_forecast(&o.load()?)?),
        Command::EvaluateDetector(o) => print_json(&pipeline::run_evaluate_detector(&o.load()?)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
