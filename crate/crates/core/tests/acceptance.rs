//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always print; exits non-zero on any failure.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crimecast_core::arima::{fit_arima, select_orders, ArimaSpec};
use crimecast_core::detector::f1_score;
use crimecast_core::evaluation::{mape, rmse};
use crimecast_core::event_signals::{
    aggregate_by_state, hate_reported_index, read_articles_jsonl, ArticleRecord, Label, UNKNOWN_STATE,
};
use crimecast_core::geo::{load_gazetteer_path, resolve_state};
use crimecast_core::panel::{fit_fixed_effects, fit_random_effects, panel_hausman};
use crimecast_core::pipeline::{self, national_models, NationalInputs, PipelineConfig};
use crimecast_core::regression::{fit_ols, Dataset, RegressionSpec, Term, CRIME_COVARIATES, DEPENDENT};
use crimecast_core::series::{decompose_additive, difference};
use crimecast_core::stat_tests::{adf_test, cohens_kappa, durbin_watson, ljung_box, Deterministic};
use crimecast_core::{QuarterIndex, QuarterSpan, TimeSeries};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{lsdv_slopes, normal, normal_equations, simulate_panel, start};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = (&'static str, fn() -> Outcome);

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ols_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=8usize);
        let n = rng.random_range(k + 4..=50usize);
        let q = QuarterIndex::new(1990, 1).unwrap();
        let cols: Vec<Vec<f64>> = (0..k - 1).map(|_| (0..n).map(|_| 5.0 * normal(&mut rng)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| 20.0 * normal(&mut rng)).collect();
        let mut series = vec![TimeSeries::from_values("y", q, y.clone()).unwrap()];
        for (j, c) in cols.iter().enumerate() {
            series.push(TimeSeries::from_values(format!("x{j}"), q, c.clone()).unwrap());
        }
        let ds = Dataset::from_series(&series).unwrap();
        let spec = RegressionSpec::new("y", (0..k - 1).map(|j| Term::new(format!("x{j}"), 0)).collect(), true, 0);
        // k counts the intercept; k = 1 is the intercept-only model
        let est = match spec {
            Ok(spec) => fit_ols(&ds, &spec).unwrap().estimates(),
            Err(_) => vec![y.iter().sum::<f64>() / n as f64],
        };
        let rows: Vec<Vec<f64>> =
            (0..n).map(|i| std::iter::once(1.0).chain(cols.iter().map(|c| c[i])).collect()).collect();
        for (a, b) in est.iter().zip(normal_equations(&rows, &y)) {
            worst = worst.max((a - b).abs());
        }
    }
    let el = t.elapsed();
    outcome(worst < 1e-8 && within(el, 5), format!("max |delta| = {worst:.2e} over 100 fixtures, {el:.2?}"))
}

fn fe_lsdv() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let units = rng.random_range(3..=10usize);
        let k = rng.random_range(1..=3usize);
        let beta: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
        let sim = simulate_panel(300 + seed, units, 20, &beta, seed % 2 == 0);
        let spec = RegressionSpec::new("y", (0..k).map(|j| Term::new(format!("x{j}"), 0)).collect(), true, 0).unwrap();
        let fe = fit_fixed_effects(&sim.panel, &spec).unwrap();
        for (a, b) in fe.slope_estimates().iter().zip(lsdv_slopes(&sim)) {
            worst = worst.max((a - b).abs());
        }
    }
    let el = t.elapsed();
    outcome(worst < 1e-6 && within(el, 5), format!("max |delta| = {worst:.2e} over 20 panels, {el:.2?}"))
}

fn series(values: Vec<f64>) -> TimeSeries {
    TimeSeries::from_values("x", start(), values).unwrap()
}

fn arima_recovery() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = vec![0.0; 2000];
    for i in 1..x.len() {
        x[i] = 0.5 * x[i - 1] + normal(&mut rng);
    }
    let ar = fit_arima(&series(x), ArimaSpec::new(1, 0, 0, true).unwrap()).unwrap().ar_coeffs[0];

    let e: Vec<f64> = (0..4001).map(|_| normal(&mut rng)).collect();
    let m: Vec<f64> = (1..e.len()).map(|i| e[i] + 0.4 * e[i - 1]).collect();
    let ma = fit_arima(&series(m), ArimaSpec::new(0, 0, 1, true).unwrap()).unwrap().ma_coeffs[0];

    let mut level = 100.0;
    let walk: Vec<f64> = (0..60)
        .map(|_| {
            level += 2.0 + normal(&mut rng);
            level
        })
        .collect();
    let mean_diff = walk.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (walk.len() - 1) as f64;
    let drift = fit_arima(&series(walk), ArimaSpec::new(0, 1, 0, true).unwrap()).unwrap().constant;
    let el = t.elapsed();
    let pass =
        (ar - 0.5).abs() <= 0.1 && (ma - 0.4).abs() <= 0.1 && (drift - mean_diff).abs() <= 1e-12 && within(el, 10);
    outcome(pass, format!("ar1 = {ar:.4}, ma1 = {ma:.4}, drift error = {:.1e}, {el:.2?}", (drift - mean_diff).abs()))
}

fn order_selection() -> Outcome {
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let mut level = 1500.0;
        let walk: Vec<f64> = (0..48)
            .map(|_| {
                level += 10.0 + 40.0 * normal(&mut rng);
                level
            })
            .collect();
        let sel = select_orders(&difference(&series(walk), 1).unwrap(), 3, 3).unwrap();
        if sel.spec.p == 0 && sel.spec.q == 0 {
            hits += 1;
        }
    }
    outcome(hits >= 95, format!("(0,0) selected in {hits}/100 runs"))
}

fn decomposition() -> Outcome {
    let pattern = [2.0, 0.0, -1.0, -1.0];
    let values: Vec<f64> = (0..40).map(|i| 3.0 + 0.5 * i as f64 + pattern[i % 4]).collect();
    let d = decompose_additive(&series(values.clone()), 4).unwrap();
    let mut comp: f64 = 0.0;
    let mut recon: f64 = 0.0;
    for i in 0..values.len() {
        let s = d.seasonal.values()[i].unwrap();
        comp = comp.max((s - pattern[i % 4]).abs());
        if let (Some(tr), Some(ir)) = (d.trend.values()[i], d.irregular.values()[i]) {
            comp = comp.max((tr - (3.0 + 0.5 * i as f64)).abs()).max(ir.abs());
            recon = recon.max((tr + s + ir - values[i]).abs());
        }
    }
    outcome(comp < 1e-9 && recon < 1e-9, format!("component error {comp:.1e}, reconstruction error {recon:.1e}"))
}

fn diagnostics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise: Vec<f64> = (0..500).map(|_| normal(&mut rng)).collect();
    let mut level = 0.0;
    let walk: Vec<f64> = (0..500)
        .map(|_| {
            level += normal(&mut rng);
            level
        })
        .collect();
    let adf_noise = adf_test(&series(noise.clone()), 4, Deterministic::Constant).unwrap().p_value;
    let adf_walk = adf_test(&series(walk), 4, Deterministic::Constant).unwrap().p_value;
    let dw = durbin_watson(&noise).unwrap();
    let lb = ljung_box(&series(noise), 10).unwrap().p_value;
    let pass = adf_noise < 0.05 && adf_walk > 0.10 && (1.7..=2.3).contains(&dw) && lb > 0.05;
    outcome(pass, format!("ADF p noise = {adf_noise:.3}, walk = {adf_walk:.3}; DW = {dw:.3}; Ljung-Box p = {lb:.3}"))
}

fn hausman() -> Outcome {
    let t = Instant::now();
    let spec = RegressionSpec::new("y", vec![Term::new("x0", 0)], true, 0).unwrap();
    let (mut reject, mut accept) = (0, 0);
    for seed in 0..100u64 {
        let endo = simulate_panel(1000 + seed, 47, 48, &[1.0], true);
        let h = panel_hausman(
            &fit_fixed_effects(&endo.panel, &spec).unwrap(),
            &fit_random_effects(&endo.panel, &spec).unwrap(),
        )
        .unwrap();
        reject += usize::from(h.p_value < 0.05);
        let exo = simulate_panel(5000 + seed, 47, 48, &[1.0], false);
        let h = panel_hausman(
            &fit_fixed_effects(&exo.panel, &spec).unwrap(),
            &fit_random_effects(&exo.panel, &spec).unwrap(),
        )
        .unwrap();
        accept += usize::from(h.p_value >= 0.05);
    }
    let el = t.elapsed();
    outcome(
        reject >= 90 && accept >= 90 && within(el, 60),
        format!(
            "endogenous rejected {reject}/100, exogenous not rejected {accept}/100 (47 units x 48 quarters), {el:.2?}"
        ),
    )
}

fn metric_identities() -> Outcome {
    let f1 = f1_score(0.8162, 0.8325);
    let checks = [
        rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
        rmse(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap() - 1.0,
        rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 2.5 * 2f64.sqrt(),
        mape(&[5.0, 7.0], &[5.0, 7.0]).unwrap(),
        mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 10.0,
    ];
    let worst = checks.iter().fold(0f64, |m, c| m.max(c.abs()));
    let zero_guard = mape(&[1.0, 0.0], &[1.0, 1.0]).is_err();
    outcome(
        (f1 - 0.8243).abs() <= 5e-4 && worst <= 1e-9 && zero_guard,
        format!("F1(0.8162, 0.8325) = {f1:.4}; max rmse/mape example error {worst:.1e}"),
    )
}

/// National DGP where the dependent loads on the index; Model 4 adds the
/// index (and counts) to Model 2's covariates.
fn event_benefit() -> Outcome {
    let first = start();
    let fit = QuarterSpan::new(first, first.offset(47)).unwrap();
    let holdout = QuarterSpan::new(first.offset(48), first.offset(51)).unwrap();
    let mut wins = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let from = first.offset(-1);
        let n = 53;
        let mut cols: Vec<TimeSeries> = Vec::new();
        let mut y = vec![0.0; n];
        for (j, (name, _)) in CRIME_COVARIATES.iter().enumerate() {
            let x: Vec<f64> = (0..n).map(|_| 10.0 + normal(&mut rng)).collect();
            let b = if j % 2 == 0 { 3.0 } else { -2.0 };
            for t in 1..n {
                y[t] += b * x[t - 1];
            }
            cols.push(TimeSeries::from_values(*name, from, x).unwrap());
        }
        let mut news = vec![0.0; n];
        let mut events = vec![0.0; n];
        let mut index = vec![0.0; n];
        for t in 0..n {
            let k = rng.random_range(20..=40u64);
            let share = rng.random_range(0.1..0.7);
            let e = (0..k).filter(|_| rng.random::<f64>() < share).count() as u64;
            news[t] = k as f64;
            events[t] = e as f64;
            index[t] = hate_reported_index(e, k).unwrap();
            y[t] += 1000.0 + 300.0 * index[t] + 10.0 * normal(&mut rng);
        }
        cols.push(TimeSeries::from_values("news_num", from, news).unwrap());
        cols.push(TimeSeries::from_values("event_detected_num", from, events).unwrap());
        cols.push(TimeSeries::from_values("hate_reported_index", from, index).unwrap());
        let mut dep = y;
        dep[0] = f64::NAN;
        let dep = TimeSeries::new(DEPENDENT, from, dep.iter().map(|v| v.is_finite().then_some(*v)).collect()).unwrap();
        cols.push(dep);
        let ds = Dataset::from_series(&cols).unwrap();
        let run = national_models(&NationalInputs {
            dataset: &ds,
            fit_range: fit,
            holdout_range: holdout,
            models: &[2, 4],
            arima: None,
            arima_max_order: 3,
            model1_reading: pipeline::Model1Reading::Drift,
        })
        .unwrap();
        let rows = &run.report.rows;
        if rows[1].rmse < rows[0].rmse {
            wins += 1;
        }
    }
    outcome(wins >= 90, format!("Model 4 beat Model 2 on holdout RMSE in {wins}/100 runs"))
}

const GOLDEN: [&str; 14] = [
    "labeled_articles.jsonl",
    "detection_summary.json",
    "signals_national.csv",
    "signals_state.csv",
    "decomposition.csv",
    "deseasonalized.csv",
    "diagnostics.json",
    "report_national.csv",
    "report_national.json",
    "predictions_national.csv",
    "report_panel.csv",
    "report_panel.json",
    "panel_tests.json",
    "detector_metrics.json",
];

fn run_pipeline(out: &Path) -> crimecast_core::Result<()> {
    let mut cfg = PipelineConfig::load(&workspace().join("fixtures/config.json"))?;
    cfg.paths.output_dir = out.to_path_buf();
    pipeline::run_detect(&cfg)?;
    pipeline::run_signals(&cfg)?;
    pipeline::run_decompose(&cfg)?;
    pipeline::run_diagnose(&cfg)?;
    pipeline::run_fit_forecast(&cfg)?;
    pipeline::run_evaluate_detector(&cfg)?;
    Ok(())
}

fn report_format() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = run_pipeline(a.path()).and_then(|_| run_pipeline(b.path())) {
        return outcome(false, format!("pipeline failed: {e}"));
    }
    let golden = workspace().join("crates/cli/tests/golden");
    let mut mismatched = Vec::new();
    for name in GOLDEN {
        let x = std::fs::read(a.path().join(name)).unwrap_or_default();
        let y = std::fs::read(b.path().join(name)).unwrap_or_default();
        let g = std::fs::read(golden.join(name)).unwrap_or_default();
        if x.is_empty() || x != y || x != g {
            mismatched.push(name);
        }
    }
    let header = "Model,R-Squared,Log Likelihood,RMSE,MAPE";
    let headers_ok = ["report_national.csv", "report_panel.csv"]
        .iter()
        .all(|f| std::fs::read_to_string(a.path().join(f)).map(|s| s.lines().next() == Some(header)).unwrap_or(false));
    outcome(
        mismatched.is_empty() && headers_ok,
        if mismatched.is_empty() {
            format!("{} outputs byte-identical across reruns and to golden files; columns {header}", GOLDEN.len())
        } else {
            format!("mismatched: {mismatched:?}")
        },
    )
}

fn fixture_articles() -> Vec<ArticleRecord> {
    let f = std::fs::File::open(workspace().join("fixtures/articles.jsonl")).unwrap();
    read_articles_jsonl(std::io::BufReader::new(f)).unwrap()
}

fn state_resolution() -> Outcome {
    let (gaz, _) = load_gazetteer_path(&workspace().join("fixtures/gazetteer.tsv")).unwrap();
    let records = fixture_articles();
    let resolved: Vec<String> = records.iter().map(|r| resolve_state(&r.text(), &gaz).state).collect();
    let gold: Vec<String> = records.iter().map(|r| r.gold_state.clone().unwrap()).collect();
    let kappa = cohens_kappa(&resolved, &gold).unwrap();
    outcome(
        records.len() == 500 && kappa >= 0.75,
        format!("kappa = {kappa:.4} on {} annotated articles", records.len()),
    )
}

fn reconciles(records: &[ArticleRecord]) -> bool {
    let s = aggregate_by_state(records, None).unwrap();
    s.national.rows.iter().all(|row| {
        let states: u64 = s.states.values().filter_map(|x| x.get(row.quarter)).map(|r| r.news_num).sum();
        let unknown =
            records.iter().filter(|r| r.quarter() == row.quarter && r.state.as_deref() == Some(UNKNOWN_STATE)).count()
                as u64;
        states + unknown == row.news_num
    })
}

fn index_arithmetic() -> Outcome {
    let exact = hate_reported_index(50, 1000).unwrap() == 0.05
        && hate_reported_index(0, 0).unwrap() == 0.0
        && hate_reported_index(7, 7).unwrap() == 1.0
        && hate_reported_index(8, 7).is_err();

    let (gaz, _) = load_gazetteer_path(&workspace().join("fixtures/gazetteer.tsv")).unwrap();
    let mut fixtures: Vec<Vec<ArticleRecord>> = Vec::new();
    let mut bundled = fixture_articles();
    for r in &mut bundled {
        r.state = Some(resolve_state(&r.text(), &gaz).state);
        r.predicted_label = r.gold_label;
    }
    fixtures.push(bundled);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = ["CA", "NY", "TX", UNKNOWN_STATE];
        let n = rng.random_range(1..300usize);
        fixtures.push(
            (0..n)
                .map(|i| {
                    let date =
                        chrono::NaiveDate::from_ymd_opt(2010 + rng.random_range(0..3), rng.random_range(1..=12), 1)
                            .unwrap();
                    let mut r = ArticleRecord::new(format!("r{i}"), date, "", "");
                    r.predicted_label = Some(Label::from_positive(rng.random::<bool>()));
                    r.state = Some(states[rng.random_range(0..states.len())].to_string());
                    r
                })
                .collect(),
        );
    }
    let all = fixtures.iter().all(|f| reconciles(f));
    outcome(
        exact && all,
        format!("index examples exact: {exact}; reconciliation holds on {} fixtures: {all}", fixtures.len()),
    )
}

fn main() {
    let criteria: [Check; 12] = [
        ("OLS oracle equivalence", ols_oracle),
        ("FE = LSDV", fe_lsdv),
        ("ARIMA recovery", arima_recovery),
        ("order selection on drift random walk", order_selection),
        ("decomposition recovery", decomposition),
        ("diagnostics sanity", diagnostics),
        ("Hausman discrimination", hausman),
        ("metric identities", metric_identities),
        ("event-factor benefit", event_benefit),
        ("report format fidelity", report_format),
        ("state resolution quality", state_resolution),
        ("index arithmetic", index_arithmetic),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("criterion {:>2} {}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
