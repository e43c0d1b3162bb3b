use crimecast_core::panel::{balance_panel, fit_fixed_effects, fit_random_effects, panel_hausman, PanelDataset};
use crimecast_core::regression::{RegressionSpec, Term};
use proptest::prelude::*;

mod common;
use common::{lsdv_slopes, simulate_panel, start};

fn spec(k: usize) -> RegressionSpec {
    RegressionSpec::new("y", (0..k).map(|j| Term::new(format!("x{j}"), 0)).collect(), true, 0).unwrap()
}

#[test]
fn fe_equals_lsdv() {
    for seed in 0..20 {
        let k = 1 + (seed as usize % 3);
        let units = 3 + (seed as usize % 8);
        let sim = simulate_panel(seed, units, 20, &vec![1.5; k], seed % 2 == 0);
        let fe = fit_fixed_effects(&sim.panel, &spec(k)).unwrap();
        for (a, b) in fe.slope_estimates().iter().zip(lsdv_slopes(&sim)) {
            assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn re_matches_pooled_without_unit_effects() {
    // no unit effect at all: the data are pooled OLS data
    let mut panel = PanelDataset::new(vec!["y".into(), "x0".into()]).unwrap();
    let sim = simulate_panel(99, 20, 20, &[2.0], false);
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (n, (i, _, x)) in sim.obs.iter().enumerate() {
        let e = ((n * 7919) % 101) as f64 / 101.0 - 0.5;
        let y = 1.0 + 2.0 * x[0] + e;
        panel.insert(&format!("S{i:02}"), start().offset((n % 20) as i64), vec![Some(y), Some(x[0])]).unwrap();
        rows.push(vec![1.0, x[0]]);
        ys.push(y);
    }
    let pooled = common::normal_equations(&rows, &ys);
    let re = fit_random_effects(&panel, &spec(1)).unwrap();
    assert!(re.theta.unwrap() < 0.5);
    assert!((re.slopes[0].estimate - pooled[1]).abs() < 0.05);
}

#[test]
fn hausman_rejects_endogenous_and_accepts_exogenous() {
    // 47 states over 2007Q1..2018Q4
    let (mut rejected, mut accepted) = (0, 0);
    for seed in 0..100 {
        let endo = simulate_panel(1000 + seed, 47, 48, &[1.0], true);
        let fe = fit_fixed_effects(&endo.panel, &spec(1)).unwrap();
        let re = fit_random_effects(&endo.panel, &spec(1)).unwrap();
        if panel_hausman(&fe, &re).unwrap().p_value < 0.05 {
            rejected += 1;
        }
        let exo = simulate_panel(5000 + seed, 47, 48, &[1.0], false);
        let fe = fit_fixed_effects(&exo.panel, &spec(1)).unwrap();
        let re = fit_random_effects(&exo.panel, &spec(1)).unwrap();
        if panel_hausman(&fe, &re).unwrap().p_value >= 0.05 {
            accepted += 1;
        }
    }
    assert!(rejected >= 90, "endogenous rejections {rejected}/100");
    assert!(accepted >= 90, "exogenous non-rejections {accepted}/100");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn theta_in_unit_interval(seed in 0u64..10_000, units in 3usize..10, endo: bool) {
        let sim = simulate_panel(seed, units, 12, &[0.7], endo);
        let re = fit_random_effects(&sim.panel, &spec(1)).unwrap();
        let theta = re.theta.unwrap();
        prop_assert!((0.0..=1.0).contains(&theta));
    }

    #[test]
    fn balancing_is_idempotent(seed in 0u64..10_000, holes in prop::collection::vec((0usize..6, 0i64..10), 0..8), cov in 0.0f64..=1.0) {
        let sim = simulate_panel(seed, 6, 10, &[1.0], false);
        let mut panel = PanelDataset::new(sim.panel.variables().to_vec()).unwrap();
        for (n, (i, y, x)) in sim.obs.iter().enumerate() {
            let t = (n % 10) as i64;
            let hole = holes.contains(&(*i, t));
            let row = vec![Some(*y), if hole { None } else { Some(x[0]) }];
            panel.insert(&format!("S{i:02}"), start().offset(t), row).unwrap();
        }
        if let Ok((once, _)) = balance_panel(&panel, cov, "y") {
            let (twice, report) = balance_panel(&once, cov, "y").unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert!(report.dropped_units.is_empty());
        }
    }
}
