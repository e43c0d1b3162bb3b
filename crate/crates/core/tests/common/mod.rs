//! Independent reference implementations and data generators shared by the
//! integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use crimecast_core::panel::PanelDataset;
use crimecast_core::QuarterIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Solves `A b = c` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut c: Vec<f64>) -> Vec<f64> {
    let k = c.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        c.swap(col, piv);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for j in col..k {
                a[row][j] -= f * a[col][j];
            }
            c[row] -= f * c[col];
        }
    }
    let mut b = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i][j] * b[j]).sum();
        b[i] = (c[i] - s) / a[i][i];
    }
    b
}

/// OLS through `X'X b = X'y`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, yv) in x.iter().zip(y) {
        for i in 0..k {
            xty[i] += row[i] * yv;
            for j in 0..k {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    gauss_solve(xtx, xty)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn start() -> QuarterIndex {
    QuarterIndex::new(2007, 1).unwrap()
}

/// A generated panel with its raw rows, for oracle comparisons.
pub struct SimPanel {
    pub panel: PanelDataset,
    /// `(unit index, y, x)` per observation.
    pub obs: Vec<(usize, f64, Vec<f64>)>,
    pub units: usize,
}

/// `y_it = u_i + x_it·β + e_it`. With `endogenous`, each regressor loads on
/// the unit effect; otherwise on an independent unit-level draw.
pub fn simulate_panel(seed: u64, units: usize, periods: usize, beta: &[f64], endogenous: bool) -> SimPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = beta.len();
    let mut vars = vec!["y".to_string()];
    vars.extend((0..k).map(|j| format!("x{j}")));
    let mut panel = PanelDataset::new(vars).unwrap();
    let mut obs = Vec::new();
    for i in 0..units {
        let u = normal(&mut rng);
        // unit-level regressor component: the effect itself, or an independent draw
        let z: Vec<f64> = (0..k).map(|_| if endogenous { u } else { normal(&mut rng) }).collect();
        for t in 0..periods {
            let x: Vec<f64> = z.iter().map(|zj| zj + normal(&mut rng)).collect();
            let y = u + x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + normal(&mut rng);
            let mut row = vec![Some(y)];
            row.extend(x.iter().map(|v| Some(*v)));
            panel.insert(&format!("S{i:02}"), start().offset(t as i64), row).unwrap();
            obs.push((i, y, x));
        }
    }
    SimPanel { panel, obs, units }
}

/// Least squares with explicit unit dummies; returns the slopes.
pub fn lsdv_slopes(sim: &SimPanel) -> Vec<f64> {
    let k = sim.obs[0].2.len();
    let rows: Vec<Vec<f64>> = sim
        .obs
        .iter()
        .map(|(i, _, x)| {
            let mut r = vec![0.0; sim.units];
            r[*i] = 1.0;
            r.extend(x);
            r
        })
        .collect();
    let y: Vec<f64> = sim.obs.iter().map(|o| o.1).collect();
    let b = normal_equations(&rows, &y);
    b[sim.units..sim.units + k].to_vec()
}
