//! Deterministic inputs shared by the benchmarks.

use crimecast_core::regression::Dataset;
use crimecast_core::{QuarterIndex, TimeSeries};

/// Cheap reproducible noise in [-1, 1) from a linear congruential stream.
pub fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

pub fn start() -> QuarterIndex {
    QuarterIndex::new(2007, 1).unwrap()
}

/// AR(1) series with coefficient 0.6.
pub fn ar1_series(n: usize) -> TimeSeries {
    let e = noise(1, n);
    let mut x = vec![0.0; n];
    for i in 1..n {
        x[i] = 0.6 * x[i - 1] + e[i];
    }
    TimeSeries::from_values("x", start(), x).unwrap()
}

/// Trend plus a period-4 seasonal pattern plus noise.
pub fn seasonal_series(n: usize) -> TimeSeries {
    let e = noise(2, n);
    let season = [30.0, -10.0, 5.0, -25.0];
    let values = (0..n).map(|i| 1500.0 + 2.0 * i as f64 + season[i % 4] + 5.0 * e[i]).collect();
    TimeSeries::from_values("fbi_num", start(), values).unwrap()
}

/// `y` with `k` lag-0 regressors `x0..`.
pub fn regression_dataset(n: usize, k: usize) -> Dataset {
    let mut cols = Vec::new();
    let mut y = vec![0.0; n];
    for j in 0..k {
        let x = noise(10 + j as u64, n);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += (j as f64 + 1.0) * xi;
        }
        cols.push(TimeSeries::from_values(format!("x{j}"), start(), x).unwrap());
    }
    for (yi, e) in y.iter_mut().zip(noise(99, n)) {
        *yi += 0.1 * e;
    }
    cols.push(TimeSeries::from_values("y", start(), y).unwrap());
    Dataset::from_series(&cols).unwrap()
}
