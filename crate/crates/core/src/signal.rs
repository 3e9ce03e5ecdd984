//! Oscillation statistics of sampled series.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CycleStats {
    pub mean: f64,
    /// Half the peak-to-peak excursion.
    pub amplitude: f64,
    /// Mean interval between successive upward mean crossings.
    pub period: Option<f64>,
    pub crossings: usize,
}

/// Statistics of `values` (sampled at `times`).
pub fn cycle_stats(times: &[f64], values: &[f64]) -> CycleStats {
    debug_assert_eq!(times.len(), values.len());
    if values.is_empty() {
        return CycleStats { mean: f64::NAN, amplitude: 0.0, period: None, crossings: 0 };
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (lo, hi) =
        values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let up = upward_crossings(times, values, mean);
    let period = (up.len() >= 2).then(|| (up[up.len() - 1] - up[0]) / (up.len() - 1) as f64);
    CycleStats { mean, amplitude: 0.5 * (hi - lo), period, crossings: up.len() }
}

/// Interpolated instants where the series crosses `level` going up.
pub fn upward_crossings(times: &[f64], values: &[f64], level: f64) -> Vec<f64> {
    times
        .windows(2)
        .zip(values.windows(2))
        .filter(|(_, v)| v[0] < level && v[1] >= level)
        .map(|(t, v)| t[0] + (level - v[0]) / (v[1] - v[0]) * (t[1] - t[0]))
        .collect()
}

/// Half peak-to-peak of `values`.
pub fn half_range(values: &[f64]) -> f64 {
    let (lo, hi) =
        values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo > hi {
        0.0
    } else {
        0.5 * (hi - lo)
    }
}

/// Index of the first sample at or after `fraction` of the time span.
pub fn window_start(times: &[f64], fraction: f64) -> usize {
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return 0;
    };
    let cut = t0 + fraction * (t1 - t0);
    times.partition_point(|&t| t < cut)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sinusoid() {
        let times: Vec<f64> = (0..=40_000).map(|i| i as f64 * 0.005).collect();
        let values: Vec<f64> = times.iter().map(|t| 1.0 + 0.1 * (2.0 * PI * t / 4.0).sin()).collect();
        let s = cycle_stats(&times, &values);
        assert!((s.amplitude - 0.1).abs() < 1e-6);
        assert!((s.period.unwrap() - 4.0).abs() < 1e-6);
        assert_eq!(s.crossings, 50);
    }

    #[test]
    fn constant_series() {
        let s = cycle_stats(&[0.0, 1.0, 2.0], &[3.0; 3]);
        assert_eq!(s.amplitude, 0.0);
        assert_eq!(s.period, None);
    }

    #[test]
    fn window() {
        let times: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(window_start(&times, 0.5), 5);
        assert_eq!(window_start(&times, 0.0), 0);
    }
}
