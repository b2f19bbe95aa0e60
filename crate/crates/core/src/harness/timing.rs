//! Wall-clock benchmarks of full-horizon planning.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::harness::calibrate_fleet;
use crate::harness::synth::sine_day_generation;
use crate::lsps::LspsPlanner;
use crate::model::{BatterySpec, ExogenousTrace, TariffSchedule};
use crate::oracle;

/// Timing of one horizon length.
#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub horizon: usize,
    /// Median wall-clock of a full plan (candidate set, peak search, action
    /// extraction, capacity clipping).
    pub lsps_ms: f64,
    /// One-shot convex solve, only measured up to the configured cap — its
    /// cost grows cubically with the horizon.
    pub oracle_ms: Option<f64>,
}

/// Timing rows plus a linear fit of planning time against horizon length.
#[derive(Debug, Clone, Serialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
    pub slope_ms_per_step: f64,
    pub intercept_ms: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x, y)`; returns (slope, intercept, R²).
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

fn synthetic_instance(
    horizon: usize,
) -> Result<(ExogenousTrace, TariffSchedule, crate::model::DeviceFleet, BatterySpec)> {
    let trace = ExogenousTrace::new(sine_day_generation(2.0, horizon), None)?;
    let tariff = TariffSchedule::flat(horizon, 0.12, 0.06, 10.0, 0.09)?;
    let fleet = calibrate_fleet(&vec![1.0; horizon], 0.12, -0.1)?;
    let battery = BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95)?;
    Ok((trace, tariff, fleet, battery))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

/// Benchmarks full-horizon planning for each horizon in `t_list`; the convex
/// bound is also timed for horizons up to `oracle_cap`.
pub fn timing_benchmark(t_list: &[usize], oracle_cap: usize, reps: usize) -> Result<TimingTable> {
    let reps = reps.max(1);
    let mut rows = Vec::with_capacity(t_list.len());
    for &horizon in t_list {
        let (trace, tariff, fleet, battery) = synthetic_instance(horizon)?;
        // Warm-up plan, then timed repetitions.
        let planner = LspsPlanner::new(&trace, &tariff, &fleet, &battery)?;
        let _ = planner.schedule(0.0)?;
        let mut samples = Vec::with_capacity(reps);
        for _ in 0..reps {
            let started = Instant::now();
            let planner = LspsPlanner::new(&trace, &tariff, &fleet, &battery)?;
            let schedule = planner.schedule(0.0)?;
            samples.push(started.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(schedule.computed_peak);
        }
        let lsps_ms = median(samples);

        let oracle_ms = if horizon <= oracle_cap {
            let started = Instant::now();
            let bound =
                oracle::deterministic_upper_bound(&trace, &tariff, &fleet, &battery, 0.0)?;
            std::hint::black_box(bound.objective);
            Some(started.elapsed().as_secs_f64() * 1e3)
        } else {
            None
        };
        rows.push(TimingRow {
            horizon,
            lsps_ms,
            oracle_ms,
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.horizon as f64, r.lsps_ms))
        .collect();
    let (slope_ms_per_step, intercept_ms, r_squared) = fit_line(&points);
    Ok(TimingTable {
        rows,
        slope_ms_per_step,
        intercept_ms,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_line() {
        let points: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, 3.0 + 2.0 * i as f64)).collect();
        let (slope, intercept, r2) = fit_line(&points);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept - 3.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn benchmark_produces_rows_and_caps_oracle() {
        let table = timing_benchmark(&[24, 48], 24, 3).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows[0].oracle_ms.is_some());
        assert!(table.rows[1].oracle_ms.is_none());
        assert!(table.rows.iter().all(|r| r.lsps_ms >= 0.0));
    }
}
