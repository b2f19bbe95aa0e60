//! Grid scan of the fixed-peak objective `J(c)`.
//!
//! For each bound `c` the horizon decomposes into independent single-step
//! problems `max_v h_t(v) - p⁺[v-g]⁺ + p⁻[v-g]⁻` over
//! `v in [v_min, min(c + g_t, v_max)]`. Each is concave in `v` and is solved
//! here by golden-section search to near machine precision, deliberately not
//! using the planner's closed-form policy, so the scan can serve as an
//! independent reference for it.

use crate::allocation::AllocationProblem;
use crate::error::{Error, Result};
use crate::model::{neg, pos, BatterySpec, DeviceFleet, ExogenousTrace, TariffSchedule};

/// Samples of `J(c)` over a grid of peak bounds.
#[derive(Debug, Clone)]
pub struct RelaxedScan {
    pub c_grid: Vec<f64>,
    pub j_values: Vec<f64>,
    pub best_c: f64,
    pub best_j: f64,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const GOLDEN_ITERS: usize = 90;

/// Maximizes a concave function on `[lo, hi]` by golden-section search.
fn golden_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    if hi - lo <= 0.0 {
        return f(lo);
    }
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_ITERS {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
        if b - a < 1e-13 * (1.0 + hi.abs() + lo.abs()) {
            break;
        }
    }
    // The bracket is tiny; report the best sampled value together with the
    // interval endpoints for safety on flat stretches.
    f1.max(f2).max(f(a)).max(f(b))
}

/// Evaluates `J(c)` for every bound in `c_grid` and returns the samples with
/// the argmax.
pub fn relaxed_grid_scan(
    trace: &ExogenousTrace,
    tariff: &TariffSchedule,
    fleet: &DeviceFleet,
    battery: &BatterySpec,
    c_grid: &[f64],
) -> Result<RelaxedScan> {
    if c_grid.is_empty() {
        return Err(Error::invalid("c grid", "must contain at least one bound"));
    }
    let horizon = trace.horizon();
    if tariff.horizon() != horizon || fleet.horizon() != horizon {
        return Err(Error::LengthMismatch(
            "trace/tariff/fleet horizons disagree".into(),
        ));
    }
    let allocs: Vec<AllocationProblem> = (0..horizon)
        .map(|t| AllocationProblem::at_step(fleet, battery, tariff.salvage(), t))
        .collect::<Result<_>>()?;

    let mut j_values = Vec::with_capacity(c_grid.len());
    let mut best_c = c_grid[0];
    let mut best_j = f64::NEG_INFINITY;
    for &c in c_grid {
        let mut total = -tariff.demand_price() * c;
        for t in 0..horizon {
            let alloc = &allocs[t];
            let g = trace.gen(t);
            let (buy, sell) = (tariff.buy(t), tariff.sell(t));
            let lo = alloc.v_min();
            let hi = alloc.v_max().min(c + g).max(lo);
            let objective = |v: f64| {
                alloc.h_value(v).expect("v inside domain") - buy * pos(v - g) + sell * neg(v - g)
            };
            total += golden_max(lo, hi, objective);
        }
        j_values.push(total);
        if total > best_j {
            best_j = total;
            best_c = c;
        }
    }
    Ok(RelaxedScan {
        c_grid: c_grid.to_vec(),
        j_values,
        best_c,
        best_j,
    })
}

impl RelaxedScan {
    /// Largest centered second difference of the samples (uniform grids).
    /// Concavity means this should not exceed numerical noise.
    pub fn max_second_difference(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for w in self.j_values.windows(3) {
            worst = worst.max(w[0] - 2.0 * w[1] + w[2]);
        }
        if worst.is_finite() {
            worst
        } else {
            0.0
        }
    }
}

/// Builds a uniform grid of `n + 1` bounds over `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsps::LspsPlanner;
    use crate::model::Device;

    fn instance(
        gen: Vec<f64>,
        demand_price: f64,
    ) -> (ExogenousTrace, TariffSchedule, DeviceFleet, BatterySpec) {
        let horizon = gen.len();
        let tariff = TariffSchedule::flat(horizon, 0.12, 0.06, demand_price, 0.09).unwrap();
        let fleet = DeviceFleet::new(
            vec![Device::constant(1.0, 1.0, 1.0, horizon).unwrap()],
            horizon,
        )
        .unwrap();
        let battery = BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap();
        (ExogenousTrace::new(gen, None).unwrap(), tariff, fleet, battery)
    }

    #[test]
    fn scan_matches_planner_objective() {
        let (trace, tariff, fleet, battery) = instance(vec![0.0, 0.5, 2.0], 3.0);
        let planner = LspsPlanner::new(&trace, &tariff, &fleet, &battery).unwrap();
        let grid = uniform_grid(0.0, 2.5, 50);
        let scan = relaxed_grid_scan(&trace, &tariff, &fleet, &battery, &grid).unwrap();
        for (i, &c) in scan.c_grid.iter().enumerate() {
            let direct = planner.j_value(c);
            assert!(
                (scan.j_values[i] - direct).abs() < 1e-9,
                "J({c}) mismatch: {} vs {}",
                scan.j_values[i],
                direct
            );
        }
    }

    #[test]
    fn samples_are_concave() {
        let (trace, tariff, fleet, battery) = instance(vec![0.0, 1.0, 0.3, 1.7], 2.0);
        let grid = uniform_grid(0.0, 3.0, 60);
        let scan = relaxed_grid_scan(&trace, &tariff, &fleet, &battery, &grid).unwrap();
        assert!(scan.max_second_difference() <= 1e-9);
    }

    #[test]
    fn flat_beyond_largest_candidate_when_p_zero() {
        let (trace, tariff, fleet, battery) = instance(vec![0.0, 0.0], 0.0);
        let grid = uniform_grid(2.0, 5.0, 10);
        let scan = relaxed_grid_scan(&trace, &tariff, &fleet, &battery, &grid).unwrap();
        let first = scan.j_values[0];
        for &j in &scan.j_values {
            assert!((j - first).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_grid_is_an_error() {
        let (trace, tariff, fleet, battery) = instance(vec![0.0], 1.0);
        assert!(relaxed_grid_scan(&trace, &tariff, &fleet, &battery, &[]).is_err());
    }
}
