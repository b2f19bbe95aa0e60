//! Large-storage peak-searching planner.
//!
//! The planner works on a relaxed problem: battery capacity is ignored
//! (salvage `γ` is credited per unit of battery power inside the allocation
//! helper) and the running peak is replaced by a fixed bound `c`. For fixed
//! `c` the horizon decomposes into independent per-step problems with the
//! closed-form solution of [`LspsPlanner::fixed_peak_policy`]; the bound
//! objective `J(c)` is concave, so the optimal `c*` solves `J'(c*) = 0` on a
//! bracket located from a candidate set of at most `T` breakpoints. Planned
//! battery actions are finally clipped forward in time so the state of charge
//! stays inside `[0, B]`.
//!
//! The whole plan costs `O(T)` allocator builds plus a one-dimensional root
//! search whose iteration count is bounded, so planning scales linearly with
//! the horizon.

use crate::allocation::AllocationProblem;
use crate::error::{Error, Result};
use crate::model::{
    self, clamp, neg, pos, BatterySpec, ControlAction, DeviceFleet, EpisodeLedger,
    ExogenousTrace, TariffSchedule,
};

/// Bisection tolerance on the peak bound (kW) and iteration cap.
const ROOT_TOL: f64 = 1e-9;
const ROOT_MAX_ITERS: usize = 200;
const CLIP_TOL: f64 = 1e-9;

/// Outcome of the concave search for the optimal peak bound.
#[derive(Debug, Clone)]
pub struct PeakSearchReport {
    /// All per-step candidate values, sorted ascending, duplicates retained.
    pub candidates: Vec<f64>,
    /// Largest probe with positive objective slope (lower bracket end).
    pub c1: f64,
    /// Smallest probe with nonpositive slope (upper bracket end).
    pub c2: f64,
    pub c_star: f64,
    /// Objective value `J(c_star)` of the relaxed fixed-peak problem.
    pub j_star: f64,
    /// Steps whose peak bound binds just above `c1`.
    pub active_set: Vec<usize>,
    /// Bisection iterations used.
    pub iterations: usize,
}

/// One planned step.
#[derive(Debug, Clone)]
pub struct PlannedStep {
    /// Unconstrained per-step optimum `v†`.
    pub v_dagger: f64,
    /// Fixed-peak optimum `v*` at the chosen `c*`.
    pub v_star: f64,
    /// Planned battery power before capacity clipping.
    pub planned_battery: f64,
    /// Battery power after the forward clipping pass.
    pub battery: f64,
    pub demand: Vec<f64>,
    pub clipped: bool,
}

/// A full plan: per-step actions plus the peak-search report.
#[derive(Debug, Clone)]
pub struct LspsSchedule {
    pub steps: Vec<PlannedStep>,
    pub computed_peak: f64,
    pub report: PeakSearchReport,
    /// Steps whose battery action was changed by the capacity clip pass.
    pub clip_events: usize,
}

impl LspsSchedule {
    pub fn actions(&self) -> Vec<ControlAction> {
        self.steps
            .iter()
            .map(|s| ControlAction {
                battery: s.battery,
                demand: s.demand.clone(),
            })
            .collect()
    }
}

/// Plan evaluated on a realized trace.
#[derive(Debug)]
pub struct LspsOutcome {
    pub schedule: LspsSchedule,
    pub ledger: EpisodeLedger,
}

/// Planner state for one instance: per-step allocators and unconstrained
/// optima.
pub struct LspsPlanner<'a> {
    trace: &'a ExogenousTrace,
    tariff: &'a TariffSchedule,
    battery: &'a BatterySpec,
    allocs: Vec<AllocationProblem>,
    v_dagger: Vec<f64>,
}

impl<'a> LspsPlanner<'a> {
    pub fn new(
        trace: &'a ExogenousTrace,
        tariff: &'a TariffSchedule,
        fleet: &'a DeviceFleet,
        battery: &'a BatterySpec,
    ) -> Result<Self> {
        let horizon = trace.horizon();
        if tariff.horizon() != horizon || fleet.horizon() != horizon {
            return Err(Error::LengthMismatch(format!(
                "trace/tariff/fleet horizons disagree: {horizon}/{}/{}",
                tariff.horizon(),
                fleet.horizon()
            )));
        }
        let mut allocs = Vec::with_capacity(horizon);
        let mut v_dagger = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let alloc = AllocationProblem::at_step(fleet, battery, tariff.salvage(), t)?;
            v_dagger.push(unconstrained_optimum(
                &alloc,
                tariff.buy(t),
                tariff.sell(t),
                trace.gen(t),
            ));
            allocs.push(alloc);
        }
        Ok(Self {
            trace,
            tariff,
            battery,
            allocs,
            v_dagger,
        })
    }

    pub fn horizon(&self) -> usize {
        self.allocs.len()
    }

    /// Unconstrained per-step optimum `v†(g_t)`.
    pub fn v_dagger(&self, t: usize) -> f64 {
        self.v_dagger[t]
    }

    pub fn allocator(&self, t: usize) -> &AllocationProblem {
        &self.allocs[t]
    }

    /// Optimal `v` for the fixed peak bound `c`: `v†` clipped into
    /// `[v_min, min(c + g_t, v_max)]`. With mandatory consumption the lower
    /// bound can exceed the peak bound; the step then violates `c` by the
    /// smallest possible amount.
    pub fn fixed_peak_policy(&self, t: usize, c: f64) -> f64 {
        let alloc = &self.allocs[t];
        let cap = (c + self.trace.gen(t)).min(alloc.v_max());
        clamp(self.v_dagger[t], alloc.v_min(), cap.max(alloc.v_min()))
    }

    /// Per-step candidate values `min{v† - g, v_max - g}` (unsorted).
    pub fn candidate_values(&self) -> Vec<f64> {
        (0..self.horizon())
            .map(|t| (self.v_dagger[t].min(self.allocs[t].v_max())) - self.trace.gen(t))
            .collect()
    }

    /// Steps whose peak bound binds at `c` (strictly limiting, with the hard
    /// upper bound not the binding one).
    pub fn active_set(&self, c: f64) -> Vec<usize> {
        (0..self.horizon())
            .filter(|&t| {
                let alloc = &self.allocs[t];
                let cap = c + self.trace.gen(t);
                self.v_dagger[t] > cap && cap < alloc.v_max() && cap >= alloc.v_min()
            })
            .collect()
    }

    /// Slope of the fixed-peak objective:
    /// `J'(c) = -p + Σ_{active} (h'(c + g_t) - p⁺_t)`. Nonincreasing for
    /// `c >= 0`.
    pub fn j_prime(&self, c: f64) -> f64 {
        let mut slope = -self.tariff.demand_price();
        for t in 0..self.horizon() {
            let alloc = &self.allocs[t];
            let cap = c + self.trace.gen(t);
            if self.v_dagger[t] > cap && cap < alloc.v_max() && cap >= alloc.v_min() {
                // cap is inside the allocator domain here; at the lower end
                // h' reports the top marginal, the right limit we need.
                let level = alloc.h_prime(cap).expect("cap inside allocator domain");
                slope += level - self.tariff.buy(t);
            }
        }
        slope
    }

    /// Exact objective of the fixed-peak problem at bound `c` (salvage
    /// credited per unit of battery power, as in the relaxation).
    pub fn j_value(&self, c: f64) -> f64 {
        let mut total = -self.tariff.demand_price() * c;
        for t in 0..self.horizon() {
            let v = self.fixed_peak_policy(t, c);
            let g = self.trace.gen(t);
            let h = self.allocs[t].h_value(v).expect("v inside domain");
            total += h - self.tariff.buy(t) * pos(v - g) + self.tariff.sell(t) * neg(v - g);
        }
        total
    }

    /// Searches for the maximizer of the concave `J(c)`, floored at 0.
    pub fn find_c_star(&self) -> PeakSearchReport {
        let mut candidates = self.candidate_values();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let p = self.tariff.demand_price();
        let c_max = candidates.last().copied().unwrap_or(0.0).max(0.0);

        if p == 0.0 {
            // No demand-charge pressure: any bound beyond the largest
            // candidate is optimal; report the smallest such.
            let c_star = c_max;
            return PeakSearchReport {
                candidates,
                c1: c_star,
                c2: c_star,
                c_star,
                j_star: self.j_value(c_star),
                active_set: self.active_set(c_star),
                iterations: 0,
            };
        }

        // Probe points: 0 plus the nonnegative candidates (deduplicated).
        let mut probes = vec![0.0];
        for &c in &candidates {
            if c > 0.0 && probes.last().map_or(true, |&l| c > l + 1e-15) {
                probes.push(c);
            }
        }

        if self.j_prime(0.0) <= 0.0 {
            let c_star = 0.0;
            return PeakSearchReport {
                candidates,
                c1: 0.0,
                c2: probes.get(1).copied().unwrap_or(0.0),
                c_star,
                j_star: self.j_value(c_star),
                active_set: self.active_set(0.0),
                iterations: 0,
            };
        }

        // J' is nonincreasing on c >= 0, so the sign change is found by
        // binary search over the probes: each slope evaluation is O(T), and
        // O(log T) of them locate the bracket.
        let (c1, c2) = if self.j_prime(probes[probes.len() - 1]) > 0.0 {
            // Positive through the last candidate; beyond it the active set
            // is empty and J' = -p < 0 (only reachable with degenerate
            // candidates equal to c_max).
            (probes[probes.len() - 1], c_max)
        } else {
            let mut lo = 0;
            let mut hi = probes.len() - 1;
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if self.j_prime(probes[mid]) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (probes[lo], probes[hi])
        };

        // Bisect the monotone slope on [c1, c2].
        let active_set = self.active_set(c1 + 0.5 * (c2 - c1).max(ROOT_TOL));
        let mut lo = c1;
        let mut hi = c2;
        let mut iterations = 0;
        while hi - lo > ROOT_TOL && iterations < ROOT_MAX_ITERS {
            let mid = 0.5 * (lo + hi);
            if self.j_prime(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
        }
        let c_star = (0.5 * (lo + hi)).max(0.0);
        PeakSearchReport {
            candidates,
            c1,
            c2,
            c_star,
            j_star: self.j_value(c_star),
            active_set,
            iterations,
        }
    }

    /// Full plan from state of charge `s0`: fixed-peak actions at `c*`,
    /// projected to `(e, d)` pairs, battery clipped forward in time so the
    /// state of charge stays in `[0, B]`. No re-optimization after clipping.
    pub fn schedule(&self, s0: f64) -> Result<LspsSchedule> {
        let report = self.find_c_star();
        let c_star = report.c_star;
        let mut steps = Vec::with_capacity(self.horizon());
        let mut soc = s0;
        let mut clip_events = 0;
        for t in 0..self.horizon() {
            let v_star = self.fixed_peak_policy(t, c_star);
            let split = self.allocs[t].split(v_star)?;
            let (lo, hi) = model::feasible_battery_interval(soc, self.battery)?;
            let battery = clamp(split.battery, lo, hi);
            let clipped = (battery - split.battery).abs() > CLIP_TOL;
            if clipped {
                clip_events += 1;
            }
            soc = clamp(
                model::soc_step(soc, battery, self.battery),
                0.0,
                self.battery.capacity,
            );
            steps.push(PlannedStep {
                v_dagger: self.v_dagger[t],
                v_star,
                planned_battery: split.battery,
                battery,
                demand: split.demand,
                clipped,
            });
        }
        Ok(LspsSchedule {
            steps,
            computed_peak: c_star,
            report,
            clip_events,
        })
    }
}

/// The unconstrained per-step optimum `v†(g)`:
/// `(h')⁻¹(p⁻)` when that lies below `g` (excess generation is exported),
/// `g` inside the no-transaction band, `(h')⁻¹(p⁺)` when generation is short.
fn unconstrained_optimum(alloc: &AllocationProblem, buy: f64, sell: f64, g: f64) -> f64 {
    let inv_sell = alloc.h_prime_inv(sell);
    let inv_buy = alloc.h_prime_inv(buy);
    if inv_sell < g {
        inv_sell
    } else if inv_buy <= g {
        g
    } else {
        inv_buy
    }
}

/// Plans on `forecast` and evaluates the resulting open-loop action sequence
/// on `realized` (defaults to the forecast: perfect foresight).
pub fn run(
    forecast: &ExogenousTrace,
    realized: Option<&ExogenousTrace>,
    tariff: &TariffSchedule,
    fleet: &DeviceFleet,
    battery: &BatterySpec,
    s0: f64,
) -> Result<LspsOutcome> {
    let planner = LspsPlanner::new(forecast, tariff, fleet, battery)?;
    let schedule = planner.schedule(s0)?;
    let eval_trace = realized.unwrap_or(forecast);
    let ledger = model::simulate_episode(
        model::replay_actions(schedule.actions()),
        eval_trace,
        tariff,
        fleet,
        battery,
        s0,
    )?;
    Ok(LspsOutcome { schedule, ledger })
}
