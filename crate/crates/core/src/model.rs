//! Domain types, system dynamics, tariff payments, and reward accounting.
//!
//! Steps are hourly, which makes kW and kWh numerically interchangeable; all
//! internal math is in kWh per step and the demand charge applies to the peak
//! of the per-step net consumption `z_t`.
//!
//! Sign conventions:
//! - battery power `e > 0` charges, `e < 0` discharges;
//! - net consumption `z = 1'd + e - g`; `z > 0` imports, `z < 0` exports;
//! - a positive payment is money the prosumer pays the utility.

use crate::error::{Error, Result};

/// `max(x, 0)`.
#[inline]
pub fn pos(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `max(-x, 0)`, the magnitude of the negative part.
#[inline]
pub fn neg(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        0.0
    }
}

#[inline]
pub fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi + 1e-12, "empty interval [{lo}, {hi}]");
    x.max(lo).min(hi)
}

// ---------------------------------------------------------------------------
// Tariff
// ---------------------------------------------------------------------------

/// Net-metering tariff with a demand charge: per-step buy rate `p⁺_t` and sell
/// rate `p⁻_t` ($/kWh), a demand-charge price `p` ($/kW) on the billing-period
/// peak, a salvage rate `γ` ($/kWh) for terminal stored energy, and an
/// optional per-step fixed charge.
#[derive(Debug, Clone)]
pub struct TariffSchedule {
    buy: Vec<f64>,
    sell: Vec<f64>,
    demand_price: f64,
    salvage: f64,
    fixed_charge: f64,
}

impl TariffSchedule {
    /// Builds a tariff from per-step rate sequences. Requires
    /// `buy[t] >= sell[t] >= 0` for every step, `demand_price >= 0`, and
    /// `salvage >= 0`.
    pub fn new(
        buy: Vec<f64>,
        sell: Vec<f64>,
        demand_price: f64,
        salvage: f64,
        fixed_charge: f64,
    ) -> Result<Self> {
        if buy.len() != sell.len() {
            return Err(Error::LengthMismatch(format!(
                "buy has {} steps, sell has {}",
                buy.len(),
                sell.len()
            )));
        }
        if buy.is_empty() {
            return Err(Error::invalid("tariff", "horizon must be at least 1 step"));
        }
        for t in 0..buy.len() {
            if !buy[t].is_finite() || !sell[t].is_finite() || sell[t] < 0.0 || buy[t] < sell[t] {
                return Err(Error::invalid(
                    "tariff",
                    format!("need buy >= sell >= 0; step {t} has buy={}, sell={}", buy[t], sell[t]),
                ));
            }
        }
        if !demand_price.is_finite() || demand_price < 0.0 {
            return Err(Error::invalid("tariff", "demand_price must be >= 0"));
        }
        if !salvage.is_finite() || salvage < 0.0 {
            return Err(Error::invalid("tariff", "salvage must be >= 0"));
        }
        if !fixed_charge.is_finite() {
            return Err(Error::invalid("tariff", "fixed_charge must be finite"));
        }
        Ok(Self {
            buy,
            sell,
            demand_price,
            salvage,
            fixed_charge,
        })
    }

    /// Time-invariant rates over `horizon` steps (no fixed charge).
    pub fn flat(horizon: usize, buy: f64, sell: f64, demand_price: f64, salvage: f64) -> Result<Self> {
        Self::new(
            vec![buy; horizon],
            vec![sell; horizon],
            demand_price,
            salvage,
            0.0,
        )
    }

    pub fn horizon(&self) -> usize {
        self.buy.len()
    }

    pub fn buy(&self, t: usize) -> f64 {
        self.buy[t]
    }

    pub fn sell(&self, t: usize) -> f64 {
        self.sell[t]
    }

    pub fn demand_price(&self) -> f64 {
        self.demand_price
    }

    pub fn salvage(&self) -> f64 {
        self.salvage
    }

    pub fn fixed_charge(&self) -> f64 {
        self.fixed_charge
    }

    /// Returns a copy with a different demand-charge price (sweep helper).
    pub fn with_demand_price(&self, p: f64) -> Result<Self> {
        Self::new(
            self.buy.clone(),
            self.sell.clone(),
            p,
            self.salvage,
            self.fixed_charge,
        )
    }

    /// Returns a copy with a different flat sell rate (sweep helper).
    pub fn with_flat_sell(&self, sell: f64) -> Result<Self> {
        Self::new(
            self.buy.clone(),
            vec![sell; self.sell.len()],
            self.demand_price,
            self.salvage,
            self.fixed_charge,
        )
    }

    /// Returns a copy with a different salvage rate (sweep helper).
    pub fn with_salvage(&self, salvage: f64) -> Result<Self> {
        Self::new(
            self.buy.clone(),
            self.sell.clone(),
            self.demand_price,
            salvage,
            self.fixed_charge,
        )
    }
}

// ---------------------------------------------------------------------------
// Battery
// ---------------------------------------------------------------------------

/// Battery energy storage parameters: capacity `B` (kWh), charging limit `ē`
/// and discharging limit `e̲` (kW), charge/discharge efficiencies `τ, ρ` in
/// (0, 1].
#[derive(Debug, Clone, Copy)]
pub struct BatterySpec {
    pub capacity: f64,
    pub charge_limit: f64,
    pub discharge_limit: f64,
    pub eff_charge: f64,
    pub eff_discharge: f64,
}

impl BatterySpec {
    pub fn new(
        capacity: f64,
        charge_limit: f64,
        discharge_limit: f64,
        eff_charge: f64,
        eff_discharge: f64,
    ) -> Result<Self> {
        if !capacity.is_finite() || capacity < 0.0 {
            return Err(Error::invalid("battery", "capacity must be >= 0"));
        }
        if !charge_limit.is_finite() || charge_limit < 0.0 {
            return Err(Error::invalid("battery", "charge_limit must be >= 0"));
        }
        if !discharge_limit.is_finite() || discharge_limit < 0.0 {
            return Err(Error::invalid("battery", "discharge_limit must be >= 0"));
        }
        for (name, eff) in [("eff_charge", eff_charge), ("eff_discharge", eff_discharge)] {
            if !eff.is_finite() || eff <= 0.0 || eff > 1.0 {
                return Err(Error::invalid("battery", format!("{name} must be in (0, 1]")));
            }
        }
        Ok(Self {
            capacity,
            charge_limit,
            discharge_limit,
            eff_charge,
            eff_discharge,
        })
    }

    /// A degenerate battery that can neither charge nor discharge.
    pub fn none() -> Self {
        Self {
            capacity: 0.0,
            charge_limit: 0.0,
            discharge_limit: 0.0,
            eff_charge: 1.0,
            eff_discharge: 1.0,
        }
    }

    /// Returns a copy with a different capacity (sweep helper).
    pub fn with_capacity(&self, capacity: f64) -> Result<Self> {
        Self::new(
            capacity,
            self.charge_limit,
            self.discharge_limit,
            self.eff_charge,
            self.eff_discharge,
        )
    }
}

// ---------------------------------------------------------------------------
// Device fleet
// ---------------------------------------------------------------------------

/// One flexible device with per-step quadratic utility
/// `U_t(d) = α_t d - ½ β_t d²` and consumption box `[d_min_t, d_max_t]`.
///
/// Inflexible devices are expressed as `d_min = d_max`. The default lower
/// bound is 0.
#[derive(Debug, Clone)]
pub struct Device {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub d_max: Vec<f64>,
    pub d_min: Vec<f64>,
}

impl Device {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, d_max: Vec<f64>, d_min: Vec<f64>) -> Result<Self> {
        let t = alpha.len();
        if beta.len() != t || d_max.len() != t || d_min.len() != t {
            return Err(Error::LengthMismatch(
                "device parameter sequences must share one horizon".into(),
            ));
        }
        for i in 0..t {
            if !alpha[i].is_finite() || alpha[i] < 0.0 {
                return Err(Error::invalid("device", format!("alpha[{i}] must be >= 0")));
            }
            if !beta[i].is_finite() || beta[i] <= 0.0 {
                return Err(Error::invalid(
                    "device",
                    format!("beta[{i}] must be > 0 (strictly concave utility)"),
                ));
            }
            if !d_max[i].is_finite() || d_max[i] < 0.0 {
                return Err(Error::invalid("device", format!("d_max[{i}] must be >= 0")));
            }
            if !d_min[i].is_finite() || d_min[i] < 0.0 || d_min[i] > d_max[i] {
                return Err(Error::invalid(
                    "device",
                    format!("need 0 <= d_min[{i}] <= d_max[{i}]"),
                ));
            }
        }
        Ok(Self {
            alpha,
            beta,
            d_max,
            d_min,
        })
    }

    /// Time-invariant device parameters over `horizon` steps, lower bound 0.
    pub fn constant(alpha: f64, beta: f64, d_max: f64, horizon: usize) -> Result<Self> {
        Self::new(
            vec![alpha; horizon],
            vec![beta; horizon],
            vec![d_max; horizon],
            vec![0.0; horizon],
        )
    }

    /// Utility of consuming `d` at step `t`.
    #[inline]
    pub fn utility(&self, t: usize, d: f64) -> f64 {
        self.alpha[t] * d - 0.5 * self.beta[t] * d * d
    }

    /// Marginal utility `α_t - β_t d`.
    #[inline]
    pub fn marginal(&self, t: usize, d: f64) -> f64 {
        self.alpha[t] - self.beta[t] * d
    }
}

/// The collection of flexible devices sharing one horizon.
#[derive(Debug, Clone)]
pub struct DeviceFleet {
    devices: Vec<Device>,
    horizon: usize,
}

impl DeviceFleet {
    pub fn new(devices: Vec<Device>, horizon: usize) -> Result<Self> {
        for (k, dev) in devices.iter().enumerate() {
            if dev.alpha.len() != horizon {
                return Err(Error::LengthMismatch(format!(
                    "device {k} has horizon {}, fleet expects {horizon}",
                    dev.alpha.len()
                )));
            }
        }
        Ok(Self { devices, horizon })
    }

    /// A fleet with no devices (battery-only problems).
    pub fn empty(horizon: usize) -> Self {
        Self {
            devices: Vec::new(),
            horizon,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn device(&self, k: usize) -> &Device {
        &self.devices[k]
    }

    /// Total utility of a consumption bundle at step `t`.
    pub fn utility(&self, t: usize, demand: &[f64]) -> f64 {
        debug_assert_eq!(demand.len(), self.devices.len());
        self.devices
            .iter()
            .zip(demand)
            .map(|(dev, &d)| dev.utility(t, d))
            .sum()
    }

    /// Sum of consumption upper bounds at step `t` (`1'd̄`).
    pub fn total_d_max(&self, t: usize) -> f64 {
        self.devices.iter().map(|d| d.d_max[t]).sum()
    }

    /// Sum of consumption lower bounds at step `t`.
    pub fn total_d_min(&self, t: usize) -> f64 {
        self.devices.iter().map(|d| d.d_min[t]).sum()
    }

    /// Clips a demand vector into the per-device boxes at step `t`.
    /// Returns the number of coordinates that moved by more than `tol`.
    pub fn clip_demand(&self, t: usize, demand: &mut [f64], tol: f64) -> usize {
        let mut clipped = 0;
        for (k, dev) in self.devices.iter().enumerate() {
            let d = clamp(demand[k], dev.d_min[t], dev.d_max[t]);
            if (d - demand[k]).abs() > tol {
                clipped += 1;
            }
            demand[k] = d;
        }
        clipped
    }
}

// ---------------------------------------------------------------------------
// Exogenous trace
// ---------------------------------------------------------------------------

/// Time-indexed renewable generation (kWh per step) and an optional reference
/// demand sequence, both hourly.
#[derive(Debug, Clone)]
pub struct ExogenousTrace {
    generation: Vec<f64>,
    reference_demand: Option<Vec<f64>>,
    step_hours: f64,
}

impl ExogenousTrace {
    pub fn new(generation: Vec<f64>, reference_demand: Option<Vec<f64>>) -> Result<Self> {
        Self::with_step(generation, reference_demand, 1.0)
    }

    pub fn with_step(
        generation: Vec<f64>,
        reference_demand: Option<Vec<f64>>,
        step_hours: f64,
    ) -> Result<Self> {
        if generation.is_empty() {
            return Err(Error::invalid("trace", "horizon must be at least 1 step"));
        }
        for (t, &g) in generation.iter().enumerate() {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::invalid("trace", format!("generation[{t}] must be >= 0")));
            }
        }
        if let Some(d) = &reference_demand {
            if d.len() != generation.len() {
                return Err(Error::LengthMismatch(format!(
                    "reference demand has {} steps, generation has {}",
                    d.len(),
                    generation.len()
                )));
            }
        }
        if !(step_hours > 0.0) {
            return Err(Error::invalid("trace", "step_hours must be > 0"));
        }
        Ok(Self {
            generation,
            reference_demand,
            step_hours,
        })
    }

    pub fn horizon(&self) -> usize {
        self.generation.len()
    }

    pub fn generation(&self) -> &[f64] {
        &self.generation
    }

    pub fn gen(&self, t: usize) -> f64 {
        self.generation[t]
    }

    pub fn reference_demand(&self) -> Option<&[f64]> {
        self.reference_demand.as_deref()
    }

    pub fn step_hours(&self) -> f64 {
        self.step_hours
    }

    /// Replaces the generation sequence, keeping everything else.
    pub fn with_generation(&self, generation: Vec<f64>) -> Result<Self> {
        Self::with_step(generation, self.reference_demand.clone(), self.step_hours)
    }
}

// ---------------------------------------------------------------------------
// State / action
// ---------------------------------------------------------------------------

/// System state `(s_t, g_t, c_t)`: stored energy, current generation, and the
/// running peak of net consumption so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub soc: f64,
    pub generation: f64,
    pub peak: f64,
}

/// Control `(e_t, d_t)`: signed battery power and the demand bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction {
    pub battery: f64,
    pub demand: Vec<f64>,
}

impl ControlAction {
    pub fn idle(num_devices: usize) -> Self {
        Self {
            battery: 0.0,
            demand: vec![0.0; num_devices],
        }
    }
}

// ---------------------------------------------------------------------------
// Core dynamics and payments
// ---------------------------------------------------------------------------

/// Per-step payment `P_t(z, c) = p⁺_t[z]⁺ - p⁻_t[z]⁻ + p[z-c]⁺ + A_t`.
pub fn payment(z: f64, c: f64, t: usize, tariff: &TariffSchedule) -> Result<f64> {
    if t >= tariff.horizon() {
        return Err(Error::out_of_range(
            "step index",
            format!("t={t} but horizon is {}", tariff.horizon()),
        ));
    }
    debug_assert!(c >= 0.0, "running peak must be nonnegative");
    Ok(tariff.buy(t) * pos(z) - tariff.sell(t) * neg(z)
        + tariff.demand_price() * pos(z - c)
        + tariff.fixed_charge())
}

/// State-of-charge transition `s' = s + τ[e]⁺ - [e]⁻/ρ`.
///
/// Pure function; the caller screens feasibility via
/// [`feasible_battery_interval`].
#[inline]
pub fn soc_step(s: f64, e: f64, spec: &BatterySpec) -> f64 {
    s + spec.eff_charge * pos(e) - neg(e) / spec.eff_discharge
}

/// The closed interval of battery powers that keep the next state of charge
/// inside `[0, B]`: `[max{-e̲, -ρs}, min{ē, (B-s)/τ}]`.
pub fn feasible_battery_interval(s: f64, spec: &BatterySpec) -> Result<(f64, f64)> {
    if !(s >= -1e-9 && s <= spec.capacity + 1e-9) {
        return Err(Error::out_of_range(
            "state of charge",
            format!("s={s} not in [0, {}]", spec.capacity),
        ));
    }
    let s = clamp(s, 0.0, spec.capacity);
    let lo = (-spec.discharge_limit).max(-spec.eff_discharge * s);
    let hi = spec
        .charge_limit
        .min((spec.capacity - s) / spec.eff_charge);
    Ok((lo, hi.max(lo)))
}

/// Peak update `c' = max(z, c)`.
#[inline]
pub fn peak_step(z: f64, c: f64) -> f64 {
    z.max(c)
}

// ---------------------------------------------------------------------------
// Episode simulation
// ---------------------------------------------------------------------------

/// One realized step of an episode.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub state: SystemState,
    /// Action after clipping to the feasible set.
    pub action: ControlAction,
    pub net_consumption: f64,
    pub payment: f64,
    pub utility: f64,
    pub reward: f64,
    /// True when the policy's raw action had to be clipped.
    pub battery_clipped: bool,
    pub demand_clipped: bool,
}

/// Full record of a simulated episode, with totals.
#[derive(Debug, Clone)]
pub struct EpisodeLedger {
    pub steps: Vec<StepRecord>,
    /// Salvage reward `γ s_T` granted at the horizon.
    pub terminal_reward: f64,
    pub final_soc: f64,
    /// Realized peak `c_T` after the last step.
    pub realized_peak: f64,
    pub total_utility: f64,
    pub total_payment: f64,
    /// Sum of stage rewards, excluding the terminal salvage.
    pub stage_reward: f64,
    pub battery_clip_events: usize,
    pub demand_clip_events: usize,
}

impl EpisodeLedger {
    /// Total reward: stage rewards plus terminal salvage.
    pub fn total_reward(&self) -> f64 {
        self.stage_reward + self.terminal_reward
    }

    pub fn clip_events(&self) -> usize {
        self.battery_clip_events + self.demand_clip_events
    }
}

const CLIP_TOL: f64 = 1e-9;

/// Simulates one episode from `s0` with zero initial peak, applying `policy`
/// step by step. Raw actions are clipped into the feasible set (battery to
/// [`feasible_battery_interval`], demand to its boxes) and clip events are
/// counted in the ledger. The terminal salvage `γ s_T` is added at the end.
pub fn simulate_episode<P>(
    policy: P,
    trace: &ExogenousTrace,
    tariff: &TariffSchedule,
    fleet: &DeviceFleet,
    spec: &BatterySpec,
    s0: f64,
) -> Result<EpisodeLedger>
where
    P: FnMut(&SystemState, usize) -> ControlAction,
{
    simulate_episode_from(policy, trace, tariff, fleet, spec, s0, 0.0)
}

/// [`simulate_episode`] with an explicit initial peak, so that an episode can
/// be split and resumed with carried state.
pub fn simulate_episode_from<P>(
    mut policy: P,
    trace: &ExogenousTrace,
    tariff: &TariffSchedule,
    fleet: &DeviceFleet,
    spec: &BatterySpec,
    s0: f64,
    c0: f64,
) -> Result<EpisodeLedger>
where
    P: FnMut(&SystemState, usize) -> ControlAction,
{
    let horizon = trace.horizon();
    if tariff.horizon() != horizon {
        return Err(Error::LengthMismatch(format!(
            "trace has {horizon} steps, tariff has {}",
            tariff.horizon()
        )));
    }
    if fleet.horizon() != horizon {
        return Err(Error::LengthMismatch(format!(
            "trace has {horizon} steps, fleet has {}",
            fleet.horizon()
        )));
    }
    if !(0.0..=spec.capacity + 1e-9).contains(&s0) {
        return Err(Error::out_of_range(
            "initial state of charge",
            format!("s0={s0} not in [0, {}]", spec.capacity),
        ));
    }

    let mut soc = clamp(s0, 0.0, spec.capacity);
    let mut peak = c0.max(0.0);
    let mut steps = Vec::with_capacity(horizon);
    let mut total_utility = 0.0;
    let mut total_payment = 0.0;
    let mut stage_reward = 0.0;
    let mut battery_clips = 0;
    let mut demand_clips = 0;

    for t in 0..horizon {
        let state = SystemState {
            soc,
            generation: trace.gen(t),
            peak,
        };
        let raw = policy(&state, t);
        if raw.demand.len() != fleet.len() {
            return Err(Error::LengthMismatch(format!(
                "policy returned {} demand entries for {} devices",
                raw.demand.len(),
                fleet.len()
            )));
        }

        let (e_lo, e_hi) = feasible_battery_interval(soc, spec)?;
        let e = clamp(raw.battery, e_lo, e_hi);
        let battery_clipped = (e - raw.battery).abs() > CLIP_TOL;
        if battery_clipped {
            battery_clips += 1;
        }

        let mut demand = raw.demand;
        let demand_clipped = fleet.clip_demand(t, &mut demand, CLIP_TOL) > 0;
        if demand_clipped {
            demand_clips += 1;
        }

        let z = demand.iter().sum::<f64>() + e - trace.gen(t);
        let pay = payment(z, peak, t, tariff)?;
        let util = fleet.utility(t, &demand);
        let reward = util - pay;

        total_utility += util;
        total_payment += pay;
        stage_reward += reward;

        steps.push(StepRecord {
            state,
            action: ControlAction { battery: e, demand },
            net_consumption: z,
            payment: pay,
            utility: util,
            reward,
            battery_clipped,
            demand_clipped,
        });

        soc = clamp(soc_step(soc, e, spec), 0.0, spec.capacity);
        peak = peak_step(z, peak);
    }

    let terminal_reward = tariff.salvage() * soc;
    Ok(EpisodeLedger {
        steps,
        terminal_reward,
        final_soc: soc,
        realized_peak: peak,
        total_utility,
        total_payment,
        stage_reward,
        battery_clip_events: battery_clips,
        demand_clip_events: demand_clips,
    })
}

/// Runs a precomputed action sequence as a policy (open-loop evaluation).
pub fn replay_actions(actions: Vec<ControlAction>) -> impl FnMut(&SystemState, usize) -> ControlAction {
    move |_state, t| actions[t].clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn tariff_12_6_10(t: usize) -> TariffSchedule {
        TariffSchedule::flat(t, 0.12, 0.06, 10.0, 0.09).unwrap()
    }

    fn battery_1kw() -> BatterySpec {
        BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap()
    }

    #[test]
    fn payment_import_with_peak_excess() {
        let tariff = tariff_12_6_10(1);
        let p = payment(2.0, 1.0, 0, &tariff).unwrap();
        assert!((p - 10.24).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn payment_pure_export() {
        let tariff = tariff_12_6_10(1);
        let p = payment(-3.0, 0.0, 0, &tariff).unwrap();
        assert!((p - (-0.18)).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn payment_zero_net() {
        let tariff = tariff_12_6_10(1);
        let p = payment(0.0, 5.0, 0, &tariff).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn payment_rejects_bad_index() {
        let tariff = tariff_12_6_10(2);
        assert!(payment(1.0, 0.0, 2, &tariff).is_err());
    }

    #[test]
    fn tariff_rejects_sell_above_buy() {
        assert!(TariffSchedule::flat(4, 0.05, 0.06, 1.0, 0.09).is_err());
    }

    #[test]
    fn soc_step_charge_discharge() {
        let spec = battery_1kw();
        assert!((soc_step(2.0, 1.0, &spec) - 2.95).abs() < 1e-12);
        assert!((soc_step(2.0, -1.0, &spec) - (2.0 - 1.0 / 0.95)).abs() < 1e-12);
        assert_eq!(soc_step(0.0, 0.0, &spec), 0.0);
    }

    #[test]
    fn feasible_interval_empty_battery() {
        let spec = battery_1kw();
        let (lo, hi) = feasible_battery_interval(0.0, &spec).unwrap();
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn feasible_interval_full_battery() {
        let spec = battery_1kw();
        let (lo, hi) = feasible_battery_interval(5.0, &spec).unwrap();
        assert_eq!((lo, hi), (-1.0, 0.0));
    }

    #[test]
    fn feasible_interval_near_full() {
        let spec = battery_1kw();
        let (lo, hi) = feasible_battery_interval(4.9, &spec).unwrap();
        assert_eq!(lo, -1.0);
        assert!((hi - 0.1 / 0.95).abs() < 1e-12);
    }

    #[test]
    fn feasible_interval_rejects_out_of_bounds_soc() {
        let spec = battery_1kw();
        assert!(feasible_battery_interval(5.5, &spec).is_err());
        assert!(feasible_battery_interval(-0.5, &spec).is_err());
    }

    #[test]
    fn peak_step_cases() {
        assert_eq!(peak_step(3.0, 1.0), 3.0);
        assert_eq!(peak_step(-2.0, 0.0), 0.0);
        assert_eq!(peak_step(1.0, 1.0), 1.0);
    }

    #[test]
    fn zero_policy_total_is_salvage() {
        let horizon = 6;
        let tariff = tariff_12_6_10(horizon);
        let fleet = DeviceFleet::new(
            vec![Device::constant(1.0, 1.0, 1.0, horizon).unwrap()],
            horizon,
        )
        .unwrap();
        let trace = ExogenousTrace::new(vec![0.0; horizon], None).unwrap();
        let spec = battery_1kw();
        let s0 = 3.0;
        let ledger =
            simulate_episode(|_, _| ControlAction::idle(1), &trace, &tariff, &fleet, &spec, s0)
                .unwrap();
        assert!((ledger.total_reward() - 0.09 * s0).abs() < 1e-12);
        assert_eq!(ledger.clip_events(), 0);
        assert_eq!(ledger.realized_peak, 0.0);
    }

    #[test]
    fn single_step_unrolls_definition() {
        let tariff = tariff_12_6_10(1);
        let fleet =
            DeviceFleet::new(vec![Device::constant(1.0, 1.0, 1.0, 1).unwrap()], 1).unwrap();
        let trace = ExogenousTrace::new(vec![0.5], None).unwrap();
        let spec = battery_1kw();
        let ledger = simulate_episode(
            |_, _| ControlAction {
                battery: 0.4,
                demand: vec![0.7],
            },
            &trace,
            &tariff,
            &fleet,
            &spec,
            1.0,
        )
        .unwrap();
        let z = 0.7 + 0.4 - 0.5;
        let expected = fleet.utility(0, &[0.7]) - payment(z, 0.0, 0, &tariff).unwrap()
            + 0.09 * soc_step(1.0, 0.4, &spec);
        assert!((ledger.total_reward() - expected).abs() < 1e-12);
    }

    #[test]
    fn hand_unrolled_three_step_backuplike_policy() {
        // Fixed action sequence on a 3-step trace, checked against a manual
        // unrolling of payments, peaks, and SoC.
        let horizon = 3;
        let tariff = tariff_12_6_10(horizon);
        let fleet = DeviceFleet::new(
            vec![Device::constant(1.0, 1.0, 1.0, horizon).unwrap()],
            horizon,
        )
        .unwrap();
        let trace = ExogenousTrace::new(vec![0.0, 2.0, 0.5], None).unwrap();
        let spec = battery_1kw();
        let actions = vec![
            ControlAction { battery: 0.0, demand: vec![0.8] },
            ControlAction { battery: 1.0, demand: vec![0.6] },
            ControlAction { battery: 0.0, demand: vec![0.9] },
        ];
        let ledger = simulate_episode(
            replay_actions(actions.clone()),
            &trace,
            &tariff,
            &fleet,
            &spec,
            0.0,
        )
        .unwrap();

        // Manual ledger.
        let mut soc = 0.0;
        let mut peak: f64 = 0.0;
        let mut total = 0.0;
        for t in 0..horizon {
            let a = &actions[t];
            let z = a.demand[0] + a.battery - trace.gen(t);
            total += fleet.utility(t, &a.demand) - payment(z, peak, t, &tariff).unwrap();
            soc = soc_step(soc, a.battery, &spec);
            peak = peak.max(z);
        }
        total += tariff.salvage() * soc;

        assert!((ledger.total_reward() - total).abs() < 1e-12);
        assert!((ledger.realized_peak - peak).abs() < 1e-12);
        assert_eq!(ledger.clip_events(), 0);
    }

    #[test]
    fn infeasible_actions_are_clipped_and_counted() {
        let horizon = 2;
        let tariff = tariff_12_6_10(horizon);
        let fleet = DeviceFleet::new(
            vec![Device::constant(1.0, 1.0, 1.0, horizon).unwrap()],
            horizon,
        )
        .unwrap();
        let trace = ExogenousTrace::new(vec![0.0; horizon], None).unwrap();
        let spec = battery_1kw();
        let ledger = simulate_episode(
            |_, _| ControlAction {
                battery: -3.0,       // discharge from an empty battery
                demand: vec![7.0],   // beyond d_max
            },
            &trace,
            &tariff,
            &fleet,
            &spec,
            0.0,
        )
        .unwrap();
        assert_eq!(ledger.battery_clip_events, 2);
        assert_eq!(ledger.demand_clip_events, 2);
        assert_eq!(ledger.steps[0].action.battery, 0.0);
        assert_eq!(ledger.steps[0].action.demand[0], 1.0);
    }

    #[test]
    fn demand_charge_decomposition_identity() {
        // Rolling per-step demand charges telescope to p * max(max_t z_t, 0).
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let t_len = rng.gen_range(1..=100);
            let p = rng.gen_range(0.0..10.0);
            let zs: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut c = 0.0;
            let mut total = 0.0;
            for &z in &zs {
                total += p * pos(z - c);
                c = peak_step(z, c);
            }
            let max_z = zs.iter().cloned().fold(0.0_f64, f64::max);
            assert!(
                (total - p * max_z).abs() <= 1e-12,
                "identity violated: {total} vs {}",
                p * max_z
            );
        }
    }

    #[test]
    fn payment_is_convex_in_z_and_nonincreasing_in_c() {
        let tariff = tariff_12_6_10(1);
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..500 {
            let c = rng.gen_range(0.0..3.0);
            let z1 = rng.gen_range(-5.0..5.0);
            let z2 = rng.gen_range(-5.0..5.0);
            let mid = payment(0.5 * (z1 + z2), c, 0, &tariff).unwrap();
            let avg = 0.5
                * (payment(z1, c, 0, &tariff).unwrap() + payment(z2, c, 0, &tariff).unwrap());
            assert!(mid <= avg + 1e-12, "convexity violated");

            let z = rng.gen_range(-5.0..5.0);
            let c_hi = c + rng.gen_range(0.0..2.0);
            let p_lo = payment(z, c, 0, &tariff).unwrap();
            let p_hi = payment(z, c_hi, 0, &tariff).unwrap();
            assert!(p_hi <= p_lo + 1e-12, "payment must not increase in c");
        }
    }

    #[test]
    fn episode_split_equals_full_run() {
        let horizon = 8;
        let tariff = tariff_12_6_10(horizon);
        let fleet = DeviceFleet::new(
            vec![Device::constant(1.2, 0.8, 1.5, horizon).unwrap()],
            horizon,
        )
        .unwrap();
        let gen: Vec<f64> = (0..horizon).map(|t| (t as f64 * 0.7).sin().max(0.0)).collect();
        let trace = ExogenousTrace::new(gen.clone(), None).unwrap();
        let spec = battery_1kw();
        let mut rng = StdRng::seed_from_u64(3);
        let actions: Vec<ControlAction> = (0..horizon)
            .map(|_| ControlAction {
                battery: rng.gen_range(-1.0..1.0),
                demand: vec![rng.gen_range(0.0..1.5)],
            })
            .collect();

        let full = simulate_episode(
            replay_actions(actions.clone()),
            &trace,
            &tariff,
            &fleet,
            &spec,
            2.0,
        )
        .unwrap();

        let half = horizon / 2;
        let t1 = TariffSchedule::new(
            (0..half).map(|t| tariff.buy(t)).collect(),
            (0..half).map(|t| tariff.sell(t)).collect(),
            tariff.demand_price(),
            tariff.salvage(),
            tariff.fixed_charge(),
        )
        .unwrap();
        let t2 = TariffSchedule::new(
            (half..horizon).map(|t| tariff.buy(t)).collect(),
            (half..horizon).map(|t| tariff.sell(t)).collect(),
            tariff.demand_price(),
            tariff.salvage(),
            tariff.fixed_charge(),
        )
        .unwrap();
        let fleet1 = DeviceFleet::new(
            vec![Device::constant(1.2, 0.8, 1.5, half).unwrap()],
            half,
        )
        .unwrap();
        let fleet2 = DeviceFleet::new(
            vec![Device::constant(1.2, 0.8, 1.5, horizon - half).unwrap()],
            horizon - half,
        )
        .unwrap();
        let trace1 = ExogenousTrace::new(gen[..half].to_vec(), None).unwrap();
        let trace2 = ExogenousTrace::new(gen[half..].to_vec(), None).unwrap();

        let first = simulate_episode(
            replay_actions(actions[..half].to_vec()),
            &trace1,
            &t1,
            &fleet1,
            &spec,
            2.0,
        )
        .unwrap();
        let second = simulate_episode_from(
            replay_actions(actions[half..].to_vec()),
            &trace2,
            &t2,
            &fleet2,
            &spec,
            first.final_soc,
            first.realized_peak,
        )
        .unwrap();

        let stitched = first.stage_reward + second.stage_reward + second.terminal_reward;
        assert!(
            (stitched - full.total_reward()).abs() < 1e-9,
            "{} vs {}",
            stitched,
            full.total_reward()
        );
        assert!((second.realized_peak - full.realized_peak).abs() < 1e-12);
    }

    #[test]
    fn trace_tariff_length_mismatch_is_an_error() {
        let tariff = tariff_12_6_10(3);
        let fleet = DeviceFleet::empty(4);
        let trace = ExogenousTrace::new(vec![0.0; 4], None).unwrap();
        let spec = battery_1kw();
        assert!(simulate_episode(
            |_, _| ControlAction::idle(0),
            &trace,
            &tariff,
            &fleet,
            &spec,
            0.0
        )
        .is_err());
    }
}
