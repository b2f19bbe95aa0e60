//! Reference control policies: backup mode and the renewable-adjusted
//! threshold policy (RATP), each paired with a demand rule.
//!
//! Neither policy looks at the demand charge or at future steps, which is
//! exactly why they serve as gap baselines. Both always emit feasible
//! actions, so simulation records no clip events for them.

use crate::error::{Error, Result};
use crate::model::{
    clamp, pos, BatterySpec, ControlAction, DeviceFleet, SystemState, TariffSchedule,
};

/// How the per-step demand bundle is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemandRule {
    /// Each device consumes to the point where marginal utility equals the
    /// current retail rate: `d_k = clip((α_k - p⁺_t)/β_k, d_min, d_max)`.
    MyopicRetail,
    /// Replay the trace's recorded demand, distributed over devices in
    /// proportion to their consumption caps.
    ReferenceTrace,
}

/// Baseline configuration.
#[derive(Debug, Clone, Copy)]
pub struct BaselineConfig {
    pub demand_rule: DemandRule,
    /// Backup mode charges toward this state of charge (defaults to the full
    /// capacity).
    pub backup_target_soc: Option<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            demand_rule: DemandRule::MyopicRetail,
            backup_target_soc: None,
        }
    }
}

/// Myopic demand: marginal utility equals the retail rate.
pub fn myopic_demand(t: usize, tariff: &TariffSchedule, fleet: &DeviceFleet) -> Vec<f64> {
    fleet
        .devices()
        .iter()
        .map(|dev| {
            clamp(
                (dev.alpha[t] - tariff.buy(t)) / dev.beta[t],
                dev.d_min[t],
                dev.d_max[t],
            )
        })
        .collect()
}

/// Distributes a total reference demand across devices in proportion to
/// their caps, clipped into the boxes.
pub fn reference_demand(t: usize, fleet: &DeviceFleet, total: f64) -> Vec<f64> {
    let cap_sum = fleet.total_d_max(t);
    fleet
        .devices()
        .iter()
        .map(|dev| {
            let share = if cap_sum > 0.0 {
                total * dev.d_max[t] / cap_sum
            } else {
                0.0
            };
            clamp(share, dev.d_min[t], dev.d_max[t])
        })
        .collect()
}

fn demand_for(
    rule: DemandRule,
    t: usize,
    tariff: &TariffSchedule,
    fleet: &DeviceFleet,
    reference: Option<&[f64]>,
) -> Result<Vec<f64>> {
    match rule {
        DemandRule::MyopicRetail => Ok(myopic_demand(t, tariff, fleet)),
        DemandRule::ReferenceTrace => {
            let trace = reference.ok_or_else(|| {
                Error::invalid(
                    "baseline demand",
                    "reference_trace demand rule needs a trace with a demand column",
                )
            })?;
            Ok(reference_demand(t, fleet, trace[t]))
        }
    }
}

/// Backup mode: the battery stores renewable surplus toward the target state
/// of charge and never discharges (no outages are simulated), so it is
/// equivalent to having no battery during normal operation.
pub fn backup_policy(
    state: &SystemState,
    t: usize,
    tariff: &TariffSchedule,
    fleet: &DeviceFleet,
    battery: &BatterySpec,
    config: &BaselineConfig,
    reference: Option<&[f64]>,
) -> Result<ControlAction> {
    let demand = demand_for(config.demand_rule, t, tariff, fleet, reference)?;
    let target = config
        .backup_target_soc
        .unwrap_or(battery.capacity)
        .min(battery.capacity);
    let surplus = pos(state.generation - demand.iter().sum::<f64>());
    let headroom = pos(target - state.soc) / battery.eff_charge;
    let e = battery.charge_limit.min(headroom).min(surplus);
    Ok(ControlAction { battery: e, demand })
}

/// Renewable-adjusted threshold policy: with adjusted gross consumption
/// `d̃ = d̂ - g`, discharge to cover a positive `d̃` and charge to absorb a
/// negative one, within the battery's feasible interval:
///
/// ```text
/// e = max{-e̲, -ρ s, -d̃}   if d̃ > 0
/// e = min{ē, (B - s)/τ, -d̃} if d̃ <= 0
/// ```
pub fn ratp_policy(state: &SystemState, battery: &BatterySpec, d_hat: f64) -> ControlAction {
    let d_tilde = d_hat - state.generation;
    let e = if d_tilde > 0.0 {
        (-battery.discharge_limit)
            .max(-battery.eff_discharge * state.soc)
            .max(-d_tilde)
    } else {
        battery
            .charge_limit
            .min((battery.capacity - state.soc) / battery.eff_charge)
            .min(-d_tilde)
    };
    ControlAction {
        battery: e,
        demand: Vec::new(),
    }
}

/// RATP step with the demand rule applied: demand first, then the threshold
/// battery response to the adjusted gross consumption.
pub fn ratp_step(
    state: &SystemState,
    t: usize,
    tariff: &TariffSchedule,
    fleet: &DeviceFleet,
    battery: &BatterySpec,
    config: &BaselineConfig,
    reference: Option<&[f64]>,
) -> Result<ControlAction> {
    let demand = demand_for(config.demand_rule, t, tariff, fleet, reference)?;
    let d_hat = demand.iter().sum::<f64>();
    let mut action = ratp_policy(state, battery, d_hat);
    action.demand = demand;
    Ok(action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{self, Device, ExogenousTrace};

    fn setup(horizon: usize) -> (TariffSchedule, DeviceFleet, BatterySpec) {
        (
            TariffSchedule::flat(horizon, 0.12, 0.06, 10.0, 0.09).unwrap(),
            DeviceFleet::new(
                vec![Device::constant(1.0, 1.0, 1.0, horizon).unwrap()],
                horizon,
            )
            .unwrap(),
            BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap(),
        )
    }

    #[test]
    fn myopic_demand_formula() {
        let (tariff, fleet, _) = setup(1);
        let d = myopic_demand(0, &tariff, &fleet);
        assert!((d[0] - 0.88).abs() < 1e-12);

        // Retail at or above the marginal value pushes demand to the corner.
        let expensive = TariffSchedule::flat(1, 1.5, 0.0, 0.0, 0.09).unwrap();
        assert_eq!(myopic_demand(0, &expensive, &fleet)[0], 0.0);

        // A very steep utility curve pushes demand toward zero.
        let steep = DeviceFleet::new(vec![Device::constant(1.0, 1e6, 1.0, 1).unwrap()], 1).unwrap();
        assert!(myopic_demand(0, &tariff, &steep)[0] < 1e-5);
    }

    #[test]
    fn backup_charges_only_from_surplus() {
        let (tariff, fleet, battery) = setup(1);
        let config = BaselineConfig::default();
        // Full battery: no action regardless of surplus.
        let state = SystemState { soc: 5.0, generation: 3.0, peak: 0.0 };
        let a = backup_policy(&state, 0, &tariff, &fleet, &battery, &config, None).unwrap();
        assert_eq!(a.battery, 0.0);

        // No generation: nothing to store.
        let state = SystemState { soc: 0.0, generation: 0.0, peak: 0.0 };
        let a = backup_policy(&state, 0, &tariff, &fleet, &battery, &config, None).unwrap();
        assert_eq!(a.battery, 0.0);

        // Surplus above the charge limit is clipped to it: g=2, d̂=0.88.
        let state = SystemState { soc: 0.0, generation: 2.0, peak: 0.0 };
        let a = backup_policy(&state, 0, &tariff, &fleet, &battery, &config, None).unwrap();
        assert_eq!(a.battery, 1.0);
    }

    #[test]
    fn backup_respects_target_soc() {
        let (tariff, fleet, battery) = setup(1);
        let config = BaselineConfig {
            backup_target_soc: Some(2.0),
            ..Default::default()
        };
        let state = SystemState { soc: 1.9, generation: 3.0, peak: 0.0 };
        let a = backup_policy(&state, 0, &tariff, &fleet, &battery, &config, None).unwrap();
        assert!((a.battery - 0.1 / 0.95).abs() < 1e-12);
    }

    #[test]
    fn ratp_reference_cases() {
        let battery = BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap();
        // Deficit 0.5 with plenty stored: cover it exactly.
        let state = SystemState { soc: 2.0, generation: 0.5, peak: 0.0 };
        let a = ratp_policy(&state, &battery, 1.0);
        assert!((a.battery - (-0.5)).abs() < 1e-12);

        // Surplus 1.5 from an empty battery: charge at the limit.
        let state = SystemState { soc: 0.0, generation: 2.0, peak: 0.0 };
        let a = ratp_policy(&state, &battery, 0.5);
        assert!((a.battery - 1.0).abs() < 1e-12);

        // Balanced: idle.
        let state = SystemState { soc: 2.0, generation: 0.7, peak: 0.0 };
        let a = ratp_policy(&state, &battery, 0.7);
        assert_eq!(a.battery, 0.0);
    }

    #[test]
    fn policies_emit_feasible_actions_without_clips() {
        let horizon = 24;
        let (tariff, fleet, battery) = setup(horizon);
        let gen: Vec<f64> = (0..horizon)
            .map(|t| 2.0 * (std::f64::consts::PI * (t as f64 - 6.0) / 12.0).sin().max(0.0))
            .collect();
        let trace = ExogenousTrace::new(gen, None).unwrap();
        let config = BaselineConfig::default();

        let backup = model::simulate_episode(
            |state, t| {
                backup_policy(state, t, &tariff, &fleet, &battery, &config, None).unwrap()
            },
            &trace,
            &tariff,
            &fleet,
            &battery,
            1.0,
        )
        .unwrap();
        assert_eq!(backup.clip_events(), 0);
        // Backup never discharges.
        assert!(backup.steps.iter().all(|s| s.action.battery >= 0.0));

        let ratp = model::simulate_episode(
            |state, t| ratp_step(state, t, &tariff, &fleet, &battery, &config, None).unwrap(),
            &trace,
            &tariff,
            &fleet,
            &battery,
            1.0,
        )
        .unwrap();
        assert_eq!(ratp.clip_events(), 0);
        // RATP never moves more energy than the adjusted consumption.
        for (t, step) in ratp.steps.iter().enumerate() {
            let d_hat: f64 = step.action.demand.iter().sum();
            let d_tilde = d_hat - trace.gen(t);
            assert!(
                step.action.battery.abs() <= d_tilde.abs() + 1e-12,
                "stored energy exported at t={t}"
            );
        }
    }

    #[test]
    fn reference_rule_requires_demand_column() {
        let (tariff, fleet, battery) = setup(1);
        let config = BaselineConfig {
            demand_rule: DemandRule::ReferenceTrace,
            ..Default::default()
        };
        let state = SystemState { soc: 0.0, generation: 0.0, peak: 0.0 };
        assert!(backup_policy(&state, 0, &tariff, &fleet, &battery, &config, None).is_err());

        let demand = [0.4];
        let a = backup_policy(&state, 0, &tariff, &fleet, &battery, &config, Some(&demand))
            .unwrap();
        assert!((a.demand[0] - 0.4).abs() < 1e-12);
    }
}
