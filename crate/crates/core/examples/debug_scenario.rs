use dersched_core::baselines::{backup_policy, ratp_step, BaselineConfig};
use dersched_core::harness::{calibrate_fleet, sine_day_generation, daily_demand_profile};
use dersched_core::lsps;
use dersched_core::model::{self, BatterySpec, ExogenousTrace, TariffSchedule};
use dersched_core::oracle;

fn main() {
    let horizon = 24;
    let demand = daily_demand_profile(1.0, horizon);
    let gen = sine_day_generation(2.0, horizon);
    let trace = ExogenousTrace::new(gen, Some(demand.clone())).unwrap();
    let tariff = TariffSchedule::flat(horizon, 0.12, 0.06, 10.0, 0.09).unwrap();
    let fleet = calibrate_fleet(&demand, 0.12, -0.1).unwrap();
    let battery = BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap();
    let s0 = 2.5;

    let outcome = lsps::run(&trace, None, &tariff, &fleet, &battery, s0).unwrap();
    let config = BaselineConfig::default();
    let ratp = model::simulate_episode(
        |state, t| ratp_step(state, t, &tariff, &fleet, &battery, &config, None).unwrap(),
        &trace, &tariff, &fleet, &battery, s0,
    ).unwrap();
    let backup = model::simulate_episode(
        |state, t| backup_policy(state, t, &tariff, &fleet, &battery, &config, None).unwrap(),
        &trace, &tariff, &fleet, &battery, s0,
    ).unwrap();
    let bound = oracle::deterministic_upper_bound(&trace, &tariff, &fleet, &battery, s0).unwrap();

    println!("c* = {:.4}", outcome.schedule.computed_peak);
    println!("{:>3} {:>6} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}", "t", "g", "L_e", "L_z", "L_r", "R_e", "R_z", "R_r");
    for t in 0..horizon {
        let l = &outcome.ledger.steps[t];
        let r = &ratp.steps[t];
        println!("{:3} {:6.3} | {:+7.3} {:+7.3} {:+8.4} | {:+7.3} {:+7.3} {:+8.4}",
            t, trace.gen(t), l.action.battery, l.net_consumption, l.reward,
            r.action.battery, r.net_consumption, r.reward);
    }
    println!("LSPS   {:.6} peak {:.4} clips {}", outcome.ledger.total_reward(), outcome.ledger.realized_peak, outcome.schedule.clip_events);
    println!("RATP   {:.6} peak {:.4}", ratp.total_reward(), ratp.realized_peak);
    println!("backup {:.6} peak {:.4}", backup.total_reward(), backup.realized_peak);
    println!("oracle {:.6} peak {:.4} (iters {}, gap {:.2e})", bound.objective, bound.peak, bound.diagnostics.iterations, bound.diagnostics.complementarity_gap);
}
